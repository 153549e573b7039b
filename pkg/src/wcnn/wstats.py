"""Gaussian 2-Wasserstein statistics for feature batches.

The training loss compares two batches only through per-dimension means and
population standard deviations, i.e. it treats each batch as a Gaussian
with diagonal covariance.  :func:`w2_full_gaussian` is the general closed
form and is kept as a reference for checking the simplified version.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, spd_sqrt

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class BatchStats:
    mean: np.ndarray
    std: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class W2Config:
    """Gradient stabilization for batches with (near) zero spread.

    The spread term of the gradient divides by the batch std.  With
    ``denominator="floor"`` the divisor is ``max(std, sqrt(epsilon))``,
    which is exact whenever std >= sqrt(epsilon).  ``"smooth"`` uses
    ``sqrt(std**2 + epsilon)`` everywhere, which is smooth but biased by a
    relative ~epsilon / (2 std**2).
    """

    epsilon: float = DEFAULT_EPSILON
    denominator: str = "floor"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.denominator not in ("floor", "smooth"):
            raise ValueError(f"denominator must be 'floor' or 'smooth', got {self.denominator!r}")

    def stabilized(self, std: np.ndarray) -> np.ndarray:
        if self.denominator == "floor":
            return np.maximum(std, np.sqrt(self.epsilon))
        return np.sqrt(std * std + self.epsilon)


def batch_stats(features) -> BatchStats:
    x = as_matrix(features, "features")
    n = x.shape[0]
    if n < 1:
        raise ValueError("batch_stats needs at least one row")
    mean = x.sum(axis=0) / n
    var = np.maximum((x * x).sum(axis=0) / n - mean * mean, 0.0)
    return BatchStats(mean, np.sqrt(var), n)


def _check_dims(a: BatchStats, b: BatchStats):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def w2_simplified(a: BatchStats, b: BatchStats) -> float:
    """Half the squared mean gap plus half the squared std gap."""
    _check_dims(a, b)
    dm = a.mean - b.mean
    ds = a.std - b.std
    return 0.5 * (float(dm @ dm) + float(ds @ ds))


def w2_full_gaussian(m_a, c_a, m_b, c_b) -> float:
    """Squared 2-Wasserstein distance between N(m_a, c_a) and N(m_b, c_b)."""
    m_a = np.asarray(m_a, dtype=np.float64)
    m_b = np.asarray(m_b, dtype=np.float64)
    c_a = as_matrix(c_a, "c_a")
    c_b = as_matrix(c_b, "c_b")
    root_b = spd_sqrt(c_b)
    cross = spd_sqrt(root_b @ c_a @ root_b)
    dm = m_a - m_b
    value = float(dm @ dm) + float(np.trace(c_a + c_b - 2.0 * cross))
    if value < -1e-8:
        raise ArithmeticError(f"negative squared W2 distance {value:.3e}")
    return max(value, 0.0)


def w2_gradients(batch_a, batch_b, cfg: W2Config = W2Config()):
    """Gradients of :func:`w2_simplified` with respect to every batch row.

    Row i of the first batch receives
    ``((m_a - m_b) + (s_a - s_b) * (x_i - m_a) / s_a) / n_a`` and the second
    batch the mirrored expression with the opposite sign; the division by
    the std is stabilized as configured in ``cfg``.
    """
    xa = as_matrix(batch_a, "batch_a")
    xb = as_matrix(batch_b, "batch_b")
    if xa.shape[0] == 0 or xb.shape[0] == 0:
        raise ValueError("w2_gradients needs non-empty batches")
    if xa.shape[1] != xb.shape[1]:
        raise ValueError(f"dimension mismatch: {xa.shape[1]} vs {xb.shape[1]}")
    sa, sb = batch_stats(xa), batch_stats(xb)
    dm = sa.mean - sb.mean
    ds = sa.std - sb.std
    ga = (dm + ds * (xa - sa.mean) / cfg.stabilized(sa.std)) / sa.n
    gb = -(dm + ds * (xb - sb.mean) / cfg.stabilized(sb.std)) / sb.n
    return ga, gb
