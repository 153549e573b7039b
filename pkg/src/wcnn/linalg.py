"""Dense real linear algebra and seeded randomness.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The helpers
here add the shape/finiteness checks the rest of the package relies on and
wrap the few decompositions that are needed (thin SVD, SPD square root).

Randomness always flows through :func:`make_rng`, which returns a numpy
``Generator`` driven by Philox4x64-10 (Salmon et al., counter-based:
a 256-bit counter encrypted under a 128-bit key by ten Philox rounds,
64-bit output words).  The key is derived from the seed through numpy's
SeedSequence, so a given seed yields the same stream on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-12
PSD_TOL = 1e-10


class LinalgError(ValueError):
    pass


class SvdNotConverged(LinalgError):
    def __init__(self, sweeps: int, off: float):
        super().__init__(
            f"one-sided Jacobi SVD did not converge after {sweeps} sweeps "
            f"(largest normalized off-diagonal {off:.3e})")
        self.sweeps = sweeps
        self.off = off


class NotPositiveSemidefinite(LinalgError):
    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array, raising on NaN/Inf."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise LinalgError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise LinalgError(f"{name} contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise LinalgError(
            f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def frobenius_norm_sq(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.sum(a * a))


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``a = u @ diag(s) @ vt`` with ``s`` non-increasing."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.vt


def svd_thin(a, method: str = "lapack") -> SvdResult:
    """Thin singular value decomposition.

    ``method="lapack"`` calls numpy's LAPACK driver and is what the training
    loop uses.  ``method="jacobi"`` runs :func:`svd_jacobi`, a self-contained
    one-sided Jacobi implementation.  Both return singular values sorted in
    non-increasing order.
    """
    a = as_matrix(a)
    if method == "jacobi":
        return svd_jacobi(a)
    if method != "lapack":
        raise ValueError(f"unknown SVD method {method!r}")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return SvdResult(u, s, vt)


def _round_robin(n: int):
    """Tournament schedule: n-1 rounds of n/2 disjoint index pairs (n even)."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        rounds.append((np.array(players[:half]),
                       np.array(players[half:][::-1])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _complete_orthonormal(u: np.ndarray, ok: np.ndarray) -> np.ndarray:
    # Fill columns of u flagged not-ok with an orthonormal complement of the
    # ok columns (deterministic: Gram-Schmidt against the identity basis).
    m = u.shape[0]
    basis = [u[:, j] for j in np.flatnonzero(ok)]
    for j in np.flatnonzero(~ok):
        for e in range(m):
            v = np.zeros(m)
            v[e] = 1.0
            for b in basis:
                v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                v /= nv
                for b in basis:  # second pass for numerical orthogonality
                    v -= (b @ v) * b
                v /= np.linalg.norm(v)
                u[:, j] = v
                basis.append(v)
                break
    return u


def svd_jacobi(a) -> SvdResult:
    """One-sided (Hestenes) Jacobi SVD.

    Column pairs are orthogonalized by plane rotations, sweeping a
    round-robin schedule so each round rotates disjoint pairs at once.  A
    sweep converges when every normalized inner product |a_i.a_j| /
    (|a_i||a_j|) is below ``JACOBI_TOL``; after ``JACOBI_MAX_SWEEPS`` sweeps
    :class:`SvdNotConverged` is raised.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m < n:
        r = svd_jacobi(a.T)
        return SvdResult(r.vt.T.copy(), r.s, r.u.T.copy())

    work = a.copy()
    v = np.eye(n)
    npad = n + (n % 2)
    if npad != n:
        work = np.hstack([work, np.zeros((m, 1))])
        v = np.pad(v, ((0, 1), (0, 1)))
    rounds = _round_robin(npad) if npad > 1 else []

    off = 0.0
    for sweep in range(1, JACOBI_MAX_SWEEPS + 1):
        off = 0.0
        for i, j in rounds:
            ai, aj = work[:, i], work[:, j]
            alpha = np.sum(ai * ai, axis=0)
            beta = np.sum(aj * aj, axis=0)
            gamma = np.sum(ai * aj, axis=0)
            denom = np.sqrt(alpha * beta)
            active = (gamma != 0.0) & (denom > 0.0)
            if not np.any(active):
                continue
            rel = np.zeros_like(gamma)
            rel[active] = np.abs(gamma[active]) / denom[active]
            off = max(off, float(rel.max()))
            rot = active & (rel > JACOBI_TOL)
            if not np.any(rot):
                continue
            zeta = np.zeros_like(gamma)
            zeta[rot] = (beta[rot] - alpha[rot]) / (2.0 * gamma[rot])
            t = np.zeros_like(gamma)
            t[rot] = np.sign(zeta[rot]) / (np.abs(zeta[rot]) + np.sqrt(1.0 + zeta[rot] ** 2))
            t[rot & (zeta == 0.0)] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            work[:, i], work[:, j] = c * ai - s * aj, s * ai + c * aj
            vi, vj = v[:, i], v[:, j]
            v[:, i], v[:, j] = c * vi - s * vj, s * vi + c * vj
        if off <= JACOBI_TOL:
            break
    else:
        raise SvdNotConverged(JACOBI_MAX_SWEEPS, off)

    work, v = work[:, :n], v[:n, :n]
    sv = np.linalg.norm(work, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv, work, v = sv[order], work[:, order], v[:, order]
    scale = max(1.0, float(sv[0]) if n else 1.0)
    ok = sv > 1e-13 * scale
    u = np.zeros((m, n))
    u[:, ok] = work[:, ok] / sv[ok]
    sv = np.where(ok, sv, 0.0)
    if not np.all(ok):
        u = _complete_orthonormal(u, ok)
    return SvdResult(u, sv, v.T.copy())


def spd_sqrt(a) -> np.ndarray:
    """Principal square root of a symmetric positive semi-definite matrix.

    Eigenvalues in ``[-PSD_TOL, 0)`` are clamped to zero.
    """
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise LinalgError(f"spd_sqrt needs a square matrix, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    evals, evecs = np.linalg.eigh(0.5 * (a + a.T))
    lo = float(evals.min()) if evals.size else 0.0
    if asym > PSD_TOL * scale:
        raise NotPositiveSemidefinite(
            f"matrix is not symmetric (max asymmetry {asym:.3e}, "
            f"min eigenvalue {lo:.3e})", lo)
    if lo < -PSD_TOL * scale:
        raise NotPositiveSemidefinite(
            f"matrix is indefinite (min eigenvalue {lo:.3e})", lo)
    root = np.sqrt(np.clip(evals, 0.0, None))
    s = (evecs * root) @ evecs.T
    return 0.5 * (s + s.T)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def uniform_fill(rng: np.random.Generator, rows: int, cols: int, a: float) -> np.ndarray:
    """Matrix of i.i.d. draws from U(-a, a)."""
    if not a > 0:
        raise ValueError(f"uniform bound must be positive, got {a}")
    return rng.uniform(-a, a, size=(rows, cols))
