"""Training objective: softmax classification, per-subject distribution
alignment, low-rank classifier prior and the subspace orthogonality penalty.

    total = beta1 * cls + beta2 * dist + beta3 * nuclear(M) + sum_i lambda_i |P_i^T W|_F^2

``total_loss`` returns the exact gradient of ``total``.  The trainer instead
splits it: backprop on ``beta1 * cls + beta2 * dist``, then a separate step
on the regularizers using :func:`regularizer_gradients`, whose orthogonality
term is ``lambda_i P_i P_i^T W`` (the factor 2 of the squared norm folded
into lambda).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import svd_thin
from .model import NIR, VIS, ModelParams, backward, forward
from .wstats import W2Config, batch_stats, w2_gradients, w2_simplified


@dataclass(frozen=True)
class LossWeights:
    beta1: float = 1.0
    beta2: float = 1.0
    beta3: float = 1e-3
    lambda_n: float = 0.1
    lambda_v: float = 0.1

    def __post_init__(self):
        for k, v in vars(self).items():
            if not v >= 0:
                raise ValueError(f"{k} must be non-negative, got {v}")

    def lam(self, modality: str) -> float:
        return self.lambda_n if modality == NIR else self.lambda_v


@dataclass(frozen=True)
class LossBreakdown:
    cls: float
    dist: float
    low_rank: float
    ortho: float
    total: float

    @classmethod
    def combine(cls_, weights: LossWeights, cls: float, dist: float,
                low_rank: float, ortho: float) -> "LossBreakdown":
        total = weights.beta1 * cls + weights.beta2 * dist + weights.beta3 * low_rank + ortho
        return cls_(cls, dist, low_rank, ortho, total)


@dataclass
class Batch:
    """A training mini-batch; labels are class indices in [0, num_classes)."""

    nir_inputs: np.ndarray
    nir_labels: np.ndarray
    vis_inputs: np.ndarray
    vis_labels: np.ndarray
    with_replacement: bool = False

    def inputs(self, modality: str) -> np.ndarray:
        return self.nir_inputs if modality == NIR else self.vis_inputs

    def labels(self, modality: str) -> np.ndarray:
        return self.nir_labels if modality == NIR else self.vis_labels


@dataclass
class DistInfo:
    subjects: list[int] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)
    # smallest per-dimension std over all compared subject batches
    min_std: float = float("inf")


def softmax_cross_entropy(logits, label: int):
    """Loss -log softmax(logits)[label] and its gradient softmax - onehot."""
    z = np.asarray(logits, dtype=np.float64)
    c = z.shape[-1]
    if not 0 <= label < c:
        raise ValueError(f"label {label} outside [0, {c})")
    loss, grad = softmax_cross_entropy_batch(z.reshape(1, c), np.array([label]))
    return float(loss[0]), grad[0]


def softmax_cross_entropy_batch(logits: np.ndarray, labels: np.ndarray):
    """Row-wise cross-entropy; returns per-row losses and the (n x c) gradient."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,) or np.any(labels < 0) or np.any(labels >= c):
        raise ValueError(f"labels must be {n} class indices in [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = logsum - shifted[rows, labels]
    grad = np.exp(shifted - logsum[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad


def ortho_penalty(w, p, lam: float):
    """``lam * |P^T W|_F^2`` with gradients ``lam P P^T W`` and ``lam W W^T P``.

    These gradients are half the analytic ones; callers wanting the exact
    derivative double them.
    """
    w = np.asarray(w, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if w.shape[0] != p.shape[0]:
        raise ValueError(f"W {w.shape} and P {p.shape} must share their row count")
    cross = p.T @ w
    value = lam * float(np.sum(cross * cross))
    return value, lam * (p @ cross), lam * (w @ cross.T)


def nuclear_norm_and_subgradient(m):
    """Sum of singular values and the subgradient U V^T."""
    r = svd_thin(m)
    return float(r.s.sum()), r.u @ r.vt


def wasserstein_loss(shared_nir, shared_vis, cfg: W2Config = W2Config()):
    """Simplified W2 between one subject's NIR and VIS embedding batches."""
    a = np.asarray(shared_nir, dtype=np.float64)
    b = np.asarray(shared_vis, dtype=np.float64)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("wasserstein_loss needs samples from both modalities")
    value = w2_simplified(batch_stats(a), batch_stats(b))
    ga, gb = w2_gradients(a, b, cfg)
    return value, ga, gb


def per_subject_distance(nir_embed, nir_labels, vis_embed, vis_labels,
                         cfg: W2Config = W2Config(), with_grads: bool = True):
    """Mean over subjects of the per-subject W2 between modalities.

    Subjects seen in only one modality are skipped and reported in the
    returned :class:`DistInfo`.  Gradients (when requested) include the
    1/num_subjects averaging.
    """
    nir_labels = np.asarray(nir_labels)
    vis_labels = np.asarray(vis_labels)
    info = DistInfo()
    g_n = np.zeros_like(nir_embed) if with_grads else None
    g_v = np.zeros_like(vis_embed) if with_grads else None
    values = []
    for s in np.unique(np.concatenate([nir_labels, vis_labels])):
        in_n = nir_labels == s
        in_v = vis_labels == s
        if not in_n.any() or not in_v.any():
            info.skipped.append(int(s))
            continue
        info.subjects.append(int(s))
        for e in (nir_embed[in_n], vis_embed[in_v]):
            info.min_std = min(info.min_std, float(batch_stats(e).std.min()))
        if with_grads:
            v, ga, gb = wasserstein_loss(nir_embed[in_n], vis_embed[in_v], cfg)
            g_n[in_n] += ga
            g_v[in_v] += gb
        else:
            v = w2_simplified(batch_stats(nir_embed[in_n]), batch_stats(vis_embed[in_v]))
        values.append(v)
    k = len(values)
    if k == 0:
        return 0.0, g_n, g_v, info
    if with_grads:
        g_n /= k
        g_v /= k
    return float(np.mean(values)), g_n, g_v, info


def data_terms(params: ModelParams, batch: Batch, weights: LossWeights,
               cfg: W2Config = W2Config()):
    """cls and dist terms with gradients of ``beta1*cls + beta2*dist``.

    Returns ``(cls, dist, grads, info)``.
    """
    traces = {m: forward(batch.inputs(m), params, m) for m in (NIR, VIS)}
    grads = params.zeros_like()
    cls = 0.0
    g_logits = {}
    for m, tr in traces.items():
        losses, g = softmax_cross_entropy_batch(tr.logits, batch.labels(m))
        n = tr.batch_size
        cls += float(losses.mean())
        g_logits[m] = weights.beta1 * g / n
    dist, g_n, g_v, info = per_subject_distance(
        traces[NIR].shared_embed, batch.nir_labels,
        traces[VIS].shared_embed, batch.vis_labels, cfg)
    g_shared = {NIR: weights.beta2 * g_n, VIS: weights.beta2 * g_v}
    for m, tr in traces.items():
        backward(tr, g_logits[m], g_shared[m], params, out=grads)
    return cls, dist, grads, info


def regularizer_gradients(params: ModelParams, weights: LossWeights):
    """Values and update directions of the constraint/regularizer terms.

    Returns ``(low_rank, ortho, grads)`` where ``grads`` is zero outside
    W, P_N, P_V, F_N, F_V; W and P_i receive ``lambda_i P_i P_i^T W`` and
    ``lambda_i W W^T P_i``, the classifiers receive ``beta3 * U V^T``.
    """
    grads = params.zeros_like()
    pr = params.projection
    ortho = 0.0
    for m in (NIR, VIS):
        v, gw, gp = ortho_penalty(pr.w, pr.unique_map(m), weights.lam(m))
        ortho += v
        grads.projection.w[...] += gw
        grads.projection.unique_map(m)[...] += gp
    low_rank, sub = nuclear_norm_and_subgradient(params.classifier.stacked())
    c = params.classifier.f_n.shape[0]
    grads.classifier.f_n[...] = weights.beta3 * sub[:c]
    grads.classifier.f_v[...] = weights.beta3 * sub[c:]
    return low_rank, ortho, grads


def total_loss(params: ModelParams, batch: Batch, weights: LossWeights,
               cfg: W2Config = W2Config()):
    """Full objective and its exact gradient; returns (breakdown, grads, info)."""
    cls, dist, grads, info = data_terms(params, batch, weights, cfg)
    low_rank, ortho, reg = regularizer_gradients(params, weights)
    pr, g = reg.projection, grads.projection
    g.w += 2.0 * pr.w
    g.p_n += 2.0 * pr.p_n
    g.p_v += 2.0 * pr.p_v
    grads.classifier.f_n += reg.classifier.f_n
    grads.classifier.f_v += reg.classifier.f_v
    return LossBreakdown.combine(weights, cls, dist, low_rank, ortho), grads, info
