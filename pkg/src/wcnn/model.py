"""Two-channel feature network with shared and modality-specific heads.

Both modalities run through the same stack of maxout-affine layers (one
parameter object, no copies).  The resulting feature ``x`` (length p) is
projected three ways::

    shared_pre = W x            (length d)
    shared     = pairmax(W x)   (length d/2, max over consecutive pairs)
    unique     = P_m x          (length d, m = modality)

and the modality's classifier ``F_m`` scores ``[shared; unique]``.
Everything operates on row batches: an input of shape (n, input_dim) gives
traces whose arrays all have a leading batch axis of n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Iterator, Sequence

import numpy as np

from .linalg import uniform_fill

NIR = "N"
VIS = "V"
MODALITIES = (NIR, VIS)


def check_modality(modality: str) -> str:
    if modality not in MODALITIES:
        raise ValueError(f"modality must be one of {MODALITIES}, got {modality!r}")
    return modality


@dataclass(frozen=True)
class ModelConfig:
    """Dimension chain input -> hidden... -> p -> d -> d/2 -> classes.

    ``hidden`` lists the widths of the maxout layers between the input and
    the feature layer of width ``p``.  ``depth0=True`` drops the feature
    network entirely (x = input, so p must equal input_dim).
    """

    input_dim: int = 32
    hidden: tuple[int, ...] = (64,)
    p: int = 64
    d: int = 64
    num_classes: int = 40
    depth0: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for name in ("input_dim", "p", "d", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be >= 1")
        if self.d % 2:
            raise ValueError(f"d must be even for the pairwise maxout, got {self.d}")
        if self.depth0 and (self.hidden or self.p != self.input_dim):
            raise ValueError("depth0 network needs no hidden layers and p == input_dim")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        if self.depth0:
            return []
        widths = [self.input_dim, *self.hidden, self.p]
        return list(zip(widths[:-1], widths[1:]))

    @property
    def embed_dim(self) -> int:
        return self.d // 2

    @property
    def classifier_dim(self) -> int:
        return self.d // 2 + self.d


@dataclass
class MaxoutLayer:
    w1: np.ndarray
    w2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w1.shape[0]


@dataclass
class FeatureNetParams:
    layers: list[MaxoutLayer] = field(default_factory=list)


@dataclass
class ProjectionParams:
    w: np.ndarray
    p_n: np.ndarray
    p_v: np.ndarray

    def unique_map(self, modality: str) -> np.ndarray:
        return self.p_n if check_modality(modality) == NIR else self.p_v


@dataclass
class ClassifierParams:
    f_n: np.ndarray
    f_v: np.ndarray

    def __post_init__(self):
        if self.f_n.shape != self.f_v.shape:
            raise ValueError(
                f"classifier shapes differ: {self.f_n.shape} vs {self.f_v.shape}")

    def for_modality(self, modality: str) -> np.ndarray:
        return self.f_n if check_modality(modality) == NIR else self.f_v

    def stacked(self) -> np.ndarray:
        """M = [F_N; F_V], NIR rows above VIS rows."""
        return np.vstack([self.f_n, self.f_v])


@dataclass
class ModelParams:
    feature_net: FeatureNetParams
    projection: ProjectionParams
    classifier: ClassifierParams

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """Every trainable array, by reference, in a fixed order."""
        for i, layer in enumerate(self.feature_net.layers):
            for f in fields(layer):
                yield f"theta.{i}.{f.name}", getattr(layer, f.name)
        yield "w", self.projection.w
        yield "p_n", self.projection.p_n
        yield "p_v", self.projection.p_v
        yield "f_n", self.classifier.f_n
        yield "f_v", self.classifier.f_v

    def map(self, fn) -> "ModelParams":
        layers = [MaxoutLayer(*(fn(getattr(l, f.name)) for f in fields(l)))
                  for l in self.feature_net.layers]
        pr, cl = self.projection, self.classifier
        return ModelParams(
            FeatureNetParams(layers),
            ProjectionParams(fn(pr.w), fn(pr.p_n), fn(pr.p_v)),
            ClassifierParams(fn(cl.f_n), fn(cl.f_v)))

    def copy(self) -> "ModelParams":
        return self.map(np.copy)

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def num_parameters(self) -> int:
        return sum(a.size for _, a in self.named_arrays())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for _, a in self.named_arrays())

    def axpy(self, alpha: float, other: "ModelParams") -> None:
        """In place ``self += alpha * other``."""
        for (_, a), (_, b) in zip(self.named_arrays(), other.named_arrays()):
            a += alpha * b


def init_params(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero."""

    def fill(rows, cols):
        return uniform_fill(rng, rows, cols, 1.0 / math.sqrt(cols))

    layers = []
    for fan_in, width in config.layer_dims:
        w1 = fill(width, fan_in)
        w2 = fill(width, fan_in)
        layers.append(MaxoutLayer(w1, w2, np.zeros(width), np.zeros(width)))
    d, p, q, c = config.d, config.p, config.classifier_dim, config.num_classes
    projection = ProjectionParams(fill(d, p), fill(d, p), fill(d, p))
    classifier = ClassifierParams(fill(c, q), fill(c, q))
    return ModelParams(FeatureNetParams(layers), projection, classifier)


def _rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(1, -1) if x.ndim == 1 else x


def maxout_affine_forward(x, layer: MaxoutLayer):
    """y = max(W1 x + b1, W2 x + b2) per unit; selector is True where slice 1 wins.

    Ties go to slice 1.  Accepts a vector or a row batch.
    """
    xr = _rows(x)
    if xr.shape[1] != layer.in_dim:
        raise ValueError(
            f"layer expects input of width {layer.in_dim}, got {xr.shape[1]}")
    z1 = xr @ layer.w1.T + layer.b1
    z2 = xr @ layer.w2.T + layer.b2
    sel = z1 >= z2
    y = np.where(sel, z1, z2)
    if np.ndim(x) == 1:
        return y[0], sel[0]
    return y, sel


def extract_features(inputs, feature_net: FeatureNetParams):
    """Run the shared maxout stack; returns (x, layer_inputs, selectors)."""
    a = _rows(inputs)
    layer_inputs, selectors = [], []
    for layer in feature_net.layers:
        layer_inputs.append(a)
        a, sel = maxout_affine_forward(a, layer)
        selectors.append(sel)
    if np.ndim(inputs) == 1:
        return a[0], layer_inputs, selectors
    return a, layer_inputs, selectors


def pairmax(v):
    """Max over consecutive coordinate pairs; returns (values, first_wins)."""
    v = np.asarray(v)
    if v.shape[-1] % 2:
        raise ValueError(f"pairwise maxout needs an even width, got {v.shape[-1]}")
    pairs = v.reshape(*v.shape[:-1], v.shape[-1] // 2, 2)
    first = pairs[..., 0] >= pairs[..., 1]
    return np.where(first, pairs[..., 0], pairs[..., 1]), first


def project_features(x, projection: ProjectionParams, modality: str):
    """Returns (shared_embed, unique, shared_pre, shared_selector)."""
    xr = _rows(x)
    if xr.shape[1] != projection.w.shape[1]:
        raise ValueError(
            f"projection expects width {projection.w.shape[1]}, got {xr.shape[1]}")
    shared_pre = xr @ projection.w.T
    shared, sel = pairmax(shared_pre)
    unique = xr @ projection.unique_map(modality).T
    if np.ndim(x) == 1:
        return shared[0], unique[0], shared_pre[0], sel[0]
    return shared, unique, shared_pre, sel


def classify(shared_embed, unique, classifier: ClassifierParams, modality: str):
    f = classifier.for_modality(modality)
    h = np.concatenate([np.asarray(shared_embed), np.asarray(unique)], axis=-1)
    if h.shape[-1] != f.shape[1]:
        raise ValueError(
            f"classifier expects {f.shape[1]} features, got {h.shape[-1]}")
    return h @ f.T


@dataclass
class ForwardTrace:
    """Everything the backward pass needs, for one batch of one modality."""

    modality: str
    inputs: np.ndarray
    layer_inputs: list[np.ndarray]
    layer_selectors: list[np.ndarray]
    x: np.ndarray
    shared_pre: np.ndarray
    shared_selector: np.ndarray
    shared_embed: np.ndarray
    unique: np.ndarray
    logits: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([self.shared_embed, self.unique], axis=1)


def forward(inputs, params: ModelParams, modality: str) -> ForwardTrace:
    check_modality(modality)
    rows = _rows(inputs)
    x, layer_inputs, selectors = extract_features(rows, params.feature_net)
    shared, unique, shared_pre, shared_sel = project_features(x, params.projection, modality)
    logits = classify(shared, unique, params.classifier, modality)
    return ForwardTrace(modality, rows, layer_inputs, selectors, x, shared_pre,
                        shared_sel, shared, unique, logits)


def embed(inputs, params: ModelParams, modality: str) -> np.ndarray:
    """Shared (identity) embedding only; what matching uses at test time."""
    rows = _rows(inputs)
    x, _, _ = extract_features(rows, params.feature_net)
    return project_features(x, params.projection, modality)[0]


def _check_trace(trace: ForwardTrace, params: ModelParams):
    layers = params.feature_net.layers
    if len(trace.layer_inputs) != len(layers):
        raise ValueError(
            f"trace has {len(trace.layer_inputs)} layers, params have {len(layers)}")
    for a, layer in zip(trace.layer_inputs, layers):
        if a.shape[1] != layer.in_dim:
            raise ValueError("trace layer widths do not match params")
    if trace.x.shape[1] != params.projection.w.shape[1] or \
            trace.shared_pre.shape[1] != params.projection.w.shape[0]:
        raise ValueError("trace projection widths do not match params")
    if trace.logits.shape[1] != params.classifier.f_n.shape[0]:
        raise ValueError("trace class count does not match params")


def backward(trace: ForwardTrace, grad_logits, grad_shared, params: ModelParams,
             out: ModelParams | None = None) -> ModelParams:
    """Reverse-mode pass for one traced batch.

    ``grad_logits`` (n x c) and ``grad_shared`` (n x d/2) are the loss
    gradients arriving at the logits and at the shared embedding; either may
    be None.  Parameter gradients are accumulated into ``out`` (allocated
    as zeros when not given), which is returned.
    """
    _check_trace(trace, params)
    if out is None:
        out = params.zeros_like()
    n = trace.batch_size
    c = params.classifier.f_n.shape[0]
    half = trace.shared_embed.shape[1]
    g_logits = np.zeros((n, c)) if grad_logits is None else np.asarray(grad_logits).reshape(n, c)
    g_shared = np.zeros((n, half)) if grad_shared is None else np.asarray(grad_shared).reshape(n, half)

    f = params.classifier.for_modality(trace.modality)
    g_f = out.classifier.for_modality(trace.modality)
    g_f += g_logits.T @ trace.features
    g_h = g_logits @ f
    g_shared = g_shared + g_h[:, :half]
    g_unique = g_h[:, half:]

    p = params.projection.unique_map(trace.modality)
    out.projection.unique_map(trace.modality)[...] += g_unique.T @ trace.x
    g_x = g_unique @ p

    sel = trace.shared_selector
    g_pre = np.zeros_like(trace.shared_pre)
    g_pre[:, 0::2] = np.where(sel, g_shared, 0.0)
    g_pre[:, 1::2] = np.where(sel, 0.0, g_shared)
    out.projection.w[...] += g_pre.T @ trace.x
    g_x = g_x + g_pre @ params.projection.w

    g_a = g_x
    for layer, g_layer, a, s in zip(reversed(params.feature_net.layers),
                                     reversed(out.feature_net.layers),
                                     reversed(trace.layer_inputs),
                                     reversed(trace.layer_selectors)):
        g1 = np.where(s, g_a, 0.0)
        g2 = g_a - g1
        g_layer.w1 += g1.T @ a
        g_layer.w2 += g2.T @ a
        g_layer.b1 += g1.sum(axis=0)
        g_layer.b2 += g2.sum(axis=0)
        g_a = g1 @ layer.w1 + g2 @ layer.w2
    return out


def tie_free(traces: Sequence[ForwardTrace], params: ModelParams, tol: float = 1e-6) -> bool:
    """True when no maxout unit in any trace is within ``tol`` of a tie."""
    for tr in traces:
        pairs = tr.shared_pre.reshape(tr.batch_size, -1, 2)
        if np.min(np.abs(pairs[..., 0] - pairs[..., 1])) <= tol:
            return False
        for a, layer in zip(tr.layer_inputs, params.feature_net.layers):
            gap = (a @ layer.w1.T + layer.b1) - (a @ layer.w2.T + layer.b2)
            if np.min(np.abs(gap)) <= tol:
                return False
    return True

