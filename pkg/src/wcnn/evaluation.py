"""Gallery/probe matching metrics and the classifier correlation diagnostic."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .datagen import ProtocolSplit, format_float
from .model import NIR, VIS, ClassifierParams, ModelParams, embed

DEFAULT_FARS = (1e-2, 1e-3)


@dataclass
class SimilarityMatrix:
    """Cosine scores, rows = gallery entries, columns = probes."""

    values: np.ndarray
    gallery_labels: np.ndarray
    probe_labels: np.ndarray
    zero_norm: int = 0

    def __post_init__(self):
        g, p = self.values.shape
        if len(self.gallery_labels) != g or len(self.probe_labels) != p:
            raise ValueError(
                f"label counts ({len(self.gallery_labels)}, {len(self.probe_labels)}) "
                f"do not match matrix shape {self.values.shape}")

    def genuine_mask(self) -> np.ndarray:
        return np.asarray(self.gallery_labels)[:, None] == np.asarray(self.probe_labels)[None, :]


@dataclass
class EvalReport:
    rank1: float
    roc: list[tuple[float, float]]
    vr_at_far: dict[float, float]
    num_gallery: int
    num_probe: int
    num_genuine: int
    num_impostor: int
    zero_norm_embeddings: int = 0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("roc")
        d["vr_at_far"] = {format_float(k): v for k, v in self.vr_at_far.items()}
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def embed_gallery_probe(split: ProtocolSplit, params: ModelParams):
    ds = split.dataset
    gallery = embed(ds.inputs[split.gallery_indices], params, VIS)
    probe = embed(ds.inputs[split.probe_indices], params, NIR)
    return gallery, probe


def cosine_similarity_matrix(gallery, probe, gallery_labels=None, probe_labels=None) -> SimilarityMatrix:
    """Zero-norm embeddings score 0 against everything and are counted."""
    g = np.atleast_2d(np.asarray(gallery, dtype=np.float64))
    p = np.atleast_2d(np.asarray(probe, dtype=np.float64))
    if g.shape[0] == 0 or p.shape[0] == 0:
        raise ValueError("gallery and probe must be non-empty")
    if g.shape[1] != p.shape[1]:
        raise ValueError(f"embedding widths differ: {g.shape[1]} vs {p.shape[1]}")
    gn = np.linalg.norm(g, axis=1)
    pn = np.linalg.norm(p, axis=1)
    zero = int(np.sum(gn == 0) + np.sum(pn == 0))
    gs = np.divide(g, gn[:, None], out=np.zeros_like(g), where=gn[:, None] > 0)
    ps = np.divide(p, pn[:, None], out=np.zeros_like(p), where=pn[:, None] > 0)
    values = np.clip(gs @ ps.T, -1.0, 1.0)
    gl = np.arange(g.shape[0]) if gallery_labels is None else np.asarray(gallery_labels)
    pl = np.arange(p.shape[0]) if probe_labels is None else np.asarray(probe_labels)
    return SimilarityMatrix(values, gl, pl, zero)


def rank1_accuracy(sim: SimilarityMatrix) -> float:
    """Fraction of probes whose best gallery match is the right subject.

    Ties resolve to the lowest gallery index.
    """
    gl = np.asarray(sim.gallery_labels)
    pl = np.asarray(sim.probe_labels)
    missing = set(pl.tolist()) - set(gl.tolist())
    if missing:
        raise ValueError(f"probe subjects absent from gallery: {sorted(missing)[:10]}")
    best = np.argmax(sim.values, axis=0)
    return float(np.mean(gl[best] == pl))


def roc_and_vr(sim: SimilarityMatrix, far_targets=DEFAULT_FARS):
    """ROC over every distinct score threshold, plus VR at fixed FARs.

    A pair is accepted when its score is >= the threshold.  The curve starts
    at (0, 0) (threshold above every score) and gains one point per distinct
    score, in decreasing threshold order.  VR at a target FAR is read off the
    lowest threshold whose FAR does not exceed the target; no interpolation.
    """
    mask = sim.genuine_mask()
    genuine = sim.values[mask]
    impostor = sim.values[~mask]
    if genuine.size == 0 or impostor.size == 0:
        raise ValueError("need at least one genuine and one impostor pair")
    thresholds = np.unique(sim.values)[::-1]
    g_sorted = np.sort(genuine)
    i_sorted = np.sort(impostor)
    g_acc = genuine.size - np.searchsorted(g_sorted, thresholds, side="left")
    i_acc = impostor.size - np.searchsorted(i_sorted, thresholds, side="left")
    far = np.concatenate([[0.0], i_acc / impostor.size])
    vr = np.concatenate([[0.0], g_acc / genuine.size])
    roc = list(zip(far.tolist(), vr.tolist()))
    vr_at = {}
    for target in far_targets:
        ok = np.flatnonzero(far <= target)
        vr_at[float(target)] = float(vr[ok[-1]])
    return roc, vr_at


def evaluate(split: ProtocolSplit, params: ModelParams, far_targets=DEFAULT_FARS):
    ds = split.dataset
    gallery, probe = embed_gallery_probe(split, params)
    sim = cosine_similarity_matrix(gallery, probe,
                                   ds.subject_ids[split.gallery_indices],
                                   ds.subject_ids[split.probe_indices])
    return report_from_similarity(sim, far_targets), sim


def report_from_similarity(sim: SimilarityMatrix, far_targets=DEFAULT_FARS) -> EvalReport:
    roc, vr_at = roc_and_vr(sim, far_targets)
    mask = sim.genuine_mask()
    return EvalReport(
        rank1=rank1_accuracy(sim), roc=roc, vr_at_far=vr_at,
        num_gallery=sim.values.shape[0], num_probe=sim.values.shape[1],
        num_genuine=int(mask.sum()), num_impostor=int((~mask).sum()),
        zero_norm_embeddings=sim.zero_norm)


def correlation_diagnostic(classifier: ClassifierParams) -> np.ndarray:
    """Row-normalized M M^T with M = [F_N; F_V] (zero rows stay zero).

    Entry (k, c + k) is the cosine between the NIR and VIS weight rows of
    class k.
    """
    m = classifier.stacked()
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    mh = np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)
    return np.clip(mh @ mh.T, -1.0, 1.0)


def cross_block_diagonal(corr: np.ndarray) -> np.ndarray:
    c = corr.shape[0] // 2
    return np.diagonal(corr[:c, c:]).copy()


def write_roc_csv(roc, path) -> None:
    lines = ["far,vr"] + [f"{format_float(f)},{format_float(v)}" for f, v in roc]
    Path(path).write_text("\n".join(lines) + "\n")


def write_matrix_csv(a: np.ndarray, path) -> None:
    lines = [",".join(format_float(v) for v in row) for row in np.atleast_2d(a)]
    Path(path).write_text("\n".join(lines) + "\n")
