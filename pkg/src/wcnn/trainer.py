"""Alternating two-phase SGD training.

Every iteration:

1. backprop step on ``beta1 * cls + beta2 * dist`` updating the feature
   network, W, P_N, P_V, F_N and F_V;
2. with the feature network fixed, a step on the constraint/regularizer
   directions (``lambda_i P_i P_i^T W``, ``lambda_i W W^T P_i`` and
   ``beta3 U V^T``), evaluated at the parameters produced by step 1.

The learning rate decays geometrically from ``lr_start`` to ``lr_end``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .datagen import Dataset
from .linalg import LinalgError, make_rng
from .losses import (Batch, LossBreakdown, LossWeights, data_terms,
                     per_subject_distance, regularizer_gradients)
from .model import NIR, VIS, ModelConfig, ModelParams, embed, init_params
from .wstats import W2Config


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    iterations: int = 5000
    subjects_per_batch: int = 8
    samples_per_subject: int = 4
    lr_start: float = 0.1
    lr_end: float = 0.001
    weights: LossWeights = field(default_factory=LossWeights)
    w2: W2Config = field(default_factory=W2Config)
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.subjects_per_batch < 1 or self.samples_per_subject < 1:
            raise ValueError("batch composition counts must be >= 1")
        if not (self.lr_start >= self.lr_end > 0):
            raise ValueError(f"need lr_start >= lr_end > 0, got {self.lr_start}, {self.lr_end}")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")

    @property
    def batch_size(self) -> int:
        return 2 * self.subjects_per_batch * self.samples_per_subject

    def with_weights(self, **kw) -> "TrainConfig":
        return replace(self, weights=replace(self.weights, **kw))


LOG_FIELDS = ("iteration", "lr", "cls", "dist", "low_rank", "ortho", "total",
              "heldout_w2", "ortho_norm_n", "ortho_norm_v", "nuclear_norm")


@dataclass
class TrainLogRecord:
    iteration: int
    lr: float
    losses: LossBreakdown
    ortho_norm_n: float
    ortho_norm_v: float
    nuclear_norm: float
    heldout_w2: Optional[float] = None

    def as_dict(self) -> dict:
        flat = {"iteration": self.iteration, "lr": self.lr, **asdict(self.losses),
                "heldout_w2": self.heldout_w2, "ortho_norm_n": self.ortho_norm_n,
                "ortho_norm_v": self.ortho_norm_v, "nuclear_norm": self.nuclear_norm}
        return {k: flat[k] for k in LOG_FIELDS}

    def to_line(self) -> str:
        return json.dumps(self.as_dict())


class TrainingDiverged(RuntimeError):
    def __init__(self, record: TrainLogRecord):
        super().__init__(f"non-finite loss or gradient at iteration {record.iteration}: "
                         f"{record.to_line()}")
        self.record = record


class BatchSampler:
    """Draws S subjects, then K NIR and K VIS samples of each.

    Class labels are positions in the sorted list of training subject ids.
    Within a subject and modality, samples are drawn without replacement
    when at least K exist, otherwise with replacement (``Batch.with_replacement``).
    """

    def __init__(self, dataset: Dataset, subjects_per_batch: int, samples_per_subject: int):
        self.dataset = dataset
        self.S, self.K = subjects_per_batch, samples_per_subject
        self.subjects = dataset.subjects()
        self.index = {(int(s), m): dataset.indices(s, m)
                      for s in self.subjects for m in (NIR, VIS)}
        empty = [int(s) for s in self.subjects
                 if any(len(self.index[int(s), m]) == 0 for m in (NIR, VIS))]
        if len(self.subjects) < self.S or empty:
            raise ValueError(
                f"cannot build batches of {self.S} subjects from {len(self.subjects)} "
                f"subjects; subjects missing a modality: {empty}")

    @property
    def num_classes(self) -> int:
        return len(self.subjects)

    def sample(self, rng: np.random.Generator) -> Batch:
        chosen = rng.choice(len(self.subjects), size=self.S, replace=False)
        picks = {NIR: [], VIS: []}
        labels = {NIR: [], VIS: []}
        replaced = False
        for cls in chosen:
            s = int(self.subjects[cls])
            for m in (NIR, VIS):
                pool = self.index[s, m]
                rep = len(pool) < self.K
                replaced |= rep
                picks[m].append(pool[rng.choice(len(pool), size=self.K, replace=rep)])
                labels[m] += [int(cls)] * self.K
        x = self.dataset.inputs
        return Batch(x[np.concatenate(picks[NIR])], np.array(labels[NIR]),
                     x[np.concatenate(picks[VIS])], np.array(labels[VIS]), replaced)


def sample_batch(dataset: Dataset, rng: np.random.Generator, S: int, K: int) -> Batch:
    return BatchSampler(dataset, S, K).sample(rng)


def lr_at(t: int, config: TrainConfig) -> float:
    T = config.iterations
    if T == 0:
        return config.lr_start
    return config.lr_start * (config.lr_end / config.lr_start) ** (t / T)


def ortho_norms(params: ModelParams) -> tuple[float, float]:
    pr = params.projection
    return (float(np.linalg.norm(pr.p_n.T @ pr.w)), float(np.linalg.norm(pr.p_v.T @ pr.w)))


def nuclear_norm(params: ModelParams) -> float:
    return float(np.linalg.svd(params.classifier.stacked(), compute_uv=False).sum())


def heldout_distance(params: ModelParams, dataset: Dataset, w2: W2Config = W2Config()) -> float:
    """Mean per-subject W2 between NIR and VIS shared embeddings."""
    nir = dataset.modalities == NIR
    vis = ~nir
    en = embed(dataset.inputs[nir], params, NIR)
    ev = embed(dataset.inputs[vis], params, VIS)
    value, _, _, _ = per_subject_distance(en, dataset.subject_ids[nir], ev,
                                          dataset.subject_ids[vis], w2, with_grads=False)
    return value


def _finite(*values) -> bool:
    return all(math.isfinite(v) for v in values)


def train_step(params: ModelParams, batch: Batch, config: TrainConfig, t: int,
               lr: Optional[float] = None):
    """One alternating update, in place.  Returns (params, record).

    The record's losses are evaluated at the parameters on entry.
    """
    lr = lr_at(t, config) if lr is None else lr
    wts = config.weights
    on, ov = ortho_norms(params)
    nuc = nuclear_norm(params)
    ortho_value = wts.lambda_n * on ** 2 + wts.lambda_v * ov ** 2
    try:
        cls, dist, grads, _ = data_terms(params, batch, wts, config.w2)
    except LinalgError:
        cls = dist = math.nan
        grads = None
    record = TrainLogRecord(t, lr, LossBreakdown.combine(wts, cls, dist, nuc, ortho_value),
                            on, ov, nuc)
    if grads is None or not (_finite(record.losses.total) and grads.all_finite()):
        raise TrainingDiverged(record)
    params.axpy(-lr, grads)

    if wts.lambda_n or wts.lambda_v or wts.beta3:
        _, _, reg = regularizer_gradients(params, wts)
        if not reg.all_finite():
            raise TrainingDiverged(record)
        pr, g = params.projection, reg.projection
        pr.w -= lr * g.w
        pr.p_n -= lr * g.p_n
        pr.p_v -= lr * g.p_v
        params.classifier.f_n -= lr * reg.classifier.f_n
        params.classifier.f_v -= lr * reg.classifier.f_v
    if not params.all_finite():
        raise TrainingDiverged(record)
    return params, record


def train(dataset: Dataset, config: TrainConfig, heldout: Optional[Dataset] = None,
          log_path=None, params: Optional[ModelParams] = None):
    """Run the full schedule.  Returns (params, log records).

    ``dataset`` holds the training subjects; ``heldout`` (optional) is
    used for the held-out W2 column of the log.  When ``log_path`` is given
    each record is appended to it as one JSON object per line, fields in
    ``LOG_FIELDS`` order.
    """
    sampler = BatchSampler(dataset, config.subjects_per_batch, config.samples_per_subject)
    model_cfg = replace(config.model, input_dim=dataset.input_dim,
                        num_classes=sampler.num_classes)
    rng = make_rng(config.seed)
    if params is None:
        params = init_params(model_cfg, rng)
    log: list[TrainLogRecord] = []
    fh = open(log_path, "w") if log_path is not None else None

    def emit(rec: TrainLogRecord):
        log.append(rec)
        if fh is not None:
            fh.write(rec.to_line() + "\n")
            fh.flush()

    try:
        for t in range(config.iterations):
            batch = sampler.sample(rng)
            logging = t % config.log_every == 0
            # held-out distance is measured on the parameters entering the step
            h = heldout_distance(params, heldout, config.w2) \
                if logging and heldout is not None else None
            _, rec = train_step(params, batch, config, t)
            if logging:
                rec.heldout_w2 = h
                emit(rec)
        final = final_record(params, config, sampler)
        if heldout is not None:
            final.heldout_w2 = heldout_distance(params, heldout, config.w2)
        emit(final)
    finally:
        if fh is not None:
            fh.close()
    return params, log


def final_record(params: ModelParams, config: TrainConfig,
                 sampler: BatchSampler) -> TrainLogRecord:
    """Losses of the finished model on a fixed evaluation batch."""
    batch = sampler.sample(make_rng(config.seed + 7919))
    wts = config.weights
    cls, dist, _, _ = data_terms(params, batch, wts, config.w2)
    on, ov = ortho_norms(params)
    nuc = nuclear_norm(params)
    ortho_value = wts.lambda_n * on ** 2 + wts.lambda_v * ov ** 2
    return TrainLogRecord(config.iterations, lr_at(config.iterations, config),
                          LossBreakdown.combine(wts, cls, dist, nuc, ortho_value), on, ov, nuc)


def read_log(path) -> list[dict]:
    return [json.loads(ln) for ln in Path(path).read_text().splitlines() if ln.strip()]
