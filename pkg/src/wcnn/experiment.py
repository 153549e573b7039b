"""In-process pipeline runs (generate, split, train, evaluate) for experiments."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .datagen import GenConfig, generate, split
from .evaluation import EvalReport, correlation_diagnostic, cross_block_diagonal, evaluate
from .linalg import make_rng
from .model import ModelParams
from .trainer import TrainConfig, TrainLogRecord, train

SOFTMAX_ONLY = dict(beta2=0.0, beta3=0.0, lambda_n=0.0, lambda_v=0.0)


@dataclass
class RunResult:
    seed: int
    params: ModelParams
    log: list[TrainLogRecord]
    report: EvalReport
    cross_diag: float

    @property
    def first(self) -> TrainLogRecord:
        return self.log[0]

    @property
    def last(self) -> TrainLogRecord:
        return self.log[-1]

    @property
    def heldout_ratio(self) -> float:
        return self.last.heldout_w2 / self.first.heldout_w2

    @property
    def ortho_ratios(self) -> tuple[float, float]:
        return (self.last.ortho_norm_n / self.first.ortho_norm_n,
                self.last.ortho_norm_v / self.first.ortho_norm_v)

    def summary(self) -> dict:
        on, ov = self.ortho_ratios
        return {"seed": self.seed, "rank1": self.report.rank1,
                "vr@1e-2": self.report.vr_at_far[1e-2], "vr@1e-3": self.report.vr_at_far[1e-3],
                "heldout_w2_ratio": self.heldout_ratio, "ortho_ratio_n": on, "ortho_ratio_v": ov,
                "nuclear_norm": self.last.nuclear_norm, "cross_diag": self.cross_diag}


def run_seed(seed: int, train_cfg: TrainConfig = TrainConfig(), gen: GenConfig = GenConfig(),
             test_fraction: float = 0.5) -> RunResult:
    """One seed drives the data, the split and the training run."""
    ds = generate(replace(gen, seed=seed))
    sp = split(ds, test_fraction, make_rng(seed))
    params, log = train(sp.train, replace(train_cfg, seed=seed),
                        heldout=ds.subset(sp.heldout_indices))
    report, _ = evaluate(sp, params)
    cd = float(np.mean(np.abs(cross_block_diagonal(correlation_diagnostic(params.classifier)))))
    return RunResult(seed, params, log, report, cd)
