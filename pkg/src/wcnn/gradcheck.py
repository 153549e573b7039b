"""Finite-difference checks for every analytic gradient in the package.

Each suite draws random instances from a seeded generator and reports the
worst per-entry relative error ``|a - b| / max(|a|, |b|, floor)`` between
the analytic gradient and a central difference.  The ``mutation`` hook
deliberately breaks one formula so the harness itself can be tested.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import make_rng
from .losses import (Batch, LossWeights, nuclear_norm_and_subgradient, ortho_penalty,
                     total_loss)
from .model import NIR, VIS, ModelConfig, forward, init_params, tie_free
from .wstats import W2Config, batch_stats, w2_gradients, w2_simplified

FD_STEP = 1e-5
REL_FLOOR = 1e-8
MUTATIONS = ("none", "flip-w2-vis")


def central_diff(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Gradient of scalar ``f`` at ``x``; ``x`` is perturbed in place and restored."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b, floor: float = REL_FLOOR) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@dataclass
class SuiteResult:
    name: str
    tolerance: float
    instances: int = 0
    entries: int = 0
    failing_entries: int = 0
    worst: float = 0.0
    skipped: int = 0
    # failures inside instances flagged as sitting at a kink (maxout tie)
    excused_entries: int = 0
    min_pass_fraction: float = 1.0

    def add(self, err: np.ndarray, excused: bool = False) -> None:
        self.instances += 1
        self.entries += err.size
        bad = int(np.sum(err > self.tolerance))
        self.failing_entries += bad
        if excused:
            self.excused_entries += bad
        else:
            self.worst = max(self.worst, float(err.max(initial=0.0)))

    @property
    def pass_fraction(self) -> float:
        return 1.0 - self.failing_entries / self.entries if self.entries else 1.0

    @property
    def passed(self) -> bool:
        return (self.entries > 0 and self.failing_entries == self.excused_entries
                and self.pass_fraction >= self.min_pass_fraction)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name:<12} worst_rel_err={self.worst:.3e} tol={self.tolerance:.0e} "
                f"instances={self.instances} entries={self.entries} failing={self.failing_entries} "
                f"at_ties={self.excused_entries}")


def wasserstein_suite(rng, instances: int = 100, tol: float = 1e-4, epsilon: float = 1e-6,
                      mutation: str = "none") -> SuiteResult:
    """w2_gradients against differences of w2_simplified; std kept above 10 sqrt(eps)."""
    res = SuiteResult("wasserstein", tol)
    cfg = W2Config(epsilon)
    min_std = 10 * np.sqrt(epsilon)
    while res.instances < instances:
        na, nb, d = (int(v) for v in rng.integers(2, 17, size=3))
        xa = rng.normal(rng.normal(), rng.uniform(0.2, 2.0), size=(na, d))
        xb = rng.normal(rng.normal(), rng.uniform(0.2, 2.0), size=(nb, d))
        if min(batch_stats(xa).std.min(), batch_stats(xb).std.min()) <= min_std:
            res.skipped += 1
            continue
        ga, gb = w2_gradients(xa, xb, cfg)
        if mutation == "flip-w2-vis":
            gb = -gb
        fa = central_diff(lambda z: w2_simplified(batch_stats(z), batch_stats(xb)), xa.copy())
        fb = central_diff(lambda z: w2_simplified(batch_stats(xa), batch_stats(z)), xb.copy())
        res.add(np.concatenate([rel_err(ga, fa).ravel(), rel_err(gb, fb).ravel()]))
    return res


def nuclear_suite(rng, instances: int = 50, tol: float = 1e-4, min_gap: float = 1e-3) -> SuiteResult:
    res = SuiteResult("nuclear", tol)
    while res.instances < instances:
        m, n = (int(v) for v in rng.integers(2, 9, size=2))
        a = rng.normal(size=(m, n))
        s = np.linalg.svd(a, compute_uv=False)
        if s[-1] <= min_gap or (len(s) > 1 and np.min(-np.diff(s)) <= min_gap):
            res.skipped += 1
            continue
        _, sub = nuclear_norm_and_subgradient(a)
        fd = central_diff(lambda z: nuclear_norm_and_subgradient(z)[0], a.copy())
        res.add(rel_err(sub, fd))
    return res


def ortho_suite(rng, instances: int = 50, tol: float = 1e-4) -> SuiteResult:
    """The constraint gradients, doubled, against differences of lambda ||P^T W||^2."""
    res = SuiteResult("ortho", tol)
    for _ in range(instances):
        rows, a, b = (int(v) for v in rng.integers(2, 9, size=3))
        w, p = rng.normal(size=(rows, a)), rng.normal(size=(rows, b))
        lam = float(rng.uniform(0.01, 1.0))
        _, gw, gp = ortho_penalty(w, p, lam)
        value = lambda ww, pp: lam * float(np.sum((pp.T @ ww) ** 2))
        fw = central_diff(lambda z: value(z, p), w.copy())
        fp = central_diff(lambda z: value(w, z), p.copy())
        res.add(np.concatenate([rel_err(2 * gw, fw).ravel(), rel_err(2 * gp, fp).ravel()]))
    return res


TINY_MODEL = ModelConfig(input_dim=8, hidden=(8,), p=8, d=8, num_classes=4)
TINY_WEIGHTS = LossWeights(beta1=1.0, beta2=1.0, beta3=0.05, lambda_n=0.2, lambda_v=0.3)


def _tiny_batch(rng, config: ModelConfig, batch_size: int) -> Batch:
    s = max(1, min(config.num_classes, batch_size // 4))
    k = batch_size // (2 * s)
    labels = np.repeat(rng.choice(config.num_classes, size=s, replace=False), k)
    return Batch(rng.normal(size=(s * k, config.input_dim)), labels,
                 rng.normal(size=(s * k, config.input_dim)), labels.copy())


def backprop_suite(rng, instances: int = 20, tol: float = 1e-4,
                   config: ModelConfig = TINY_MODEL, weights: LossWeights = TINY_WEIGHTS,
                   batch_size: int = 8, w2: W2Config = W2Config(1e-12),
                   tie_tol: float = 1e-4, min_pass_fraction: float = 0.99) -> SuiteResult:
    """Whole-objective gradient of random tiny models against differences.

    Every drawn instance is checked.  Failures are tolerated only inside
    instances with a maxout unit within ``tie_tol`` of a tie, and only while
    the overall pass fraction stays at or above ``min_pass_fraction``.

    The default W2 epsilon is tiny so the std floor never engages; with a
    larger epsilon, subjects whose embedding spread falls below its square
    root get a deliberately biased gradient.
    """
    res = SuiteResult("backprop", tol, min_pass_fraction=min_pass_fraction)
    for _ in range(instances):
        params = init_params(config, rng)
        batch = _tiny_batch(rng, config, batch_size)
        traces = [forward(batch.inputs(m), params, m) for m in (NIR, VIS)]
        _, grads, _ = total_loss(params, batch, weights, w2)
        errs = []
        for (_, arr), (_, g) in zip(params.named_arrays(), grads.named_arrays()):
            fd = central_diff(lambda _: total_loss(params, batch, weights, w2)[0].total, arr)
            errs.append(rel_err(g, fd).ravel())
        res.add(np.concatenate(errs), excused=not tie_free(traces, params, tie_tol))
    return res


def run_all(seed: int = 0, mutation: str = "none", quick: bool = False) -> list[SuiteResult]:
    if mutation not in MUTATIONS:
        raise ValueError(f"unknown mutation {mutation!r}; choose from {MUTATIONS}")
    scale = 5 if quick else 1
    return [
        wasserstein_suite(make_rng(seed), instances=100 // scale, mutation=mutation),
        nuclear_suite(make_rng(seed + 1), instances=50 // scale),
        ortho_suite(make_rng(seed + 2), instances=50 // scale),
        backprop_suite(make_rng(seed + 3), instances=20 // scale),
    ]
