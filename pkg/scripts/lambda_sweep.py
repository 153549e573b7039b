"""How strongly the orthogonality weight shapes training.

For each lambda (applied to both modalities) reports the end/init ratio of
||P^T W||_F, the held-out W2 ratio and rank-1, averaged over seeds.
"""
import argparse

import numpy as np

from wcnn.experiment import run_seed
from wcnn.trainer import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambdas", type=float, nargs="+", default=[1e-3, 1e-2, 3e-2, 0.1, 0.3])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--iterations", type=int, default=TrainConfig().iterations)
    args = ap.parse_args()

    print(f"{'lambda':>8} {'ortho N':>8} {'ortho V':>8} {'w2 ratio':>9} {'rank1':>6}")
    for lam in args.lambdas:
        cfg = TrainConfig(iterations=args.iterations).with_weights(lambda_n=lam, lambda_v=lam)
        res = [run_seed(s, cfg) for s in args.seeds]
        on = np.mean([r.ortho_ratios[0] for r in res])
        ov = np.mean([r.ortho_ratios[1] for r in res])
        w2 = np.mean([r.heldout_ratio for r in res])
        r1 = np.mean([r.report.rank1 for r in res])
        print(f"{lam:8.0e} {on:8.4f} {ov:8.4f} {w2:9.3f} {r1:6.3f}", flush=True)


if __name__ == "__main__":
    main()
