"""Ablation over loss terms on the default synthetic protocol.

Trains each variant for every seed and prints mean rank-1, VR@FAR, held-out
W2 ratio and the correlation diagnostic.  Per-run rows go to --csv.

    python scripts/ablation.py --seeds 0 1 2 3 4 --csv ablation.csv
"""
import argparse
import csv
import time
from dataclasses import replace

import numpy as np

from wcnn.experiment import SOFTMAX_ONLY, run_seed
from wcnn.trainer import TrainConfig

BASE = TrainConfig()
VARIANTS = {
    "softmax_only": BASE.with_weights(**SOFTMAX_ONLY),
    "wasserstein": BASE.with_weights(beta3=0.0, lambda_n=0.0, lambda_v=0.0),
    "wasserstein+ortho": BASE.with_weights(beta3=0.0),
    "full": BASE,
    "full_small_lambda": BASE.with_weights(lambda_n=1e-3, lambda_v=1e-3),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--iterations", type=int, default=BASE.iterations)
    ap.add_argument("--variants", nargs="+", choices=sorted(VARIANTS), default=list(VARIANTS))
    ap.add_argument("--csv", help="write one row per (variant, seed)")
    args = ap.parse_args()

    rows = []
    for name in args.variants:
        cfg = VARIANTS[name]
        cfg = replace(cfg, iterations=args.iterations)
        for seed in args.seeds:
            t0 = time.perf_counter()
            row = {"variant": name, **run_seed(seed, cfg).summary(),
                   "seconds": round(time.perf_counter() - t0, 1)}
            rows.append(row)
            print(f"{name:<22} seed={seed} rank1={row['rank1']:.3f} "
                  f"w2_ratio={row['heldout_w2_ratio']:.3f} cd={row['cross_diag']:.3f} "
                  f"({row['seconds']}s)", flush=True)

    print(f"\n{'variant':<22} {'rank1':>7} {'vr@1e-2':>8} {'vr@1e-3':>8} {'w2 ratio':>9} {'cross diag':>10}")
    for name in args.variants:
        sel = [r for r in rows if r["variant"] == name]
        mean = lambda k: np.mean([r[k] for r in sel])
        print(f"{name:<22} {mean('rank1'):7.3f} {mean('vr@1e-2'):8.3f} {mean('vr@1e-3'):8.3f} "
              f"{mean('heldout_w2_ratio'):9.3f} {mean('cross_diag'):10.4f}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
