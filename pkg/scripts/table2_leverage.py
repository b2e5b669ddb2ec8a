"""Mean leverage per data source, over several data seeds.

    python scripts/table2_leverage.py --seeds 0 1 2 --methods vae windowvae --csv runs/table2.csv
"""
import argparse
import csv
import time

from ssil.experiment import ExperimentConfig, generate_data, tier_means
from ssil.leverage import METHODS, LeverageConfig, leverage_unlabeled


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--methods", nargs="+", default=["vae", "windowvae"], choices=METHODS)
    ap.add_argument("--labeled-pairs", type=int, default=600)
    ap.add_argument("--pool-pairs", type=int, default=8000)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()
    rows = []
    for seed in args.seeds:
        cfg = ExperimentConfig(data_seed=seed, labeled_pairs=args.labeled_pairs, pool_pairs=args.pool_pairs)
        labeled, pool = generate_data(cfg)
        for method in args.methods:
            t0 = time.time()
            means = tier_means(pool, leverage_unlabeled(method, labeled, pool, LeverageConfig(seed=seed)))
            rows.append({"seed": seed, "method": method, **means, "seconds": round(time.time() - t0, 1)})
            print(seed, method, " ".join(f"{k}={v:.4f}" for k, v in means.items()), flush=True)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
