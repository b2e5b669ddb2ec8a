"""Reduced grid: one budget, SSIL against expert-only GAIL, one seed. Prints wall time."""
import argparse
import time

from ssil.experiment import cmd_generate, cmd_leverage, cmd_train, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/table1.cfg")
    ap.add_argument("--out", default="runs/smoke")
    ap.add_argument("--budget", type=int, default=600)
    args = ap.parse_args()
    t0 = time.time()
    cfg = load_config(args.config, out=args.out, labeled_pairs=args.budget, seeds=(0,))
    cmd_generate(cfg)
    cmd_leverage(cfg)
    for m in ("gail-expert-only", "ssil"):
        rep = cmd_train(cfg.replace(method=m))
        print(f"{m}: scaled {rep.scaled_mean:.3f}", flush=True)
    print(f"smoke grid finished in {(time.time() - t0) / 60:.1f} min")


if __name__ == "__main__":
    main()
