"""Full method x labeled-budget grid from one config file.

    python scripts/table1_grid.py --config configs/table1.cfg --budgets 600 1200 --workers 1

Every cell trains all seeds of the config; finished cells (matching run.cfg)
are reused. The comparison table lands in <out>/table1.csv.
"""
import argparse
import json
from pathlib import Path

from ssil.experiment import cmd_compare, cmd_generate, cmd_leverage, cmd_train, load_config

METHODS = ("gail", "gail-expert-only", "mixgail", "ssil")


def run_cell(cfg, workers):
    run = Path(cfg.out) / cfg.run_name()
    if (run / "report.json").exists() and (run / "run.cfg").exists() and load_config(run / "run.cfg") == cfg:
        return run
    rep = cmd_train(cfg, workers)
    print(f"{cfg.run_name()}: {rep.scaled_mean:.3f} +- {rep.scaled_std:.3f}", flush=True)
    return run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/table1.cfg")
    ap.add_argument("--budgets", type=int, nargs="+", default=[100, 300, 600, 1200])
    ap.add_argument("--methods", nargs="+", default=list(METHODS), choices=METHODS)
    ap.add_argument("--leverage", nargs="+", default=["vae"])
    ap.add_argument("--out", default=None)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    base = load_config(args.config, out=args.out)
    runs = []
    for budget in sorted(args.budgets):
        cfg = base.replace(labeled_pairs=budget)
        if not (cfg.data_dir / f"labeled_n{budget}.traj").exists():
            cmd_generate(cfg)
        for m in args.methods:
            if m == "gail" and budget != max(args.budgets):
                continue  # mixed-input GAIL sees every pair anyway; one run fills the whole row
            levs = args.leverage if m == "ssil" else [base.leverage_method]
            for lev in levs:
                c = cfg.replace(method=m, leverage_method=lev)
                if m == "ssil" and not (c.data_dir / f"pool_{lev}_n{budget}.lev").exists():
                    cmd_leverage(c)
                runs.append(run_cell(c, args.workers))
    rows = cmd_compare(runs, Path(base.out) / "table1.csv")
    print(json.dumps(rows, indent=1))


if __name__ == "__main__":
    main()
