"""Size/density sweep at fixed hyperparameters over the four hardest difficulties.

    python scripts/run_sweep.py --config configs/sweep.yaml --out runs/sweep
"""
import argparse
import logging
from pathlib import Path

from complexnets import cli
from complexnets.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/sweep.yaml")
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--difficulties", type=int, nargs="+", default=[3, 6, 9, 12])
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config)
    for reps in args.difficulties:
        cfg.dataset.n_reps = reps
        out = Path(args.out) / f"n_reps_{reps}"
        rows = cli.cmd_sweep(cfg, out, args.workers)
        for r in rows:
            print(f"n_reps={reps} {r['family']} N={r['n']} rho={r['rho']} L={r['l']} "
                  f"{r['status']} acc={r['mean_accuracy']:.4f}")


if __name__ == "__main__":
    main()
