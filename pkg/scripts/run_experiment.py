"""Full comparison pipeline for one config: graphs, grid search + evaluation,
rank tests, robustness on the trained models, and graph attributes.

    python scripts/run_experiment.py --config configs/default.yaml --out runs/default
"""
import argparse
import logging
from pathlib import Path

from complexnets import cli
from complexnets.config import default_config, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="experiment YAML (default: built-in six-family config)")
    ap.add_argument("--out", default="runs/default")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--resume", action="store_true")
    ap.add_argument("--n-reps", type=int, help="override dataset difficulty")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config) if args.config else default_config()
    if args.n_reps is not None:
        cfg.dataset.n_reps = args.n_reps
    out = Path(args.out)

    cli.cmd_generate(cfg, out)
    summary = cli.cmd_experiment(cfg, out, args.workers, args.resume)
    cli.cmd_robustness(cfg, out / "models", out)
    cli.cmd_attributes(out / "graphs", out, out / "results.csv")
    for fam, acc in summary.items():
        print(f"{fam:>10}: mean test accuracy {sum(acc) / len(acc):.4f} over {len(acc)} seeds")
    print(f"outputs in {out}")


if __name__ == "__main__":
    main()
