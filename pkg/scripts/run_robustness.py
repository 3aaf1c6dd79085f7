"""Train BA and MLP models on the easiest task and report the accuracy gain curve.

    python scripts/run_robustness.py --out runs/robustness
"""
import argparse
import logging
from pathlib import Path

from complexnets import cli
from complexnets.config import default_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/robustness")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--rescale", action="store_true", help="rescale surviving activations by 1/(1-f)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = default_config()
    cfg.dataset.n_reps = 3
    cfg.families = [f for f in cfg.families if f.name in ("ba", "mlp-h1")]
    out = Path(args.out)
    cli.cmd_experiment(cfg, out, args.workers, resume=(out / "results.csv").exists())
    for r in cli.cmd_robustness(cfg, out / "models", out, args.rescale):
        print(f"{r['family']:>8} f={r['f']:.1f} A={r['gain_mean']:.4f} +- {r['gain_std']:.4f}")


if __name__ == "__main__":
    main()
