"""Command line entry point: ``complexnets <subcommand> --config FILE``.

Exit codes: 0 success, 2 configuration error, 3 graph generation failure,
4 training failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .config import ConfigError, ExperimentConfig, load_config
from .dag import AdjustError, Dag
from .graphgen import GenerationError, UGraph
from .net import DagNet
from .train import Job, RunRecord, TrainingError, evaluate_topology, grid_search, run_job

log = logging.getLogger("complexnets")

EXIT_CONFIG, EXIT_GENERATION, EXIT_TRAINING = 2, 3, 4

RESULT_COLUMNS = [
    "config_hash",
    "phase",
    "run_id",
    "family",
    "gen_seed",
    "init_seed",
    "lr",
    "batch_size",
    "best_val_loss",
    "best_epoch",
    "test_accuracy",
    "epochs_run",
    "max_epochs",
    "final_lr",
    "wall_time",
]
GRID_COLUMNS = ["config_hash", "family", "lr", "batch_size", "median_val_loss"]
STATS_COLUMNS = ["config_hash", "test", "groups", "statistic", "p"]
SWEEP_COLUMNS = ["config_hash", "family", "n", "rho", "l", "runs", "mean_accuracy", "std_accuracy", "status"]
ROBUSTNESS_COLUMNS = ["config_hash", "family", "f", "gain_mean", "gain_std", "acc_mean", "n_models"]


class CommandError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


def run_id(family: str, seed: int) -> str:
    return f"{family}/seed_{seed}"


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in columns})


def read_csv(path: Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


class ResultsLog:
    """Append-only results CSV; every row carries the config hash."""

    def __init__(self, path: Path, config_hash: str, resume: bool):
        self.path = path
        self.hash = config_hash
        self.rows: list[dict] = []
        if path.exists():
            self.rows = read_csv(path)
            other = {r["config_hash"] for r in self.rows} - {config_hash}
            if other:
                raise CommandError(
                    f"{path} holds rows of another config ({', '.join(sorted(other))}); use a fresh --out",
                    EXIT_CONFIG,
                )
            if self.rows and not resume:
                raise CommandError(f"{path} already has results; pass --resume or use a fresh --out", EXIT_CONFIG)
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w", newline="") as fh:
                csv.DictWriter(fh, RESULT_COLUMNS).writeheader()

    def done(self, phase: str) -> dict:
        out = {}
        for r in self.rows:
            if r["phase"] != phase:
                continue
            rec = RunRecord(
                family=r["family"],
                gen_seed=int(r["gen_seed"]),
                init_seed=int(r["init_seed"]),
                lr=float(r["lr"]),
                batch_size=int(r["batch_size"]),
                best_val_loss=float(r["best_val_loss"]),
                best_epoch=int(r["best_epoch"]),
                test_accuracy=float(r["test_accuracy"]),
                epochs_run=int(r["epochs_run"]),
                wall_time=float(r["wall_time"]),
                max_epochs=int(r["max_epochs"]),
                final_lr=float(r["final_lr"]),
            )
            out[(rec.family, rec.gen_seed, rec.lr, rec.batch_size)] = rec
        return out

    def append(self, phase: str, rec: RunRecord) -> None:
        row = dict(rec.row(), config_hash=self.hash, phase=phase, run_id=run_id(rec.family, rec.gen_seed))
        with self.path.open("a", newline="") as fh:
            csv.DictWriter(fh, RESULT_COLUMNS, extrasaction="ignore").writerow(
                {k: _fmt(row.get(k, "")) for k in RESULT_COLUMNS}
            )
        self.rows.append({k: str(row.get(k, "")) for k in RESULT_COLUMNS})


@contextmanager
def _pool(workers: int):
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as ex:
        yield ex.map


def _recording_map(base_map, on_result):
    """map() wrapper that hands each finished job to ``on_result`` in submission order."""

    def mapper(fn, jobs):
        jobs = list(jobs)
        for job, out in zip(jobs, base_map(fn, jobs)):
            on_result(job, out)
            yield out

    return mapper


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(cfg: ExperimentConfig, out: Path, seeds=None) -> list[Path]:
    """Write one DAG JSON file per (family, seed) under ``out/graphs``."""
    seeds = list(cfg.eval_seeds if seeds is None else seeds)
    written = []
    for fam in cfg.resolved_families():
        for s in seeds:
            try:
                dag = fam.dag(cfg.n, cfg.edges, cfg.n_in, cfg.n_out, s)
            except (GenerationError, AdjustError) as err:
                raise CommandError(f"family {fam.name}: {err}", EXIT_GENERATION) from None
            path = out / "graphs" / fam.name / f"seed_{s}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(dag.to_json() + "\n")
            written.append(path)
    return written


def _model_path(out: Path, family: str, seed: int) -> Path:
    return out / "models" / family / f"seed_{seed}.json"


def stats_rows(samples: dict[str, list[float]], correction: str = "none") -> list[dict]:
    """One Kruskal-Wallis row over all families plus pairwise U-test rows."""
    rows = []
    usable = {k: v for k, v in samples.items() if len(v) >= 2}
    if len(usable) >= 2:
        h, p = analysis.kruskal_wallis(*usable.values())
        rows.append({"test": "kruskal_wallis", "groups": "|".join(usable), "statistic": h, "p": p})
        rows.extend(analysis.posthoc_pairs(usable, None if correction == "none" else correction))
    return rows


def cmd_experiment(cfg: ExperimentConfig, out: Path, workers: int = 1, resume: bool = False) -> dict:
    """Grid search, then evaluation runs, per family; then rank tests."""
    out.mkdir(parents=True, exist_ok=True)
    fams = cfg.resolved_families()
    h = cfg.hash()
    (out / "config.yaml").write_text(cfg.to_yaml())
    results = ResultsLog(out / "results.csv", h, resume)
    ds = cfg.dataset.build()
    summary = {}
    with _pool(workers) as base_map:
        for fam in fams:

            def on_hpo(job, res):
                results.append("hpo", res[0])

            grid = grid_search(
                fam,
                ds,
                cfg.lr_grid,
                cfg.bs_grid,
                n=cfg.n,
                l=cfg.edges,
                seeds=cfg.hpo_seeds,
                base_cfg=cfg.train,
                map_fn=_recording_map(base_map, on_hpo),
                done=results.done("hpo"),
            )
            write_csv(
                out / f"grid_{fam.name}.csv",
                GRID_COLUMNS,
                [dict(r, config_hash=h, family=fam.name) for r in grid.table],
            )
            log.info("%s: best lr=%g bs=%d", fam.name, grid.best_lr, grid.best_batch_size)

            done_eval = results.done("eval")
            pending = []
            for s in cfg.eval_seeds:
                key = (fam.name, s, grid.best_lr, grid.best_batch_size)
                if key not in done_eval or not _model_path(out, fam.name, s).exists():
                    pending.append(s)

            def on_eval(job, res):
                rec, net = res
                path = _model_path(out, fam.name, rec.gen_seed)
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(net.to_json())
                results.append("eval", rec)

            if pending:
                evaluate_topology(
                    fam,
                    ds,
                    grid.best_lr,
                    grid.best_batch_size,
                    n=cfg.n,
                    l=cfg.edges,
                    seeds=pending,
                    base_cfg=cfg.train,
                    map_fn=_recording_map(base_map, on_eval),
                )
            by_seed = {}
            for r in results.done("eval").values():
                if r.family == fam.name and r.lr == grid.best_lr and r.batch_size == grid.best_batch_size:
                    by_seed[r.gen_seed] = r.test_accuracy
            summary[fam.name] = [by_seed[s] for s in cfg.eval_seeds]
    stats = stats_rows(summary, cfg.posthoc_correction)
    write_csv(out / "stats.csv", STATS_COLUMNS, [dict(r, config_hash=h) for r in stats])
    write_csv(
        out / "summary.csv",
        ["config_hash", "family", "mean_accuracy", "std_accuracy", "runs"],
        [
            {
                "config_hash": h,
                "family": k,
                "mean_accuracy": float(np.mean(v)),
                "std_accuracy": float(np.std(v, ddof=1)) if len(v) > 1 else 0.0,
                "runs": len(v),
            }
            for k, v in summary.items()
        ],
    )
    return summary


def cmd_sweep(cfg: ExperimentConfig, out: Path, workers: int = 1) -> list[dict]:
    """Mean test accuracy per (N, density) cell at fixed hyperparameters."""
    sw = cfg.sweep
    h = cfg.hash()
    ds = cfg.dataset.build()
    train_cfg = replace(cfg.train, lr=sw.lr, batch_size=sw.batch_size)
    rows = []
    with _pool(workers) as pmap:
        for spec in cfg.families:
            if spec.kind == "mlp":
                raise CommandError(f"family {spec.name}: mlp density is fixed by N and cannot be swept", EXIT_CONFIG)
            for n in sw.sizes:
                for rho in sw.densities:
                    l = analysis.edges_for_density(n, rho)
                    row = {"config_hash": h, "family": spec.name, "n": n, "rho": rho, "l": l}
                    # feasibility is per seed: a sparse draw can have more leaves than I/O slots
                    seeds = []
                    try:
                        fam = spec.family(n, l)
                    except (GenerationError, ValueError) as err:
                        fam = None
                        log.warning("%s at N=%d rho=%g: %s", spec.name, n, rho, err)
                    for s in sw.seeds if fam is not None else []:
                        try:
                            fam.dag(n, l, ds.dim, ds.n_classes, s)
                            seeds.append(s)
                        except (GenerationError, AdjustError) as err:
                            log.warning("%s at N=%d rho=%g seed %d: %s", spec.name, n, rho, s, err)
                    if not seeds:
                        row.update(runs=0, mean_accuracy=float("nan"), std_accuracy=float("nan"), status="infeasible")
                        rows.append(row)
                        continue
                    jobs = [Job(fam, n, l, s, train_cfg, ds) for s in seeds]
                    acc = [r.test_accuracy for r, _ in pmap(run_job, jobs)]
                    row.update(
                        runs=len(acc),
                        mean_accuracy=float(np.mean(acc)),
                        std_accuracy=float(np.std(acc, ddof=1)) if len(acc) > 1 else 0.0,
                        status="ok" if len(seeds) == len(sw.seeds) else "partial",
                    )
                    rows.append(row)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    return rows


def load_models(models_dir: Path) -> dict[str, list[DagNet]]:
    models_dir = Path(models_dir)
    if not models_dir.is_dir():
        raise CommandError(f"models directory {models_dir} does not exist", EXIT_CONFIG)
    out: dict[str, list[DagNet]] = {}
    for fam_dir in sorted(p for p in models_dir.iterdir() if p.is_dir()):
        files = sorted(fam_dir.glob("*.json"))
        if files:
            out[fam_dir.name] = [DagNet.from_json(f.read_text()) for f in files]
    if not out:
        raise CommandError(f"no models found under {models_dir}", EXIT_CONFIG)
    return out


def cmd_robustness(cfg: ExperimentConfig, models_dir: Path, out: Path, rescale: bool = False) -> list[dict]:
    """Accuracy gain per (family, removal fraction)."""
    models = load_models(models_dir)
    ds = cfg.dataset.build()
    rb = cfg.robustness
    h = cfg.hash()
    rows = []
    for fam, nets in models.items():
        curve = analysis.robustness_curve(nets, ds, rb.fractions, rb.trials, rb.seed, rescale)
        for r in curve:
            rows.append(dict(r, config_hash=h, family=fam, n_models=len(nets)))
    write_csv(out / "robustness.csv", ROBUSTNESS_COLUMNS, rows)
    return rows


def cmd_attributes(graphs_dir: Path, out: Path, results: Path | None = None) -> list[dict]:
    """Attribute row per graph file, joined with evaluation accuracies if given."""
    graphs_dir = Path(graphs_dir)
    files = sorted(graphs_dir.rglob("*.json"))
    if not files:
        raise CommandError(f"no graph files under {graphs_dir}", EXIT_CONFIG)
    acc = {}
    if results is not None:
        for r in read_csv(results):
            if r.get("phase", "eval") == "eval":
                acc[r["run_id"]] = float(r["test_accuracy"])
    rows = []
    for f in files:
        d = json.loads(f.read_text())
        g = Dag.from_dict(d) if "rank" in d else UGraph.from_dict(d)
        rid = f.relative_to(graphs_dir).with_suffix("").as_posix()
        row = {"run_id": rid, **analysis.attributes(g)}
        if results is not None:
            if rid in acc:
                row["test_accuracy"] = acc[rid]
            else:
                log.warning("no accuracy for %s in %s", rid, results)
                row["test_accuracy"] = ""
        rows.append(row)
    cols = ["run_id", *analysis.ATTRIBUTE_NAMES] + (["test_accuracy"] if results is not None else [])
    write_csv(out / "attributes.csv", cols, rows)
    joined = [r for r in rows if r.get("test_accuracy", "") != ""]
    if len(joined) >= 2:
        table = [{k: r[k] for k in analysis.ATTRIBUTE_NAMES} for r in joined]
        corr = analysis.correlate(table, [r["test_accuracy"] for r in joined])
        write_csv(out / "correlations.csv", ["attribute", "pearson", "spearman"], corr)
    return rows


def cmd_stats(results: Path, out: Path, correction: str = "none") -> list[dict]:
    rows = read_csv(results)
    samples: dict[str, list[float]] = {}
    hashes = {r["config_hash"] for r in rows}
    for r in rows:
        if r["phase"] == "eval":
            samples.setdefault(r["family"], []).append(float(r["test_accuracy"]))
    stats = stats_rows(samples, correction)
    h = hashes.pop() if len(hashes) == 1 else ""
    write_csv(out / "stats.csv", STATS_COLUMNS, [dict(r, config_hash=h) for r in stats])
    return stats


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="complexnets", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="experiment YAML file")
        sp.add_argument("--out", default="results", help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("generate", help="write DAG files per family and seed")
    common(sp)
    sp = sub.add_parser("experiment", help="grid search + evaluation + rank tests")
    common(sp)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--resume", action="store_true", help="skip runs already in results.csv")
    sp = sub.add_parser("sweep", help="size/density accuracy surface")
    common(sp)
    sp.add_argument("--workers", type=int, default=1)
    sp = sub.add_parser("robustness", help="accuracy gain under random node removal")
    common(sp)
    sp.add_argument("--models", help="directory of model checkpoints (default OUT/models)")
    sp.add_argument("--damage-rescale", action="store_true", help="rescale surviving activations by 1/(1-f)")
    sp = sub.add_parser("attributes", help="topological attributes per graph file")
    common(sp, config=False)
    sp.add_argument("--graphs", required=True)
    sp.add_argument("--results", help="results.csv to join accuracies from")
    sp = sub.add_parser("stats", help="Kruskal-Wallis + pairwise Mann-Whitney from results.csv")
    common(sp, config=False)
    sp.add_argument("--results", required=True)
    sp.add_argument("--correction", choices=["none", "holm"], default="none")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        cfg = load_config(args.config) if getattr(args, "config", None) else None
        if args.command == "generate":
            paths = cmd_generate(cfg, out)
            print(f"wrote {len(paths)} dag files under {out / 'graphs'}")
        elif args.command == "experiment":
            summary = cmd_experiment(cfg, out, args.workers, args.resume)
            for fam, acc in summary.items():
                print(f"{fam}: mean accuracy {np.mean(acc):.4f} over {len(acc)} runs")
        elif args.command == "sweep":
            rows = cmd_sweep(cfg, out, args.workers)
            print(f"wrote {len(rows)} sweep rows to {out / 'sweep.csv'}")
        elif args.command == "robustness":
            models = Path(args.models) if args.models else out / "models"
            rows = cmd_robustness(cfg, models, out, args.damage_rescale)
            print(f"wrote {len(rows)} robustness rows to {out / 'robustness.csv'}")
        elif args.command == "attributes":
            rows = cmd_attributes(Path(args.graphs), out, Path(args.results) if args.results else None)
            print(f"wrote {len(rows)} attribute rows to {out / 'attributes.csv'}")
        elif args.command == "stats":
            rows = cmd_stats(Path(args.results), out, args.correction)
            print(f"wrote {len(rows)} test rows to {out / 'stats.csv'}")
    except CommandError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (GenerationError, AdjustError) as err:
        print(f"generation failed: {err}", file=sys.stderr)
        return EXIT_GENERATION
    except TrainingError as err:
        print(f"training failed: {err}", file=sys.stderr)
        return EXIT_TRAINING
    return 0


if __name__ == "__main__":
    sys.exit(main())
