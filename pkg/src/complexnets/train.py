"""Training protocol: Adam, plateau LR schedule, early stopping, grid search."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import net as nn
from .dag import Dag, build_dag
from .data import Dataset
from .graphgen import FamilyParams, generate, mlp_hidden_size

__all__ = [
    "TrainConfig",
    "RunRecord",
    "TrainingError",
    "Family",
    "Adam",
    "Job",
    "train",
    "run_job",
    "evaluate_loss",
    "accuracy",
    "grid_search",
    "GridResult",
    "evaluate_topology",
    "EvalResult",
    "HPO_SEEDS",
    "EVAL_SEEDS",
    "INIT_SEED_OFFSET",
]

HPO_SEEDS = tuple(range(5))
EVAL_SEEDS = tuple(range(100, 115))
INIT_SEED_OFFSET = 10_000


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    scheduler_factor: float = 0.5
    scheduler_patience: int = 10
    early_stop_patience: int = 15
    max_epochs: int = 500
    min_delta: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.scheduler_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be positive")


@dataclass
class RunRecord:
    family: str
    gen_seed: int
    init_seed: int
    lr: float
    batch_size: int
    best_val_loss: float
    best_epoch: int
    test_accuracy: float
    epochs_run: int
    wall_time: float
    max_epochs: int = 500
    final_lr: float = float("nan")
    val_losses: list[float] = field(default_factory=list, repr=False)
    lrs: list[float] = field(default_factory=list, repr=False)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("val_losses")
        d.pop("lrs")
        return d


@dataclass
class Family:
    """A named graph family: generator parameters plus a DAG ordering."""

    name: str
    params: FamilyParams
    ordering: str = "random"

    def graph(self, n: int, l: int, n_in: int, n_out: int, gen_seed: int):
        p = self.params
        if p.kind == "mlp" and not p.layer_sizes:
            p = replace(p, layer_sizes=[n_in, mlp_hidden_size(n, n_in, n_out), n_out])
        if p.kind == "mlp":
            return generate(p, n, sum(a * b for a, b in zip(p.layer_sizes, p.layer_sizes[1:])), gen_seed)
        return generate(p, n, l, gen_seed)

    def dag(self, n: int, l: int, n_in: int, n_out: int, gen_seed: int) -> Dag:
        g = self.graph(n, l, n_in, n_out, gen_seed)
        ordering = "identity" if self.params.kind == "mlp" else self.ordering
        return build_dag(g, n_in, n_out, ordering=ordering, seed=gen_seed)


class Adam:
    """Adam with bias correction on a flat parameter vector."""

    def __init__(self, size: int, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m = b1 * self.m + (1 - b1) * grad
        self.v = b2 * self.v + (1 - b2) * grad * grad
        mhat = self.m / (1 - b1**self.t)
        vhat = self.v / (1 - b2**self.t)
        return theta - lr * mhat / (np.sqrt(vhat) + self.eps)


def evaluate_loss(net: nn.DagNet, x, y) -> float:
    return nn.cross_entropy(nn.forward(net, x), np.asarray(y))[0]


def accuracy(net: nn.DagNet, x, y, mask=None) -> float:
    pred = nn.forward(net, x, mask).argmax(axis=1)
    return float(np.mean(pred == np.asarray(y)))


def train(net: nn.DagNet, ds: Dataset, cfg: TrainConfig, family: str = "", gen_seed: int = -1, init_seed: int = -1):
    """Train ``net`` in place and restore its best-validation parameters.

    Two thresholds are kept apart: the stored checkpoint follows every
    strict decrease of the validation loss, while the scheduler and
    early-stopping counters only reset on a decrease of at least
    ``cfg.min_delta``.
    """
    x_tr, y_tr = ds.part("train")
    x_val, y_val = ds.part("val")
    if ds.dim != net.n_in or ds.n_classes != net.n_out:
        raise ValueError(
            f"net has {net.n_in} inputs / {net.n_out} outputs, dataset has {ds.dim} features / {ds.n_classes} classes"
        )
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    theta = net.get_params()
    opt = Adam(theta.size, cfg.beta1, cfg.beta2, cfg.adam_eps)
    L = len(net.weights)
    lr = cfg.lr
    best_val, best_theta, best_epoch = np.inf, theta.copy(), 0
    ref_val = np.inf
    sched_bad = stop_bad = 0
    val_losses, lrs = [], []
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(len(y_tr))
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            loss, gw, gb = nn.backward(net, x_tr[idx], y_tr[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"{family or 'net'}: non-finite training loss at epoch {epoch}")
            grad = np.empty_like(theta)
            grad[:L] = gw
            grad[L:] = gb[net.bias_nodes]
            theta = opt.step(theta, grad, lr)
            net.set_params(theta)
        val = evaluate_loss(net, x_val, y_val)
        if not np.isfinite(val):
            raise TrainingError(f"{family or 'net'}: non-finite validation loss at epoch {epoch}")
        val_losses.append(val)
        lrs.append(lr)
        if val < best_val:
            best_val, best_theta, best_epoch = val, theta.copy(), epoch
        if val < ref_val - cfg.min_delta:
            ref_val = val
            sched_bad = stop_bad = 0
        else:
            sched_bad += 1
            stop_bad += 1
            if stop_bad >= cfg.early_stop_patience:
                break
            if sched_bad >= cfg.scheduler_patience:
                lr *= cfg.scheduler_factor
                sched_bad = 0
    net.set_params(best_theta)
    x_te, y_te = ds.part("test")
    rec = RunRecord(
        family=family,
        gen_seed=gen_seed,
        init_seed=init_seed,
        lr=cfg.lr,
        batch_size=cfg.batch_size,
        best_val_loss=float(best_val),
        best_epoch=best_epoch,
        test_accuracy=accuracy(net, x_te, y_te) if len(y_te) else float("nan"),
        epochs_run=epoch,
        wall_time=time.perf_counter() - t0,
        max_epochs=cfg.max_epochs,
        final_lr=lr,
        val_losses=val_losses,
        lrs=lrs,
    )
    return net, rec


@dataclass
class Job:
    """One independent training: everything needed to rebuild and train a net."""

    family: Family
    n: int
    l: int
    gen_seed: int
    cfg: TrainConfig
    ds: Dataset = field(repr=False)

    @property
    def init_seed(self) -> int:
        return self.gen_seed + INIT_SEED_OFFSET

    def key(self) -> tuple:
        return (self.family.name, self.gen_seed, self.cfg.lr, self.cfg.batch_size)


def run_job(job: Job) -> tuple[RunRecord, nn.DagNet]:
    dag = job.family.dag(job.n, job.l, job.ds.dim, job.ds.n_classes, job.gen_seed)
    net = nn.init(dag, job.init_seed)
    cfg = replace(job.cfg, seed=job.gen_seed)
    net, rec = train(net, job.ds, cfg, job.family.name, job.gen_seed, job.init_seed)
    return rec, net


MapFn = Callable[[Callable, Iterable], Iterable]


@dataclass
class GridResult:
    best_lr: float
    best_batch_size: int
    table: list[dict]  # lr, batch_size, median_val_loss
    records: list[RunRecord]


def grid_search(
    family: Family,
    ds: Dataset,
    lr_grid: Sequence[float],
    bs_grid: Sequence[int],
    n: int = 128,
    l: int = 732,
    seeds: Sequence[int] = HPO_SEEDS,
    base_cfg: TrainConfig | None = None,
    map_fn: MapFn = map,
    done: dict | None = None,
) -> GridResult:
    """Pick the (lr, batch size) pair minimizing the median best validation loss.

    Ties go to the lower lr, then the lower batch size. ``done`` maps job keys
    to already-finished records, which are reused instead of retrained.
    """
    if not lr_grid or not bs_grid:
        raise ValueError("hyperparameter grids must be non-empty")
    base_cfg = base_cfg or TrainConfig()
    done = done or {}
    jobs = [
        Job(family, n, l, s, replace(base_cfg, lr=lr, batch_size=bs), ds)
        for lr in lr_grid
        for bs in bs_grid
        for s in seeds
    ]
    todo = [j for j in jobs if j.key() not in done]
    fresh = {j.key(): rec for j, (rec, _) in zip(todo, map_fn(run_job, todo))}
    records = [done.get(j.key()) or fresh[j.key()] for j in jobs]
    table = []
    for lr in lr_grid:
        for bs in bs_grid:
            losses = [r.best_val_loss for r in records if r.lr == lr and r.batch_size == bs]
            table.append({"lr": lr, "batch_size": bs, "median_val_loss": float(np.median(losses))})
    best = min(table, key=lambda r: (r["median_val_loss"], r["lr"], r["batch_size"]))
    return GridResult(best["lr"], best["batch_size"], table, records)


@dataclass
class EvalResult:
    family: str
    accuracies: list[float]
    mean: float
    std: float
    records: list[RunRecord]
    nets: list[nn.DagNet] = field(repr=False, default_factory=list)


def evaluate_topology(
    family: Family,
    ds: Dataset,
    lr: float,
    batch_size: int,
    n: int = 128,
    l: int = 732,
    seeds: Sequence[int] = EVAL_SEEDS,
    base_cfg: TrainConfig | None = None,
    map_fn: MapFn = map,
) -> EvalResult:
    """Train one fresh model per seed with fixed hyperparameters; collect test accuracy."""
    base_cfg = replace(base_cfg or TrainConfig(), lr=lr, batch_size=batch_size)
    jobs = [Job(family, n, l, s, base_cfg, ds) for s in seeds]
    out = list(map_fn(run_job, jobs))
    records = [r for r, _ in out]
    acc = [r.test_accuracy for r in records]
    std = float(np.std(acc, ddof=1)) if len(acc) > 1 else 0.0
    return EvalResult(family.name, acc, float(np.mean(acc)), std, records, [m for _, m in out])
