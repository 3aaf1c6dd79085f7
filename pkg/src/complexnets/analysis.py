"""Rank tests, robustness curves, graph attributes and correlations."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import networkx as nx
import numpy as np
from scipy import stats as sps

from .dag import Dag, level_partition
from .data import Dataset
from .graphgen import UGraph
from .net import DagNet, forward, sample_damage

__all__ = [
    "rankdata",
    "kruskal_wallis",
    "mann_whitney",
    "holm",
    "posthoc_pairs",
    "ROBUSTNESS_FRACTIONS",
    "robustness_curve",
    "density",
    "edges_for_density",
    "powerlaw_slope",
    "attributes",
    "ATTRIBUTE_NAMES",
    "correlate",
]

EXACT_MAX_TOTAL = 12
ROBUSTNESS_FRACTIONS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)


def rankdata(x) -> np.ndarray:
    """1-based ranks, ties get the average of the ranks they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _tie_term(ranks: np.ndarray) -> float:
    _, counts = np.unique(ranks, return_counts=True)
    return float(np.sum(counts.astype(np.float64) ** 3 - counts))


def kruskal_wallis(*samples: Sequence[float]) -> tuple[float, float]:
    """Tie-corrected H statistic and its chi-square p-value (k - 1 dof)."""
    if len(samples) < 2:
        raise ValueError("need at least two groups")
    if any(len(s) < 2 for s in samples):
        raise ValueError("each group needs at least two observations")
    pooled = np.concatenate([np.asarray(s, dtype=np.float64) for s in samples])
    m = len(pooled)
    ranks = rankdata(pooled)
    correction = 1.0 - _tie_term(ranks) / (m**3 - m)
    if correction <= 0:
        return 0.0, 1.0
    h = 0.0
    start = 0
    for s in samples:
        r = ranks[start : start + len(s)]
        start += len(s)
        h += len(s) * (r.mean() - (m + 1) / 2) ** 2
    h = 12.0 / (m * (m + 1)) * h / correction
    return float(h), float(sps.chi2.sf(h, len(samples) - 1))


def _u_stat(a: np.ndarray, b: np.ndarray) -> float:
    diff = a[:, None] - b[None, :]
    return float((diff > 0).sum() + 0.5 * (diff == 0).sum())


def _p_from_null(null: np.ndarray, u: float, mean: float, alternative: str) -> float:
    tol = 1e-9
    if alternative == "greater":
        return float(np.mean(null >= u - tol))
    if alternative == "less":
        return float(np.mean(null <= u + tol))
    return float(np.mean(np.abs(null - mean) >= abs(u - mean) - tol))


def mann_whitney(a, b, alternative: str = "two-sided", method: str = "auto") -> tuple[float, float]:
    """U statistic of ``a`` and its p-value.

    ``U = #{a_i > b_j} + 0.5 #{a_i == b_j}``. With ``method="auto"`` the
    p-value is exact (enumeration of every split of the pooled sample) when
    the total size is at most 12, otherwise a tie- and continuity-corrected
    normal approximation. ``alternative="greater"`` tests whether ``a``
    tends to be larger than ``b``.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 1 or len(b) < 1:
        raise ValueError("both samples must be non-empty")
    na, nb = len(a), len(b)
    u = _u_stat(a, b)
    mean = na * nb / 2
    if method == "auto":
        method = "exact" if na + nb <= EXACT_MAX_TOTAL else "asymptotic"
    if method == "exact":
        pooled = np.concatenate([a, b])
        idx = np.arange(na + nb)
        null = []
        for comb in itertools.combinations(idx, na):
            mask = np.zeros(na + nb, dtype=bool)
            mask[list(comb)] = True
            null.append(_u_stat(pooled[mask], pooled[~mask]))
        return u, _p_from_null(np.asarray(null), u, mean, alternative)
    n = na + nb
    ranks = rankdata(np.concatenate([a, b]))
    var = na * nb / 12 * ((n + 1) - _tie_term(ranks) / (n * (n - 1)))
    if var <= 0:
        return u, 1.0
    sd = math.sqrt(var)
    if alternative == "greater":
        z = (u - mean - 0.5) / sd
        p = sps.norm.sf(z)
    elif alternative == "less":
        z = (u - mean + 0.5) / sd
        p = sps.norm.cdf(z)
    else:
        z = (abs(u - mean) - 0.5) / sd
        p = min(1.0, 2 * sps.norm.sf(z))
    return u, float(p)


def holm(pvalues: Sequence[float]) -> list[float]:
    """Holm step-down adjusted p-values, in input order."""
    p = np.asarray(pvalues, dtype=np.float64)
    m = len(p)
    order = np.argsort(p, kind="stable")
    adj = np.empty(m)
    running = 0.0
    for i, k in enumerate(order):
        running = max(running, (m - i) * p[k])
        adj[k] = min(1.0, running)
    return adj.tolist()


def posthoc_pairs(samples: Mapping[str, Sequence[float]], correction: str | None = None) -> list[dict]:
    """Pairwise two-sided U-tests between every pair of named samples."""
    rows = []
    for x, y in itertools.combinations(list(samples), 2):
        u, p = mann_whitney(samples[x], samples[y])
        rows.append({"test": "mann_whitney", "groups": f"{x}|{y}", "statistic": u, "p": p})
    if correction == "holm" and rows:
        for row, q in zip(rows, holm([r["p"] for r in rows])):
            row["p"] = q
    elif correction not in (None, "none"):
        raise ValueError(f"unknown correction {correction!r}")
    return rows


# ---------------------------------------------------------------------------
# robustness


def robustness_curve(
    nets: Sequence[DagNet],
    ds: Dataset,
    fractions: Sequence[float] = ROBUSTNESS_FRACTIONS,
    trials: int = 1,
    seed: int = 0,
    rescale: bool = False,
) -> list[dict]:
    """Mean accuracy gain A(f) = acc(f) / acc(0) over nets and damage trials.

    Every test sample sees its own random set of removed hidden nodes.
    Returns one dict per fraction with keys ``f``, ``gain_mean``,
    ``gain_std`` (across nets) and ``acc_mean``.
    """
    if not nets:
        raise ValueError("no models given")
    x, y = ds.part("test")
    base = []
    for net in nets:
        acc0 = float(np.mean(forward(net, x).argmax(axis=1) == y))
        if acc0 <= 0:
            raise ValueError("degenerate model: zero accuracy without damage")
        base.append(acc0)
    rng = np.random.default_rng(seed)
    rows = []
    for f in fractions:
        gains, accs = [], []
        for net, acc0 in zip(nets, base):
            if f == 0:
                gains.append(1.0)
                accs.append(acc0)
                continue
            trial_acc = []
            for _ in range(trials):
                mask = sample_damage(net, len(y), f, rng, rescale)
                trial_acc.append(np.mean(forward(net, x, mask).argmax(axis=1) == y))
            acc = float(np.mean(trial_acc))
            gains.append(acc / acc0)
            accs.append(acc)
        rows.append(
            {
                "f": float(f),
                "gain_mean": float(np.mean(gains)),
                "gain_std": float(np.std(gains)),
                "acc_mean": float(np.mean(accs)),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# attributes


def density(n: int, l: int) -> float:
    return 2.0 * l / (n * (n - 1))


def edges_for_density(n: int, rho: float) -> int:
    return int(round(rho * n * (n - 1) / 2))


def powerlaw_slope(degrees, k_min: int = 6) -> float:
    """Discrete MLE of the degree exponent for degrees >= k_min (NaN when empty)."""
    k = np.asarray(degrees, dtype=np.float64)
    k = k[k >= k_min]
    if len(k) == 0:
        return float("nan")
    s = np.sum(np.log(k / (k_min - 0.5)))
    return float(1 + len(k) / s) if s > 0 else float("nan")


ATTRIBUTE_NAMES = (
    "density",
    "avg_degree",
    "degree_variance",
    "max_degree",
    "powerlaw_slope",
    "avg_clustering",
    "assortativity",
    "avg_shortest_path",
    "diameter",
    "betweenness_mean",
    "betweenness_max",
    "n_sources",
    "n_sinks",
    "dag_height",
    "mean_level_width",
)


def attributes(g: UGraph | Dag) -> dict[str, float]:
    """Topological attributes of an undirected graph or an oriented DAG.

    Path, clustering and centrality metrics use the undirected graph; the
    last four entries need an orientation and are NaN for a bare UGraph.
    """
    dag = g if isinstance(g, Dag) else None
    ug = dag.base if dag is not None else g
    G = nx.Graph()
    G.add_nodes_from(range(ug.n))
    G.add_edges_from(ug.edges)
    deg = ug.degrees().astype(np.float64)
    bc = np.fromiter(nx.betweenness_centrality(G).values(), dtype=np.float64)
    with np.errstate(all="ignore"):
        try:
            assort = float(nx.degree_assortativity_coefficient(G))
        except (ValueError, ZeroDivisionError):
            assort = float("nan")
    out = {
        "density": density(ug.n, ug.num_edges),
        "avg_degree": float(deg.mean()),
        "degree_variance": float(deg.var()),
        "max_degree": float(deg.max()),
        "powerlaw_slope": powerlaw_slope(deg),
        "avg_clustering": float(nx.average_clustering(G)),
        "assortativity": assort,
        "avg_shortest_path": float(nx.average_shortest_path_length(G)),
        "diameter": float(nx.diameter(G)),
        "betweenness_mean": float(bc.mean()),
        "betweenness_max": float(bc.max()),
    }
    if dag is not None:
        plan = level_partition(dag)
        out.update(
            n_sources=float(len(dag.sources)),
            n_sinks=float(len(dag.sinks)),
            dag_height=float(plan.height),
            mean_level_width=float(np.mean([len(lv) for lv in plan.levels])),
        )
    else:
        out.update(n_sources=np.nan, n_sinks=np.nan, dag_height=np.nan, mean_level_width=np.nan)
    return out


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx, dy = x - x.mean(), y - y.mean()
    den = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if den == 0:
        return float("nan")
    return float(dx @ dy / den)


def correlate(table: Sequence[Mapping[str, float]], accuracies: Sequence[float]) -> list[dict]:
    """Pearson and Spearman coefficient of each attribute against accuracy.

    Coefficients of constant attributes are NaN (undefined).
    """
    acc = np.asarray(accuracies, dtype=np.float64)
    if len(table) != len(acc):
        raise ValueError("attribute rows and accuracies are not aligned")
    if not table:
        return []
    rows = []
    for name in table[0]:
        col = np.asarray([r[name] for r in table], dtype=np.float64)
        if np.isnan(col).any():
            rows.append({"attribute": name, "pearson": np.nan, "spearman": np.nan})
            continue
        rows.append(
            {
                "attribute": name,
                "pearson": _pearson(col, acc),
                "spearman": _pearson(rankdata(col), rankdata(acc)),
            }
        )
    return rows
