"""Orientation of undirected graphs into feedforward DAGs.

A DAG is represented by a rank (a permutation of the nodes); every edge
points from its lower-rank endpoint to its higher-rank one, so acyclicity
and preservation of the undirected edge set hold by construction.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .graphgen import UGraph

__all__ = [
    "Dag",
    "LevelPlan",
    "AdjustError",
    "ORDERINGS",
    "orient",
    "adjust_io",
    "level_partition",
    "build_dag",
]

ORDERINGS = ("random", "hub_desc", "hub_asc", "hub_center", "identity")


class AdjustError(RuntimeError):
    """Source/sink adjustment did not converge within its move budget."""


@dataclass(frozen=True)
class Dag:
    base: UGraph
    order: tuple[int, ...]  # order[i] = node holding rank i + 1

    @cached_property
    def rank(self) -> np.ndarray:
        """1-based rank per node."""
        r = np.empty(self.base.n, dtype=np.int64)
        r[np.asarray(self.order, dtype=np.int64)] = np.arange(1, self.base.n + 1)
        return r

    @cached_property
    def arcs(self) -> np.ndarray:
        """(L, 2) array of (tail, head), aligned with ``base.edges``."""
        e = np.asarray(self.base.edges, dtype=np.int64).reshape(-1, 2)
        r = self.rank
        flip = r[e[:, 0]] > r[e[:, 1]]
        out = e.copy()
        out[flip] = e[flip][:, ::-1]
        return out

    @cached_property
    def in_degree(self) -> np.ndarray:
        return np.bincount(self.arcs[:, 1], minlength=self.base.n)

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.bincount(self.arcs[:, 0], minlength=self.base.n)

    @property
    def sources(self) -> list[int]:
        """In-degree-0 nodes in increasing rank."""
        return [v for v in self.order if self.in_degree[v] == 0]

    @property
    def sinks(self) -> list[int]:
        return [v for v in self.order if self.out_degree[v] == 0]

    # input feature j binds to the j-th source in rank order
    inputs = sources
    outputs = sinks

    @property
    def n(self) -> int:
        return self.base.n

    def predecessors(self) -> list[list[int]]:
        preds: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.arcs:
            preds[v].append(int(u))
        return preds

    def to_dict(self) -> dict:
        d = self.base.to_dict()
        d["rank"] = [int(x) for x in self.rank]
        d["inputs"] = self.sources
        d["outputs"] = self.sinks
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Dag":
        base = UGraph.from_dict(d)
        rank = np.asarray(d["rank"], dtype=np.int64)
        order = tuple(int(v) for v in np.argsort(rank, kind="stable"))
        return cls(base, order)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def _center_out(nodes: list[int]) -> list[int]:
    """Place ``nodes`` (already sorted by priority) center-outward.

    The first node takes the middle slot, then slots alternate right, left,
    right, ... of the middle.
    """
    n = len(nodes)
    slots = [None] * n
    mid = (n - 1) // 2
    positions = [mid]
    step = 1
    while len(positions) < n:
        if mid + step < n:
            positions.append(mid + step)
        if len(positions) < n and mid - step >= 0:
            positions.append(mid - step)
        step += 1
    for node, pos in zip(nodes, positions):
        slots[pos] = node
    return slots


def orient(g: UGraph, ordering: str = "random", seed: int | None = None) -> Dag:
    """Assign ranks to the nodes of ``g`` according to ``ordering``.

    Hub orderings break degree ties by node id. ``identity`` uses rank = id + 1,
    which is the layered orientation for graphs built by ``gen_mlp``.
    """
    n = g.n
    if ordering == "random":
        order = np.random.default_rng(seed).permutation(n)
    elif ordering == "identity":
        order = np.arange(n)
    else:
        deg = g.degrees()
        ids = np.arange(n)
        desc = np.lexsort((ids, -deg))
        if ordering == "hub_desc":
            order = desc
        elif ordering == "hub_asc":
            order = np.lexsort((ids, deg))
        elif ordering == "hub_center":
            order = np.asarray(_center_out([int(v) for v in desc]))
        else:
            raise ValueError(f"unknown ordering {ordering!r}; expected one of {ORDERINGS}")
    return Dag(g, tuple(int(v) for v in order))


# ---------------------------------------------------------------------------
# source/sink adjustment


class _RankState:
    """Mutable rank bookkeeping for the adjustment loop."""

    def __init__(self, dag: Dag):
        self.n = dag.n
        self.order = list(dag.order)
        self.adj = [np.asarray(a, dtype=np.int64) for a in dag.base.adjacency()]
        e = np.asarray(dag.base.edges, dtype=np.int64).reshape(-1, 2)
        self.eu, self.ev = e[:, 0], e[:, 1]
        self.rank = np.empty(self.n, dtype=np.int64)
        self.apply(self.order)

    def apply(self, order: list[int]) -> None:
        self.order = order
        self.rank[np.asarray(order)] = np.arange(self.n)
        fwd = self.rank[self.eu] < self.rank[self.ev]
        self.indeg = np.bincount(np.where(fwd, self.ev, self.eu), minlength=self.n)
        self.outdeg = np.bincount(np.where(fwd, self.eu, self.ev), minlength=self.n)

    def move(self, node: int, pos: int) -> None:
        """Reinsert ``node`` at index ``pos`` of the order without it."""
        order = [v for v in self.order if v != node]
        order.insert(pos, node)
        self.apply(order)

    def gaps(self, v: int, n_in: int, n_out: int):
        """Score every relocation of ``v`` between two of its neighbours.

        Gap ``j`` places ``v`` right after its ``j`` lowest-rank neighbours,
        so only edges in ``v``'s star change direction. Returns the total
        source/sink discrepancy per gap, the insertion index per gap (into
        the order with ``v`` removed) and the gap ``v`` currently occupies.
        """
        nb = self.adj[v]
        r = self.rank[nb]
        srt = np.argsort(r)
        nb, r = nb[srt], r[srt]
        k = len(nb)
        rv = self.rank[v]
        old_pred = r < rv
        new_pred = np.arange(k)[None, :] < np.arange(k + 1)[:, None]  # (gap, neighbour)
        # neighbour w was a predecessor, becomes a successor: w gains an in-arc, loses an out-arc
        d = np.where(old_pred & ~new_pred, 1, 0) - np.where(~old_pred & new_pred, 1, 0)
        ind = self.indeg[nb][None, :] + d
        outd = self.outdeg[nb][None, :] - d
        n_src = int((self.indeg == 0).sum()) - int((self.indeg[nb] == 0).sum()) - int(self.indeg[v] == 0)
        n_snk = int((self.outdeg == 0).sum()) - int((self.outdeg[nb] == 0).sum()) - int(self.outdeg[v] == 0)
        j = np.arange(k + 1)
        src = n_src + (ind == 0).sum(axis=1) + (j == 0)
        snk = n_snk + (outd == 0).sum(axis=1) + (j == k)
        score = np.abs(src - n_in) + np.abs(snk - n_out)
        pos_wo = r - (r > rv)  # neighbour indices once v is removed
        insert = np.empty(k + 1, dtype=np.int64)
        insert[0] = pos_wo[0]
        insert[1:] = pos_wo + 1
        return score, insert, int(old_pred.sum())

    def discrepancy(self, n_in: int, n_out: int) -> int:
        return abs(int((self.indeg == 0).sum()) - n_in) + abs(int((self.outdeg == 0).sum()) - n_out)


def _priority_moves(st: _RankState, n_in: int, n_out: int):
    """Preferred moves as (node, gap) pairs, most preferred first.

    Surplus source: slide the highest-rank source just past its lowest-rank
    neighbour. Surplus sink: slide the lowest-rank sink just before its
    highest-rank neighbour. Missing source: move the non-source with the
    fewest predecessors (lowest rank first) below all its neighbours.
    Missing sink: the mirror image.
    """
    rank, indeg, outdeg = st.rank, st.indeg, st.outdeg
    n_src = int((indeg == 0).sum())
    n_snk = int((outdeg == 0).sum())
    moves = []
    if n_src > n_in:
        for s in sorted(np.flatnonzero(indeg == 0), key=lambda v: -rank[v]):
            moves.append((int(s), 1))
    if n_snk > n_out:
        for t in sorted(np.flatnonzero(outdeg == 0), key=lambda v: rank[v]):
            moves.append((int(t), len(st.adj[t]) - 1))
    if n_src < n_in:
        for v in sorted(np.flatnonzero(indeg > 0), key=lambda v: (indeg[v], rank[v])):
            moves.append((int(v), 0))
    if n_snk < n_out:
        for v in sorted(np.flatnonzero(outdeg > 0), key=lambda v: (outdeg[v], -rank[v])):
            moves.append((int(v), len(st.adj[v])))
    return moves


def _leaf_bound(g: UGraph, n_in: int, n_out: int) -> None:
    # a degree-1 node can only be a source or a sink
    leaves = int((g.degrees() == 1).sum())
    if leaves > n_in + n_out:
        raise AdjustError(f"infeasible: {leaves} degree-1 nodes but only {n_in + n_out} sources + sinks allowed")


def adjust_io(
    d: Dag,
    n_in: int,
    n_out: int,
    max_moves: int | None = None,
    seed: int | None = None,
) -> Dag:
    """Re-rank nodes until exactly ``n_in`` sources and ``n_out`` sinks remain.

    Every move relocates one node between two of its neighbours in the
    ordering, which only flips edges of that node's star; the undirected
    graph never changes. Each step applies the first preferred move (see
    ``_priority_moves``) that lowers the source/sink discrepancy; failing
    that, the best-scoring relocation of any node; failing that, a random
    relocation that does not increase the discrepancy.

    Raises
    ------
    AdjustError
        If the targets are not met within ``max_moves`` (default ``10 * N``).
    """
    n = d.n
    if n_in < 1 or n_out < 1 or n_in + n_out > n:
        raise ValueError(f"invalid targets n_in={n_in}, n_out={n_out} for N={n}")
    if max_moves is None:
        max_moves = 10 * n
    _leaf_bound(d.base, n_in, n_out)
    rng = np.random.default_rng(seed)
    st = _RankState(d)
    cur = st.discrepancy(n_in, n_out)
    moves = 0
    while cur:
        if moves >= max_moves:
            raise AdjustError(f"adjust_io: not converged after {max_moves} moves")
        chosen = None
        for v, j in _priority_moves(st, n_in, n_out):
            score, insert, _ = st.gaps(v, n_in, n_out)
            if score[j] < cur:
                chosen = (v, int(insert[j]))
                break
        if chosen is None:
            best, ties = cur, []
            for v in range(n):
                score, insert, here = st.gaps(v, n_in, n_out)
                for j in np.flatnonzero(score <= best):
                    if j == here:
                        continue
                    if score[j] < best:
                        best, ties = int(score[j]), []
                    if score[j] == best:
                        ties.append((v, int(insert[j])))
            # when best == cur these are sideways steps off a plateau
            if not ties:
                raise AdjustError("adjust_io: no admissible relocation")
            chosen = ties[int(rng.integers(len(ties)))]
        st.move(*chosen)
        cur = st.discrepancy(n_in, n_out)
        moves += 1
    if moves == 0:
        return d
    return Dag(d.base, tuple(int(v) for v in st.order))


# ---------------------------------------------------------------------------
# level partition


@dataclass(frozen=True)
class LevelPlan:
    level: np.ndarray  # longest path length from a source, per node
    levels: tuple[tuple[int, ...], ...]

    @property
    def height(self) -> int:
        return len(self.levels) - 1


def level_partition(d: Dag) -> LevelPlan:
    preds = d.predecessors()
    level = np.zeros(d.n, dtype=np.int64)
    for v in d.order:  # rank order is a topological order
        if preds[v]:
            level[v] = 1 + max(level[u] for u in preds[v])
    groups: list[list[int]] = [[] for _ in range(int(level.max()) + 1)]
    for v in d.order:
        groups[level[v]].append(v)
    return LevelPlan(level, tuple(tuple(g) for g in groups))


def build_dag(
    g: UGraph,
    n_in: int,
    n_out: int,
    ordering: str = "random",
    seed: int | None = None,
    retries: int = 20,
) -> Dag:
    """orient + adjust_io, retrying with a derived seed on failure.

    For deterministic orderings only the plateau-escape moves of
    ``adjust_io`` change between attempts.
    """
    _leaf_bound(g, n_in, n_out)
    last = None
    for attempt in range(retries):
        sub = None if seed is None else [seed, attempt]
        d = orient(g, ordering, seed=sub)
        try:
            return adjust_io(d, n_in, n_out, seed=sub)
        except AdjustError as err:
            last = err
    raise AdjustError(f"could not adjust DAG after {retries} orientations: {last}")
