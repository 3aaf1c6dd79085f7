"""Undirected graph generators with exact edge counts.

Every generator returns a simple, connected :class:`UGraph` with exactly the
requested number of edges. Families that can only hit a discrete set of edge
counts (WS, BA, SBM) are generated slightly denser than the target and then
trimmed by deleting random non-bridge edges.

Randomness comes from ``numpy.random.default_rng(seed)`` (PCG64 seeded via
SeedSequence), so results are reproducible across platforms for a given
numpy version.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "UGraph",
    "FamilyParams",
    "GenerationError",
    "InfeasibleError",
    "ConnectivityError",
    "MAX_RETRIES",
    "gen_er",
    "gen_ws",
    "gen_ba",
    "gen_sbm",
    "gen_mlp",
    "mlp_hidden_size",
    "ws_ring_degree",
    "ba_stubs",
    "sbm_pair_counts",
    "sbm_preset",
    "generate",
    "is_connected",
    "canonical_edges",
]

MAX_RETRIES = 100


class GenerationError(RuntimeError):
    pass


class InfeasibleError(GenerationError, ValueError):
    """The requested (n, l, params) cannot produce a connected simple graph."""


class ConnectivityError(GenerationError):
    """Resampling budget exhausted without a connected sample."""


def canonical_edges(edges: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    return sorted({(min(u, v), max(u, v)) for u, v in edges})


@dataclass(frozen=True)
class UGraph:
    n: int
    edges: tuple[tuple[int, int], ...]
    family: str = ""

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(canonical_edges(self.edges)))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def validate(self) -> None:
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop at {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u}, {v}) out of range")
        if not is_connected(self.n, self.edges):
            raise ValueError("graph is not connected")

    def to_dict(self) -> dict:
        return {"n": self.n, "family": self.family, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, d: dict) -> "UGraph":
        return cls(int(d["n"]), tuple((int(u), int(v)) for u, v in d["edges"]), d.get("family", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


@dataclass
class FamilyParams:
    """Generator family plus its family-specific parameters.

    ``kind`` is one of ``er``, ``ws``, ``ba``, ``sbm``, ``mlp``. Only the
    fields relevant to ``kind`` are read.
    """

    kind: str
    p: float = 0.5
    communities: int = 4
    p_intra: float = 0.0
    q_inter: float = 0.0
    layer_sizes: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("er", "ws", "ba", "sbm", "mlp"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.kind == "ws" and not 0.0 <= self.p <= 1.0:
            raise ValueError("ws rewiring probability must lie in [0, 1]")
        if self.kind == "sbm":
            if self.communities < 1:
                raise ValueError("sbm needs at least one community")
            for prob in (self.p_intra, self.q_inter):
                if not 0.0 <= prob <= 1.0:
                    raise ValueError("sbm probabilities must lie in [0, 1]")
        if self.kind == "mlp" and self.layer_sizes:
            if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
                raise ValueError("mlp needs >= 2 positive layer sizes")


# ---------------------------------------------------------------------------
# connectivity helpers


def _components_bfs(n: int, adj: Sequence[Iterable[int]], start: int = 0) -> int:
    seen = bytearray(n)
    seen[start] = 1
    queue = deque([start])
    count = 1
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = 1
                count += 1
                queue.append(w)
    return count


def is_connected(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    if n <= 1:
        return True
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    return _components_bfs(n, adj) == n


def _trim(n: int, edges: list[tuple[int, int]], target: int, rng: np.random.Generator):
    """Delete random non-bridge edges until ``target`` remain.

    Returns the trimmed edge list, or None when every remaining surplus
    candidate is a bridge. Removing edges never turns a bridge back into a
    non-bridge, so a single pass over a random permutation suffices.
    """
    surplus = len(edges) - target
    if surplus <= 0:
        return edges
    adj: list[set[int]] = [set() for _ in range(n)]
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    alive = set(edges)
    for idx in rng.permutation(len(edges)):
        if surplus == 0:
            break
        u, v = edges[idx]
        adj[u].discard(v)
        adj[v].discard(u)
        if _components_bfs(n, adj, u) == n:
            alive.discard((u, v))
            surplus -= 1
        else:
            adj[u].add(v)
            adj[v].add(u)
    if surplus:
        return None
    return [e for e in edges if e in alive]


def _check_range(n: int, l: int) -> None:
    if n < 2:
        raise InfeasibleError(f"need at least 2 nodes, got n={n}")
    if l < n - 1:
        raise InfeasibleError(f"l={l} < n-1={n - 1}: cannot be connected")
    if l > n * (n - 1) // 2:
        raise InfeasibleError(f"l={l} exceeds n(n-1)/2={n * (n - 1) // 2}")


def _pair_from_index(idx: np.ndarray, n: int) -> np.ndarray:
    # row-major enumeration of the strict upper triangle
    iu, ju = np.triu_indices(n, k=1)
    return np.stack([iu[idx], ju[idx]], axis=1)


# ---------------------------------------------------------------------------
# generators


def gen_er(n: int, l: int, seed: int | None = None) -> UGraph:
    """Uniform G(n, l) sample, resampled until connected."""
    _check_range(n, l)
    rng = np.random.default_rng(seed)
    total = n * (n - 1) // 2
    for _ in range(MAX_RETRIES):
        idx = rng.choice(total, size=l, replace=False)
        edges = [tuple(map(int, e)) for e in _pair_from_index(idx, n)]
        if is_connected(n, edges):
            return UGraph(n, tuple(edges), "er")
    raise ConnectivityError(f"er: no connected sample after {MAX_RETRIES} tries")


def ws_ring_degree(n: int, l: int) -> int:
    """Smallest even ring degree k with n*k/2 >= l."""
    k = 2 * math.ceil(l / n)
    if k >= n:
        raise InfeasibleError(f"ws: ring degree {k} needed for l={l} is not < n={n}")
    return k


def gen_ws(n: int, l: int, p: float, seed: int | None = None) -> UGraph:
    """Watts-Strogatz ring lattice, rewired with probability ``p``, trimmed to ``l``."""
    _check_range(n, l)
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    k = ws_ring_degree(n, l)
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RETRIES):
        adj: list[set[int]] = [set() for _ in range(n)]
        ring = []
        for j in range(1, k // 2 + 1):
            for u in range(n):
                v = (u + j) % n
                adj[u].add(v)
                adj[v].add(u)
                ring.append((u, v))
        # rewire the far endpoint, same sweep order as the classical algorithm
        for u, v in ring:
            if rng.random() >= p:
                continue
            if len(adj[u]) >= n - 1:
                continue
            w = int(rng.integers(n))
            while w == u or w in adj[u]:
                w = int(rng.integers(n))
            adj[u].discard(v)
            adj[v].discard(u)
            adj[u].add(w)
            adj[w].add(u)
        edges = canonical_edges((u, w) for u in range(n) for w in adj[u])
        if not is_connected(n, edges):
            continue
        trimmed = _trim(n, edges, l, rng)
        if trimmed is not None:
            return UGraph(n, tuple(trimmed), "ws")
    raise ConnectivityError(f"ws: no connected sample after {MAX_RETRIES} tries")


def ba_stubs(n: int, l: int) -> int:
    """Smallest m >= 1 with m + (n - m - 1) * m >= l."""
    for m in range(1, n):
        if m + (n - m - 1) * m >= l:
            return m
    raise InfeasibleError(f"ba: no m reaches l={l} at n={n}")


def gen_ba(n: int, l: int, seed: int | None = None) -> UGraph:
    """Preferential attachment grown from a star of m+1 nodes, trimmed to ``l``."""
    _check_range(n, l)
    m = ba_stubs(n, l)
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RETRIES):
        edges = [(0, i) for i in range(1, m + 1)]
        deg = np.zeros(n, dtype=np.float64)
        deg[0] = m
        deg[1 : m + 1] = 1
        for new in range(m + 1, n):
            weights = deg[:new] / deg[:new].sum()
            targets = rng.choice(new, size=m, replace=False, p=weights)
            for t in targets:
                edges.append((int(t), new))
            deg[targets] += 1
            deg[new] = m
        trimmed = _trim(n, canonical_edges(edges), l, rng)
        if trimmed is not None:
            return UGraph(n, tuple(trimmed), "ba")
    raise ConnectivityError(f"ba: no connected sample after {MAX_RETRIES} tries")


def sbm_pair_counts(n: int, communities: int) -> tuple[int, int]:
    """(intra-community pairs, inter-community pairs) for equal blocks."""
    if n % communities:
        raise InfeasibleError(f"sbm: {communities} communities do not divide n={n}")
    size = n // communities
    e_in = communities * (size * (size - 1) // 2)
    return e_in, n * (n - 1) // 2 - e_in


def gen_sbm(
    n: int,
    l: int,
    communities: int,
    p_intra: float,
    q_inter: float,
    seed: int | None = None,
) -> UGraph:
    """Planted-partition SBM sample trimmed to exactly ``l`` edges."""
    _check_range(n, l)
    e_in, e_out = sbm_pair_counts(n, communities)
    expected = p_intra * e_in + q_inter * e_out
    if expected < l:
        raise InfeasibleError(f"sbm: expected edges {expected:.1f} < l={l}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    block = np.arange(n) // (n // communities)
    probs = np.where(block[iu] == block[ju], p_intra, q_inter)
    for _ in range(MAX_RETRIES):
        keep = rng.random(probs.shape[0]) < probs
        if keep.sum() < l:
            continue
        edges = [(int(u), int(v)) for u, v in zip(iu[keep], ju[keep])]
        if not is_connected(n, edges):
            continue
        trimmed = _trim(n, edges, l, rng)
        if trimmed is not None:
            return UGraph(n, tuple(trimmed), "sbm")
    raise ConnectivityError(f"sbm: no usable sample after {MAX_RETRIES} tries")


def sbm_preset(
    n: int, l: int, communities: int, assortative: bool, headroom: float = 1.05
) -> tuple[float, float]:
    """(p_intra, q_inter) with expected edge count ``headroom * l``.

    Assortative: inter-community probability is set so that each pair of
    communities expects 4 connecting edges, the rest of the budget goes to
    the intra-community probability. Disassortative: p_intra = 0 and the
    whole budget goes to q_inter.
    """
    e_in, e_out = sbm_pair_counts(n, communities)
    budget = headroom * l
    if assortative:
        q = min(1.0, 4 * communities * (communities - 1) / 2 / e_out)
        p = (budget - q * e_out) / e_in
    else:
        p, q = 0.0, budget / e_out
    if p > 1.0 or q > 1.0:
        raise InfeasibleError(f"sbm preset needs probability > 1 (p={p:.3f}, q={q:.3f})")
    return p, q


def gen_mlp(layer_sizes: Sequence[int]) -> UGraph:
    """Multipartite graph with bicliques between consecutive layers.

    Nodes are numbered layer by layer, so rank = id + 1 is the feedforward
    orientation.
    """
    if len(layer_sizes) < 2 or min(layer_sizes) < 1:
        raise InfeasibleError("mlp needs >= 2 layers of positive size")
    offsets = np.concatenate([[0], np.cumsum(layer_sizes)])
    edges = []
    for i in range(len(layer_sizes) - 1):
        for u in range(offsets[i], offsets[i + 1]):
            for v in range(offsets[i + 1], offsets[i + 2]):
                edges.append((int(u), int(v)))
    return UGraph(int(offsets[-1]), tuple(edges), "mlp")


def mlp_hidden_size(n: int, n_in: int, n_out: int) -> int:
    if n <= n_in + n_out:
        raise InfeasibleError(f"no hidden nodes left: n={n}, n_in={n_in}, n_out={n_out}")
    return n - n_in - n_out


def generate(family: FamilyParams, n: int, l: int, seed: int | None = None) -> UGraph:
    """Dispatch on ``family.kind``. For ``mlp`` the edge count is implied by the layers."""
    kind = family.kind
    if kind == "er":
        return gen_er(n, l, seed)
    if kind == "ws":
        return gen_ws(n, l, family.p, seed)
    if kind == "ba":
        return gen_ba(n, l, seed)
    if kind == "sbm":
        return gen_sbm(n, l, family.communities, family.p_intra, family.q_inter, seed)
    g = gen_mlp(family.layer_sizes)
    if g.n != n:
        raise InfeasibleError(f"mlp layers sum to {g.n}, expected n={n}")
    if g.num_edges != l:
        raise InfeasibleError(f"mlp layers give {g.num_edges} edges, expected l={l}")
    return g
