"""Neural networks whose computational graph is an arbitrary DAG.

Source nodes hold the input features, every other node computes a weighted
sum of its predecessors plus a bias, followed by SELU (hidden nodes) or the
identity (sink nodes). Nodes are evaluated level by level; within a level
the predecessor activations are gathered into one block and multiplied by a
dense per-level weight block, so a level costs one matrix product.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dag import Dag, LevelPlan, level_partition

__all__ = [
    "SELU_LAMBDA",
    "SELU_ALPHA",
    "selu",
    "selu_grad",
    "DagNet",
    "LevelBlock",
    "init",
    "forward",
    "backward",
    "count_params",
    "cross_entropy",
    "sample_damage",
]

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


def selu(x: np.ndarray) -> np.ndarray:
    return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def selu_grad(x: np.ndarray) -> np.ndarray:
    return SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


@dataclass(frozen=True)
class LevelBlock:
    nodes: np.ndarray  # nodes computed at this level
    preds: np.ndarray  # distinct predecessors feeding this level
    rows: np.ndarray  # arc -> index into preds
    cols: np.ndarray  # arc -> index into nodes
    arc_ids: np.ndarray  # arc -> index into DagNet.weights
    is_sink: np.ndarray  # bool per node of this level


def _blocks(dag: Dag, plan: LevelPlan) -> list[LevelBlock]:
    arcs = dag.arcs
    heads_level = plan.level[arcs[:, 1]]
    out_deg = dag.out_degree
    blocks = []
    for lev in range(1, len(plan.levels)):
        nodes = np.asarray(plan.levels[lev], dtype=np.int64)
        ids = np.flatnonzero(heads_level == lev)
        tails, heads = arcs[ids, 0], arcs[ids, 1]
        preds, rows = np.unique(tails, return_inverse=True)
        local = {int(v): i for i, v in enumerate(nodes)}
        cols = np.array([local[int(h)] for h in heads], dtype=np.int64)
        blocks.append(LevelBlock(nodes, preds, rows, cols, ids, out_deg[nodes] == 0))
    return blocks


class DagNet:
    """Trainable parameters mapped onto a :class:`Dag`.

    ``weights[i]`` belongs to arc ``dag.arcs[i]`` (canonical edge order);
    ``biases`` has one entry per node, the entries of source nodes are
    unused and kept at zero.
    """

    def __init__(self, dag: Dag, weights: np.ndarray, biases: np.ndarray):
        self.dag = dag
        self.plan = level_partition(dag)
        self.weights = np.asarray(weights, dtype=np.float64).copy()
        self.biases = np.asarray(biases, dtype=np.float64).copy()
        if self.weights.shape != (len(dag.arcs),):
            raise ValueError("one weight per arc expected")
        if self.biases.shape != (dag.n,):
            raise ValueError("one bias per node expected")
        self.inputs = np.asarray(dag.sources, dtype=np.int64)
        self.outputs = np.asarray(dag.sinks, dtype=np.int64)
        self.blocks = _blocks(dag, self.plan)
        src = np.zeros(dag.n, dtype=bool)
        src[self.inputs] = True
        # non-source nodes in rank order: these carry trainable biases
        self.bias_nodes = np.asarray([v for v in dag.order if not src[v]], dtype=np.int64)
        hidden = ~src
        hidden[self.outputs] = False
        self.hidden = np.flatnonzero(hidden)

    @property
    def n_in(self) -> int:
        return len(self.inputs)

    @property
    def n_out(self) -> int:
        return len(self.outputs)

    # flat parameter view used by the optimizer
    def get_params(self) -> np.ndarray:
        return np.concatenate([self.weights, self.biases[self.bias_nodes]])

    def set_params(self, theta: np.ndarray) -> None:
        L = len(self.weights)
        self.weights[:] = theta[:L]
        self.biases[self.bias_nodes] = theta[L:]

    def copy(self) -> "DagNet":
        return DagNet(self.dag, self.weights, self.biases)

    def forward(self, x, mask=None):
        return forward(self, x, mask)

    def to_dict(self) -> dict:
        return {
            "dag": self.dag.to_dict(),
            "weights": self.weights.tolist(),
            "biases": self.biases[self.bias_nodes].tolist(),
            "activation": "selu",
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DagNet":
        if d.get("activation", "selu") != "selu":
            raise ValueError(f"unsupported activation {d['activation']!r}")
        dag = Dag.from_dict(d["dag"])
        net = cls(dag, np.asarray(d["weights"]), np.zeros(dag.n))
        net.biases[net.bias_nodes] = np.asarray(d["biases"], dtype=np.float64)
        return net

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DagNet":
        return cls.from_dict(json.loads(text))


def init(dag: Dag, seed: int | None = None) -> DagNet:
    """LeCun-normal weights (variance 1 / fan-in of the head node), zero biases."""
    rng = np.random.default_rng(seed)
    fan_in = dag.in_degree[dag.arcs[:, 1]]
    w = rng.standard_normal(len(dag.arcs)) / np.sqrt(fan_in)
    return DagNet(dag, w, np.zeros(dag.n))


def count_params(net: DagNet) -> int:
    return len(net.weights) + len(net.bias_nodes)


def _check_batch(net: DagNet, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.n_in:
        raise ValueError(f"expected batch of shape (B, {net.n_in}), got {x.shape}")
    return x


def _run(net: DagNet, x: np.ndarray, mask: np.ndarray | None):
    """Node-major forward pass. Returns activations (N, B) and per-level pre-activations."""
    B = x.shape[0]
    act = np.zeros((net.dag.n, B))
    act[net.inputs] = x.T
    pres = []
    for blk in net.blocks:
        W = np.zeros((len(blk.preds), len(blk.nodes)))
        W[blk.rows, blk.cols] = net.weights[blk.arc_ids]
        pre = W.T @ act[blk.preds] + net.biases[blk.nodes][:, None]
        out = np.where(blk.is_sink[:, None], pre, selu(pre))
        if mask is not None:
            out = out * mask[blk.nodes]
        act[blk.nodes] = out
        pres.append(pre)
    return act, pres


def forward(net: DagNet, x, mask: np.ndarray | None = None) -> np.ndarray:
    """Logits of shape (B, n_out) for a batch ``x`` of shape (B, n_in).

    ``mask`` is a node-major (N, B) multiplier applied after each node's
    activation (see :func:`sample_damage`).
    """
    x = _check_batch(net, x)
    act, _ = _run(net, x, mask)
    return act[net.outputs].T.copy()


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(logits) and its gradient w.r.t. logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    B = len(y)
    loss = float(np.mean(logsum - z[np.arange(B), y]))
    p = np.exp(z - logsum[:, None])
    p[np.arange(B), y] -= 1.0
    return loss, p / B


def _check_labels(net: DagNet, y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("labels must be a 1-D array")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= net.n_out):
        raise ValueError(f"labels must lie in [0, {net.n_out - 1}]")
    return y


def backward(net: DagNet, x, y, mask: np.ndarray | None = None):
    """Loss and exact gradients by a reverse sweep over the level plan.

    Returns
    -------
    loss : float
    grad_w : ndarray, one entry per arc
    grad_b : ndarray, one entry per node (zero at sources)
    """
    x = _check_batch(net, x)
    y = _check_labels(net, y)
    if len(y) != len(x):
        raise ValueError("batch and label counts differ")
    act, pres = _run(net, x, mask)
    loss, dlogits = cross_entropy(act[net.outputs].T, y)
    dact = np.zeros_like(act)
    dact[net.outputs] = dlogits.T
    grad_w = np.zeros_like(net.weights)
    grad_b = np.zeros_like(net.biases)
    for blk, pre in zip(reversed(net.blocks), reversed(pres)):
        d = dact[blk.nodes]
        if mask is not None:
            d = d * mask[blk.nodes]
        dpre = np.where(blk.is_sink[:, None], d, d * selu_grad(pre))
        grad_b[blk.nodes] = dpre.sum(axis=1)
        gW = act[blk.preds] @ dpre.T
        grad_w[blk.arc_ids] = gW[blk.rows, blk.cols]
        W = np.zeros((len(blk.preds), len(blk.nodes)))
        W[blk.rows, blk.cols] = net.weights[blk.arc_ids]
        dact[blk.preds] += W @ dpre
    return loss, grad_w, grad_b


def sample_damage(
    net: DagNet,
    batch_size: int,
    f: float,
    rng: np.random.Generator,
    rescale: bool = False,
) -> np.ndarray:
    """Per-sample node removal mask of shape (N, batch_size).

    Each hidden node is removed independently with probability ``f`` for
    each sample; inputs and outputs are never removed. With ``rescale`` the
    surviving hidden activations are multiplied by 1 / (1 - f), as inverted
    dropout does.
    """
    if not 0.0 <= f < 1.0:
        raise ValueError("removal fraction must lie in [0, 1)")
    mask = np.ones((net.dag.n, batch_size))
    if f == 0.0:
        return mask
    keep = rng.random((len(net.hidden), batch_size)) >= f
    scale = 1.0 / (1.0 - f) if rescale else 1.0
    mask[net.hidden] = keep * scale
    return mask
