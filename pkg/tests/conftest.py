import numpy as np
import pytest

from complexnets import dag as dg
from complexnets import graphgen as gg
from complexnets import net as nn


def random_small_net(seed: int, n_max: int = 20, n_in: int = 3, n_out: int = 3) -> nn.DagNet:
    """A random DAG net with at most ``n_max`` nodes and non-trivial biases."""
    rng = np.random.default_rng(seed)
    while True:
        n = int(rng.integers(n_in + n_out + 4, n_max + 1))
        l = int(rng.integers(2 * n, min(n * (n - 1) // 2, 3 * n) + 1))
        g = gg.gen_er(n, l, int(rng.integers(2**31)))
        try:
            d = dg.build_dag(g, n_in, n_out, seed=int(rng.integers(2**31)))
        except dg.AdjustError:
            continue
        net = nn.init(d, seed)
        net.biases[net.bias_nodes] = rng.normal(0, 0.3, len(net.bias_nodes))
        return net


def fd_max_rel_error(net: nn.DagNet, x, y, mask=None, h=1e-5):
    """Max relative error between backprop and central differences over all parameters."""
    loss, gw, gb = nn.backward(net, x, y, mask)
    analytic = np.concatenate([gw, gb[net.bias_nodes]])
    theta = net.get_params()
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tp[i] += h
        net.set_params(tp)
        lp = nn.cross_entropy(nn.forward(net, x, mask), y)[0]
        tp[i] -= 2 * h
        net.set_params(tp)
        lm = nn.cross_entropy(nn.forward(net, x, mask), y)[0]
        numeric[i] = (lp - lm) / (2 * h)
    net.set_params(theta)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    # relative error, floored for entries that are themselves ~0
    rel = np.abs(analytic - numeric) / np.maximum(scale, 1e-7)
    return float(rel.max())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion; printed at session end."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split(":")[0].split()[-1])):
            terminalreporter.write_line(line)
