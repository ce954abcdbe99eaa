import numpy as np
import pytest

from qgshap.benchmarks import DatasetSpec, generate
from qgshap.gin import TrainConfig, accuracy, train
from qgshap.graph import Graph


def path_graph(n, d=3, seed=0):
    rng = np.random.default_rng(seed)
    return Graph(n, rng.normal(size=(n, d)), [(i, i + 1) for i in range(n - 1)], label=1)


@pytest.fixture(scope="session")
def bridge_data():
    return generate(DatasetSpec("bridge", seed=0))


@pytest.fixture(scope="session")
def bridge_model(bridge_data):
    """Small trained Bridge classifier; hidden_dim 16 keeps the suite quick."""
    train_set, test_set = bridge_data
    res = train(train_set, TrainConfig(epochs=100, hidden_dim=16, seed=0, learning_rate=1e-2))
    assert accuracy(res.model, test_set) >= 0.95
    return res.model


def random_pair(seed, hidden=8):
    """A random small model, a random labelled graph, and a label."""
    from qgshap.gin import init_model

    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 7))
    d = int(rng.integers(2, 5))
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.5]
    g = Graph(n, rng.normal(size=(n, d)), edges)
    m = init_model(d, hidden, seed=seed, encoder_bias=bool(seed % 2),
                   readout="sum" if seed % 3 else "mean", epsilon=0.1 * (seed % 4))
    return m, g, int(rng.integers(2))


def grad_check(m, g, label, step=1e-5, per_array=6, seed=0, floor=1e-6):
    """Max relative error of backprop against central differences.

    Relative error is |a - f| / max(|a|, |f|, floor); the floor keeps
    entries whose true gradient is ~0 from dividing by rounding noise.
    """
    from qgshap.gin import backward, loss

    rng = np.random.default_rng(seed)
    grad = dict(backward(m, g, label).named_arrays())
    worst = 0.0
    for name, arr in m.named_arrays():
        flat = arr.reshape(-1)
        for idx in rng.choice(flat.size, size=min(per_array, flat.size), replace=False):
            old = flat[idx]
            flat[idx] = old + step
            up = loss(m, g, label)
            flat[idx] = old - step
            down = loss(m, g, label)
            flat[idx] = old
            fd = (up - down) / (2 * step)
            an = grad[name].reshape(-1)[idx]
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), floor))
    return worst
