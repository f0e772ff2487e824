import numpy as np
import pytest

from boundcon.graph import random_graph
from boundcon.linalg import random_weights


def random_instance(seed, K=None, M=None, edge_prob=None):
    """Connected random graph with random weights; sizes drawn from ``seed`` when omitted."""
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 6)) if K is None else K
    M = int(rng.integers(1, 15)) if M is None else M
    p = float(rng.uniform(0.1, 0.5)) if edge_prob is None else edge_prob
    g = random_graph(K, M, p, rng.integers(2**32))
    return g, random_weights(g, rng.integers(2**32))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one acceptance criterion; the summary prints at session end."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, title, ok, detail=""):
        store[number] = (title, bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        title, ok, detail = store[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
