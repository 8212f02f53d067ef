import numpy as np
import pytest
from hypothesis import strategies as st

from magsparse import ConnectionGraph


def triangle(theta=np.pi / 3, q=None):
    return ConnectionGraph(3, [0, 1, 2], [1, 2, 0], angles=[theta] * 3)


def cycle_graph(n, angle):
    return ConnectionGraph(n, np.arange(n), (np.arange(n) + 1) % n, angles=np.full(n, angle))


def path_graph(n):
    return ConnectionGraph(n, np.arange(n - 1), np.arange(1, n))


def chorded_ring():
    """8-node ring plus the chord 0-4; every cycle is weakly inconsistent."""
    u = [0, 1, 2, 3, 4, 5, 6, 7, 0]
    v = [1, 2, 3, 4, 5, 6, 7, 0, 4]
    angles = [0.10, 0.15, -0.05, 0.20, 0.10, -0.10, 0.15, 0.05, 0.30]
    return ConnectionGraph(8, u, v, angles=np.mod(angles, 2 * np.pi))


def random_connection_graph(rng, n, p, angle_scale=np.pi, connected=True):
    while True:
        iu, ju = np.triu_indices(n, 1)
        keep = rng.random(iu.size) < p
        g = ConnectionGraph(n, iu[keep], ju[keep],
                            angles=rng.uniform(-angle_scale, angle_scale, keep.sum()))
        if g.is_connected or not connected:
            return g


@st.composite
def connection_graphs(draw, min_n=3, max_n=7, max_m=12, connected=True):
    """Small random connection graphs with arbitrary angles and weights."""
    n = draw(st.integers(min_n, max_n))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=min(max_m, len(pairs)),
                           unique=True))
    if connected:
        # a random spanning path guarantees connectivity
        perm = draw(st.permutations(range(n)))
        for a, b in zip(perm, perm[1:]):
            key = (min(a, b), max(a, b))
            if key not in chosen:
                chosen.append(key)
    m = len(chosen)
    angles = draw(st.lists(st.floats(-np.pi, np.pi, allow_nan=False), min_size=m, max_size=m))
    weights = draw(st.lists(st.floats(0.1, 5.0), min_size=m, max_size=m))
    u, v = zip(*chosen)
    return ConnectionGraph(n, u, v, weights, angles)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, printed after the test session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
