import math

import numpy as np
import pytest

from mtcrowd.graph import GraphSkeleton, LocationMap, TaskGraph


def graph_with_node_quality(edges, weights, node_quality):
    """TaskGraph where every node sits alone in its own subarea.

    ``weights`` is ``(n_tasks, m)``; ``node_quality`` is ``(n_tasks, n)``.
    """
    node_quality = np.asarray(node_quality, dtype=float)
    n_t, n = node_quality.shape
    src, dst = zip(*edges) if edges else ((), ())
    sk = GraphSkeleton(n, np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64))
    k = math.ceil(math.sqrt(n))
    grid = LocationMap(float(k), 1.0)
    idx = np.arange(n)
    loc = np.stack([idx % k + 0.5, idx // k + 0.5], axis=1)
    quality = np.zeros((n_t, k * k))
    quality[:, idx] = node_quality
    return TaskGraph(sk, np.asarray(weights, dtype=float).reshape(n_t, len(edges)), loc, grid, quality)


def path_graph(p=0.5):
    return graph_with_node_quality([(0, 1), (1, 2)], [[p, p]], [[1.0, 1.0, 1.0]])


DESK_EDGES = [(0, 1), (1, 2), (0, 3), (3, 2), (2, 4), (4, 5), (5, 0)]
DESK_WEIGHTS = [
    [0.5, 1.0, 0.5, 0.0, 0.5, 0.5, 0.5],
    [1.0, 0.5, 0.5, 0.5, 0.0, 1.0, 0.5],
]
DESK_QUALITY = [
    [0.9, 0.2, 0.6, 1.0, 0.3, 0.7],
    [0.1, 0.8, 0.5, 0.4, 1.0, 0.6],
]
DESK_CLAIMS = {0: {0}, 1: {0, 1}, 2: {1}, 3: {0, 1}, 4: {0}, 5: {1}}


def desk_graph():
    """6 nodes, 7 edges, 2 tasks, weights in {0, 0.5, 1}, nonuniform quality."""
    return graph_with_node_quality(DESK_EDGES, DESK_WEIGHTS, DESK_QUALITY)


def random_tiny_instance(rng, n=7, m=9, n_tasks=2, weight_choices=(0.0, 0.3, 0.5, 1.0)):
    edges = []
    while len(edges) < m:
        u, v = rng.integers(n, size=2)
        if u != v:
            edges.append((int(u), int(v)))
    weights = rng.choice(weight_choices, size=(n_tasks, m))
    quality = rng.uniform(0.05, 1.0, size=(n_tasks, n))
    claims = {}
    for v in range(n):
        t = {j for j in range(n_tasks) if rng.random() < 0.5}
        claims[v] = t or {int(rng.integers(n_tasks))}
    return graph_with_node_quality(edges, weights, quality), claims


@pytest.fixture
def desk():
    return desk_graph()


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
