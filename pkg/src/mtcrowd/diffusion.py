"""Ground-truth evaluators of the multi-task diffusion objective.

``f(S) = (1/n_T) * sum_j E[ sum_{v in I(S^j)} q_j(v) ]`` where ``S^j`` holds the
seeds that claimed task ``j`` and ``I`` is the IC cascade on layer ``j``.
Two independent routes are provided: forward Monte-Carlo simulation and
exhaustive enumeration of live-edge realizations for tiny graphs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Collection, Iterable, Mapping

import numpy as np

from .graph import GraphSkeleton, TaskGraph

Claims = Mapping[int, Collection[int]]

SIM_CHUNK = 256
DEFAULT_ENUM_CAP = 25


class EnumerationCapacityError(RuntimeError):
    """Too many probabilistic edges for exhaustive enumeration; use ``mc_estimate``."""


@dataclass(frozen=True)
class DiffusionEstimate:
    mean: float
    num_sims: int
    std: float

    @property
    def stderr(self) -> float:
        return self.std / np.sqrt(self.num_sims)


def project_seeds(seeds: Iterable[int], claims: Claims, task: int) -> set[int]:
    """Seeds whose claimed task set contains ``task``."""
    return {v for v in seeds if task in claims.get(v, ())}


def _expand(ptr: np.ndarray, nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flattened CSR ranges of ``nodes``: (position into CSR arrays, owner index)."""
    starts = ptr[nodes]
    counts = ptr[nodes + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    owner = np.repeat(np.arange(nodes.size), counts)
    offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return starts[owner] + offs, owner


def simulate_once(graph: TaskGraph, seeds: Iterable[int], task: int, rng: np.random.Generator) -> set[int]:
    """One IC cascade on layer ``task``; every edge leaving an active node is tried once."""
    sk = graph.skeleton
    w = graph.edge_weights[task]
    active = set(seeds)
    frontier = sorted(active)
    while frontier:
        nxt = []
        for u in frontier:
            a, b = sk.out_ptr[u], sk.out_ptr[u + 1]
            if a == b:
                continue
            coins = rng.random(b - a) < w[sk.out_eid[a:b]]
            for v in sk.out_nbr[a:b][coins].tolist():
                if v not in active:
                    active.add(v)
                    nxt.append(v)
        frontier = sorted(nxt)
    return active


def _cascade_batch(sk: GraphSkeleton, w: np.ndarray, seeds: np.ndarray, batch: int, rng) -> np.ndarray:
    """Boolean ``(batch, n)`` activation matrix of independent cascades from ``seeds``."""
    n = sk.node_count
    active = np.zeros((batch, n), dtype=bool)
    if seeds.size == 0:
        return active
    active[:, seeds] = True
    flat = active.reshape(-1)
    sims = np.repeat(np.arange(batch), seeds.size)
    nodes = np.tile(seeds, batch)
    while sims.size:
        pos, owner = _expand(sk.out_ptr, nodes)
        if pos.size == 0:
            break
        live = rng.random(pos.size) < w[sk.out_eid[pos]]
        target = sims[owner[live]] * n + sk.out_nbr[pos[live]]
        target = np.unique(target[~flat[target]])
        flat[target] = True
        sims, nodes = np.divmod(target, n)
    return active


def mc_estimate(
    graph: TaskGraph,
    seeds: Iterable[int],
    claims: Claims,
    num_sims: int = 2000,
    rng_seed: int = 0,
) -> DiffusionEstimate:
    """Monte-Carlo estimate of ``f(S)`` with one fresh realization per (sim, task).

    Sims run in vectorized chunks; chunk ``c`` of task ``j`` draws from the
    substream ``(rng_seed, j, c)`` so the estimate depends only on the seed.
    """
    if num_sims < 1:
        raise ValueError("num_sims must be >= 1")
    seeds = list(seeds)
    per_sim = np.zeros(num_sims)
    for j in range(graph.task_count):
        sj = np.array(sorted(project_seeds(seeds, claims, j)), dtype=np.int64)
        if sj.size == 0:
            continue
        q = graph.node_quality[j]
        for c, start in enumerate(range(0, num_sims, SIM_CHUNK)):
            size = min(SIM_CHUNK, num_sims - start)
            rng = np.random.default_rng([rng_seed, j, c])
            act = _cascade_batch(graph.skeleton, graph.edge_weights[j], sj, size, rng)
            per_sim[start : start + size] += act @ q
    per_sim /= graph.task_count
    std = float(per_sim.std(ddof=1)) if num_sims > 1 else 0.0
    return DiffusionEstimate(float(per_sim.mean()), num_sims, std)


def spread_mc(skeleton: GraphSkeleton, weights: np.ndarray, seeds: Iterable[int], num_sims: int, rng_seed: int = 0):
    """Plain expected cascade size on a single weight layer (influence spread)."""
    seeds = np.array(sorted(set(seeds)), dtype=np.int64)
    total = 0.0
    for c, start in enumerate(range(0, num_sims, SIM_CHUNK)):
        size = min(SIM_CHUNK, num_sims - start)
        act = _cascade_batch(skeleton, weights, seeds, size, np.random.default_rng([rng_seed, c]))
        total += act.sum()
    return total / num_sims


def _free_edges(w: np.ndarray, cap: int) -> np.ndarray:
    free = np.flatnonzero((w > 0) & (w < 1))
    if free.size > cap:
        raise EnumerationCapacityError(
            f"{free.size} probabilistic edges in one layer exceeds the enumeration cap {cap}; use mc_estimate"
        )
    return free


def _realizations(w: np.ndarray, free: np.ndarray, lo: int, hi: int):
    """Live-edge masks ``(hi-lo, m)`` and probabilities for realization ids ``lo..hi``."""
    ids = np.arange(lo, hi, dtype=np.int64)
    bits = ((ids[:, None] >> np.arange(free.size)) & 1).astype(bool)
    live = np.broadcast_to(w >= 1.0, (ids.size, w.size)).copy()
    live[:, free] = bits
    pf = w[free]
    prob = np.prod(np.where(bits, pf, 1.0 - pf), axis=1)
    return live, prob


def _closure(sk: GraphSkeleton, live: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Propagate ``start`` (``(..., n)`` booleans) along live edges to a fixpoint."""
    reach = start.copy()
    while True:
        before = reach.copy()
        for e in range(sk.edge_count):
            u, v = sk.src[e], sk.dst[e]
            reach[..., v] |= reach[..., u] & live[:, e].reshape((-1,) + (1,) * (reach.ndim - 2))
        if np.array_equal(before, reach):
            return reach


def exact_layer_value(graph: TaskGraph, layer_seeds: Iterable[int], task: int, cap: int = DEFAULT_ENUM_CAP) -> float:
    """Exact ``sum_g Pr[g] * sum_{v in I_g(S^j)} q_j(v)`` for one layer."""
    sj = np.array(sorted(set(layer_seeds)), dtype=np.int64)
    if sj.size == 0:
        return 0.0
    w = graph.edge_weights[task]
    free = _free_edges(w, cap)
    q = graph.node_quality[task]
    total = 0.0
    count = 1 << free.size
    for lo in range(0, count, 1 << 16):
        hi = min(count, lo + (1 << 16))
        live, prob = _realizations(w, free, lo, hi)
        start = np.zeros((hi - lo, graph.node_count), dtype=bool)
        start[:, sj] = True
        reach = _closure(graph.skeleton, live, start)
        total += float(prob @ (reach @ q))
    return total


def exact_f(graph: TaskGraph, seeds: Iterable[int], claims: Claims, cap: int = DEFAULT_ENUM_CAP) -> float:
    """Exact objective by enumerating every realization of every layer.

    Edges of weight exactly 0 or 1 are fixed; only the rest are enumerated, at
    most ``cap`` of them per layer.
    """
    seeds = list(seeds)
    total = 0.0
    for j in range(graph.task_count):
        total += exact_layer_value(graph, project_seeds(seeds, claims, j), j, cap)
    return total / graph.task_count


class ExactEvaluator:
    """Cached exact evaluation of ``f`` for many seed sets on one tiny graph.

    Precomputes, per layer and realization, the reachable set of every node;
    memory is ``n_T * 2^F * n^2`` booleans, so keep ``F`` (free edges per layer)
    small.
    """

    def __init__(self, graph: TaskGraph, claims: Claims, cap: int = 16):
        self.graph = graph
        self.claims = {v: frozenset(t) for v, t in claims.items()}
        n = graph.node_count
        self._layers = []
        for j in range(graph.task_count):
            w = graph.edge_weights[j]
            free = _free_edges(w, cap)
            live, prob = _realizations(w, free, 0, 1 << free.size)
            start = np.broadcast_to(np.eye(n, dtype=bool), (prob.size, n, n)).copy()
            reach = _closure(graph.skeleton, live, start)
            self._layers.append((prob, reach))

    def layer_value(self, layer_seeds: Iterable[int], task: int) -> float:
        sj = sorted(set(layer_seeds))
        if not sj:
            return 0.0
        prob, reach = self._layers[task]
        covered = reach[:, sj, :].any(axis=1)
        return float(prob @ (covered @ self.graph.node_quality[task]))

    def __call__(self, seeds: Iterable[int]) -> float:
        seeds = list(seeds)
        total = sum(
            self.layer_value(project_seeds(seeds, self.claims, j), j) for j in range(self.graph.task_count)
        )
        return total / self.graph.task_count


def forward_reachable(skeleton: GraphSkeleton, sources: Iterable[int], live: np.ndarray | None = None) -> set[int]:
    """Nodes reachable from ``sources`` over edges where ``live`` is true (all edges if None)."""
    seen = set(sources)
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for v, e in skeleton.out_edges(u):
            if (live is None or live[e]) and v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


class RealizationPool:
    """A fixed sample of live-edge worlds per layer, shared by every evaluation.

    Averaging over the same worlds (common random numbers) makes the estimate
    an exact monotone submodular function of the seed set, so lazy greedy
    over it is exact and marginal comparisons are not swamped by resampling
    noise. Marginals are maintained incrementally: ``add`` keeps the union of
    reached nodes per world and ``gain`` explores only what is still unreached.
    """

    def __init__(self, skeleton: GraphSkeleton, weights: np.ndarray, quality: np.ndarray, num_sims: int, seed: int = 0):
        if num_sims < 1:
            raise ValueError("num_sims must be >= 1")
        self.skeleton = skeleton
        self.quality = np.asarray(quality, dtype=float)
        self.num_sims = num_sims
        self.layers = self.quality.shape[0]
        self.live = [
            np.random.default_rng([seed, j]).random((num_sims, skeleton.edge_count)) < weights[j]
            for j in range(self.layers)
        ]
        self.reached = np.zeros((self.layers, num_sims, skeleton.node_count), dtype=bool)
        self.value = 0.0

    @classmethod
    def for_graph(cls, graph: TaskGraph, num_sims: int, seed: int = 0) -> "RealizationPool":
        return cls(graph.skeleton, graph.edge_weights, graph.node_quality, num_sims, seed)

    def _spread(self, v: int, j: int, keep: bool) -> float:
        sk, n = self.skeleton, self.skeleton.node_count
        flat = self.reached[j].reshape(-1)
        live = self.live[j]
        sims = np.flatnonzero(~self.reached[j][:, v])
        nodes = np.full(sims.size, v, dtype=np.int64)
        new = [sims * n + v]
        flat[new[0]] = True
        while sims.size:
            pos, owner = _expand(sk.out_ptr, nodes)
            if pos.size == 0:
                break
            s = sims[owner]
            ok = live[s, sk.out_eid[pos]]
            target = s[ok] * n + sk.out_nbr[pos[ok]]
            target = np.unique(target[~flat[target]])
            flat[target] = True
            new.append(target)
            sims, nodes = np.divmod(target, n)
        idx = np.concatenate(new)
        gain = float(self.quality[j][idx % n].sum()) / self.num_sims
        if not keep:
            flat[idx] = False
        return gain

    def gain(self, v: int, layers: Iterable[int]) -> float:
        """Marginal value of adding ``v`` to the layers it claims (average over layers)."""
        return sum(self._spread(v, j, keep=False) for j in sorted(layers)) / self.layers

    def add(self, v: int, layers: Iterable[int]) -> float:
        g = sum(self._spread(v, j, keep=True) for j in sorted(layers)) / self.layers
        self.value += g
        return g
