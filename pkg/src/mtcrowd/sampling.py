"""Multi-task reverse-reachable sets and the coverage estimator built on them.

An MT-RR set picks a task uniformly, a root with probability proportional to
its quality for that task, and collects every node that reaches the root over
live edges of that task's layer. For a collection of ``theta`` such sets,

    f_hat(S) = (1/theta) * sum_x c_{j_x} * [S^{j_x} intersects R_x],

with ``c_j`` the total node quality of task ``j``, is unbiased for ``f(S)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .diffusion import Claims
from .graph import TaskGraph


class ZeroObjectiveError(ValueError):
    """Every task has zero quality mass, so the objective is identically zero."""


@dataclass(frozen=True)
class MtRrSet:
    task: int
    root: int
    nodes: np.ndarray


class AliasTable:
    """Walker alias table for O(1) draws from a fixed discrete distribution."""

    def __init__(self, weights: np.ndarray):
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not total > 0:
            raise ValueError("alias table needs positive total weight")
        n = w.size
        scaled = w * (n / total)
        self.prob = np.ones(n)
        self.alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s, l = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            (small if scaled[l] < 1.0 else large).append(l)
        # leftovers are 1 up to rounding
        self.n = n

    def draw(self, u1: float, u2: float) -> int:
        i = min(int(u1 * self.n), self.n - 1)
        return i if u2 < self.prob[i] else int(self.alias[i])


class MtRrSampler:
    """Per-graph sampling state: task masses and one alias table per task."""

    def __init__(self, graph: TaskGraph):
        self.graph = graph
        self.mass = graph.task_quality_mass()
        self.live_tasks = np.flatnonzero(self.mass > 0)
        if self.live_tasks.size == 0:
            raise ZeroObjectiveError("all tasks have zero quality mass")
        self.tables = {int(j): AliasTable(graph.node_quality[j]) for j in self.live_tasks}

    def sample(self, rng: np.random.Generator) -> MtRrSet:
        n_t = self.graph.task_count
        while True:
            j = int(rng.integers(n_t))
            if self.mass[j] > 0:
                break
        u1, u2 = rng.random(2)
        root = self.tables[j].draw(u1, u2)
        return MtRrSet(j, root, self.reverse_reach(root, j, rng))

    def reverse_reach(self, root: int, task: int, rng: np.random.Generator) -> np.ndarray:
        """Lazy reverse BFS; each in-edge met is flipped once, live with its layer weight."""
        sk = self.graph.skeleton
        w = self.graph.edge_weights[task]
        ptr, nbr, eid = sk.in_ptr, sk.in_nbr, sk.in_eid
        seen = {root}
        order = [root]
        head = 0
        while head < len(order):
            v = order[head]
            head += 1
            a, b = ptr[v], ptr[v + 1]
            if a == b:
                continue
            live = rng.random(b - a) < w[eid[a:b]]
            for u in nbr[a:b][live].tolist():
                if u not in seen:
                    seen.add(u)
                    order.append(u)
        return np.array(order, dtype=np.int64)


def sample_mtrr(graph: TaskGraph, rng: np.random.Generator) -> MtRrSet:
    return MtRrSampler(graph).sample(rng)


class RrCollection:
    """Ordered MT-RR sets in CSR form plus a lazily built node -> set index.

    Set ``i`` is generated from substream ``(seed, i)``, so growing a
    collection in several steps yields the same sets as growing it at once.
    """

    def __init__(self, task_count: int, scale: np.ndarray, seed: int = 0):
        self.task_count = task_count
        self.scale = np.asarray(scale, dtype=float)
        self.seed = seed
        self.tasks = np.empty(0, dtype=np.int64)
        self.roots = np.empty(0, dtype=np.int64)
        self.ptr = np.zeros(1, dtype=np.int64)
        self.nodes = np.empty(0, dtype=np.int64)
        self._index = None

    @classmethod
    def for_graph(cls, graph: TaskGraph, seed: int = 0) -> "RrCollection":
        return cls(graph.task_count, graph.task_quality_mass(), seed)

    @classmethod
    def from_sets(cls, sets: Sequence[MtRrSet], task_count: int, scale, seed: int = 0) -> "RrCollection":
        coll = cls(task_count, scale, seed)
        coll._append(sets)
        return coll

    def __len__(self) -> int:
        return int(self.tasks.size)

    @property
    def theta(self) -> int:
        return len(self)

    def set_nodes(self, x: int) -> np.ndarray:
        return self.nodes[self.ptr[x] : self.ptr[x + 1]]

    def __getitem__(self, x: int) -> MtRrSet:
        return MtRrSet(int(self.tasks[x]), int(self.roots[x]), self.set_nodes(x))

    @property
    def weights(self) -> np.ndarray:
        """Per-set scaling weight ``c_{j_x}``."""
        return self.scale[self.tasks]

    def _append(self, sets: Sequence[MtRrSet]) -> None:
        if not sets:
            return
        self.tasks = np.concatenate([self.tasks, [s.task for s in sets]]).astype(np.int64)
        self.roots = np.concatenate([self.roots, [s.root for s in sets]]).astype(np.int64)
        sizes = np.array([len(s.nodes) for s in sets], dtype=np.int64)
        self.ptr = np.concatenate([self.ptr, self.ptr[-1] + np.cumsum(sizes)])
        self.nodes = np.concatenate([self.nodes, *[np.asarray(s.nodes, dtype=np.int64) for s in sets]])
        self._index = None

    def extend(self, target: int, graph: TaskGraph, sampler: MtRrSampler | None = None) -> "RrCollection":
        """Grow to ``target`` sets in place; existing sets are untouched."""
        if target < self.theta:
            raise ValueError(f"target {target} below current size {self.theta}")
        sampler = sampler or MtRrSampler(graph)
        fresh = [sampler.sample(np.random.default_rng([self.seed, i])) for i in range(self.theta, target)]
        self._append(fresh)
        return self

    def node_index(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR ``(ptr, set_ids)`` listing, per node, the sets containing it in ascending order."""
        if self._index is None:
            owner = np.repeat(np.arange(self.theta), np.diff(self.ptr))
            n = int(self.nodes.max()) + 1 if self.nodes.size else 0
            order = np.argsort(self.nodes, kind="stable")
            ptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(np.bincount(self.nodes, minlength=n), out=ptr[1:])
            self._index = (ptr, owner[order])
        return self._index

    def sets_containing(self, v: int) -> np.ndarray:
        ptr, ids = self.node_index()
        if v + 1 >= ptr.size:
            return ids[:0]
        return ids[ptr[v] : ptr[v + 1]]

    def covered_mask(self, seeds: Iterable[int], claims: Claims) -> np.ndarray:
        hit = np.zeros(self.theta, dtype=bool)
        for v in set(seeds):
            tasks = claims.get(v, ())
            if not tasks:
                continue
            xs = self.sets_containing(v)
            if xs.size:
                ok = np.isin(self.tasks[xs], list(tasks))
                hit[xs[ok]] = True
        return hit

    def estimate(self, seeds: Iterable[int], claims: Claims) -> float:
        if self.theta == 0:
            raise ValueError("estimate needs a non-empty collection")
        hit = self.covered_mask(seeds, claims)
        return _weighted_fraction(np.bincount(self.tasks[hit], minlength=self.task_count), self.scale, self.theta)

    def normalized(self, value: float) -> float:
        return value / self.scale.max()

    def __eq__(self, other) -> bool:
        if not isinstance(other, RrCollection):
            return NotImplemented
        return (
            self.task_count == other.task_count
            and np.array_equal(self.scale, other.scale)
            and np.array_equal(self.tasks, other.tasks)
            and np.array_equal(self.roots, other.roots)
            and np.array_equal(self.ptr, other.ptr)
            and np.array_equal(self.nodes, other.nodes)
        )

    # binary format: magic, theta, n_T, n_T float64 scales, then per set
    # task, root, size, node ids; all integers 32-bit little-endian
    _MAGIC = b"MTRR"

    def dump(self, fh: BinaryIO) -> None:
        fh.write(self._MAGIC)
        fh.write(struct.pack("<II", self.theta, self.task_count))
        fh.write(self.scale.astype("<f8").tobytes())
        sizes = np.diff(self.ptr)
        for x in range(self.theta):
            fh.write(struct.pack("<III", self.tasks[x], self.roots[x], sizes[x]))
            fh.write(self.set_nodes(x).astype("<u4").tobytes())

    @classmethod
    def load(cls, fh: BinaryIO, seed: int = 0) -> "RrCollection":
        if fh.read(4) != cls._MAGIC:
            raise ValueError("not an MT-RR collection dump")
        theta, n_t = struct.unpack("<II", fh.read(8))
        scale = np.frombuffer(fh.read(8 * n_t), dtype="<f8").astype(float)
        sets = []
        for _ in range(theta):
            task, root, size = struct.unpack("<III", fh.read(12))
            nodes = np.frombuffer(fh.read(4 * size), dtype="<u4").astype(np.int64)
            sets.append(MtRrSet(task, root, nodes))
        return cls.from_sets(sets, n_t, scale, seed)


def _weighted_fraction(task_counts: np.ndarray, scale: np.ndarray, theta: int) -> float:
    # sum in fixed task order so equal counts give bit-identical values
    total = 0.0
    for j in range(task_counts.size):
        total += float(task_counts[j]) * float(scale[j])
    return total / theta


def generate_collection(graph: TaskGraph, theta: int, seed: int = 0) -> RrCollection:
    return RrCollection.for_graph(graph, seed).extend(theta, graph)


class CoverageState:
    """Greedy bookkeeping over one collection for a fixed pool of candidate users.

    ``counts[k, j]`` is the number of still-uncovered sets of task ``j`` that
    contain user ``users[k]``, restricted to tasks the user claims. Adding a
    user marks its sets covered and decrements the counts of every other
    candidate inside those sets, so all marginal gains stay exact.
    """

    def __init__(self, collection: RrCollection, users: Sequence[int], claims: Claims):
        self.collection = collection
        self.users = np.asarray(users, dtype=np.int64)
        theta, n_t = collection.theta, collection.task_count
        claim_mat = np.zeros((self.users.size, n_t), dtype=bool)
        for k, v in enumerate(self.users.tolist()):
            for j in claims.get(v, ()):
                claim_mat[k, j] = True
        self.claim_mat = claim_mat
        n_nodes = max(int(collection.nodes.max()) + 1 if collection.nodes.size else 0, int(self.users.max(initial=-1)) + 1)
        to_user = np.full(n_nodes, -1, dtype=np.int64)
        to_user[self.users] = np.arange(self.users.size)
        owner = np.repeat(np.arange(theta), np.diff(collection.ptr))
        cand = to_user[collection.nodes] if collection.nodes.size else np.empty(0, np.int64)
        keep = cand >= 0
        pair_set, pair_user = owner[keep], cand[keep]
        keep = claim_mat[pair_user, collection.tasks[pair_set]]
        pair_set, pair_user = pair_set[keep], pair_user[keep]
        # set -> users (pairs already grouped by set)
        self._s_ptr = np.zeros(theta + 1, dtype=np.int64)
        np.cumsum(np.bincount(pair_set, minlength=theta), out=self._s_ptr[1:])
        self._s_user = pair_user
        # user -> sets
        order = np.argsort(pair_user, kind="stable")
        self._u_ptr = np.zeros(self.users.size + 1, dtype=np.int64)
        np.cumsum(np.bincount(pair_user, minlength=self.users.size), out=self._u_ptr[1:])
        self._u_set = pair_set[order]
        self.covered = np.zeros(theta, dtype=bool)
        self.counts = np.zeros((self.users.size, n_t), dtype=np.int64)
        np.add.at(self.counts, (pair_user, collection.tasks[pair_set]), 1)
        self.covered_counts = np.zeros(n_t, dtype=np.int64)
        self.chosen = np.zeros(self.users.size, dtype=bool)

    def copy(self) -> "CoverageState":
        new = object.__new__(CoverageState)
        new.__dict__.update(self.__dict__)
        new.covered = self.covered.copy()
        new.counts = self.counts.copy()
        new.covered_counts = self.covered_counts.copy()
        new.chosen = self.chosen.copy()
        return new

    def gains(self) -> np.ndarray:
        """Marginal estimator gain of every candidate given the current cover."""
        scale = self.collection.scale
        out = np.zeros(self.users.size)
        for j in range(self.collection.task_count):
            out += self.counts[:, j] * float(scale[j])
        return out / self.collection.theta

    def gain(self, k: int) -> float:
        return _weighted_fraction(self.counts[k], self.collection.scale, self.collection.theta)

    @property
    def value(self) -> float:
        """Estimator value of the users added so far."""
        return _weighted_fraction(self.covered_counts, self.collection.scale, self.collection.theta)

    def add(self, k: int) -> None:
        xs = self._u_set[self._u_ptr[k] : self._u_ptr[k + 1]]
        xs = xs[~self.covered[xs]]
        self.chosen[k] = True
        if xs.size == 0:
            return
        self.covered[xs] = True
        tasks = self.collection.tasks[xs]
        self.covered_counts += np.bincount(tasks, minlength=self.collection.task_count)
        starts, ends = self._s_ptr[xs], self._s_ptr[xs + 1]
        sizes = ends - starts
        idx = np.repeat(starts - np.cumsum(sizes) + sizes, sizes) + np.arange(sizes.sum())
        np.subtract.at(self.counts, (self._s_user[idx], np.repeat(tasks, sizes)), 1)


def marginal_gain(v: int, state: CoverageState) -> float:
    """``f_hat(S + v) - f_hat(S)`` for the cover recorded in ``state``."""
    k = np.flatnonzero(state.users == v)
    if k.size == 0:
        raise KeyError(f"user {v} is not a candidate of this coverage state")
    return state.gain(int(k[0]))
