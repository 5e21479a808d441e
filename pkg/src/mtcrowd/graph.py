"""Directed social graph with per-task diffusion layers and a spatial quality grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np


class GraphParseError(ValueError):
    """Raised for a malformed edge-list line."""


class ConfigError(ValueError):
    pass


def _csr(keys: np.ndarray, values: np.ndarray, eids: np.ndarray, n: int):
    # stable sort keeps input edge order inside every adjacency list
    order = np.argsort(keys, kind="stable")
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(keys, minlength=n), out=ptr[1:])
    return ptr, values[order].astype(np.int64), eids[order].astype(np.int64)


@dataclass(frozen=True, eq=False)
class GraphSkeleton:
    """Edge structure of a directed multigraph.

    Edge ``e`` runs ``src[e] -> dst[e]``. Adjacency is stored in CSR form in
    both directions; ``out_nbr[out_ptr[u]:out_ptr[u+1]]`` are the out-neighbors
    of ``u`` and ``out_eid`` the matching edge ids (likewise for ``in_*``).
    """

    node_count: int
    src: np.ndarray
    dst: np.ndarray
    edge_weights: np.ndarray | None = None
    out_ptr: np.ndarray = field(init=False, repr=False)
    out_nbr: np.ndarray = field(init=False, repr=False)
    out_eid: np.ndarray = field(init=False, repr=False)
    in_ptr: np.ndarray = field(init=False, repr=False)
    in_nbr: np.ndarray = field(init=False, repr=False)
    in_eid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.int64)
        dst = np.asarray(self.dst, dtype=np.int64)
        if src.shape != dst.shape:
            raise ValueError("src and dst must have equal length")
        if self.node_count < 1:
            raise ValueError("node_count must be >= 1")
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= self.node_count):
            raise ValueError("edge endpoint out of range")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        eids = np.arange(src.size, dtype=np.int64)
        for name, (k, v) in {"out": (src, dst), "in": (dst, src)}.items():
            ptr, nbr, eid = _csr(k, v, eids, self.node_count)
            object.__setattr__(self, f"{name}_ptr", ptr)
            object.__setattr__(self, f"{name}_nbr", nbr)
            object.__setattr__(self, f"{name}_eid", eid)

    @property
    def edge_count(self) -> int:
        return int(self.src.size)

    def out_edges(self, u: int) -> list[tuple[int, int]]:
        """``(neighbor, edge id)`` pairs leaving ``u`` in edge-id order."""
        a, b = self.out_ptr[u], self.out_ptr[u + 1]
        return list(zip(self.out_nbr[a:b].tolist(), self.out_eid[a:b].tolist()))

    def in_edges(self, v: int) -> list[tuple[int, int]]:
        a, b = self.in_ptr[v], self.in_ptr[v + 1]
        return list(zip(self.in_nbr[a:b].tolist(), self.in_eid[a:b].tolist()))

    def out_degree(self) -> np.ndarray:
        return np.diff(self.out_ptr)

    def in_degree(self) -> np.ndarray:
        return np.diff(self.in_ptr)


def load_edge_list(
    stream: TextIO | Iterable[str],
    node_count_hint: int | None = None,
) -> GraphSkeleton:
    """Parse ``u v`` or ``u v w`` lines with dense 0-based ids.

    ``#`` comment lines and blank lines are skipped. Self-loops and parallel
    edges are kept; edge ids follow line order.
    """
    src, dst, w = [], [], []
    weighted = None
    for lineno, line in enumerate(stream, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) not in (2, 3):
            raise GraphParseError(f"line {lineno}: expected 'u v' or 'u v w', got {text!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
            wt = float(parts[2]) if len(parts) == 3 else None
        except ValueError as exc:
            raise GraphParseError(f"line {lineno}: {exc}") from None
        if u < 0 or v < 0:
            raise GraphParseError(f"line {lineno}: negative node id")
        if wt is not None and not 0.0 <= wt <= 1.0:
            raise GraphParseError(f"line {lineno}: weight {wt} outside [0, 1]")
        if weighted is None:
            weighted = wt is not None
        elif weighted != (wt is not None):
            raise GraphParseError(f"line {lineno}: mixed weighted and unweighted lines")
        src.append(u)
        dst.append(v)
        w.append(wt)
    n = 1 + max(max(src, default=-1), max(dst, default=-1))
    if node_count_hint is not None:
        n = max(n, node_count_hint)
    if n < 1:
        raise GraphParseError("empty edge list and no node count hint")
    weights = np.asarray(w, dtype=float) if weighted else None
    return GraphSkeleton(n, np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64), weights)


def remap_edge_list(stream: TextIO | Iterable[str]) -> tuple[list[str], dict[str, int]]:
    """Rewrite arbitrary external node labels to dense ids in first-seen order.

    Returns the rewritten lines and the ``external -> internal`` map.
    """
    id_map: dict[str, int] = {}
    out = []
    for lineno, line in enumerate(stream, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) not in (2, 3):
            raise GraphParseError(f"line {lineno}: expected 'u v' or 'u v w', got {text!r}")
        ids = [id_map.setdefault(p, len(id_map)) for p in parts[:2]]
        out.append(" ".join([str(ids[0]), str(ids[1]), *parts[2:]]))
    return out, id_map


def write_id_map(id_map: Mapping[str, int], fh: TextIO) -> None:
    for ext, internal in sorted(id_map.items(), key=lambda kv: kv[1]):
        fh.write(f"{ext} {internal}\n")


def read_id_map(fh: TextIO) -> dict[str, int]:
    out = {}
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphParseError(f"id map line {lineno}: expected 'external_id internal_id'")
        out[parts[0]] = int(parts[1])
    return out


def assign_uniform_layers(skeleton: GraphSkeleton, per_task_probability: Sequence[float]) -> np.ndarray:
    """Constant diffusion probability per task layer, shape ``(n_tasks, m)``."""
    probs = np.asarray(per_task_probability, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError("need at least one task probability")
    if np.any((probs < 0) | (probs > 1)) or not np.all(np.isfinite(probs)):
        raise ValueError(f"task probabilities must lie in [0, 1], got {probs.tolist()}")
    return np.repeat(probs[:, None], skeleton.edge_count, axis=1)


@dataclass(frozen=True)
class LocationMap:
    """Square area split into square blocks, numbered row-major from the origin."""

    area_side: float = 1000.0
    block_side: float = 100.0

    def __post_init__(self):
        if not (self.area_side > 0 and self.block_side > 0):
            raise ConfigError("area_side and block_side must be positive")
        ratio = self.area_side / self.block_side
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError(f"block_side {self.block_side} does not divide area_side {self.area_side}")

    @property
    def blocks_per_side(self) -> int:
        return int(round(self.area_side / self.block_side))

    @property
    def subarea_count(self) -> int:
        return self.blocks_per_side**2

    def subarea(self, x, y):
        """Block index of ``(x, y)``; the upper boundary folds into the last block."""
        k = self.blocks_per_side
        bx = np.clip(np.floor(np.asarray(x, dtype=float) / self.block_side), 0, k - 1).astype(np.int64)
        by = np.clip(np.floor(np.asarray(y, dtype=float) / self.block_side), 0, k - 1).astype(np.int64)
        out = bx + k * by
        return int(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class TaskGraph:
    """A social graph carrying one IC weight layer and one quality vector per task.

    ``edge_weights[j, e]`` is the activation probability of edge ``e`` for task
    ``j``; ``quality[j, k]`` the completion quality of task ``j`` in subarea ``k``.
    """

    skeleton: GraphSkeleton
    edge_weights: np.ndarray
    locations: np.ndarray
    grid: LocationMap
    quality: np.ndarray
    subareas: np.ndarray = field(init=False, repr=False)
    node_quality: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n, m = self.skeleton.node_count, self.skeleton.edge_count
        w = np.ascontiguousarray(self.edge_weights, dtype=float)
        q = np.ascontiguousarray(self.quality, dtype=float)
        loc = np.ascontiguousarray(self.locations, dtype=float)
        if w.ndim != 2 or w.shape[1] != m or w.shape[0] < 1:
            raise ValueError(f"edge_weights must have shape (n_tasks, {m})")
        if q.shape != (w.shape[0], self.grid.subarea_count):
            raise ValueError(f"quality must have shape ({w.shape[0]}, {self.grid.subarea_count})")
        if loc.shape != (n, 2):
            raise ValueError(f"locations must have shape ({n}, 2)")
        if np.any((w < 0) | (w > 1)) or np.any(np.isnan(w)):
            raise ValueError("edge weights must lie in [0, 1]")
        if np.any((q < 0) | (q > 1)) or np.any(np.isnan(q)):
            raise ValueError("quality values must lie in [0, 1]")
        for a in (w, q, loc):
            a.setflags(write=False)
        sub = self.grid.subarea(loc[:, 0], loc[:, 1])
        nq = q[:, sub]
        sub.setflags(write=False)
        nq.setflags(write=False)
        object.__setattr__(self, "edge_weights", w)
        object.__setattr__(self, "quality", q)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "subareas", sub)
        object.__setattr__(self, "node_quality", nq)

    @property
    def node_count(self) -> int:
        return self.skeleton.node_count

    @property
    def edge_count(self) -> int:
        return self.skeleton.edge_count

    @property
    def task_count(self) -> int:
        return int(self.edge_weights.shape[0])

    def location_of(self, node: int) -> int:
        return int(self.subareas[node])

    def task_quality_mass(self, task: int | None = None):
        """Total node quality of a task layer; all layers when ``task`` is None."""
        mass = self.node_quality.sum(axis=1)
        return mass if task is None else float(mass[task])

    @classmethod
    def from_parts(cls, skeleton, per_task_probability, locations, quality, grid=None) -> "TaskGraph":
        grid = grid or LocationMap()
        return cls(skeleton, assign_uniform_layers(skeleton, per_task_probability), locations, grid, quality)


@dataclass(frozen=True)
class ScenarioConfig:
    area_side: float = 1000.0
    block_side: float = 100.0
    tasks: tuple[float, ...] = (0.3, 0.5, 0.4, 0.4)
    quality_seed: int = 0
    location_seed: int = 1

    @classmethod
    def from_mapping(cls, data: Mapping) -> "ScenarioConfig":
        known = {"area_side", "block_side", "tasks", "quality_seed", "location_seed"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown scenario keys: {sorted(extra)}")
        kw = dict(data)
        if "tasks" in kw:
            kw["tasks"] = tuple(float(t) for t in kw["tasks"])
        return cls(**kw)


def synthesize_scenario(skeleton: GraphSkeleton, config: ScenarioConfig, rng_seed: int = 0) -> TaskGraph:
    """Uniform node locations over the area and uniform ``[0, 1]`` subarea qualities.

    The location and quality streams are seeded from ``(rng_seed, location_seed)``
    and ``(rng_seed, quality_seed)`` so the result is a pure function of the inputs.
    """
    grid = LocationMap(config.area_side, config.block_side)
    weights = assign_uniform_layers(skeleton, config.tasks)
    loc_rng = np.random.default_rng([rng_seed, config.location_seed, 0])
    q_rng = np.random.default_rng([rng_seed, config.quality_seed, 1])
    locations = loc_rng.uniform(0.0, config.area_side, size=(skeleton.node_count, 2))
    quality = q_rng.uniform(0.0, 1.0, size=(len(config.tasks), grid.subarea_count))
    return TaskGraph(skeleton, weights, locations, grid, quality)


def synthetic_graph(n: int, mean_out_degree: float = 1.5, tail: float = 2.5, seed: int = 0) -> GraphSkeleton:
    """Sparse retweet-like digraph: Pareto out-degrees, uniformly random targets.

    A few hubs get large out-degree while a node reached at random has mean
    out-degree ``mean_out_degree``, so cascades at the default task probabilities stay
    subcritical. Self-loops are dropped.
    """
    rng = np.random.default_rng([seed, 0x5EED])
    raw = rng.pareto(tail - 1.0, size=n) + 1.0
    deg = np.floor(raw * mean_out_degree / raw.mean()).astype(np.int64)
    deg = np.minimum(deg, n - 1)
    src = np.repeat(np.arange(n, dtype=np.int64), deg)
    dst = rng.integers(0, n - 1, size=src.size)
    dst = dst + (dst >= src)
    return GraphSkeleton(n, src, dst)

