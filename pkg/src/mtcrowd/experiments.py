"""Experiment harness: scenarios, baselines, batch runs and CSV emission.

A *cell* is one scenario seed. Inside a cell every algorithm runs at every
budget of the schedule, each selected set is scored by the same Monte-Carlo
evaluator, and (optionally) the auction is run on the Modified-OPIM-C
collection. Cells are independent and deterministic, so they can run in a
process pool and are written out in seed order.
"""

from __future__ import annotations

import csv
import heapq
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

from .auction import AuctionOutcome, BidProfile, Mechanism, PAYMENT_RULES, PaymentTrace, overpayment_ratio
from .diffusion import RealizationPool, mc_estimate
from .graph import (
    ConfigError,
    GraphSkeleton,
    LocationMap,
    ScenarioConfig,
    TaskGraph,
    load_edge_list,
    synthesize_scenario,
    synthetic_graph,
)
from .opimc import InfeasibleBudgetError, OpimcResult, budgeted_w_max_coverage, compute_K, modified_opimc
from .sampling import RrCollection, generate_collection

ALGORITHMS = ("modified_opimc", "greedy", "greedy_im", "opimc", "max_degree", "random")
DEFAULT_TASK_PROBABILITIES = (0.3, 0.5, 0.4, 0.4)

RUN_COLUMNS = ("algorithm", "budget", "seed", "f_standard", "f_estimated", "set_size", "ms", "overpayment_ratio")
AUCTION_COLUMNS = ("seed", "budget", "user", "won", "bid", "payment", "utility", "critical_trace_max")
ROUND_COLUMNS = ("seed", "budget", "round", "theta", "f_hat", "f_low", "f_up", "ratio", "ms")
GAP_COLUMNS = ("seed", "budget", "f_estimated", "f_standard", "abs_gap", "rel_gap")
PROPERTY_COLUMNS = ("check", "passed", "failed", "status")
TIMING_COLUMNS = frozenset({"ms"})
PROPERTY_CHECKS = ("individual_rationality", "budget_feasibility", "submodularity", "monotonicity", "unbiasedness")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a suite run depends on. See ``configs/default.yaml`` for the schema."""

    dataset: str | None = None
    synthetic_nodes: int = 5000
    synthetic_mean_out_degree: float = 1.5
    synthetic_tail: float = 2.5
    synthetic_seed: int = 0
    area_side: float = 1000.0
    block_side: float = 100.0
    registered_fraction: float = 0.2
    tasks: int = 2
    task_probabilities: tuple[float, ...] | None = None
    budgets: tuple[float, ...] = tuple(float(d) for d in range(10, 101, 10))
    algorithms: tuple[str, ...] = ALGORITHMS
    master_seed: int = 0
    repetitions: int = 1
    mc_sims: int = 2000
    greedy_sims: int = 500
    eps: float = 0.1
    delta: float = 0.1
    auction: bool = True
    payment_rule: str = "critical"
    fresh_payment_collection: bool = False
    property_triples: int = 50

    def __post_init__(self):
        probs = self.task_probabilities
        if probs is None:
            if not 1 <= self.tasks <= len(DEFAULT_TASK_PROBABILITIES):
                raise ConfigError(f"tasks must be in 1..4 without explicit task_probabilities, got {self.tasks}")
            probs = DEFAULT_TASK_PROBABILITIES[: self.tasks]
        probs = tuple(float(p) for p in probs)
        if len(probs) != self.tasks:
            raise ConfigError(f"{len(probs)} task probabilities given for {self.tasks} tasks")
        if not all(0 < p <= 1 for p in probs):
            raise ConfigError("task probabilities must lie in (0, 1]")
        object.__setattr__(self, "task_probabilities", probs)
        object.__setattr__(self, "budgets", tuple(float(d) for d in self.budgets))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if not 0 < self.registered_fraction <= 1:
            raise ConfigError("registered_fraction must lie in (0, 1]")
        if not self.budgets or min(self.budgets) <= 0:
            raise ConfigError("budgets must be a nonempty list of positive values")
        if not self.algorithms:
            raise ConfigError("algorithms must be nonempty")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigError(f"unknown algorithms {unknown}; choose from {list(ALGORITHMS)}")
        if self.payment_rule not in PAYMENT_RULES:
            raise ConfigError(f"payment_rule must be one of {PAYMENT_RULES}")
        if self.repetitions < 1 or self.mc_sims < 2 or self.greedy_sims < 1:
            raise ConfigError("repetitions, mc_sims and greedy_sims must be positive (mc_sims >= 2)")
        if not (0 < self.eps < 1 and 0 < self.delta < 1):
            raise ConfigError("eps and delta must lie in (0, 1)")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "ExperimentConfig":
        data = dict(data or {})
        flat = {}
        for section in ("synthetic", "scenario"):
            sub = data.pop(section, None) or {}
            if not isinstance(sub, Mapping):
                raise ConfigError(f"'{section}' must be a mapping")
            for k, v in sub.items():
                key = f"synthetic_{k}" if section == "synthetic" else k
                flat[key] = v
        flat.update(data)
        known = {f.name for f in fields(cls)}
        extra = sorted(set(flat) - known)
        if extra:
            raise ConfigError(f"unknown config keys: {extra}")
        for key in ("budgets", "algorithms", "task_probabilities"):
            if flat.get(key) is not None:
                flat[key] = tuple(flat[key])
        return cls(**flat)

    @classmethod
    def from_yaml(cls, path: str | os.PathLike) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        return cls.from_mapping(data)

    def replace(self, **changes) -> "ExperimentConfig":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return ExperimentConfig(**kw)

    def scenario_seeds(self) -> list[int]:
        return [int(np.random.SeedSequence([self.master_seed, r]).generate_state(1)[0]) for r in range(self.repetitions)]


def load_skeleton(config: ExperimentConfig) -> GraphSkeleton:
    if config.dataset is None:
        return synthetic_graph(
            config.synthetic_nodes, config.synthetic_mean_out_degree, config.synthetic_tail, config.synthetic_seed
        )
    path = Path(config.dataset)
    if not path.is_file():
        raise ConfigError(f"dataset not found: {path}")
    with open(path) as fh:
        return load_edge_list(fh)


@dataclass
class Scenario:
    graph: TaskGraph
    users: tuple[int, ...]
    claims: dict[int, frozenset[int]]
    bids: dict[int, float]
    costs: dict[int, float]
    seed: int

    @property
    def profile(self) -> BidProfile:
        return BidProfile(self.users, self.claims, self.bids)

    def ratio_bids(self) -> dict[int, float]:
        """Bid per claimed task, the denominator of the single-layer baselines."""
        return {v: self.bids[v] / len(self.claims[v]) for v in self.users}


def make_scenario(skeleton: GraphSkeleton, config: ExperimentConfig, seed: int) -> Scenario:
    """Locations, qualities, registered users, claims and bids for one seed.

    Registered users are a uniform sample without replacement. Each claims
    every task independently with probability 1/2, redrawn until nonempty, and
    bids its claim count times a unit bid uniform in [0.8, 1.2]. Costs equal
    bids. Tasks nobody claimed are dropped from the graph.
    """
    sc = ScenarioConfig(config.area_side, config.block_side, config.task_probabilities)
    graph = synthesize_scenario(skeleton, sc, seed)
    rng = np.random.default_rng([seed, 0xB1D])
    n = skeleton.node_count
    n_r = max(1, min(n, int(round(config.registered_fraction * n))))
    users = tuple(sorted(int(v) for v in rng.choice(n, size=n_r, replace=False)))
    claims = {}
    for v in users:
        while True:
            pick = np.flatnonzero(rng.random(graph.task_count) < 0.5)
            if pick.size:
                break
        claims[v] = frozenset(int(j) for j in pick)
    unit = rng.uniform(0.8, 1.2, size=n_r)
    bids = {v: float(len(claims[v]) * u) for v, u in zip(users, unit)}
    graph, claims = prune_unclaimed_tasks(graph, claims)
    return Scenario(graph, users, claims, bids, dict(bids), seed)


def prune_unclaimed_tasks(graph: TaskGraph, claims: Mapping[int, frozenset[int]]):
    kept = sorted(set().union(*claims.values()))
    if len(kept) == graph.task_count:
        return graph, dict(claims)
    remap = {j: k for k, j in enumerate(kept)}
    g = TaskGraph(graph.skeleton, graph.edge_weights[kept], graph.locations, graph.grid, graph.quality[kept])
    return g, {v: frozenset(remap[j] for j in t) for v, t in claims.items()}


def averaged_graph(graph: TaskGraph) -> TaskGraph:
    """One layer with the task-averaged edge probability and unit quality everywhere."""
    w = graph.edge_weights.mean(axis=0, keepdims=True)
    grid = LocationMap(graph.grid.area_side, graph.grid.block_side)
    return TaskGraph(graph.skeleton, w, graph.locations, grid, np.ones((1, grid.subarea_count)))


def _cell_seed(seed: int, *parts) -> int:
    words = [seed] + [zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def budget_prefix(order: Sequence[int], bids: Mapping[int, float], budget: float) -> int:
    """Length of the longest prefix of ``order`` whose bids fit ``budget``."""
    spent = 0.0
    for k, v in enumerate(order):
        spent += bids[v]
        if spent > budget:
            return k
    return len(order)


def celf_order(
    pool: RealizationPool,
    users: Sequence[int],
    layers: Mapping[int, Iterable[int]],
    ratio_bids: Mapping[int, float],
    bids: Mapping[int, float],
    budget: float,
) -> tuple[list[int], list[float]]:
    """Lazy greedy by gain per ``ratio_bids`` until the real bids overflow ``budget``.

    Returns the selection order and the pool value after each pick. The pool
    objective is submodular, so stale heap keys are valid upper bounds and the
    order equals that of the plain greedy (ties to the lowest id).
    """
    heap = [(-pool.gain(v, layers[v]) / ratio_bids[v], v, 0) for v in users]
    heapq.heapify(heap)
    order, values, spent = [], [], 0.0
    while heap:
        key, v, stamp = heapq.heappop(heap)
        if stamp != len(order):
            heapq.heappush(heap, (-pool.gain(v, layers[v]) / ratio_bids[v], v, len(order)))
            continue
        if not -key > 0 or spent + bids[v] > budget:
            break
        pool.add(v, layers[v])
        spent += bids[v]
        order.append(v)
        values.append(pool.value)
    return order, values


@dataclass
class Selection:
    seeds: list[int]
    f_estimated: float = math.nan
    opimc: OpimcResult | None = None
    ms: float = 0.0


class Baselines:
    """The six selection algorithms bound to one scenario.

    Greedy orders do not depend on the budget (selection stops at the first
    overflow), so the simulation-based ones are computed once up to the
    largest budget and cut per budget.
    """

    def __init__(self, scenario: Scenario, config: ExperimentConfig):
        self.sc = scenario
        self.config = config
        self.max_budget = max(config.budgets)
        self._orders: dict[str, tuple[list[int], list[float], float]] = {}
        self._avg: TaskGraph | None = None

    def run(self, name: str, budget: float) -> Selection:
        if name not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {name!r}")
        t0 = time.perf_counter()
        sel = getattr(self, "_" + name)(budget)
        sel.ms += (time.perf_counter() - t0) * 1e3
        return sel

    @property
    def avg_graph(self) -> TaskGraph:
        if self._avg is None:
            self._avg = averaged_graph(self.sc.graph)
        return self._avg

    def _modified_opimc(self, budget: float) -> Selection:
        sc, cfg = self.sc, self.config
        try:
            K = compute_K(list(sc.bids.values()), budget)
        except InfeasibleBudgetError:
            return Selection([], 0.0)
        res = modified_opimc(sc.graph, sc.users, sc.claims, K, cfg.eps, cfg.delta, _cell_seed(sc.seed, "mopimc", budget))
        cov = budgeted_w_max_coverage(res.collection, sc.users, sc.claims, sc.bids, budget)
        return Selection(cov.seeds, cov.value, res)

    def _opimc(self, budget: float) -> Selection:
        sc, cfg = self.sc, self.config
        try:
            K = compute_K(list(sc.bids.values()), budget)
        except InfeasibleBudgetError:
            return Selection([])
        one = {v: frozenset({0}) for v in sc.users}
        res = modified_opimc(self.avg_graph, sc.users, one, K, cfg.eps, cfg.delta, _cell_seed(sc.seed, "opimc", budget))
        cov = budgeted_w_max_coverage(res.collection, sc.users, one, sc.bids, budget, ratio_bids=sc.ratio_bids())
        return Selection(cov.seeds)

    def _cached_order(self, name: str) -> tuple[list[int], list[float], float]:
        if name not in self._orders:
            t0 = time.perf_counter()
            sc, sims = self.sc, self.config.greedy_sims
            if name == "greedy":
                pool = RealizationPool.for_graph(sc.graph, sims, _cell_seed(sc.seed, name))
                order, values = celf_order(pool, sc.users, sc.claims, sc.bids, sc.bids, self.max_budget)
            else:
                pool = RealizationPool.for_graph(self.avg_graph, sims, _cell_seed(sc.seed, name))
                one = {v: (0,) for v in sc.users}
                order, values = celf_order(pool, sc.users, one, sc.ratio_bids(), sc.bids, self.max_budget)
            self._orders[name] = (order, values, (time.perf_counter() - t0) * 1e3)
        return self._orders[name]

    def _prefix_selection(self, name: str, budget: float, report_value: bool) -> Selection:
        order, values, ms = self._cached_order(name)
        k = budget_prefix(order, self.sc.bids, budget)
        est = (values[k - 1] if k else 0.0) if report_value else math.nan
        return Selection(order[:k], est, ms=ms)

    def _greedy(self, budget: float) -> Selection:
        return self._prefix_selection("greedy", budget, True)

    def _greedy_im(self, budget: float) -> Selection:
        return self._prefix_selection("greedy_im", budget, False)

    def _max_degree(self, budget: float) -> Selection:
        sc = self.sc
        deg = sc.graph.skeleton.out_degree()
        rb = sc.ratio_bids()
        ranked = sorted(sc.users, key=lambda v: (-deg[v] / rb[v], v))
        seeds, spent = [], 0.0
        for v in ranked:
            if spent + sc.bids[v] <= budget:
                seeds.append(v)
                spent += sc.bids[v]
        return Selection(seeds)

    def _random(self, budget: float) -> Selection:
        sc = self.sc
        rng = np.random.default_rng(_cell_seed(sc.seed, "random", budget))
        left = np.array(sc.users)
        b = np.array([sc.bids[v] for v in sc.users])
        seeds, spent = [], 0.0
        while True:
            ok = np.flatnonzero(b <= budget - spent)
            if ok.size == 0:
                break
            k = int(ok[rng.integers(ok.size)])
            seeds.append(int(left[k]))
            spent += b[k]
            left, b = np.delete(left, k), np.delete(b, k)
        return Selection(seeds)


@dataclass
class RunRecord:
    algorithm: str
    budget: float
    seed: int
    f_standard: float
    f_estimated: float
    set_size: int
    ms: float
    overpayment_ratio: float = math.nan

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in RUN_COLUMNS)


@dataclass
class PropertyTally:
    passed: dict[str, int] = field(default_factory=lambda: dict.fromkeys(PROPERTY_CHECKS, 0))
    failed: dict[str, int] = field(default_factory=lambda: dict.fromkeys(PROPERTY_CHECKS, 0))

    def record(self, check: str, ok: bool, count: int = 1) -> None:
        (self.passed if ok else self.failed)[check] += count

    def merge(self, other: "PropertyTally") -> None:
        for k in other.passed:
            self.passed[k] = self.passed.get(k, 0) + other.passed[k]
            self.failed[k] = self.failed.get(k, 0) + other.failed[k]

    @property
    def ok(self) -> bool:
        return not any(self.failed.values())

    def rows(self) -> list[tuple]:
        return [(k, self.passed[k], self.failed[k], "pass" if self.failed[k] == 0 else "FAIL") for k in self.passed]


@dataclass
class CellResult:
    seed: int
    records: list[RunRecord] = field(default_factory=list)
    auction_rows: list[tuple] = field(default_factory=list)
    round_rows: list[tuple] = field(default_factory=list)
    properties: PropertyTally = field(default_factory=PropertyTally)


def estimator_stderr(collection: RrCollection, seeds: Iterable[int], claims) -> float:
    """Standard error of ``f_hat`` from the spread of its per-set summands."""
    x = collection.weights * collection.covered_mask(seeds, claims)
    return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.inf


def check_submodularity(collection, users, claims, triples: int, rng, tally: PropertyTally, tol: float = 1e-12):
    """Random ``A ⊆ B``, ``v ∉ B`` triples on ``f_hat``: monotone and diminishing returns."""
    users = np.asarray(users)
    for _ in range(triples):
        size_b = int(rng.integers(0, min(20, users.size - 1) + 1))
        pick = rng.choice(users.size, size=size_b + 1, replace=False)
        v, b_set = int(users[pick[0]]), [int(u) for u in users[pick[1:]]]
        a_set = [u for u in b_set if rng.random() < 0.5]
        fa, fb = collection.estimate(a_set, claims), collection.estimate(b_set, claims)
        ga = collection.estimate(a_set + [v], claims) - fa
        gb = collection.estimate(b_set + [v], claims) - fb
        tally.record("monotonicity", fb >= fa - tol and ga >= -tol)
        tally.record("submodularity", ga >= gb - tol)


def auction_outcome(scenario: Scenario, collection: RrCollection, budget: float, rule: str, payment_collection=None):
    """Run the auction; payments come from ``payment_collection`` when given."""
    mech = Mechanism(collection, scenario.users, scenario.claims)
    if payment_collection is None:
        return mech.run(scenario.bids, budget, rule)
    pay = Mechanism(payment_collection, scenario.users, scenario.claims)
    return _unchecked_run(mech, pay, scenario, budget, rule)


def _unchecked_run(select: Mechanism, pay: Mechanism, scenario: Scenario, budget: float, rule: str) -> AuctionOutcome:
    winners = select.select_winners(scenario.bids, budget)
    traces: dict[int, PaymentTrace] = {v: pay.payment(v, scenario.bids, budget, rule) for v in winners}
    return AuctionOutcome(winners, {v: traces[v].payment for v in winners}, dict(scenario.bids), traces)


def run_cell(config: ExperimentConfig, skeleton: GraphSkeleton, seed: int) -> CellResult:
    scenario = make_scenario(skeleton, config, seed)
    base = Baselines(scenario, config)
    out = CellResult(seed)
    eval_seed = _cell_seed(seed, "standard")
    prop_rng = np.random.default_rng(_cell_seed(seed, "properties"))
    algorithms = list(config.algorithms)
    need_mopimc = config.auction and "modified_opimc" not in algorithms
    for budget in config.budgets:
        mopimc = None
        for name in algorithms + (["modified_opimc"] if need_mopimc else []):
            sel = base.run(name, budget)
            spent = sum(scenario.bids[v] for v in sel.seeds)
            out.properties.record("budget_feasibility", spent <= budget * (1 + 1e-12))
            if name == "modified_opimc":
                mopimc = sel
            if name not in algorithms:
                continue
            std = mc_estimate(scenario.graph, sel.seeds, scenario.claims, config.mc_sims, eval_seed) if sel.seeds else None
            f_std = std.mean if std else 0.0
            out.records.append(RunRecord(name, budget, seed, f_std, sel.f_estimated, len(sel.seeds), sel.ms))
            if name == "modified_opimc" and sel.opimc is not None and sel.seeds:
                check = sel.opimc.check
                z_den = math.hypot(std.stderr, estimator_stderr(check, sel.seeds, scenario.claims))
                f_check = check.estimate(sel.seeds, scenario.claims)
                out.properties.record("unbiasedness", abs(f_check - f_std) <= 4 * z_den)
        if mopimc is None or mopimc.opimc is None:
            continue
        res = mopimc.opimc
        for r in res.rounds:
            out.round_rows.append((seed, budget, r.round, r.theta, r.f_hat, r.f_low, r.f_up, r.ratio, r.ms))
        check_submodularity(res.collection, scenario.users, scenario.claims, config.property_triples, prop_rng, out.properties)
        if config.auction:
            pay_coll = None
            if config.fresh_payment_collection:
                pay_coll = generate_collection(scenario.graph, res.collection.theta, _cell_seed(seed, "payments", budget))
            outcome = auction_outcome(scenario, res.collection, budget, config.payment_rule, pay_coll)
            out.properties.record("budget_feasibility", outcome.total_bid <= budget * (1 + 1e-12))
            for v in outcome.winners:
                out.properties.record("individual_rationality", outcome.payments[v] >= scenario.bids[v] * (1 - 1e-12))
            for v in scenario.users:
                won = v in outcome.payments
                p = outcome.payments.get(v, 0.0)
                crit = outcome.traces[v].critical_max if won else math.nan
                out.auction_rows.append(
                    (seed, budget, v, int(won), scenario.bids[v], p, outcome.utility(v, scenario.costs[v]), crit)
                )
            for rec in out.records:
                if rec.algorithm == "modified_opimc" and rec.budget == budget:
                    rec.overpayment_ratio = outcome.overpayment_ratio
    return out


def estimation_gap_report(records: Iterable[RunRecord]) -> list[tuple]:
    """Per Modified-OPIM-C record: estimate, standard value, and their gap."""
    rows = []
    for r in records:
        if r.algorithm != "modified_opimc":
            continue
        gap = r.f_estimated - r.f_standard
        rel = gap / r.f_standard if r.f_standard > 0 else math.nan
        rows.append((r.seed, r.budget, r.f_estimated, r.f_standard, gap, rel))
    return rows


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


@dataclass
class SuiteResult:
    out_dir: Path
    records: list[RunRecord]
    properties: PropertyTally

    @property
    def ok(self) -> bool:
        return self.properties.ok


def _cell_task(args):
    return run_cell(*args)


def run_suite(config: ExperimentConfig, out_dir: str | os.PathLike, threads: int = 1) -> SuiteResult:
    """Run every (seed, budget, algorithm) cell and write the CSVs to ``out_dir``."""
    skeleton = load_skeleton(config)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    jobs = [(config, skeleton, s) for s in config.scenario_seeds()]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            cells = list(ex.map(_cell_task, jobs))
    else:
        cells = [_cell_task(j) for j in jobs]
    records = [r for c in cells for r in c.records]
    props = PropertyTally()
    for c in cells:
        props.merge(c.properties)
    write_csv(out / "run_records.csv", RUN_COLUMNS, (r.row() for r in records))
    write_csv(out / "auction_outcomes.csv", AUCTION_COLUMNS, (row for c in cells for row in c.auction_rows))
    write_csv(out / "opimc_rounds.csv", ROUND_COLUMNS, (row for c in cells for row in c.round_rows))
    write_csv(out / "estimation_gap.csv", GAP_COLUMNS, estimation_gap_report(records))
    write_csv(out / "properties_report.csv", PROPERTY_COLUMNS, props.rows())
    try:
        (out / "summary.txt").write_text(summarize(records, props))
    except OSError as exc:
        raise OSError(f"cannot write {out / 'summary.txt'}: {exc.strerror or exc}") from exc
    return SuiteResult(out, records, props)


def mean_table(records: Iterable[RunRecord]) -> dict[str, dict[float, float]]:
    acc: dict[str, dict[float, list[float]]] = {}
    for r in records:
        acc.setdefault(r.algorithm, {}).setdefault(r.budget, []).append(r.f_standard)
    return {a: {d: float(np.mean(v)) for d, v in sorted(by.items())} for a, by in acc.items()}


def summarize(records: Sequence[RunRecord], props: PropertyTally) -> str:
    table = mean_table(records)
    budgets = sorted({r.budget for r in records})
    lines = ["mean standard value by algorithm and budget", ""]
    lines.append("algorithm".ljust(16) + "".join(f"{d:>10g}" for d in budgets))
    for a, by in table.items():
        lines.append(a.ljust(16) + "".join(f"{by.get(d, math.nan):>10.3f}" for d in budgets))
    ors = [r.overpayment_ratio for r in records if not math.isnan(r.overpayment_ratio)]
    if ors:
        lines += ["", f"mean overpayment ratio: {np.mean(ors):.4f}"]
    lines += ["", "property checks"]
    for check, p, f, status in props.rows():
        lines.append(f"  {check:<24}{p:>8} passed{f:>6} failed  {status}")
    return "\n".join(lines) + "\n"


def read_run_records(path: str | os.PathLike) -> list[RunRecord]:
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise ConfigError(f"run records not found: {path}") from None
    with fh:
        rows = list(csv.DictReader(fh))
    return [
        RunRecord(
            r["algorithm"],
            float(r["budget"]),
            int(r["seed"]),
            float(r["f_standard"]),
            float(r["f_estimated"]),
            int(r["set_size"]),
            float(r["ms"]),
            float(r.get("overpayment_ratio", "nan")),
        )
        for r in rows
    ]
