"""``mtcrowd`` command line: ingest, synth, run, auction, verify, report."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .auction import Mechanism, critical_bid_search, truthfulness_probe
from .diffusion import exact_f, mc_estimate
from .experiments import (
    AUCTION_COLUMNS,
    PROPERTY_COLUMNS,
    ExperimentConfig,
    PropertyTally,
    auction_outcome,
    check_submodularity,
    estimator_stderr,
    load_skeleton,
    make_scenario,
    mean_table,
    read_run_records,
    run_suite,
    write_csv,
)
from .graph import ConfigError, GraphParseError, GraphSkeleton, LocationMap, TaskGraph, load_edge_list, remap_edge_list, synthetic_graph, write_id_map
from .opimc import InfeasibleBudgetError, compute_K, modified_opimc
from .sampling import generate_collection


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_yaml(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(master_seed=args.seed)
    return cfg


def _write_edges(sk: GraphSkeleton, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# nodes {sk.node_count} edges {sk.edge_count}\n")
        for u, v in zip(sk.src.tolist(), sk.dst.tolist()):
            fh.write(f"{u} {v}\n")


def cmd_ingest(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(args.input) as fh:
        if args.remap:
            lines, id_map = remap_edge_list(fh)
            with open(out / "id_map.tsv", "w") as m:
                write_id_map(id_map, m)
            sk = load_edge_list(lines)
        else:
            sk = load_edge_list(fh)
    _write_edges(sk, out / "graph.txt")
    deg = sk.out_degree()
    print(f"nodes {sk.node_count}  edges {sk.edge_count}  max out-degree {int(deg.max()) if deg.size else 0}")
    print(f"wrote {out / 'graph.txt'}")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = 0 if args.seed is None else args.seed
    sk = synthetic_graph(args.nodes, args.mean_out_degree, args.tail, seed)
    _write_edges(sk, out / "graph.txt")
    print(f"nodes {sk.node_count}  edges {sk.edge_count}  max out-degree {int(sk.out_degree().max())}")
    print(f"wrote {out / 'graph.txt'}")
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    res = run_suite(cfg, args.out, args.threads)
    print((res.out_dir / "summary.txt").read_text(), end="")
    return 0 if res.ok else 1


def cmd_auction(args) -> int:
    cfg = _config(args)
    sc = make_scenario(load_skeleton(cfg), cfg, cfg.scenario_seeds()[0])
    try:
        K = compute_K(list(sc.bids.values()), args.budget)
    except InfeasibleBudgetError as exc:
        print(f"no winner: {exc}")
        return 0
    res = modified_opimc(sc.graph, sc.users, sc.claims, K, cfg.eps, cfg.delta, sc.seed)
    outcome = auction_outcome(sc, res.collection, args.budget, cfg.payment_rule)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for v in sc.users:
        won = v in outcome.payments
        crit = outcome.traces[v].critical_max if won else math.nan
        rows.append((sc.seed, args.budget, v, int(won), sc.bids[v], outcome.payments.get(v, 0.0), outcome.utility(v, sc.costs[v]), crit))
    write_csv(out / "auction_outcomes.csv", AUCTION_COLUMNS, rows)
    print(f"{len(sc.users)} registered users, {res.collection.theta} MT-RR sets, {len(outcome.winners)} winners")
    print(f"{'user':>8}{'bid':>10}{'payment':>10}")
    for v in outcome.winners:
        print(f"{v:>8}{sc.bids[v]:>10.4f}{outcome.payments[v]:>10.4f}")
    print(f"total bid {outcome.total_bid:.4f}  total payment {outcome.total_payment:.4f}  OR {outcome.overpayment_ratio:.4f}")
    return 0


def tiny_instance(seed: int, n: int = 7, m: int = 9, tasks: int = 2):
    """A random graph small enough for exhaustive enumeration, plus claims and bids."""
    rng = np.random.default_rng([seed, 0x71])
    src = rng.integers(0, n, size=m)
    dst = (src + 1 + rng.integers(0, n - 1, size=m)) % n
    sk = GraphSkeleton(n, src, dst)
    w = rng.choice([0.0, 0.3, 0.5, 1.0], size=(tasks, m))
    grid = LocationMap(float(n), 1.0)
    loc = np.column_stack([np.arange(n) + 0.5, np.full(n, 0.5)])
    quality = rng.uniform(0.1, 1.0, size=(tasks, grid.subarea_count))
    graph = TaskGraph(sk, w, loc, grid, quality)
    claims = {}
    for v in range(n):
        t = frozenset(int(j) for j in np.flatnonzero(rng.random(tasks) < 0.5))
        claims[v] = t or frozenset({int(rng.integers(tasks))})
    bids = {v: float(len(claims[v]) * rng.uniform(0.8, 1.2)) for v in range(n)}
    return graph, claims, bids


def verify_properties(instances: int = 20, seed: int = 0) -> PropertyTally:
    """Oracle-backed checks on tiny instances.

    Estimators are compared with exact enumeration and payments with the
    bisection critical bid, and a bid sweep checks truthfulness.
    """
    tally = PropertyTally()
    for check in ("exact_vs_mc", "payment_criticality", "truthfulness"):
        tally.passed.setdefault(check, 0)
        tally.failed.setdefault(check, 0)
    for i in range(instances):
        graph, claims, bids = tiny_instance(seed * 100003 + i)
        users = list(range(graph.node_count))
        rng = np.random.default_rng([seed, i])
        s = sorted(rng.choice(users, size=3, replace=False).tolist())
        exact = exact_f(graph, s, claims)
        mc = mc_estimate(graph, s, claims, 2000, i)
        tally.record("exact_vs_mc", abs(mc.mean - exact) <= 4 * mc.stderr + 1e-12)
        coll = generate_collection(graph, 20000, i)
        se = estimator_stderr(coll, s, claims)
        tally.record("unbiasedness", abs(coll.estimate(s, claims) - exact) <= 4 * se + 1e-12)
        check_submodularity(coll, users, claims, 50, rng, tally)
        budget = 0.4 * sum(bids.values())
        mech = Mechanism(coll, users, claims)
        out = mech.run(bids, budget)
        tally.record("budget_feasibility", out.total_bid <= budget)
        for v in out.winners:
            p = out.payments[v]
            tally.record("individual_rationality", p >= bids[v])
            tally.record("payment_criticality", abs(p - critical_bid_search(mech, v, bids, budget, 1e-8)) <= 1e-6)
            grid = np.linspace(0.01, 2.0 * p, 41)
            truthful = p - bids[v]
            curve = truthfulness_probe(mech, v, grid, bids, budget, bids[v])
            tally.record("truthfulness", all(pt.utility <= truthful + 1e-9 for pt in curve))
    return tally


def cmd_verify(args) -> int:
    seed = 0 if args.seed is None else args.seed
    tally = verify_properties(args.instances, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "properties_report.csv", PROPERTY_COLUMNS, tally.rows())
    for check, p, f, status in tally.rows():
        print(f"{check:<24}{p:>8} passed{f:>6} failed  {status}")
    return 0 if tally.ok else 1


def cmd_report(args) -> int:
    records = read_run_records(Path(args.out) / "run_records.csv")
    table = mean_table(records)
    budgets = sorted({r.budget for r in records})
    rows = [(a, d, v) for a, by in table.items() for d, v in by.items()]
    write_csv(Path(args.out) / "summary.csv", ("algorithm", "budget", "mean_f_standard"), rows)
    print("algorithm".ljust(16) + "".join(f"{d:>10g}" for d in budgets))
    for a, by in table.items():
        print(a.ljust(16) + "".join(f"{by.get(d, math.nan):>10.3f}" for d in budgets))
    gaps = [(r.budget, r.f_estimated - r.f_standard) for r in records if r.algorithm == "modified_opimc"]
    if gaps:
        print("\nestimation gap (f_hat - f_standard), mean per budget")
        for d in budgets:
            g = [x for b, x in gaps if b == d]
            if g:
                print(f"{d:>10g}{np.mean(g):>12.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker processes for independent cells")

    p = argparse.ArgumentParser(prog="mtcrowd", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="normalize an edge list")
    s.add_argument("input")
    s.add_argument("--remap", action="store_true", help="map arbitrary node labels to 0..n-1")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic retweet-like graph")
    s.add_argument("--nodes", type=int, default=5000)
    s.add_argument("--mean-out-degree", type=float, default=1.5)
    s.add_argument("--tail", type=float, default=2.5)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("run", parents=[common], help="run the experiment suite and write CSVs")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("auction", parents=[common], help="run one auction on the first scenario")
    s.add_argument("--budget", type=float, default=50.0)
    s.set_defaults(func=cmd_auction)

    s = sub.add_parser("verify", parents=[common], help="oracle checks on tiny instances")
    s.add_argument("--instances", type=int, default=20)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("report", parents=[common], help="summarize run_records.csv in --out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GraphParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
