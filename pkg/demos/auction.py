"""One reverse auction on a synthetic scenario, then a bid sweep for one winner.

The winner's utility is flat up to its payment and zero beyond it, so no
misreport beats the truthful bid.
"""

import numpy as np

from mtcrowd.auction import Mechanism, critical_bid_search, truthfulness_probe
from mtcrowd.experiments import ExperimentConfig, auction_outcome, load_skeleton, make_scenario
from mtcrowd.opimc import compute_K, modified_opimc

cfg = ExperimentConfig(synthetic_nodes=2000, tasks=2)
sc = make_scenario(load_skeleton(cfg), cfg, cfg.scenario_seeds()[0])
budget = 20.0
K = compute_K(list(sc.bids.values()), budget)
res = modified_opimc(sc.graph, sc.users, sc.claims, K, cfg.eps, cfg.delta, sc.seed)
print(f"{len(sc.users)} registered users, K = {K}, {res.collection.theta} MT-RR sets")

out = auction_outcome(sc, res.collection, budget, "critical")
mech = Mechanism(res.collection, sc.users, sc.claims)
print(f"\n{'user':>6}{'bid':>9}{'payment':>9}{'bisection':>11}")
for v in out.winners:
    crit = critical_bid_search(mech, v, sc.bids, budget, 1e-9)
    print(f"{v:>6}{sc.bids[v]:>9.4f}{out.payments[v]:>9.4f}{crit:>11.4f}")
print(f"total bid {out.total_bid:.3f}, total payment {out.total_payment:.3f}, OR {out.overpayment_ratio:.3f}")

v = out.winners[0]
cost = sc.costs[v]
grid = np.linspace(0.05, 1.5 * out.payments[v], 12)
print(f"\nutility of user {v} (cost {cost:.3f}) against its bid")
for pt in truthfulness_probe(mech, v, grid, sc.bids, budget, cost):
    print(f"  bid {pt.bid:7.3f}  {'win ' if pt.won else 'lose'}  utility {pt.utility:7.3f}")
