"""Three estimates of the multi-task spread on a graph small enough to enumerate.

Exact enumeration over live-edge worlds, Monte-Carlo cascades and the MT-RR
coverage estimator should agree within their standard errors.
"""

from mtcrowd.cli import tiny_instance
from mtcrowd.diffusion import exact_f, mc_estimate
from mtcrowd.experiments import estimator_stderr
from mtcrowd.sampling import generate_collection

graph, claims, bids = tiny_instance(seed=3)
print(f"{graph.node_count} nodes, {graph.skeleton.edge_count} edges, {graph.task_count} tasks")
for v in range(graph.node_count):
    print(f"  user {v}: tasks {sorted(claims[v])}, bid {bids[v]:.3f}")

coll = generate_collection(graph, 50000, seed=1)
print(f"\n{'seed set':<14}{'exact':>10}{'MC':>10}{'+-':>8}{'RR':>10}{'+-':>8}")
for s in ([0], [1, 4], [0, 2, 5], [0, 1, 3, 6]):
    exact = exact_f(graph, s, claims)
    mc = mc_estimate(graph, s, claims, 2000, rng_seed=7)
    rr = coll.estimate(s, claims)
    print(f"{str(s):<14}{exact:>10.4f}{mc.mean:>10.4f}{mc.stderr:>8.4f}{rr:>10.4f}{estimator_stderr(coll, s, claims):>8.4f}")

# diminishing returns of the coverage estimate
v = 6
for a in ([], [0], [0, 1, 2]):
    print(f"gain of user {v} on top of {a}: {coll.estimate(a + [v], claims) - coll.estimate(a, claims):.4f}")
