import io

import numpy as np
import pytest
from conftest import DESK_CLAIMS, desk_graph, graph_with_node_quality, path_graph, random_tiny_instance
from oracles import brute_estimate
from scipy import stats

from mtcrowd.diffusion import exact_f, forward_reachable
from mtcrowd.sampling import (
    AliasTable,
    CoverageState,
    MtRrSampler,
    MtRrSet,
    RrCollection,
    ZeroObjectiveError,
    generate_collection,
    marginal_gain,
    sample_mtrr,
)


def test_single_node():
    g = graph_with_node_quality([], np.zeros((1, 0)), [[0.4]])
    s = sample_mtrr(g, np.random.default_rng(0))
    assert s.task == 0 and s.root == 0 and s.nodes.tolist() == [0]


def test_deterministic_layer_is_reverse_reachability():
    g = desk_graph()
    ones = graph_with_node_quality(
        [tuple(map(int, e)) for e in zip(g.skeleton.src, g.skeleton.dst)], np.ones((2, 7)), g.node_quality
    )
    rng = np.random.default_rng(2)
    sampler = MtRrSampler(ones)
    for _ in range(50):
        s = sampler.sample(rng)
        expected = {u for u in range(6) if s.root in forward_reachable(ones.skeleton, {u})}
        assert set(s.nodes.tolist()) == expected
        assert s.root in s.nodes


def test_single_edge_membership_law():
    # edge a->b, w = 1/2, q = 1: Pr[root = b and a in set] = 1/2 * 1/2
    g = graph_with_node_quality([(0, 1)], [[0.5]], [[1.0, 1.0]])
    sampler = MtRrSampler(g)
    hits = 0
    n = 40000
    for i in range(n):
        s = sampler.sample(np.random.default_rng([9, i]))
        hits += s.root == 1 and 0 in s.nodes
    assert abs(hits / n - 0.25) < 4 * np.sqrt(0.25 * 0.75 / n)


def test_root_distribution_chi_square():
    g = desk_graph()
    sampler = MtRrSampler(g)
    rng = np.random.default_rng(3)
    counts = np.zeros((2, 6))
    for _ in range(100000):
        s = sampler.sample(rng)
        counts[s.task, s.root] += 1
    for j in range(2):
        expected = g.node_quality[j] / g.task_quality_mass(j) * counts[j].sum()
        assert stats.chisquare(counts[j], expected).pvalue > 0.01
    # tasks are uniform
    assert stats.chisquare(counts.sum(axis=1)).pvalue > 0.01


def test_alias_table_exact_probabilities():
    w = np.array([0.1, 0.0, 2.0, 0.7, 0.2])
    t = AliasTable(w)
    n = w.size
    mass = np.zeros(n)
    for i in range(n):
        mass[i] += t.prob[i] / n
        mass[t.alias[i]] += (1 - t.prob[i]) / n
    np.testing.assert_allclose(mass, w / w.sum(), atol=1e-12)


def test_zero_mass_tasks():
    g = graph_with_node_quality([(0, 1)], [[0.5], [0.5]], [[0.0, 0.0], [1.0, 0.5]])
    rng = np.random.default_rng(0)
    assert all(sample_mtrr(g, rng).task == 1 for _ in range(50))
    dead = graph_with_node_quality([(0, 1)], [[0.5]], [[0.0, 0.0]])
    with pytest.raises(ZeroObjectiveError):
        sample_mtrr(dead, rng)


def test_estimate_examples():
    g = path_graph()
    one = RrCollection.from_sets([MtRrSet(0, 0, np.array([0]))], 1, [2.0])
    assert one.estimate([0], {0: {0}}) == 2.0
    assert one.estimate([], {0: {0}}) == 0.0
    with pytest.raises(ValueError):
        RrCollection.for_graph(g).estimate([0], {0: {0}})


def test_unbiased_on_path():
    g = path_graph()
    coll = generate_collection(g, 200000, 11)
    assert coll.estimate([0], {0: {0}}) == pytest.approx(1.75, rel=0.01)


def test_estimate_matches_brute_definition():
    g = desk_graph()
    coll = generate_collection(g, 500, 1)
    rng = np.random.default_rng(0)
    for _ in range(30):
        seeds = set(rng.choice(6, size=int(rng.integers(0, 6)), replace=False).tolist())
        assert coll.estimate(seeds, DESK_CLAIMS) == pytest.approx(brute_estimate(coll, seeds, DESK_CLAIMS), abs=1e-12)


def test_inverted_index():
    coll = generate_collection(desk_graph(), 300, 2)
    for v in range(6):
        expected = [x for x in range(coll.theta) if v in coll.set_nodes(x)]
        assert coll.sets_containing(v).tolist() == expected
    np.testing.assert_array_equal(coll.weights, coll.scale[coll.tasks])


def test_marginal_gain_matches_recomputation():
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 1000:
        g, claims = random_tiny_instance(rng, n=9, m=12)
        coll = generate_collection(g, 200, int(rng.integers(1 << 30)))
        users = sorted(rng.choice(9, size=6, replace=False).tolist())
        state = CoverageState(coll, users, claims)
        chosen = []
        for k in rng.permutation(6)[: int(rng.integers(0, 5))]:
            state.add(int(k))
            chosen.append(users[k])
        base = coll.estimate(chosen, claims)
        assert state.value == pytest.approx(base, abs=1e-12)
        for v in users:
            direct = coll.estimate(chosen + [v], claims) - base
            assert marginal_gain(v, state) == pytest.approx(direct, abs=1e-12)
            checked += 1


def test_gain_zero_and_full_coverage():
    sets = [MtRrSet(0, 0, np.array([0, 1])), MtRrSet(0, 1, np.array([1]))]
    coll = RrCollection.from_sets(sets, 1, [3.0])
    state = CoverageState(coll, [0, 1, 2], {0: {0}, 1: {0}, 2: {0}})
    assert marginal_gain(2, state) == 0
    assert marginal_gain(1, state) == coll.estimate([1], {1: {0}}) == 3.0


def test_extend_determinism():
    g = desk_graph()
    a = generate_collection(g, 40, 5)
    b = RrCollection.for_graph(g, 5).extend(17, g).extend(40, g)
    assert a == b
    same = generate_collection(g, 40, 5)
    assert same.extend(40, g) == a
    assert generate_collection(g, 40, 6) != a
    with pytest.raises(ValueError):
        a.extend(10, g)


def test_dump_load_roundtrip():
    coll = generate_collection(desk_graph(), 100, 8)
    buf = io.BytesIO()
    coll.dump(buf)
    buf.seek(0)
    back = RrCollection.load(buf)
    assert back == coll
    assert back.estimate([0, 2], DESK_CLAIMS) == coll.estimate([0, 2], DESK_CLAIMS)


def test_estimate_monotone_submodular():
    rng = np.random.default_rng(6)
    g, claims = random_tiny_instance(rng, n=8, m=12)
    coll = generate_collection(g, 300, 3)
    bad = 0
    for _ in range(500):
        perm = rng.permutation(8).tolist()
        a, b = sorted(rng.integers(0, 7, size=2))
        s, t, v = perm[:a], perm[:b], perm[7]
        fs, ft = coll.estimate(s, claims), coll.estimate(t, claims)
        bad += fs > ft + 1e-12
        bad += coll.estimate(s + [v], claims) - fs < coll.estimate(t + [v], claims) - ft - 1e-12
    assert bad == 0


def test_unbiased_on_desk_instance():
    g = desk_graph()
    coll = generate_collection(g, 100000, 21)
    for seeds in ([0, 3], [1, 2, 4]):
        assert coll.estimate(seeds, DESK_CLAIMS) == pytest.approx(exact_f(g, seeds, DESK_CLAIMS), rel=0.02)
