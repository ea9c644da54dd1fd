from itertools import combinations, permutations

import numpy as np
import pytest

from synthetic_trees import all_labeled_trees, random_tree

from csprobe.structprobe import DepTree
from csprobe.treedist import (
    GedBudgetExceededError,
    GedCapExceededError,
    GedCostModel,
    UNIT_COSTS,
    ged,
    ged_compare,
)


def brute_force_ged(a: DepTree, b: DepTree, costs: GedCostModel = UNIT_COSTS) -> float:
    """Enumerate every partial injective node mapping and complete it with
    insertions and deletions. Independent of the search implementation."""
    ea, eb = sorted(a.edges), sorted(b.edges)
    best = None
    for k in range(min(a.n, b.n) + 1):
        for asub in combinations(range(a.n), k):
            for bimg in permutations(range(b.n), k):
                f = dict(zip(asub, bimg))
                matched = sum(
                    1
                    for u, v in ea
                    if u in f and v in f and (min(f[u], f[v]), max(f[u], f[v])) in b.edges
                )
                cost = (
                    (a.n - k) * costs.node_delete
                    + (b.n - k) * costs.node_insert
                    + (len(ea) - matched) * costs.edge_delete
                    + (len(eb) - matched) * costs.edge_insert
                )
                if best is None or cost < best:
                    best = cost
    return best


def nonisomorphic_trees_up_to(n_max: int):
    nx = pytest.importorskip("networkx")
    trees = []
    for n in range(1, n_max + 1):
        if n <= 2:
            trees.append(DepTree.from_edges(n, [(0, 1)] if n == 2 else []))
            continue
        for g in nx.nonisomorphic_trees(n):
            trees.append(DepTree.from_edges(n, list(g.edges())))
    return trees


def test_identical_trees_zero():
    rng = np.random.default_rng(0)
    for _ in range(10):
        t = random_tree(int(rng.integers(1, 8)), rng)
        assert ged(t, t) == 0.0


def test_three_node_chain_and_star_are_isomorphic():
    # every 3-node tree is a path, so with unlabeled nodes the distance is 0:
    # mapping 0->1, 1->0, 2->2 carries both chain edges onto star edges
    chain3 = DepTree.from_edges(3, [(0, 1), (1, 2)])
    star3 = DepTree.from_edges(3, [(0, 1), (0, 2)])
    assert brute_force_ged(chain3, star3) == 0.0
    assert ged(chain3, star3) == 0.0


def test_chain_vs_star_four_nodes_hand_case():
    # P4 vs K1,3: map the star center onto a middle path node; two edges
    # match, one chain edge is deleted and one star edge inserted -> 2.0
    chain4 = DepTree.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    star4 = DepTree.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    assert brute_force_ged(chain4, star4) == 2.0
    assert ged(chain4, star4) == 2.0


def test_all_pairs_up_to_five_nodes_match_oracle():
    trees = nonisomorphic_trees_up_to(5)
    for a in trees:
        for b in trees:
            assert ged(a, b) == brute_force_ged(a, b), (a, b)


def test_symmetry_for_symmetric_costs():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = random_tree(int(rng.integers(1, 7)), rng)
        b = random_tree(int(rng.integers(1, 7)), rng)
        assert ged(a, b) == ged(b, a)


def test_asymmetric_costs_match_oracle():
    costs = GedCostModel(node_insert=0.7, node_delete=1.3, edge_insert=0.4, edge_delete=2.1)
    rng = np.random.default_rng(2)
    for _ in range(15):
        a = random_tree(int(rng.integers(1, 6)), rng)
        b = random_tree(int(rng.integers(1, 6)), rng)
        assert ged(a, b, costs) == pytest.approx(brute_force_ged(a, b, costs))


def test_size_difference_lower_bound():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = random_tree(int(rng.integers(1, 7)), rng)
        b = random_tree(int(rng.integers(1, 7)), rng)
        d = ged(a, b)
        assert d >= abs(a.n - b.n) * min(UNIT_COSTS.node_insert, UNIT_COSTS.node_delete) - 1e-12


def test_triangle_inequality_on_random_triples():
    rng = np.random.default_rng(4)
    for _ in range(15):
        trees = [random_tree(int(rng.integers(1, 6)), rng) for _ in range(3)]
        dab = brute_force_ged(trees[0], trees[1])
        dbc = brute_force_ged(trees[1], trees[2])
        dac = brute_force_ged(trees[0], trees[2])
        assert ged(trees[0], trees[2]) == dac
        assert dac <= dab + dbc + 1e-12


def test_cost_scale_equivariance():
    rng = np.random.default_rng(5)
    doubled = GedCostModel(2.0, 2.0, 2.0, 2.0)
    for _ in range(15):
        a = random_tree(int(rng.integers(1, 7)), rng)
        b = random_tree(int(rng.integers(1, 7)), rng)
        assert ged(a, b, doubled) == pytest.approx(2.0 * ged(a, b))


def test_node_cap_refusal():
    big = DepTree.from_edges(11, [(i, i + 1) for i in range(10)])
    small = DepTree.from_edges(2, [(0, 1)])
    with pytest.raises(GedCapExceededError):
        ged(big, small)
    assert ged(big, small, node_cap=11) >= 9.0


def test_budget_exhaustion_is_loud():
    a = DepTree.from_edges(8, [(i, i + 1) for i in range(7)])
    b = DepTree.from_edges(8, [(0, i) for i in range(1, 8)])
    with pytest.raises(GedBudgetExceededError):
        ged(a, b, budget=3)


def test_negative_costs_rejected():
    with pytest.raises(ValueError):
        GedCostModel(node_insert=-1.0)


def make_parses(rng, n_records=8, n_max=6):
    cs, es, en = {}, {}, {}
    for i in range(n_records):
        rid = f"r{i}"
        cs[rid] = random_tree(int(rng.integers(2, n_max + 1)), rng)
        es[rid] = random_tree(int(rng.integers(2, n_max + 1)), rng)
        en[rid] = random_tree(int(rng.integers(2, n_max + 1)), rng)
    return cs, es, en


def test_ged_compare_identical_translations():
    rng = np.random.default_rng(6)
    cs, es, _ = make_parses(rng)
    result = ged_compare(cs, es, es)
    # es and en parses identical -> the two distance vectors coincide
    assert result.spearman == 1.0
    assert result.retained == len(cs)
    assert result.excluded == 0
    for row in result.rows:
        assert row.ged_cs_es == row.ged_cs_en


def test_ged_compare_cap_filtering_and_csv():
    rng = np.random.default_rng(7)
    cs, es, en = make_parses(rng, n_records=6)
    cs["r0"] = DepTree.from_edges(12, [(i, i + 1) for i in range(11)])
    result = ged_compare(cs, es, en, node_cap=10)
    assert result.excluded == 1
    assert result.retained == 5
    csv_text = result.to_csv()
    lines = csv_text.strip().split("\n")
    assert lines[0] == "id,n_cs,n_es,n_en,ged_cs_es,ged_cs_en"
    assert len(lines) == 6
    summary = result.summary()
    assert set(summary) == {"retained", "excluded", "spearman"}


def test_ged_compare_requires_overlap():
    t = DepTree.from_edges(2, [(0, 1)])
    with pytest.raises(ValueError):
        ged_compare({"a": t}, {"b": t}, {"c": t})


def test_ged_compare_values_match_direct_calls():
    rng = np.random.default_rng(8)
    cs, es, en = make_parses(rng, n_records=5, n_max=5)
    result = ged_compare(cs, es, en)
    for row in result.rows:
        assert row.ged_cs_es == ged(cs[row.id], es[row.id])
        assert row.ged_cs_en == ged(cs[row.id], en[row.id])


def test_ged_compare_parallel_matches_serial():
    rng = np.random.default_rng(9)
    cs, es, en = make_parses(rng, n_records=6, n_max=5)
    serial = ged_compare(cs, es, en, jobs=1)
    parallel = ged_compare(cs, es, en, jobs=2)
    assert serial == parallel


def test_ged_matches_networkx_on_small_pairs():
    nx = pytest.importorskip("networkx")
    rng = np.random.default_rng(10)
    for _ in range(6):
        a = random_tree(int(rng.integers(2, 5)), rng)
        b = random_tree(int(rng.integers(2, 5)), rng)
        ga = nx.Graph(list(a.edges))
        ga.add_nodes_from(range(a.n))
        gb = nx.Graph(list(b.edges))
        gb.add_nodes_from(range(b.n))
        reference = nx.graph_edit_distance(ga, gb)
        assert ged(a, b) == pytest.approx(reference)
