import itertools
from collections import Counter

import pytest

from junction_smc.graph import Graph, enumerate_decomposable
from junction_smc.junction_tree import (
    JunctionTree,
    SeparatorForest,
    diagnose,
    junction_tree_of,
    mu,
    mu_factors,
    mu_update,
    nu,
    random_forest_join,
    randomize_at_separator,
    separator_forest,
    underlying_graph,
    validate,
)
from junction_smc.kernels import ExpanderParams, expand
from junction_smc.oracles import junction_trees_of, labelled_trees, mu_bruteforce, tree_space
from junction_smc.rng import Stream, enumerate_draws, outcome_distribution


def jt(nodes, links=()):
    return JunctionTree.from_links(nodes, links)


STAR = jt([[1, 2], [1, 3], [1, 4]], [(0, 1), (1, 2)])
EMPTY3 = jt([[1], [2], [3]], [(0, 1), (1, 2)])
PATH3 = jt([[1, 2], [2, 3]], [(0, 1)])


class TestConstruction:
    def test_duplicate_nodes(self):
        with pytest.raises(ValueError):
            jt([[1, 2], [2, 1]])

    def test_self_link(self):
        with pytest.raises(ValueError):
            jt([[1, 2], [2, 3]], [(0, 0)])

    def test_equality_ignores_link_order(self):
        a = jt([[1, 2], [2, 3], [3, 4]], [(0, 1), (1, 2)])
        b = jt([[3, 4], [1, 2], [2, 3]], [(2, 0), (1, 2)])
        assert a == b and hash(a) == hash(b)

    def test_separators_with_multiplicity(self):
        assert Counter(STAR.separators()) == {frozenset({1}): 2}
        assert STAR.distinct_separators() == {frozenset({1})}


class TestValidate:
    def test_valid_path(self):
        assert validate(PATH3)

    def test_broken_running_intersection_has_witness(self):
        bad = jt([[1, 2], [3, 4], [1, 4]], [(0, 1), (1, 2)])
        reason = diagnose(bad)
        assert reason is not None and "vertex 1" in reason
        assert "[1, 2] - [3, 4] - [1, 4]" in reason

    def test_not_a_tree(self):
        assert not validate(jt([[1, 2], [2, 3], [3, 4]], [(0, 1)]))
        cyc = jt([[1, 2], [2, 3], [2, 4]], [(0, 1), (1, 2), (0, 2)])
        assert not validate(cyc)

    def test_nested_nodes(self):
        assert not validate(jt([[1, 2], [2]], [(0, 1)]))

    def test_all_junction_trees_of_small_graphs_valid(self):
        for t in tree_space(4):
            assert validate(t)


class TestUnderlyingGraph:
    def test_examples(self):
        assert underlying_graph(jt([[1, 2, 3]])) == Graph.complete(3)
        assert underlying_graph(jt([[1], [2]], [(0, 1)])) == Graph.empty(2)
        assert underlying_graph(PATH3) == Graph.from_edges(3, [(1, 2), (2, 3)])

    def test_invalid_raises(self):
        with pytest.raises(ValueError):
            underlying_graph(jt([[1, 2], [3, 4], [1, 4]], [(0, 1), (1, 2)]))


class TestJunctionTreeOf:
    def test_examples(self):
        assert junction_tree_of(Graph.complete(4)) == jt([[1, 2, 3, 4]])
        t = junction_tree_of(Graph.empty(3))
        assert validate(t) and set(t.adjacency) == {frozenset({v}) for v in (1, 2, 3)}

    def test_round_trip_p5(self):
        for g in enumerate_decomposable(5):
            t = junction_tree_of(g)
            assert validate(t)
            assert underlying_graph(t) == g


class TestSeparatorForest:
    def test_examples(self):
        f = separator_forest(EMPTY3, set())
        assert f.q == 3 and f.sizes == [1, 1, 1]
        f = separator_forest(PATH3, {2})
        assert f.q == 2 and f.sizes == [1, 1]
        f = separator_forest(STAR, {1})
        assert f.q == 3 and f.sizes == [1, 1, 1]

    def test_non_separator(self):
        with pytest.raises(ValueError):
            separator_forest(PATH3, {1})

    def test_components_partition_containing_nodes(self):
        t = jt([[1, 2], [2, 3], [2, 4], [4, 5]], [(0, 1), (1, 2), (2, 3)])
        f = separator_forest(t, {2})
        assert set().union(*f.components) == {frozenset({1, 2}), frozenset({2, 3}), frozenset({2, 4})}


def _forest(sizes):
    comps, k = [], 0
    for r in sizes:
        comps.append(frozenset(frozenset({k + i}) for i in range(r)))
        k += r
    return SeparatorForest(frozenset(), tuple(comps))


def _count_joins(sizes):
    """Spanning trees of the complete graph containing a fixed spanning forest."""
    n = sum(sizes)
    comp = [i for i, r in enumerate(sizes) for _ in range(r)]
    count = 0
    for edges in labelled_trees(n):
        # the forest is a path inside each component; count trees extending the
        # contracted structure: cross edges must form a tree over components
        cross = [(comp[a], comp[b]) for a, b in edges if comp[a] != comp[b]]
        if len(cross) != len(sizes) - 1:
            continue
        parent = list(range(len(sizes)))

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        ok = True
        for a, b in cross:
            ra, rb = find(a), find(b)
            if ra == rb:
                ok = False
                break
            parent[ra] = rb
        count += ok
    # every labelled tree restricted to components is a forest; divide out the
    # number of ways to choose the inner trees (Cayley per component)
    inner = 1
    for r in sizes:
        inner *= r ** (r - 2) if r > 1 else 1
    return count // inner


class TestNu:
    def test_examples(self):
        assert nu(_forest([3])) == 1
        assert nu(_forest([1, 1, 1])) == 3
        assert nu(_forest([1, 2])) == 2

    @pytest.mark.parametrize("sizes", [[1, 1], [1, 2], [2, 2], [1, 1, 2], [1, 2, 2], [1, 1, 1, 1], [3, 1, 1]])
    def test_formula_matches_tree_count(self, sizes):
        assert nu(_forest(sizes)) == _count_joins(sizes)


class TestMu:
    def test_examples(self):
        assert mu(jt([[1, 2, 3, 4]])) == 1
        assert mu(EMPTY3) == 3
        assert mu(STAR) == 3

    def test_matches_bruteforce_p5(self):
        for g in enumerate_decomposable(5):
            assert mu(junction_tree_of(g)) == mu_bruteforce(g)

    def test_representation_independent(self):
        for g in enumerate_decomposable(4):
            values = {mu(t) for t in junction_trees_of(g)}
            assert values == {mu_bruteforce(g)}

    def test_update_matches_recompute(self):
        params = ExpanderParams()
        for m in range(1, 5):
            for t in tree_space(m):
                prev = mu_factors(t)
                dist = outcome_distribution(lambda s: expand(t, m + 1, params, s)[0])
                for t_new in dist:
                    upd = mu_update(prev, t, t_new)
                    assert upd.factors == mu_factors(t_new).factors

    def test_update_examples(self):
        k2 = jt([[1, 2]])
        k3 = jt([[1, 2, 3]])
        assert mu_update(mu_factors(k2), k2, k3).product == 1
        e2 = jt([[1], [2]], [(0, 1)])
        assert mu_update(mu_factors(e2), e2, EMPTY3).product == 3

    def test_update_rejects_stale_factors(self):
        with pytest.raises(ValueError):
            mu_update(mu_factors(STAR), PATH3, STAR)


class TestRandomize:
    def test_forest_join_is_a_bijection(self):
        comps = [["a"], ["b", "c"], ["d"], ["e", "f", "g"]]
        outcomes = Counter()
        for links, pr in enumerate_draws(lambda s: frozenset(frozenset(e) for e in random_forest_join(comps, s))):
            outcomes[links] += 1
        n, sizes = 7, [1, 2, 1, 3]
        expected = n ** (len(sizes) - 2) * 1 * 2 * 1 * 3
        assert len(outcomes) == expected
        assert set(outcomes.values()) == {1}

    def test_single_component_unchanged(self):
        k3 = jt([[1, 2, 3]])
        assert randomize_at_separator(k3, set(), Stream.keyed(0)) is k3
        assert random_forest_join([["x", "y"]], Stream.keyed(0)) == []

    def test_exact_uniformity_over_junction_trees(self):
        for g in enumerate_decomposable(4):
            trees = set(junction_trees_of(g))
            t = junction_tree_of(g)
            for s in t.distinct_separators():
                dist = outcome_distribution(lambda st: randomize_at_separator(t, s, st))
                f = separator_forest(t, s)
                assert len(dist) == nu(f)
                assert set(dist) <= trees
                for pr in dist.values():
                    assert pr == pytest.approx(1.0 / nu(f))

    def test_empirical_uniformity_empty_p3(self):
        from scipy.stats import chisquare

        counts = Counter(randomize_at_separator(EMPTY3, set(), Stream.keyed(7, k)) for k in range(30000))
        assert set(counts) == set(junction_trees_of(Graph.empty(3)))
        assert chisquare(list(counts.values())).pvalue > 1e-4
        for c in counts.values():
            assert abs(c - 10000) < 3 * (30000 * (1 / 3) * (2 / 3)) ** 0.5 + 1

    def test_graph_preserved(self):
        t = jt([[1, 2], [2, 3], [2, 4], [2, 5]], [(0, 1), (1, 2), (2, 3)])
        for k in range(50):
            assert underlying_graph(randomize_at_separator(t, {2}, Stream.keyed(3, k))) == underlying_graph(t)


def test_labelled_trees_cayley():
    for n in range(1, 6):
        trees = list(labelled_trees(n))
        assert len(trees) == max(1, n ** (n - 2))
        assert len({frozenset(map(frozenset, e)) for e in trees}) == len(trees)


def test_tree_space_sizes():
    assert [len(tree_space(m)) for m in range(1, 5)] == [1, 2, 10, 108]
    assert all(len(set(tree_space(m))) == len(tree_space(m)) for m in range(1, 5))
    # each graph contributes mu of its trees
    for m in range(1, 5):
        assert len(tree_space(m)) == sum(mu_bruteforce(g) for g in enumerate_decomposable(m))


def test_itertools_sanity():
    # guard for the helper used in nu tests
    assert _count_joins([1, 1, 1]) == 3
    assert list(itertools.islice(labelled_trees(3), 1))
