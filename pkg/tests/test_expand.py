import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from ctrees.core_tree import INF, ColorPair, TreeError, isomorphic, random_good_tree, tree_from_shape
from ctrees.descriptor import (
    composite, enumerate_descriptors, normalize, parse_descriptor, point, t0, t1a, t1b,
)
from ctrees.expand import (
    INNER, OPEN_OPEN, SINGLETON, AnnotatedTree, Budget, BudgetError,
    CLAUSE_STAR, CLAUSE_STAR2, CLAUSE_STAR3, ExpansionError, RecognitionError, branch_levels,
    check_bcolor_table, check_sigma2, expand, expand_level, extend_tree, extension_conditions,
    interval_decomposition, predicted_size, quotient_sim, recognize, true_color,
)

B = Budget(2, 2, 2000)


def sample_descriptors(depth=2):
    return list(enumerate_descriptors(depth))


# --- expand ----------------------------------------------------------------------

def test_point_expansion():
    at = expand(point(), B)
    assert len(at) == 1 and at.genuine_leaves() == [at.tree.root]


def test_t0_expansion():
    # width at least the declared count realizes it exactly
    at = expand(t0(3), Budget(1, 3, 10))
    t = at.tree
    assert len(t) == 4 and len(t.children(t.root)) == 3
    assert at.node_color[t.root] == ColorPair(3, 0)
    assert all(at.is_isolated(l) for l in t.leaves)


def test_t1a_expansion_clauses():
    at = expand(t1a(2), Budget(2, 2, 2000))
    t = at.tree
    for n in t.nodes:
        if n in t.leaves:
            assert at.predecessor(n) is None
            continue
        assert n in at.dense_mark
        kids = t.children(n)
        assert len(kids) == 2
        assert all(at.cone_kind[c] == INNER for c in kids)
        assert at.node_color[n] == ColorPair(0, 2)
    assert at.check().ok


def test_budget_overflow_is_an_error():
    d = composite(t1b(INF, INF), t1b(INF, INF))
    assert predicted_size(d, Budget(3, 3, 10)) > 10
    with pytest.raises(BudgetError):
        expand(d, Budget(3, 3, 10))
    with pytest.raises(ValueError):
        Budget(0, 1, 1)


def test_expand_is_deterministic_in_seed():
    d = parse_descriptor("T1b:1:inf/T0:2")
    a, b = expand(d, B, 7), expand(d, B, 7)
    assert a.to_json() == b.to_json()
    assert isomorphic(a.tree, expand(d, B, 8).tree)


def test_json_round_trip():
    for d in sample_descriptors(2)[::7]:
        at = expand(d, B, 1)
        again = AnnotatedTree.from_json(json.loads(json.dumps(at.to_json())))
        assert again == at
        assert recognize(again) == recognize(at)
    with pytest.raises(TreeError):
        bad = expand(t0(2), B).to_json()
        bad["node_color"]["99"] = [1, 0]
        AnnotatedTree.from_json(bad)


def test_dot_export_marks_dense_edges():
    dot = expand(t1a(2), B).to_dot()
    assert "black:black" in dot and dot.startswith("digraph")


def test_check_and_leaf_isolation_dichotomy():
    for d in sample_descriptors(2):
        at = expand(d, B)
        assert at.check().ok, d
        iso = {at.is_isolated(l) for l in at.genuine_leaves()}
        assert len(iso) == 1, d


def test_parents_of_isolated_leaves_form_maximal_antichain():
    # only when the last interval of every branch is {p(leaf)}
    for d in sample_descriptors(2):
        if normalize(d).levels[-1].kind != "T0":
            continue
        at = expand(d, B)
        t = at.tree
        leaves = at.genuine_leaves()
        P = {t.parent[l] for l in leaves}
        assert all(not t.lt(a, b) for a in P for b in P)
        for n in t.nodes:
            if n not in at.stubs:
                assert any(t.le(n, p) or t.le(p, n) for p in P), (d, n)


# --- recognition -----------------------------------------------------------------

def test_recognize_examples():
    assert recognize(expand(point(), B)) == composite(point())
    assert recognize(expand(t0(3), B)) == composite(t0(3))
    assert recognize(expand(composite(t1a(2), t0(2)), B)) == composite(t1a(2), t0(2))
    # both collapses of the rewriting system happen in the realized tree
    assert recognize(expand(composite(t1b(1, 1), t1a(2)), B)) == composite(t1a(2))
    assert recognize(expand(composite(t1a(2), t0(2), t1a(2)), B)) == composite(t1a(2))


def test_recognize_finite_tower():
    shape = tuple(tuple(() for _ in range(3)) for _ in range(2))
    at = AnnotatedTree.from_finite(tree_from_shape(shape))
    assert recognize(at) == composite(t0(2), t0(3))
    rebuilt, _ = extend_tree(expand(t0(2), Budget(1, 3, 20)), expand(t0(3), Budget(1, 3, 20)))
    assert isomorphic(rebuilt.tree, at.tree)


def test_recognize_rejects_non_uniform_trees():
    at = AnnotatedTree.from_finite(tree_from_shape((((), ()), ())))
    with pytest.raises(RecognitionError) as err:
        recognize(at)
    assert err.value.clause == "inconsistent branches"


def test_recognize_round_trip_depth_two():
    for d in sample_descriptors(2):
        for s in range(2):
            assert recognize(expand(d, B, s)) == normalize(d), d


def test_interval_examples():
    at = expand(t0(3), B)
    for a in at.genuine_leaves():
        (iv,) = interval_decomposition(at, a)
        assert iv.form == SINGLETON and iv.nodes == (at.tree.root,)
    at = expand(composite(t1a(2), t0(2)), B)
    for a in at.genuine_leaves():
        first, second = interval_decomposition(at, a)
        assert first.form == OPEN_OPEN and first.color == ColorPair(0, 2)
        assert second.form == SINGLETON
    with pytest.raises(RecognitionError):
        interval_decomposition(at, at.tree.root)


def test_interval_decomposition_matches_branch_levels():
    for d in sample_descriptors(2)[::3]:
        if d.levels[0].kind == "T00":
            continue
        nd = normalize(d)
        at = expand(d, B, 2)
        bl = branch_levels(at)
        for a in at.genuine_leaves():
            dec = interval_decomposition(at, a)
            assert tuple(iv.level() for iv in dec) == bl[a] == nd.levels
            for j in range(len(dec) - 1):
                if dec[j].form == OPEN_OPEN:
                    assert dec[j + 1].form == SINGLETON
            assert all(true_color(at, y) == dec[j].color for j in range(len(dec)) for y in dec[j].nodes)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(list(enumerate_descriptors(3))), st.integers(0, 1000))
def test_recognize_round_trip_random(d, seed):
    assert recognize(expand(d, B, seed)) == normalize(d)


# --- extension -------------------------------------------------------------------

def extension_corpus():
    bases = [d for d in sample_descriptors(2) if d.levels[0].kind != "T00"][::40]
    levels = [t0(2), t0(3), t1a(2), t1a(INF), t1b(1, 1), t1b(2, INF)]
    out = []
    for d in bases:
        T = expand(d, B)
        for l in levels:
            T0 = expand_level(l, B)
            if extension_conditions(T, T0).ok:
                out.append((T, T0))
    return out


def test_extension_examples():
    B3 = Budget(2, 3, 2000)
    T, T0 = expand_level(t0(2), B3), expand_level(t0(3), B3)
    at, w = extend_tree(T, T0)
    t = at.tree
    assert len(t.leaves) == 6 and len(w.E) == 2
    assert all(at.node_color[x] == ColorPair(3, 0) for x in w.E)
    assert at.node_color[t.root] == ColorPair(2, 0)
    assert all(not t.lt(a, b) for a in w.E for b in w.E)
    _, proj = quotient_sim(at, w)
    for x in w.E_geq:
        for y in w.E_geq:
            assert (proj[x] == proj[y]) == (w.e[x] == w.e[y])

    T, T0 = expand_level(t0(2), B), expand_level(t1a(2), B)
    at, w = extend_tree(T, T0)
    assert not w.rooted
    assert all(at.node_color[x] == ColorPair(0, 2) for x in w.E)


def test_extension_conditions_named():
    iso = expand_level(t0(2), B)
    dense_leaves = expand_level(t1a(2), B)
    assert CLAUSE_STAR2 in extension_conditions(dense_leaves, dense_leaves).clauses()
    assert extension_conditions(dense_leaves, iso).ok
    mixed = AnnotatedTree.from_finite(tree_from_shape((((), ()), ())))
    mixed.cone_kind[[l for l in mixed.tree.leaves if mixed.tree.depth(l) == 1][0]] = INNER
    assert CLAUSE_STAR in extension_conditions(mixed, iso).clauses()
    gap = AnnotatedTree.from_finite(tree_from_shape((((), ()), ())))
    assert CLAUSE_STAR3 not in extension_conditions(gap, iso).clauses()
    with pytest.raises(ExpansionError):
        extend_tree(dense_leaves, dense_leaves)


def test_nonconvex_parent_set_rejected():
    # a leaf hanging off the root and one at depth 3 through a leafless middle node
    at = AnnotatedTree.from_finite(tree_from_shape(((((), ()), ((), ())), ())))
    t = at.tree
    P = {t.parent[l] for l in t.leaves}
    assert t.root in P
    assert CLAUSE_STAR3 in extension_conditions(at, expand_level(t0(2), B)).clauses()


def test_extension_corpus_witnesses():
    corpus = extension_corpus()
    assert len(corpus) >= 20
    for T, T0 in corpus:
        at, w = extend_tree(T, T0)
        assert check_sigma2(at, w).ok
        assert check_bcolor_table(T, T0, at, w).ok
        q, proj = quotient_sim(at, w)
        assert isomorphic(q.tree, T.tree)
        for n in T.tree.nodes:
            if n not in T.tree.leaves:
                assert [m for m in at.tree.nodes if proj[m] == n] == [n]
        if w.rooted:
            for a, cp in w.tau.items():
                r0 = T0.tree.root
                assert all(proj[cp[x]] == proj[cp[r0]] for x in cp)
        for l in at.genuine_leaves():
            assert at.is_isolated(l) == T0.is_isolated(T0.genuine_leaves()[0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(3, 11))
def test_extension_of_random_finite_trees(seed, n):
    t = random_good_tree(random.Random(seed), n)
    T = AnnotatedTree.from_finite(t)
    T0 = expand_level(t0(2), B)
    if not extension_conditions(T, T0).ok:
        return
    at, w = extend_tree(T, T0)
    assert check_sigma2(at, w).ok
    q, _ = quotient_sim(at, w)
    assert isomorphic(q.tree, t)
