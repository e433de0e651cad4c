import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from ctrees.core_tree import enumerate_good_trees, random_good_tree, relabel, tree_from_shape
from ctrees.descriptor import composite, enumerate_descriptors, t0, t1a, t1b
from ctrees.expand import AnnotatedTree, Budget, expand, expand_level, extend_tree
from ctrees.equivalence import (
    Signature, SignatureError, attach_node, automaton, back_and_forth, closure, iso_finite, qf_type,
)

B = Budget(2, 2, 500)


# --- naive oracle: the game on finite trees with meets as the only function ---------

def pair_meets(t, tup):
    return [[t.meet(a, b) for b in tup] for a in tup]


def oracle_partial_iso(t, u, a, b):
    """Is a_i ^ a_j -> b_i ^ b_j a well-defined order and leaf preserving bijection?"""
    ma, mb = pair_meets(t, a), pair_meets(u, b)
    n = len(a)
    cells = [(i, j) for i in range(n) for j in range(n)]
    for (i, j) in cells:
        x, y = ma[i][j], mb[i][j]
        if (x in t.leaves) != (y in u.leaves):
            return False
        for (k, l) in cells:
            if (x == ma[k][l]) != (y == mb[k][l]):
                return False
            if t.le(x, ma[k][l]) != u.le(y, mb[k][l]):
                return False
    return True


def oracle_dup_wins(t, u, a, b, r):
    if r == 0:
        return True
    for x in t.nodes:
        if not any(oracle_partial_iso(t, u, a + (x,), b + (y,)) and oracle_dup_wins(t, u, a + (x,), b + (y,), r - 1)
                   for y in u.nodes):
            return False
    for y in u.nodes:
        if not any(oracle_partial_iso(t, u, a + (x,), b + (y,)) and oracle_dup_wins(t, u, a + (x,), b + (y,), r - 1)
                   for x in t.nodes):
            return False
    return True


def test_game_matches_naive_oracle_on_small_trees():
    trees = list(enumerate_good_trees(7))
    for t, u in itertools.combinations_with_replacement(trees, 2):
        for r in (1, 2, 3):
            want = oracle_dup_wins(t, u, (), (), r)
            got = back_and_forth(t, u, rounds=r)
            assert got.equivalent == want, (t, u, r)
            if not want:
                assert got.witness is not None and got.distinguished_at <= r


def test_star_counting():
    three = tree_from_shape(((), (), ()))
    four = tree_from_shape(((), (), (), ()))
    assert back_and_forth(three, four, rounds=3).equivalent
    res = back_and_forth(three, four, rounds=4)
    assert not res.equivalent and res.distinguished_at == 4


# --- closure and n_t ---------------------------------------------------------------

def test_closure_examples():
    t = tree_from_shape((((), ()), ()))
    a, b = [l for l in t.leaves if t.depth(l) == 2]
    assert closure(t, [a, b]) == {a, b, t.meet(a, b)}
    at = expand(t0(3), B)
    leaf = at.genuine_leaves()[0]
    assert closure(at, [leaf], Signature.parse("L1P")) == {leaf, at.tree.root}
    assert closure(at, [leaf]) == {leaf}


def test_closure_idempotent_and_monotone():
    corpus = [expand(d, B) for d in list(enumerate_descriptors(2))[::60] if len(expand(d, B)) <= 14]
    corpus += [AnnotatedTree.from_finite(t) for t in enumerate_good_trees(7)]
    for T in corpus:
        sig = Signature("L1P")
        nodes = [n for n in T.tree.nodes if n not in T.stubs]
        for k in range(1, 3):
            for A in itertools.combinations(nodes, k):
                c = closure(T, A, sig)
                assert closure(T, c, sig) == c
                assert set(A) <= c
                for x in nodes[:4]:
                    assert c <= closure(T, set(A) | {x}, sig)


def test_attach_node_examples():
    t = tree_from_shape((((), ()), ((), ())))
    left, right = t.children(t.root)
    la, lb = t.children(left)
    ra = t.children(right)[0]
    assert attach_node(t, [la], left) == left
    assert attach_node(t, [la], lb) == left
    assert attach_node(t, [la], ra) == t.root
    branch = t.ancestors(la)
    assert attach_node(t, branch, ra) == t.meet(ra, la)
    with pytest.raises(ValueError):
        attach_node(t, [], la)


def test_attach_node_meets_agree():
    for t in enumerate_good_trees(7):
        nodes = list(t.nodes)
        for A in itertools.combinations(nodes, 2):
            for x in nodes:
                if x in A:
                    continue
                n = attach_node(t, A, x)
                assert all(t.meet(x, z) == t.meet(n, z) for z in A)


# --- qf-types -------------------------------------------------------------------------

def test_qf_type_examples():
    t = tree_from_shape(((), (), ()))
    a, b, c = t.children(t.root)
    assert qf_type(t, [a]) == qf_type(t, [b])
    assert qf_type(t, [a]) != qf_type(t, [t.root])
    assert qf_type(t, [a, b]) == qf_type(t, [b, a])
    assert qf_type(t, [a, b]) != qf_type(t, [a, a])


def test_qf_type_symmetric_pairs_sweep():
    for t in enumerate_good_trees(7):
        for x, y in itertools.permutations(t.leaves, 2):
            if t.parent[x] == t.parent[y]:
                assert qf_type(t, [x, y]) == qf_type(t, [y, x])


def test_signatures():
    assert str(Signature.parse("Ln(3)")) == "Ln(3)"
    assert Signature.parse("LnP(2)").has_p and Signature.parse("LnV(1)").has_v
    assert "meet_V" in Signature.parse("LnV(1)").symbols()
    for bad in ("L3", "Ln", "L1(2)"):
        with pytest.raises(SignatureError):
            Signature.parse(bad)
    with pytest.raises(SignatureError):
        back_and_forth(expand(t0(2), B), expand(t0(2), B), Signature("L2"))


def test_layers_in_qf_types():
    T, T0 = expand_level(t0(2), B), expand_level(t0(2), B)
    at, w = extend_tree(T, T0)
    sig = Signature("Ln", 1)
    e_node = sorted(w.E)[0]
    leaf = at.tree.children(e_node)[0]
    assert closure(at, [leaf], sig) == {leaf, e_node}
    assert qf_type(at, [at.tree.root], sig) != qf_type(at, [e_node], sig)


# --- finite isomorphism --------------------------------------------------------------

def test_iso_finite_examples():
    t = tree_from_shape((((), ()), (), ()))
    assert iso_finite(t, t) == {n: n for n in t.nodes}
    assert iso_finite(tree_from_shape(((), (), ())), tree_from_shape(((), ()))) is None
    d = composite(t1b(1, 2), t0(2))
    assert iso_finite(expand(d, B, 0), expand(d, B, 5)) is not None


def test_iso_finite_agrees_with_canonical_forms():
    from ctrees.core_tree import isomorphic
    trees = list(enumerate_good_trees(8))
    for t, u in itertools.combinations(trees, 2):
        assert (iso_finite(t, u) is not None) == isomorphic(t, u)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 15))
def test_iso_finite_relabel(seed, n):
    rng = random.Random(seed)
    t = random_good_tree(rng, n)
    perm = list(t.nodes)
    rng.shuffle(perm)
    u = relabel(t, {a: f"v{b}" for a, b in zip(t.nodes, perm)})
    f = iso_finite(t, u)
    assert f is not None
    assert all(f[t.parent[c]] == u.parent[f[c]] for c in t.parent)


def test_iso_finite_with_fixed_points():
    t = tree_from_shape((((), ()), ((), ())))
    left, right = t.children(t.root)
    assert iso_finite(t, t, fixed=[(left, right)])[left] == right
    leaf = t.children(left)[0]
    assert iso_finite(t, t, fixed=[(leaf, right)]) is None


def test_categoricity_at_desk_scale():
    for d in list(enumerate_descriptors(2))[::25]:
        assert iso_finite(expand(d, B, 0), expand(d, B, 1)) is not None


# --- games on annotated trees ----------------------------------------------------------

def test_game_examples():
    res = back_and_forth(expand(t0(2), B), expand(t0(3), B), rounds=2)
    assert not res.equivalent and res.distinguished_at <= 2
    assert res.witness["spoiler"]["atomic"]
    # both collapses, with the full search
    for d in (composite(t1b(1, 1), t1a(2)), composite(t1a(2), t0(2), t1a(2))):
        assert back_and_forth(expand(d, B), expand(t1a(2), B), rounds=3, iso_shortcut=False).equivalent


def test_game_reflexive():
    for d in list(enumerate_descriptors(3))[::400]:
        T = expand(d, Budget(2, 2, 2000))
        assert back_and_forth(T, T, rounds=2, iso_shortcut=False).equivalent


def test_game_bare_signature_needs_counting():
    # without colors the roots of two stars only differ by how many leaves they carry
    two, three = expand(t0(2), B), expand(t0(3), B)
    res = back_and_forth(two, three, rounds=3, colors=False)
    assert not res.equivalent and res.distinguished_at == 3


def test_game_bare_signature_dense_collapse():
    d = composite(t1b(1, 1), t1a(2))
    assert back_and_forth(expand(d, B), expand(t1a(2), B), rounds=2, colors=False, iso_shortcut=False).equivalent


def test_automaton_merges_collapsed_levels():
    a = automaton(expand(composite(t1b(1, 1), t1a(2)), B))
    b = automaton(expand(t1a(2), B))
    assert sorted(a.canonical().values()) == sorted(b.canonical().values())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 9), st.integers(1, 3))
def test_soundness_and_monotonicity(seed, n, r):
    rng = random.Random(seed)
    t = random_good_tree(rng, n)
    u = random_good_tree(rng, n)
    perm = list(t.nodes)
    rng.shuffle(perm)
    t2 = relabel(t, {a: ("c", b) for a, b in zip(t.nodes, perm)})
    assert back_and_forth(t, t2, rounds=r, iso_shortcut=False).equivalent
    res = back_and_forth(t, u, rounds=r)
    if res.equivalent:
        for r2 in range(1, r):
            assert back_and_forth(t, u, rounds=r2).equivalent
    else:
        assert not back_and_forth(t, u, rounds=r + 1).equivalent


# --- quantifier elimination at finite scale ---------------------------------------------

def tower_corpus(max_nodes=12):
    out = []
    for ks in [(k,) for k in range(2, 12)] + [(a, b) for a in (2, 3) for b in (2, 3, 4)]:
        T = expand_level(t0(ks[0]), Budget(1, 11, 100))
        for k in ks[1:]:
            T, _ = extend_tree(T, expand_level(t0(k), Budget(1, 11, 100)))
        if len(T) <= max_nodes:
            out.append(T)
    return out


def test_qe_shadow_on_towers():
    for T in tower_corpus():
        sig = Signature("LnP", max(1, len(T.layers))) if T.layers else Signature("L1P")
        nodes = list(T.tree.nodes)
        for n in (1, 2):
            groups = {}
            for tup in itertools.product(nodes, repeat=n):
                groups.setdefault(qf_type(T, tup, sig), []).append(tup)
            for tups in groups.values():
                first = tups[0]
                for other in tups[1:]:
                    assert iso_finite(T, T, sig, list(zip(first, other))) is not None, (first, other)
