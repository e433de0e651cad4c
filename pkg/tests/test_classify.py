import itertools
import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from ctrees.core_tree import INF, enumerate_good_trees, random_good_tree, tree_from_shape
from ctrees.cset import automorphisms_bruteforce, leaves_cset, trivial_cset
from ctrees.descriptor import composite, format_descriptor, point, t0, t1a
from ctrees.expand import Budget, expand
from ctrees.classify import (
    ClassifyError, ClassVertex, LabelError, LabeledClassTree, CanonicalPartition, canonical_partition,
    enumerate_labeled_trees, label_automorphisms, theta, theta_bar, validate_constraints,
)

P = composite(point())
T2 = composite(t0(2))
BV = composite(t1a(2), branch_variant=True)


def cherry_plus_leaf():
    # r < {x, c}, x < {a, b}; breadth-first ids r=0, x=1, c=2, a=3, b=4
    return tree_from_shape((((), ()), ()))


# --- oracles ----------------------------------------------------------------------------

def oracle_blocks(T):
    """Leaf orbits from every permutation of the leaves that preserves C."""
    M, _ = leaves_cset(T)
    autos = automorphisms_bruteforce(M)
    blocks, seen = [], set()
    for a in M.elements:
        if a in seen:
            continue
        orb = {f[a] for f in autos}
        seen |= orb
        blocks.append(frozenset(orb))
    return blocks


def oracle_theta(T):
    """Theta and its roles evaluated clause by clause from pairwise meets."""
    blocks = oracle_blocks(T)
    blk = {a: i for i, b in enumerate(blocks) for a in b}
    leaves = list(T.leaves)
    theta1 = {x for x in T.nodes
              if any(blk[a] != blk[b] and T.le(x, T.meet(a, b)) for a, b in itertools.combinations(leaves, 2))}
    up = {x: [c for c in T.children(x) if any(T.le(c, y) for y in theta1)] for x in theta1}
    roles = {}
    for x in theta1:
        r = set()
        if not any(T.lt(x, y) for y in theta1):
            r.add("U")
        if len(up[x]) >= 2:
            r.add("B")
        roles[x] = r
    side = {}
    for x in theta1:
        if len(up[x]) == 1:
            side[x] = {blk[a] for a in leaves if T.le(x, a) and not T.le(up[x][0], a)}
    for x, bl in side.items():
        if roles[x]:
            continue
        if len(bl) >= 2:
            roles[x].add("S")
        elif len(bl) == 1:
            p = T.parent.get(x)
            same_below = p in side and not roles[p] - {"I"} and side[p] == bl
            if not same_below:
                roles[x].add("I")
    return {x: frozenset(r) for x, r in roles.items() if r}


def small_trees():
    return [t for t in enumerate_good_trees(8) if len(t.leaves) <= 6]


# --- canonical partition -----------------------------------------------------------------

def test_partition_examples():
    assert canonical_partition(trivial_cset("abc")).blocks == [["a", "b", "c"]]
    T = cherry_plus_leaf()
    assert sorted(map(sorted, canonical_partition(T).blocks)) == [[2], [3, 4]]
    conn = tree_from_shape((((), ()), ((), (), ())))
    assert len(canonical_partition(conn).blocks) == 2


def test_partition_matches_bruteforce_orbits():
    for T in small_trees():
        got = {frozenset(b) for b in canonical_partition(T).blocks}
        assert got == set(oracle_blocks(T))


def test_partition_of_cset_uses_elements():
    M, _ = leaves_cset(cherry_plus_leaf())
    P_ = canonical_partition(M)
    assert sorted(x for b in P_.blocks for x in b) == sorted(M.elements)
    assert json.loads(json.dumps(P_.to_json()))["blocks"] == P_.blocks


# --- Theta -------------------------------------------------------------------------------

def test_theta_examples():
    assert len(theta(trivial_cset("abcd"))) == 0
    assert len(theta(tree_from_shape((((), ()), ((), ()))))) == 0
    th = theta(cherry_plus_leaf())
    assert th.nodes == {0} and th.role[0] == {"U"}
    conn = theta(tree_from_shape((((), ()), ((), (), ()))))
    assert conn.nodes == {0}


def test_theta_rejects_foreign_partition():
    T = cherry_plus_leaf()
    with pytest.raises(ClassifyError):
        theta(T, CanonicalPartition([[2, 3], [4]]))
    assert theta(T, canonical_partition(T)).nodes == {0}


def test_theta_matches_clause_oracle():
    for T in small_trees():
        th = theta(T)
        want = oracle_theta(T)
        assert set(th.nodes) == set(want), T
        assert {x: th.role[x] for x in th.nodes} == want


def test_theta_rejects_dense_annotations():
    with pytest.raises(ClassifyError):
        theta(expand(t1a(2), Budget(2, 2, 100)))


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 16))
def test_theta_meet_and_predecessor_closed(seed, n):
    T = random_good_tree(random.Random(seed), n)
    th = theta(T)
    for x, y in itertools.combinations(th.nodes, 2):
        assert T.meet(x, y) in th.nodes
    for x in th.nodes:
        p = T.parent.get(x)
        assert p is None or p in th.nodes
        assert th.predecessor(x) == p
    # nonempty iff the root is in Theta iff not indiscernible
    assert bool(th.nodes) == (T.root in th.nodes) == (len(canonical_partition(T).blocks) > 1)


# --- Theta bar -----------------------------------------------------------------------------

def test_theta_bar_example():
    X = theta_bar(cherry_plus_leaf())
    assert len(X) == 1
    (v,) = X.vertices
    assert v.n == 1 and v.parent is None
    assert {format_descriptor(d): k for d, k in v.cones} == {"T00": 1, "T0:2:0": 1}


def test_theta_bar_indiscernible_is_empty():
    assert len(theta_bar(trivial_cset("abc"))) == 0
    assert len(theta_bar(tree_from_shape((((), (), ()), ((), (), ()))))) == 0


def test_theta_bar_counts_orbits():
    # two copies of the cherry-plus-leaf under a root: one vertex of size 2 above the root
    shape = ((((), ()), ()), (((), ()), ()))
    X = theta_bar(tree_from_shape(shape))
    assert [v.n for v in X.vertices] == [1, 2]
    assert X.vertices[0].s == 0 and X.vertices[1].s == 2
    # each a in A lies below exactly n_B / n_A elements of B
    T = tree_from_shape(shape)
    th = theta(T)
    assert sum(1 for x in th.nodes if T.parent.get(x) == T.root) == 2


def test_theta_bar_from_cset_and_tree_agree():
    for T in small_trees()[::7]:
        M, _ = leaves_cset(T)
        assert theta_bar(M).label_isomorphic(theta_bar(T))


# --- labeled trees ----------------------------------------------------------------------------

def sample_tree():
    return LabeledClassTree([
        ClassVertex("A0", None, 1, ((P, 1),)),
        ClassVertex("A1", "A0", 2, ((P, 1), (T2, INF))),
    ])


def test_structure_checks():
    with pytest.raises(LabelError):
        LabeledClassTree([ClassVertex("a", None, 1), ClassVertex("a", None, 1)])
    with pytest.raises(LabelError):
        LabeledClassTree([ClassVertex("a", None, 1), ClassVertex("b", None, 1)])
    with pytest.raises(LabelError):
        LabeledClassTree([ClassVertex("a", None, 1), ClassVertex("b", "z", 1)])
    with pytest.raises(LabelError):
        LabeledClassTree([ClassVertex("a", None, 0)])


def test_json_round_trip():
    X = sample_tree()
    data = json.loads(X.dumps())
    assert data["vertices"][1]["s"] == 2
    Y = LabeledClassTree.from_json(data)
    assert Y.label_isomorphic(X) and Y.dumps() == X.dumps()
    data["vertices"][1]["s"] = 5
    with pytest.raises(LabelError):
        LabeledClassTree.from_json(data)
    with pytest.raises(LabelError):
        LabeledClassTree.from_json({"nodes": []})


def test_dot_export():
    dot = sample_tree().to_dot()
    assert dot.startswith("digraph Theta {") and '"A0" -> "A1";' in dot
    assert "n = 2, s = 2" in dot


def test_label_isomorphism_ignores_ids_and_order():
    X = sample_tree()
    Y = LabeledClassTree([
        ClassVertex("q", "p", 2, ((T2, INF), (P, 1))),
        ClassVertex("p", None, 1, ((P, 1),)),
    ])
    assert X.label_isomorphic(Y)
    Z = LabeledClassTree([ClassVertex("p", None, 1, ((P, 1),)), ClassVertex("q", "p", 2, ((T2, 2), (P, 1)))])
    assert not X.label_isomorphic(Z)


# --- constraints ------------------------------------------------------------------------------

def test_validator_examples():
    chain = LabeledClassTree([ClassVertex("A0", None, 1), ClassVertex("B", "A0", 2, ((P, 2),))])
    assert validate_constraints(chain).clauses() == ["7'"]
    two_inf = LabeledClassTree([ClassVertex("A0", None, 1, ((P, INF), (T2, INF)))])
    assert validate_constraints(two_inf).clauses() == ["6'"]
    sym = LabeledClassTree([ClassVertex("A0", None, 1), ClassVertex("B", "A0", 1, ((P, 1), (T2, 1))),
                            ClassVertex("C", "A0", 1, ((P, 1), (T2, 1)))])
    assert validate_constraints(sym).clauses() == ["10'"]
    assert validate_constraints(sample_tree()).ok


def test_scaled_siblings_are_rejected():
    X = LabeledClassTree([
        ClassVertex("r", None, 1, ((P, 1),)),
        ClassVertex("b1", "r", 1, ((P, 1), (T2, 1))),
        ClassVertex("b2", "r", 2, ((P, 1), (T2, 1))),
    ])
    assert not any(any(a != b for a, b in f.items()) for f in label_automorphisms(X))
    assert validate_constraints(X).clauses() == ["10'"]


def test_label_automorphisms_bruteforce_count():
    # a root over three identical maximal children has 3! label automorphisms
    kids = [ClassVertex(c, "r", 1, ((P, 1), (T2, 1))) for c in "abc"]
    X = LabeledClassTree([ClassVertex("r", None, 1)] + kids)
    assert len(list(label_automorphisms(X))) == 6


def test_strict_9_turns_note_into_failure():
    X = LabeledClassTree([
        ClassVertex("A0", None, 1),
        ClassVertex("B", "A0", 1, ((composite(t1a(2)), 2),), BV),
        ClassVertex("C", "B", 1, ((P, 1), (T2, 1)), BV),
    ])
    rep = validate_constraints(X)
    assert rep.ok and [n.clause for n in rep.notes] == ["9'"]
    assert validate_constraints(X, strict_9=True).clauses() == ["9'"]


def test_theta_bar_of_finite_trees_validates():
    for T in small_trees():
        X = theta_bar(T)
        assert validate_constraints(X).ok, X.to_json()


# --- enumeration ---------------------------------------------------------------------------

def test_enumeration_is_duplicate_free_and_valid():
    trees = [X for v in (1, 2, 3) for X in enumerate_labeled_trees([P, T2], [1, 2], 2, v)]
    forms = [X.dumps() for X in trees]
    assert len(set(forms)) == len(forms)
    for X, Y in itertools.combinations(trees, 2):
        assert not X.label_isomorphic(Y)
    assert all(validate_constraints(X).ok for X in trees)
    # the single-vertex trees: both cone theories, each multiplicity pair
    assert sum(1 for X in trees if len(X) == 1) == 4
