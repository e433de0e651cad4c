"""Finite C-sets: axiom checking, the canonical tree, leaf C-sets, cones and
finite diagnostics for indiscernibility and C-minimality."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

from .core_tree import (ConcreteTree, TreeError, ValidationReport, is_good_tree, orbit_keys, sort_key)

Element = Hashable


class CSetError(ValueError):
    pass


class ConcreteCSet:
    """A finite set with a ternary relation C."""

    __slots__ = ("elements", "triples", "_index")

    def __init__(self, elements: Iterable[Element], triples: Iterable[Sequence[Element]]):
        self.elements = tuple(elements)
        if len(set(self.elements)) != len(self.elements):
            raise CSetError("duplicate elements")
        known = set(self.elements)
        ts = set()
        for t in triples:
            t = tuple(t)
            if len(t) != 3 or not set(t) <= known:
                raise CSetError(f"bad triple {t!r}")
            ts.add(t)
        self.triples = frozenset(ts)
        self._index = None

    def C(self, a, b, c) -> bool:
        return (a, b, c) in self.triples

    def __len__(self):
        return len(self.elements)

    def to_json(self) -> Dict[str, Any]:
        order = {e: i for i, e in enumerate(self.elements)}
        trips = sorted(self.triples, key=lambda t: tuple(order[x] for x in t))
        return {"elements": list(self.elements), "triples": [list(t) for t in trips]}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "ConcreteCSet":
        try:
            return cls(data["elements"], data.get("triples", []))
        except KeyError as exc:
            raise CSetError(f"malformed C-set JSON: missing {exc}") from None

    def __eq__(self, other):
        return isinstance(other, ConcreteCSet) and set(self.elements) == set(other.elements) \
            and self.triples == other.triples

    def __hash__(self):
        return hash((frozenset(self.elements), self.triples))

    def __repr__(self):
        return f"ConcreteCSet({len(self.elements)} elements, {len(self.triples)} triples)"


@dataclass
class LeafMap:
    """Bijection between C-set elements and leaves of a tree."""
    to_leaf: Dict[Element, Any] = field(default_factory=dict)

    @property
    def to_element(self) -> Dict[Any, Element]:
        return {v: k for k, v in self.to_leaf.items()}

    def to_json(self):
        return [[k, v] for k, v in self.to_leaf.items()]


def trivial_cset(elements: Iterable[Element]) -> ConcreteCSet:
    """C(a,b,c) iff a != b = c."""
    els = list(elements)
    return ConcreteCSet(els, [(a, b, b) for a in els for b in els if a != b])


# --- axioms -------------------------------------------------------------------

def check_c_axioms(M: ConcreteCSet) -> ValidationReport:
    """Report every failing instance of the four C-relation axioms (first witness per axiom kept first)."""
    rep = ValidationReport()
    C = M.C
    els = M.elements
    for (x, y, z) in sorted(M.triples, key=lambda t: tuple(sort_key(i) for i in t)):
        if not C(x, z, y):
            rep.add("axiom 1", (x, y, z), "C(x,y,z) without C(x,z,y)")
        if C(y, x, z):
            rep.add("axiom 2", (x, y, z), "C(x,y,z) together with C(y,x,z)")
        for w in els:
            if not C(x, y, w) and not C(w, y, z):
                rep.add("axiom 3", (x, y, z, w), "C(x,y,z) but neither C(x,y,w) nor C(w,y,z)")
                break
    for x in els:
        for y in els:
            if x != y and not C(x, y, y):
                rep.add("axiom 4", (x, y), "x != y without C(x,y,y)")
    return rep


def axiom_numbers(rep: ValidationReport) -> List[int]:
    return sorted({int(v.clause.split()[-1]) for v in rep.violations})


# --- canonical tree ---------------------------------------------------------------

def _node_name(a, b) -> str:
    return f"{a}^{b}"


def canonical_tree(M: ConcreteCSet) -> Tuple[ConcreteTree, LeafMap]:
    """T(M) computed as the quotient of M x M by the relation R.

    (a,b) <= (c,d) iff not C(c,a,b) and not C(d,a,b); R is the induced
    equivalence.  Classes are named after their least representative pair.
    """
    rep = check_c_axioms(M)
    if not rep.ok:
        raise CSetError(f"C-relation fails {rep.clauses()}")
    if not M.elements:
        raise CSetError("empty C-set")
    C = M.C
    els = sorted(M.elements, key=sort_key)

    def below(p, q) -> bool:  # p precedes-or-equals q
        return not C(q[0], p[0], p[1]) and not C(q[1], p[0], p[1])

    # representatives: leaves first so that (a,a) names each leaf class
    pairs = [(a, a) for a in els] + [(a, b) for a in els for b in els if a != b]
    reps: List[Tuple[Element, Element]] = []
    cls_of: Dict[Tuple[Element, Element], int] = {}
    for p in pairs:
        for i, r in enumerate(reps):
            if below(p, r) and below(r, p):
                cls_of[p] = i
                break
        else:
            cls_of[p] = len(reps)
            reps.append(p)
    n = len(reps)
    less = [[i != j and below(reps[i], reps[j]) for j in range(n)] for i in range(n)]
    leaf_cls = {cls_of[(a, a)] for a in els}
    names = [str(reps[i][0]) if i in leaf_cls else _node_name(*reps[i]) for i in range(n)]
    if len(set(names)) != n:
        names = [f"{names[i]}#{i}" for i in range(n)]
    parent: Dict[str, str] = {}
    for i in range(n):
        lower = [j for j in range(n) if less[j][i]]
        if lower:
            top = max(lower, key=lambda j: sum(less[k][j] for k in range(n)))
            parent[names[i]] = names[top]
    depth = {i: sum(less[j][i] for j in range(n)) for i in range(n)}
    order = sorted(range(n), key=lambda i: (depth[i], i in leaf_cls, sort_key(reps[i])))
    tree = ConcreteTree([names[i] for i in order], parent, [names[i] for i in leaf_cls])
    lm = LeafMap({a: names[cls_of[(a, a)]] for a in M.elements})
    return tree, lm


def leaves_cset(T: ConcreteTree) -> Tuple[ConcreteCSet, LeafMap]:
    """C-set on the leaves: C(a,b,c) iff br(a)&br(b) = br(a)&br(c) strictly inside br(b)&br(c)."""
    rep = is_good_tree(T)
    if not rep.ok:
        raise TreeError(f"not a good tree: {rep.clauses()}")
    leaves = T.leaf_list()
    meets = {}
    for a in leaves:
        for b in leaves:
            meets[a, b] = T.meet(a, b)
    triples = []
    for a in leaves:
        for b in leaves:
            ab = meets[a, b]
            for c in leaves:
                if ab == meets[a, c] and T.lt(ab, meets[b, c]):
                    triples.append((a, b, c))
    return ConcreteCSet(leaves, triples), LeafMap({a: a for a in leaves})


def cset_isomorphic(M: ConcreteCSet, N: ConcreteCSet) -> Optional[Dict[Element, Element]]:
    """Brute-force C-isomorphism by backtracking (small sets only)."""
    if len(M) != len(N) or len(M.triples) != len(N.triples):
        return None
    A, B = list(M.elements), list(N.elements)
    mapping: Dict[Element, Element] = {}
    used = set()

    def consistent(k: int) -> bool:
        a = A[k]
        done = A[:k + 1]
        for x, y, z in itertools.product(done, repeat=3):
            if a in (x, y, z) and M.C(x, y, z) != N.C(mapping[x], mapping[y], mapping[z]):
                return False
        return True

    def rec(k: int) -> bool:
        if k == len(A):
            return True
        for b in B:
            if b in used:
                continue
            mapping[A[k]] = b
            used.add(b)
            if consistent(k) and rec(k + 1):
                return True
            used.discard(b)
            del mapping[A[k]]
        return False

    return dict(mapping) if rec(0) else None


# --- cones ---------------------------------------------------------------------

def _tree_and_map(M: ConcreteCSet):
    T, lm = canonical_tree(M)
    return T, lm, lm.to_element


def cset_cone(M: ConcreteCSet, alpha, beta) -> frozenset:
    """The cone of beta at alpha^beta: {g : C(alpha, g, beta)}, read off the canonical tree."""
    if alpha == beta:
        raise CSetError("cone needs two distinct elements")
    T, lm, back = _tree_and_map(M)
    a, b = lm.to_leaf[alpha], lm.to_leaf[beta]
    x = T.meet(a, b)
    c = T.child_towards(x, b)
    return frozenset(back[l] for l in T.leaves_above(c))


def cset_thick_cone(M: ConcreteCSet, node: Sequence) -> frozenset:
    """Thick cone at the node alpha^beta given as a pair (alpha, beta)."""
    alpha, beta = node
    T, lm, back = _tree_and_map(M)
    x = T.meet(lm.to_leaf[alpha], lm.to_leaf[beta])
    return frozenset(back[l] for l in T.leaves_above(x))


def cset_pruned_cone(M: ConcreteCSet, x: Sequence, y: Sequence) -> frozenset:
    """Pruned cone at node x of node y (both given as pairs), x < y."""
    T, lm, back = _tree_and_map(M)
    nx = T.meet(lm.to_leaf[x[0]], lm.to_leaf[x[1]])
    ny = T.meet(lm.to_leaf[y[0]], lm.to_leaf[y[1]])
    if not T.lt(nx, ny):
        raise CSetError("pruned cone needs x < y")
    inside = set(T.leaves_above(T.child_towards(nx, ny))) - set(T.leaves_above(ny))
    return frozenset(back[l] for l in inside)


# --- automorphisms ---------------------------------------------------------------

def element_orbits(M: ConcreteCSet, fixed: Sequence[Element] = ()) -> List[List[Element]]:
    """Orbits of the pointwise stabilizer of ``fixed`` in Aut(M), through the canonical tree."""
    T, lm, back = _tree_and_map(M)
    return _leaf_orbits(T, [lm.to_leaf[f] for f in fixed], back)


def _leaf_orbits(T: ConcreteTree, fixed_leaves: Sequence, back: Dict) -> List[List[Element]]:
    marks = {l: i for i, l in enumerate(fixed_leaves)}
    keys = orbit_keys(T, lambda n: (n in T.leaves, marks.get(n, -1)))
    groups: Dict[tuple, List[Element]] = {}
    for l in T.leaf_list():
        groups.setdefault(keys[l], []).append(back[l])
    out = [sorted(g, key=sort_key) for g in groups.values()]
    out.sort(key=lambda g: sort_key(g[0]))
    return out


def automorphisms_bruteforce(M: ConcreteCSet) -> List[Dict[Element, Element]]:
    """Every permutation preserving C (factorial time; small sets only)."""
    els = list(M.elements)
    out = []
    for perm in itertools.permutations(els):
        f = dict(zip(els, perm))
        if all((f[a], f[b], f[c]) in M.triples for (a, b, c) in M.triples):
            out.append(f)
    return out


def is_indiscernible_finite(M: ConcreteCSet) -> bool:
    """True iff Aut(M) acts transitively on M."""
    return len(element_orbits(M)) <= 1


# --- C-minimality diagnostic ---------------------------------------------------------

@dataclass
class Generator:
    """A cone {g : C(b, g, a)} or thick cone {g : not C(g, a, b)} with parameters (a, b)."""
    kind: str
    a: Element
    b: Element

    def evaluate(self, M: ConcreteCSet) -> frozenset:
        if self.kind == "cone":
            return frozenset(g for g in M.elements if M.C(self.b, g, self.a))
        return frozenset(g for g in M.elements if not M.C(g, self.a, self.b))

    def to_json(self):
        return {"kind": self.kind, "params": [self.a, self.b]}


@dataclass
class CMinimalityReport:
    ok: bool
    checked: int
    counterexamples: List[Dict[str, Any]]
    witnesses: List[Dict[str, Any]]

    def to_json(self):
        return {"ok": self.ok, "checked": self.checked, "counterexamples": self.counterexamples,
                "witnesses": self.witnesses}


def _decompose(T: ConcreteTree, target: frozenset, x) -> List[Tuple[str, Any, Any]]:
    """Write target (a set of leaves above x) as a union of cones and thick cones."""
    above = frozenset(T.leaves_above(x))
    if above == target:
        return [("thick", x, None)]
    pieces: List[Tuple[str, Any, Any]] = []
    for c in T.children(x):
        part = frozenset(T.leaves_above(c))
        inter = part & target
        if inter == part:
            pieces.append(("cone", x, c))
        elif inter:
            pieces.extend(_decompose(T, inter, c))
    return pieces


def _generator_for(T: ConcreteTree, back: Dict, piece) -> Generator:
    kind, x, c = piece
    if kind == "thick":
        if x in T.leaves:
            return Generator("thick", back[x], back[x])
        kids = T.children(x)
        a, b = T.leaves_above(kids[0])[0], T.leaves_above(kids[1])[0]
        return Generator("thick", back[a], back[b])
    a = T.leaves_above(c)[0]
    other = next(k for k in T.children(x) if k != c)
    b = T.leaves_above(other)[0]
    return Generator("cone", back[a], back[b])


def check_c_minimal_finite(M: ConcreteCSet, max_params: int = 1) -> CMinimalityReport:
    """For each parameter set of size <= max_params, write every orbit of its
    pointwise stabilizer as a union of cones and thick cones, and re-evaluate
    each witness directly on the relation C."""
    T, lm, back = _tree_and_map(M)
    root = T.root
    counter: List[Dict[str, Any]] = []
    witnesses: List[Dict[str, Any]] = []
    checked = 0
    els = sorted(M.elements, key=sort_key)
    for k in range(0, max_params + 1):
        for params in itertools.combinations(els, k):
            fixed = [lm.to_leaf[p] for p in params]
            closure = {root} | set(fixed)
            closure |= {T.meet(a, b) for a in fixed for b in fixed}
            for orbit in _leaf_orbits(T, fixed, back):
                checked += 1
                target = frozenset(lm.to_leaf[e] for e in orbit)
                pieces = _decompose(T, target, root)
                gens = [_generator_for(T, back, p) for p in pieces]
                value = frozenset().union(*[g.evaluate(M) for g in gens]) if gens else frozenset()
                local = all(p[1] in closure for p in pieces)
                entry = {"params": list(params), "orbit": list(orbit),
                         "witness": [g.to_json() for g in gens], "local": local}
                if value != frozenset(orbit):
                    counter.append(entry)
                else:
                    witnesses.append(entry)
    return CMinimalityReport(not counter, checked, counter, witnesses)
