"""Finite C-structures: canonical partition, the tree Theta, its labeled quotient
and the label constraints that characterize quotients of actual structures.

Definable sets are replaced by automorphism orbits, which is exact for finite
structures.  Classification works on finite inputs; annotated trees are
accepted when they carry no dense stretch.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple, Union

from .core_tree import (
    INF, ConcreteTree, Interner, ValidationReport, automorphism_orbits, ext_add, ext_from_json,
    ext_str, ext_to_json, is_extcard, is_good_tree, sort_key,
)
from .cset import ConcreteCSet, canonical_tree
from .descriptor import (
    CompositeDescriptor, Descriptor, DescriptorError, as_composite, composite, format_descriptor, normalize,
    parse_descriptor, point, validate,
)
from .expand import AnnotatedTree, RecognitionError, recognize

NodeId = Any
Structure = Union[ConcreteCSet, ConcreteTree, AnnotatedTree]

U_ROLE, B_ROLE, S_ROLE, I_ROLE = "U", "B", "S", "I"


class ClassifyError(ValueError):
    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class LabelError(ValueError):
    pass


# --- inputs ----------------------------------------------------------------------------

def _as_tree(M: Structure) -> Tuple[ConcreteTree, Dict[NodeId, Any]]:
    """Canonical tree of M and the map from its leaves to the elements of M."""
    if isinstance(M, ConcreteCSet):
        T, lm = canonical_tree(M)
        return T, lm.to_element
    if isinstance(M, AnnotatedTree):
        if M.dense_mark or M.stubs:
            raise ClassifyError("annotated trees with dense stretches are not classified at finite scale")
        M = M.tree
    if isinstance(M, ConcreteTree):
        rep = is_good_tree(M)
        if not rep.ok:
            raise ClassifyError(f"not a good tree: {rep.clauses()}")
        return M, {l: l for l in M.leaves}
    raise TypeError(f"expected a C-set or a tree, got {type(M).__name__}")


# --- canonical partition ----------------------------------------------------------------

@dataclass
class CanonicalPartition:
    blocks: List[List[Any]]

    def block_of(self) -> Dict[Any, int]:
        return {x: i for i, b in enumerate(self.blocks) for x in b}

    def to_json(self):
        return {"blocks": [list(b) for b in self.blocks]}


def _leaf_blocks(T: ConcreteTree, back: Dict[NodeId, Any]) -> List[List[Any]]:
    orbits = automorphism_orbits(T, lambda n: n in T.leaves)
    blocks = [sorted((back[l] for l in o), key=sort_key) for o in orbits if o[0] in T.leaves]
    blocks.sort(key=lambda b: sort_key(b[0]))
    return blocks


def canonical_partition(M: Structure) -> CanonicalPartition:
    """Automorphism orbits on the elements, ordered by their least element."""
    T, back = _as_tree(M)
    return CanonicalPartition(_leaf_blocks(T, back))


# --- Theta -------------------------------------------------------------------------------

@dataclass
class ThetaTree:
    nodes: FrozenSet[NodeId]
    role: Dict[NodeId, FrozenSet[str]]
    has_minus_infinity: bool = False
    theta1: FrozenSet[NodeId] = frozenset()
    tree: Optional[ConcreteTree] = field(default=None, repr=False, compare=False)
    back: Dict[NodeId, Any] = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return len(self.nodes)

    def predecessor(self, x) -> Optional[NodeId]:
        """Greatest element of Theta strictly below x."""
        t = self.tree
        p = t.parent.get(x)
        while p is not None and p not in self.nodes:
            p = t.parent.get(p)
        return p

    def to_json(self):
        order = [n for n in self.tree.nodes if n in self.nodes] if self.tree else sorted(self.nodes, key=sort_key)
        return {"nodes": order, "roles": {str(n): sorted(self.role[n]) for n in order},
                "has_minus_infinity": self.has_minus_infinity}


def theta(M: Structure, P: Optional[CanonicalPartition] = None) -> ThetaTree:
    """The finite tree Theta = U u B u S u I of M."""
    T, back = _as_tree(M)
    canon = _leaf_blocks(T, back)
    if P is not None and {frozenset(b) for b in P.blocks} != {frozenset(b) for b in canon}:
        raise ClassifyError("partition is not the canonical partition", P.to_json())
    block = {x: i for i, b in enumerate(canon) for x in b}
    under: Dict[NodeId, FrozenSet[int]] = {}
    for n in sorted(T.nodes, key=T.depth, reverse=True):
        if n in T.leaves:
            under[n] = frozenset([block[back[n]]])
        else:
            under[n] = frozenset().union(*(under[c] for c in T.children(n)))
    # bases of the cones and thick cones describing the blocks: nodes whose
    # thick cone meets two blocks; the set is downward closed
    theta0 = frozenset(n for n in T.nodes if len(under[n]) >= 2)
    theta1 = frozenset(n for n in theta0 if len(under[n]) >= 2)
    up = {n: [c for c in T.children(n) if c in theta1] for n in theta1}
    U = {n for n in theta1 if not up[n]}
    B = {n for n in theta1 if len(up[n]) >= 2}
    off: Dict[NodeId, FrozenSet[int]] = {}
    for n in theta1:
        if len(up[n]) == 1:
            rest = [under[c] for c in T.children(n) if c != up[n][0]]
            off[n] = frozenset().union(*rest) if rest else frozenset()
    S = {n for n, bl in off.items() if n not in U | B and len(bl) >= 2}
    single = {n: next(iter(bl)) for n, bl in off.items() if n not in U | B | S and len(bl) == 1}
    # maximal stretches of consecutive nodes whose side part lies in one block
    I = {n for n, b in single.items() if T.parent.get(n) not in single or single[T.parent[n]] != b}
    nodes = frozenset(U | B | S | I)
    role = {n: frozenset(r for r, X in ((U_ROLE, U), (B_ROLE, B), (S_ROLE, S), (I_ROLE, I)) if n in X)
            for n in nodes}
    return ThetaTree(nodes, role, False, theta1, T, back)


# --- labeled class trees ----------------------------------------------------------------

@dataclass
class ClassVertex:
    id: str
    parent: Optional[str]
    n: int
    cones: Tuple[Tuple[CompositeDescriptor, Any], ...] = ()
    edge_label: Optional[CompositeDescriptor] = None

    @property
    def s(self) -> int:
        return len(self.cones)

    def label(self) -> tuple:
        """Vertex and incoming edge label, invariant under renaming and descriptor rewriting."""
        cones = tuple(sorted((format_descriptor(_norm(d)), ext_str(k)) for d, k in self.cones))
        edge = format_descriptor(_norm(self.edge_label)) if self.edge_label is not None else None
        return (self.n, cones, edge)

    def to_json(self):
        return {"id": self.id, "parent": self.parent, "n": self.n, "s": self.s,
                "cones": [{"descriptor": format_descriptor(d), "k": ext_to_json(k)} for d, k in self.cones],
                "edge_label": format_descriptor(self.edge_label) if self.edge_label is not None else None}


def _norm(d: Descriptor) -> CompositeDescriptor:
    d = as_composite(d)
    try:
        return normalize(d)
    except DescriptorError:
        return d


def _plain(d: CompositeDescriptor) -> CompositeDescriptor:
    return CompositeDescriptor(d.levels, False)


@dataclass
class LabeledClassTree:
    vertices: List[ClassVertex] = field(default_factory=list)

    def __post_init__(self):
        self._by = {}
        for v in self.vertices:
            if v.id in self._by:
                raise LabelError(f"duplicate vertex id {v.id!r}")
            self._by[v.id] = v
        roots = [v for v in self.vertices if v.parent is None]
        if self.vertices and len(roots) != 1:
            raise LabelError(f"a labeled tree needs exactly one root, found {len(roots)}")
        for v in self.vertices:
            if v.parent is not None and v.parent not in self._by:
                raise LabelError(f"vertex {v.id!r} has unknown parent {v.parent!r}")
            if not isinstance(v.n, int) or v.n < 1:
                raise LabelError(f"vertex {v.id!r}: n must be a positive integer")
            for d, k in v.cones:
                if not isinstance(d, CompositeDescriptor) or not is_extcard(k):
                    raise LabelError(f"vertex {v.id!r}: malformed cone label")
        if self.vertices:
            seen, stack = set(), [roots[0].id]
            while stack:
                x = stack.pop()
                seen.add(x)
                stack.extend(self.children(x))
            if len(seen) != len(self.vertices):
                raise LabelError("parent links do not form a tree")

    def __len__(self):
        return len(self.vertices)

    def __getitem__(self, vid: str) -> ClassVertex:
        return self._by[vid]

    @property
    def root(self) -> Optional[ClassVertex]:
        return next((v for v in self.vertices if v.parent is None), None)

    def children(self, vid: str) -> List[str]:
        return [v.id for v in self.vertices if v.parent == vid]

    def is_maximal(self, vid: str) -> bool:
        return not self.children(vid)

    def depth(self, vid: str) -> int:
        d, v = 0, self._by[vid]
        while v.parent is not None:
            d, v = d + 1, self._by[v.parent]
        return d

    def virtual_root(self) -> bool:
        """Whether the labels say the canonical tree has no root."""
        r = self.root
        if r is None or r.s != 0:
            return False
        kids = self.children(r.id)
        return len(kids) == 1 and self._by[kids[0]].n == 1

    def unique_branch(self, vid: str) -> bool:
        """Whether exactly one element of the unfolded tree lies immediately above each a in the vertex."""
        n = self._by[vid].n
        kids = self.children(vid)
        return len(kids) == 1 and self._by[kids[0]].n == n

    # canonical form and isomorphism
    def canonical(self, interner: Optional[Interner] = None):
        intern = interner or Interner()

        def form(vid):
            return intern((self._by[vid].label(), tuple(sorted(form(c) for c in self.children(vid)))))

        return form(self.root.id) if self.vertices else None

    def label_isomorphic(self, other: "LabeledClassTree") -> bool:
        shared = Interner()
        return self.canonical(shared) == other.canonical(shared)

    # serialization
    def to_json(self):
        return {"vertices": [v.to_json() for v in self.vertices]}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "LabeledClassTree":
        if not isinstance(data, dict) or not isinstance(data.get("vertices"), list):
            raise LabelError("labeled tree JSON needs a 'vertices' list")
        out = []
        for v in data["vertices"]:
            try:
                cones = tuple((_read_desc(c["descriptor"]), ext_from_json(c["k"])) for c in v.get("cones", []))
                edge = _read_desc(v["edge_label"]) if v.get("edge_label") is not None else None
                vx = ClassVertex(str(v["id"]), None if v.get("parent") is None else str(v["parent"]), v["n"],
                                 cones, edge)
            except (KeyError, TypeError, ValueError) as exc:
                raise LabelError(f"malformed vertex {v!r}: {exc}") from None
            if "s" in v and v["s"] != vx.s:
                raise LabelError(f"vertex {vx.id!r}: s = {v['s']} but {vx.s} cone labels given")
            out.append(vx)
        return cls(out)

    def to_dot(self, name: str = "Theta") -> str:
        lines = [f"digraph {name} {{", "  node [shape=record];"]
        for v in self.vertices:
            cones = "\\l".join(f"{format_descriptor(d)} x {ext_str(k)}" for d, k in v.cones) or "-"
            lines.append(f'  "{v.id}" [label="{{{v.id} | n = {v.n}, s = {v.s} | {cones}\\l}}"];')
        for v in self.vertices:
            if v.parent is not None:
                attr = f' [label="{format_descriptor(v.edge_label)}"]' if v.edge_label is not None else ""
                lines.append(f'  "{v.parent}" -> "{v.id}"{attr};')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _read_desc(x) -> CompositeDescriptor:
    if isinstance(x, dict):
        return CompositeDescriptor.from_json(x)
    if isinstance(x, str):
        return parse_descriptor(x)
    raise DescriptorError(f"cannot read descriptor {x!r}")


# --- Theta bar ---------------------------------------------------------------------------

def theta_bar(M: Structure, th: Optional[ThetaTree] = None) -> LabeledClassTree:
    """Quotient of Theta by the automorphisms of M, with cardinalities and cone theories."""
    if th is None:
        th = theta(M)
    if not th.nodes:
        return LabeledClassTree([])
    T = th.tree
    keys_orbits = automorphism_orbits(T, lambda n: n in T.leaves)
    orbits = [sorted(o, key=sort_key) for o in keys_orbits if o[0] in th.nodes]
    orbits.sort(key=lambda o: (T.depth(o[0]), sort_key(o[0])))
    vid = {x: f"A{i}" for i, o in enumerate(orbits) for x in o}
    cache: Dict[Any, CompositeDescriptor] = {}
    forms = _forms(T)
    vertices = []
    for i, o in enumerate(orbits):
        a = o[0]
        pred = th.predecessor(a)
        if pred is not None and T.parent[a] != pred:
            between = []
            y = T.parent[a]
            while y != pred:
                between.append(y)
                y = T.parent[y]
            raise ClassifyError("a finite tree has no dense interval to label", {"from": pred, "to": a,
                                                                                 "between": between})
        counts: Dict[CompositeDescriptor, int] = {}
        for c in T.children(a):
            if c in th.nodes or any(x in th.nodes for x in T.subtree(c)):
                continue
            d = cache.get(forms[c])
            if d is None:
                try:
                    d = recognize(AnnotatedTree.from_finite(_subtree(T, c)))
                except RecognitionError as exc:
                    raise ClassifyError(f"cone at {a} through {c} is not a colored tree: {exc}",
                                        {"base": a, "cone": c}) from None
                cache[forms[c]] = d
            counts[d] = counts.get(d, 0) + 1
        cones = tuple(sorted(counts.items(), key=lambda dk: format_descriptor(dk[0])))
        vertices.append(ClassVertex(f"A{i}", vid[pred] if pred is not None else None, len(o), cones, None))
    return LabeledClassTree(vertices)


def _forms(T: ConcreteTree) -> Dict[NodeId, int]:
    from .core_tree import subtree_forms
    return subtree_forms(T)


def _subtree(T: ConcreteTree, x) -> ConcreteTree:
    keep = T.subtree(x)
    ks = set(keep)
    return ConcreteTree(keep, {c: p for c, p in T.parent.items() if c in ks and c != x},
                        [l for l in T.leaves if l in ks])


# --- constraints ------------------------------------------------------------------------

def _cone_map(v: ClassVertex) -> Dict[CompositeDescriptor, Any]:
    out: Dict[CompositeDescriptor, Any] = {}
    for d, k in v.cones:
        nd = _norm(d)
        out[nd] = ext_add(out.get(nd, 0), k)
    return out


def _upper(sig: CompositeDescriptor, j: int) -> CompositeDescriptor:
    """Theory of the levels after the first j; the one-point tree when none are left."""
    rest = sig.levels[j:]
    return _norm(CompositeDescriptor(rest)) if rest else composite(point())


def _minus_one(k):
    return k if k == INF else k - 1


def _total(v: ClassVertex):
    t = 0
    for _, k in v.cones:
        t = ext_add(t, k)
    return t


def _geq(k, bound: int) -> bool:
    return k == INF or k >= bound


def label_automorphisms(X: LabeledClassTree) -> Iterator[Dict[str, str]]:
    """Every label-preserving automorphism, by exhaustive matching of children."""
    if not X.vertices:
        yield {}
        return

    def maps(u: str, v: str) -> Iterator[Dict[str, str]]:
        if X[u].label() != X[v].label():
            return
        cu, cv = X.children(u), X.children(v)
        if len(cu) != len(cv):
            return
        for perm in itertools.permutations(cv):
            parts: List[List[Dict[str, str]]] = []
            for a, b in zip(cu, perm):
                sub = list(maps(a, b))
                if not sub:
                    break
                parts.append(sub)
            else:
                for combo in itertools.product(*parts):
                    f = {u: v}
                    for g in combo:
                        f.update(g)
                    yield f

    r = X.root.id
    yield from maps(r, r)


def _scaled_form(X: LabeledClassTree, vid: str, intern: Interner, top: bool) -> int:
    """Subtree form where cardinalities are taken relative to vid."""
    v = X[vid]
    lab = v.label()
    rel = None if top else v.n // X[v.parent].n if v.parent is not None else v.n
    return intern(((rel,) + lab[1:], tuple(sorted(_scaled_form(X, c, intern, False) for c in X.children(vid)))))


def validate_constraints(X: LabeledClassTree, strict_9: bool = False) -> ValidationReport:
    """Check (1')..(10'); (9') is only a note unless strict_9."""
    rep = ValidationReport()
    if not X.vertices:
        return rep
    root = X.root
    virt = X.virtual_root()
    for v in X.vertices:
        p = X[v.parent] if v.parent is not None else None
        maximal = X.is_maximal(v.id)
        cones = _cone_map(v)
        # (1') divisibility and a singleton root
        if p is None and v.n != 1:
            rep.add("1'", v.id, f"root has n = {v.n}")
        if p is not None and v.n % p.n:
            rep.add("1'", v.id, f"n = {v.n} is not a multiple of n = {p.n} below it")
        # (2') maximal vertices are leaves or carry at least two cones
        if maximal and v.s and not _geq(_total(v), 2):
            rep.add("2'", v.id, "a maximal vertex with cone labels needs at least two cones")
        # (3') no root in the canonical tree: the first edge is labeled
        if virt and p is root and v.edge_label is None:
            rep.add("3'", v.id, "the edge above a missing root needs a theory")
        # (4') a unique branch needs a cone label
        if X.unique_branch(v.id) and not (virt and p is None) and v.s < 1:
            rep.add("4'", v.id, "unique branch through the vertex but no cone label")
        # (5') edge labels are branch-variant colored theories
        if v.edge_label is not None:
            if p is None:
                rep.add("5'", v.id, "the root has no incoming edge to label")
            elif not v.edge_label.branch_variant or not validate(v.edge_label).ok:
                rep.add("5'", v.id, f"edge label {format_descriptor(v.edge_label)} is not a branch-variant theory")
        # (6') at most one infinite multiplicity; labels are distinct colored theories
        if sum(1 for _, k in v.cones if k == INF) > 1:
            rep.add("6'", v.id, "more than one infinite multiplicity")
        seen = set()
        for d, k in v.cones:
            if d.branch_variant or not validate(d).ok:
                rep.add("6'", v.id, f"cone label {format_descriptor(d)} is not a colored theory")
            elif _norm(d) in seen:
                rep.add("6'", v.id, f"cone label {format_descriptor(d)} repeated")
            seen.add(_norm(d) if validate(d).ok else d)
            if not (k == INF or (isinstance(k, int) and k >= 1)):
                rep.add("6'", v.id, f"multiplicity {k!r} is not a positive cardinal")
        # (7') a maximal vertex reached by an empty interval has two cone theories;
        # a lone root too, otherwise the structure is indiscernible
        if maximal and v.edge_label is None and v.s < 2:
            rep.add("7'", v.id, "maximal vertex needs at least two distinct cone theories")
        sig = _plain(_norm(v.edge_label)) if v.edge_label is not None and validate(v.edge_label).ok else None
        if sig is None or p is None:
            continue
        lv = sig.levels
        m1, mu1 = lv[0].m, lv[0].mu
        n = len(lv)
        # (8') the thick cone at a must not make the pruned cone grow
        if maximal:
            pats = []
            if m1 == 0 and n >= 2:
                pats.append(("a", {_upper(sig, 2): lv[1].m}))
            if m1 == 0:
                pats.append(("b", {sig: mu1}))
            if m1 != 0 and mu1 != 0:
                pats.append(("c", {sig: mu1, _upper(sig, 1): m1}))
            for name, want in pats:
                if cones == want:
                    rep.add("8'", v.id, f"pattern ({name}): the cones at the vertex extend the interval theory")
        # (9') the next interval continues the same theory through the vertex
        else:
            same = [c for c in X.children(v.id) if X[c].edge_label is not None
                    and _plain(_norm(X[c].edge_label)) == sig]
            hit = None
            if same:
                up = _upper(sig, 1)
                if (m1 != 0 and _geq(m1, 1) and _geq(mu1, 2) and v.s == 2
                        and cones.get(sig) == _minus_one(mu1) and up in cones):
                    hit = "first"
                elif m1 == 0 and v.s == 1 and cones == {sig: mu1}:
                    hit = "second"
                elif mu1 == 1 and v.s == 1 and cones == {up: m1}:
                    hit = "third"
            if hit:
                msg = f"{hit} pattern: the interval to {same[0]} continues the theory through the vertex"
                (rep.add if strict_9 else rep.note)("9'", v.id, msg)
    # (10') rigidity
    autos = label_automorphisms(X)
    for f in autos:
        if any(a != b for a, b in f.items()):
            rep.add("10'", {a: b for a, b in f.items() if a != b}, "nontrivial automorphism of the labeled tree")
            break
    else:
        intern = Interner()
        for v in X.vertices:
            kids = X.children(v.id)
            for b, c in itertools.combinations(kids, 2):
                if _scaled_form(X, b, intern, True) == _scaled_form(X, c, intern, True):
                    rep.add("10'", [b, c], "sibling subtrees agree up to cardinality and would form one orbit")
    return rep


# --- enumeration ------------------------------------------------------------------------

def _shapes(size: int) -> List[List[Optional[int]]]:
    """Rooted tree shapes with size vertices as parent arrays, one per isomorphism class."""
    seen, out = set(), []
    for par in itertools.product(*[range(i) for i in range(1, size)]):
        parents = [None, *par]

        def form(i):
            return tuple(sorted(form(j) for j in range(size) if parents[j] == i))

        f = form(0)
        if f not in seen:
            seen.add(f)
            out.append(parents)
    return out


def _label_sets(pool: Sequence[CompositeDescriptor], ks: Sequence[Any], min_s: int):
    for s in range(min_s, len(pool) + 1):
        for ds in itertools.combinations(pool, s):
            for kk in itertools.product(ks, repeat=s):
                yield tuple(zip(ds, kk))


def enumerate_labeled_trees(pool: Sequence[CompositeDescriptor], multiplicities: Sequence[Any], max_n: int,
                            vertices: int, validated: bool = True,
                            interner: Optional[Interner] = None) -> Iterator[LabeledClassTree]:
    """All labeled trees with exactly the given number of vertices, cone theories from pool,
    multiplicities from the given list and cardinalities at most max_n, one per label
    isomorphism class.  Labels that cannot pass (2'), (4') or (7') are not generated."""
    intern = interner or Interner()
    seen = set()
    for parents in _shapes(vertices):
        kids = {i: [j for j in range(vertices) if parents[j] == i] for i in range(vertices)}

        def cards(i, acc):
            if i == vertices:
                yield acc
                return
            choices = [1] if parents[i] is None else range(acc[parents[i]], max_n + 1, acc[parents[i]])
            for c in choices:
                yield from cards(i + 1, acc + [c])

        for ns in cards(0, []):
            menus = []
            for i in range(vertices):
                if not kids[i]:
                    low = 2
                elif len(kids[i]) == 1 and ns[kids[i][0]] == ns[i]:
                    low = 1
                else:
                    low = 0
                menus.append(list(_label_sets(pool, multiplicities, low)))
            for labs in itertools.product(*menus):
                X = LabeledClassTree([ClassVertex(f"v{i}", None if parents[i] is None else f"v{parents[i]}", ns[i],
                                                  labs[i]) for i in range(vertices)])
                key = X.canonical(intern)
                if key in seen:
                    continue
                seen.add(key)
                if not validated or validate_constraints(X).ok:
                    yield X
