"""Budgeted finite approximations of colored good trees.

Dense stretches are realized as short chains of nodes tagged dense; infinite
multiplicities are realized as ``width`` copies while the declared count is
kept in the annotations.  Recognition reads the tags and declared counts,
never the realized chain lengths.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

from .core_tree import (
    ColorPair, ConcreteTree, TreeError, ValidationReport, ext_add, ext_from_json, ext_to_json,
    is_good_tree, realized, sort_key,
)
from .descriptor import (
    T0, T00, T1A, T1B, CompositeDescriptor, Descriptor, DescriptorError, OneColoredDescriptor, as_composite,
    normalize, point, validate,
)

BORDER, INNER = "border", "inner"
NodeId = Any


class BudgetError(ValueError):
    pass


class ExpansionError(ValueError):
    pass


class RecognitionError(ValueError):
    def __init__(self, clause: str, detail: str = "", witness=None):
        super().__init__(f"{clause}: {detail}" if detail else clause)
        self.clause = clause
        self.witness = witness


@dataclass(frozen=True)
class Budget:
    dense_depth: int = 2
    width: int = 2
    node_cap: int = 2000

    def __post_init__(self):
        for name in ("dense_depth", "width", "node_cap"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise BudgetError(f"budget {name} must be a positive integer, got {v!r}")

    @classmethod
    def parse(cls, text: str) -> "Budget":
        parts = text.split(",")
        if len(parts) != 3:
            raise BudgetError(f"budget must be d,w,cap; got {text!r}")
        try:
            return cls(*(int(p) for p in parts))
        except ValueError:
            raise BudgetError(f"budget must be three integers; got {text!r}") from None

    def to_json(self):
        return [self.dense_depth, self.width, self.node_cap]


# --- annotated trees ----------------------------------------------------------------

@dataclass
class AnnotatedTree:
    """A finite tree with the declared structure of the model it approximates.

    cone_kind, cone_class are keyed by child: in a finite realization each
    child names one cone at its parent.  class_count[x][label] is the declared
    number of cones of that class at x (possibly infinite).
    """
    tree: ConcreteTree
    node_color: Dict[NodeId, ColorPair]
    cone_kind: Dict[NodeId, str]
    dense_mark: FrozenSet[NodeId] = frozenset()
    level_mark: Dict[NodeId, int] = field(default_factory=dict)
    cone_class: Dict[NodeId, str] = field(default_factory=dict)
    class_count: Dict[NodeId, Dict[str, Any]] = field(default_factory=dict)
    stubs: FrozenSet[NodeId] = frozenset()
    layers: Tuple[FrozenSet[NodeId], ...] = ()
    v_branch: FrozenSet[NodeId] = frozenset()
    colored: bool = True
    width: Optional[int] = None
    _regions: Optional[Dict[NodeId, int]] = field(default=None, repr=False, compare=False)
    _colors: Dict[NodeId, ColorPair] = field(default_factory=dict, repr=False, compare=False)

    # basic reads
    @property
    def nodes(self):
        return self.tree.nodes

    def __len__(self):
        return len(self.tree)

    def genuine_leaves(self) -> List[NodeId]:
        return [n for n in self.tree.nodes if n in self.tree.leaves and n not in self.stubs]

    def is_inner_node(self, x) -> bool:
        return x not in self.tree.leaves

    def predecessor(self, x) -> Optional[NodeId]:
        """Immediate predecessor in the intended model: defined across border edges only."""
        p = self.tree.parent.get(x)
        if p is None or self.cone_kind.get(x) != BORDER:
            return None
        return p

    def is_isolated(self, leaf) -> bool:
        return self.cone_kind.get(leaf) == BORDER and leaf in self.tree.parent

    def classes_at(self, x) -> Dict[str, List[NodeId]]:
        out: Dict[str, List[NodeId]] = {}
        for c in self.tree.children(x):
            out.setdefault(self.cone_class.get(c, str(c)), []).append(c)
        return out

    def declared_bcolor(self, x) -> ColorPair:
        """(thick cones, non-thick cones) at x from declared class counts and edge kinds."""
        m, mu = 0, 0
        for label, kids in self.classes_at(x).items():
            k = self.class_count.get(x, {}).get(label, len(kids))
            if self.cone_kind.get(kids[0]) == BORDER:
                m = ext_add(m, k)
            else:
                mu = ext_add(mu, k)
        return ColorPair(m, mu)

    def region_labels(self) -> Dict[NodeId, int]:
        """Tree-type classes of dense nodes.

        Start from the declared branching color and split by the true color
        computed against the current classes until nothing changes; adjacent
        dense nodes with equal labels lie in one dense stretch.
        """
        if self._regions is None:
            dense = [n for n in self.tree.nodes if n in self.dense_mark]
            lab = _intern_labels(dense, {x: self.node_color.get(x) for x in dense})
            while True:
                new = _intern_labels(dense, {x: (lab[x], _true_color(self, x, lab)) for x in dense})
                if len(set(new.values())) == len(set(lab.values())):
                    break
                lab = new
            self._regions = lab
        return self._regions

    def same_region(self, x, c) -> bool:
        if x not in self.dense_mark or c not in self.dense_mark or self.cone_kind.get(c) != INNER:
            return False
        lab = self.region_labels()
        return lab[x] == lab[c]

    def layer_e(self, i: int, x) -> Optional[NodeId]:
        """e_i(x): the greatest element of E_i on the branch of x, when there is one."""
        E = self.layers[i]
        for y in reversed(self.tree.ancestors(x)):
            if y in E:
                return y
        return None

    def v_meet(self, x) -> Optional[NodeId]:
        """x ^ V: the greatest element of the branch V below or equal to x."""
        if not self.v_branch:
            return None
        for y in reversed(self.tree.ancestors(x)):
            if y in self.v_branch:
                return y
        return None

    # construction helpers
    @classmethod
    def from_finite(cls, tree: ConcreteTree) -> "AnnotatedTree":
        """Read a plain finite tree: every cone is a thick cone, counts are the realized ones."""
        color = {}
        for n in tree.nodes:
            if n not in tree.leaves:
                color[n] = ColorPair(len(tree.children(n)), 0)
        kind = {n: BORDER for n in tree.nodes if n in tree.parent}
        return cls(tree, color, kind, frozenset(), {n: 1 for n in tree.nodes}, {}, {}, frozenset(), (),
                   frozenset(), colored=False, width=None)

    def relabel(self, mapping: Dict[NodeId, NodeId], order: Optional[Sequence[NodeId]] = None) -> "AnnotatedTree":
        t = self.tree
        nodes = [mapping[n] for n in (order if order is not None else t.nodes)]
        tree = ConcreteTree(nodes, {mapping[c]: mapping[p] for c, p in t.parent.items()},
                            [mapping[l] for l in t.leaves], t.has_virtual_root)
        m = lambda d: {mapping[k]: v for k, v in d.items()}
        return AnnotatedTree(tree, m(self.node_color), m(self.cone_kind), frozenset(mapping[n] for n in self.dense_mark),
                             m(self.level_mark), m(self.cone_class), {mapping[k]: dict(v) for k, v in self.class_count.items()},
                             frozenset(mapping[n] for n in self.stubs),
                             tuple(frozenset(mapping[n] for n in E) for E in self.layers),
                             frozenset(mapping[n] for n in self.v_branch), self.colored, self.width)

    def subtree_at(self, x) -> "AnnotatedTree":
        """The thick cone at x with the annotations restricted to it."""
        keep = self.tree.subtree(x)
        ks = set(keep)
        tree = ConcreteTree(keep, {c: p for c, p in self.tree.parent.items() if c in ks and c != x},
                            [l for l in self.tree.leaves if l in ks])
        r = lambda d: {k: v for k, v in d.items() if k in ks}
        kind = r(self.cone_kind)
        kind.pop(x, None)
        cls_ = r(self.cone_class)
        cls_.pop(x, None)
        return AnnotatedTree(tree, r(self.node_color), kind, self.dense_mark & ks, r(self.level_mark), cls_,
                             {k: dict(v) for k, v in self.class_count.items() if k in ks}, self.stubs & ks,
                             tuple(E & ks for E in self.layers), self.v_branch & ks, self.colored, self.width)

    # checks
    def check(self) -> ValidationReport:
        """Structural invariants of the annotations."""
        rep = is_good_tree(self.tree)
        t = self.tree
        for n in t.nodes:
            if n in t.leaves:
                continue
            if n not in self.node_color:
                rep.add("node color", n, "node without a color")
            for label, kids in self.classes_at(n).items():
                kinds = {self.cone_kind.get(c) for c in kids}
                if len(kinds) != 1:
                    rep.add("cone class", n, f"class {label} mixes cone kinds")
                k = self.class_count.get(n, {}).get(label, len(kids))
                if self.width is not None:
                    if len(kids) != realized(k, self.width):
                        rep.add("realized count", n, f"class {label}: {len(kids)} realized for declared {k}")
                elif len(kids) > k:
                    rep.add("realized count", n, f"class {label}: {len(kids)} realized for declared {k}")
        for c, k in self.cone_kind.items():
            if k == BORDER and c in self.dense_mark:
                rep.add("border cone", c, "border cone entering a dense stretch")
        for s in self.stubs:
            if s not in t.leaves:
                rep.add("stub", s, "stub with successors")
        return rep

    # serialization
    def to_json(self) -> Dict[str, Any]:
        t = self.tree
        d = t.to_json()
        d["node_color"] = {str(k): v.to_json() for k, v in self.node_color.items()}
        d["cone_kind"] = {str(k): v for k, v in self.cone_kind.items()}
        d["dense_mark"] = [n for n in t.nodes if n in self.dense_mark]
        d["level_mark"] = {str(k): v for k, v in self.level_mark.items()}
        d["cone_class"] = {str(k): v for k, v in self.cone_class.items()}
        d["class_count"] = {str(k): {l: ext_to_json(c) for l, c in v.items()} for k, v in self.class_count.items()}
        d["stubs"] = [n for n in t.nodes if n in self.stubs]
        d["layers"] = [[n for n in t.nodes if n in E] for E in self.layers]
        d["v_branch"] = [n for n in t.nodes if n in self.v_branch]
        d["colored"] = self.colored
        d["width"] = self.width
        return d

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "AnnotatedTree":
        tree = ConcreteTree.from_json(data)
        if "node_color" not in data:
            return cls.from_finite(tree)
        by_str = {str(n): n for n in tree.nodes}

        def keyed(d):
            try:
                return {by_str[k]: v for k, v in d.items()}
            except KeyError as exc:
                raise TreeError(f"annotation mentions unknown node {exc}") from None

        try:
            return cls(
                tree,
                {k: ColorPair.from_json(v) for k, v in keyed(data["node_color"]).items()},
                keyed(data.get("cone_kind", {})),
                frozenset(data.get("dense_mark", [])),
                keyed(data.get("level_mark", {})),
                keyed(data.get("cone_class", {})),
                {k: {l: ext_from_json(c) for l, c in v.items()} for k, v in keyed(data.get("class_count", {})).items()},
                frozenset(data.get("stubs", [])),
                tuple(frozenset(E) for E in data.get("layers", [])),
                frozenset(data.get("v_branch", [])),
                bool(data.get("colored", True)),
                data.get("width"),
            )
        except (TypeError, ValueError) as exc:
            raise TreeError(f"malformed annotated tree: {exc}") from None

    def to_dot(self, name: str = "T") -> str:
        palette = ["black", "blue", "red", "darkgreen", "purple", "orange", "brown"]

        def node_attrs(n):
            a = {"color": palette[(self.level_mark.get(n, 1) - 1) % len(palette)]}
            if n in self.tree.leaves and n not in self.stubs:
                a["fillcolor"] = a["color"]
            if n in self.stubs:
                a.update(shape="point", style="dotted")
            if n in self.node_color and self.colored:
                a["xlabel"] = f"{n} {self.node_color[n]}"
            return a

        def edge_attrs(p, c):
            if self.same_region(p, c):
                return {"color": "black:black"}
            if self.cone_kind.get(c) == INNER:
                return {"style": "dashed"}
            return {}

        return self.tree.to_dot(name, node_attrs, edge_attrs)


# --- building ----------------------------------------------------------------------

class _Builder:
    def __init__(self, width: int):
        self.width = width
        self.nodes: List[int] = []
        self.parent: Dict[int, int] = {}
        self.leaves: set = set()
        self.color: Dict[int, ColorPair] = {}
        self.kind: Dict[int, str] = {}
        self.dense: set = set()
        self.level: Dict[int, int] = {}
        self.cls: Dict[int, str] = {}
        self.count: Dict[int, Dict[str, Any]] = {}
        self.stubs: set = set()

    def add(self, parent=None, kind=None, label=None, leaf=False, level=1) -> int:
        n = len(self.nodes)
        self.nodes.append(n)
        if parent is not None:
            self.parent[n] = parent
            self.kind[n] = kind
            self.cls[n] = label
        if leaf:
            self.leaves.add(n)
        self.level[n] = level
        return n

    def finish(self, virtual_root: bool, layers=(), colored=True) -> AnnotatedTree:
        tree = ConcreteTree(self.nodes, self.parent, self.leaves, virtual_root)
        return AnnotatedTree(tree, self.color, self.kind, frozenset(self.dense), self.level, self.cls, self.count,
                             frozenset(self.stubs), tuple(layers), frozenset(), colored, self.width)


def _level_sizes(l: OneColoredDescriptor, b: Budget) -> Tuple[int, int]:
    """(elements, genuine leaves) of the realization of one level."""
    w, D = b.width, b.dense_depth
    if l.kind == T00:
        return 1, 1
    if l.kind == T0:
        r = realized(l.m, w)
        return 1 + r, r
    if l.kind == T1A:
        r = realized(l.mu, w)
        dense = sum(r ** d for d in range(D))
        return dense + r ** D, r ** D
    rm, ru = realized(l.m, w), realized(l.mu, w)
    dense = sum(ru ** d for d in range(D))
    return dense * (1 + rm) + ru ** D, dense * rm


def predicted_size(d: Descriptor, b: Budget) -> int:
    d = as_composite(d)
    size, leaves = _level_sizes(d.levels[0], b)
    for l in d.levels[1:]:
        s0, l0 = _level_sizes(l, b)
        size, leaves = size - leaves + leaves * s0, leaves * l0
    return size


def expand_level(l: OneColoredDescriptor, b: Budget) -> AnnotatedTree:
    """Realize one 1-colored level (unshuffled)."""
    w, D = b.width, b.dense_depth
    bd = _Builder(w)
    if l.kind == T00:
        bd.add(leaf=True)
        return bd.finish(False)
    if l.kind == T0:
        r = bd.add()
        bd.color[r] = ColorPair(l.m, 0)
        bd.count[r] = {"leaf": l.m}
        for _ in range(realized(l.m, w)):
            bd.add(r, BORDER, "leaf", leaf=True)
        return bd.finish(False)
    color = ColorPair(l.m, l.mu)
    base = bd.add()
    frontier = [base]
    for depth in range(D):
        nxt = []
        for x in frontier:
            bd.dense.add(x)
            bd.color[x] = color
            bd.count[x] = {}
            if l.kind == T1B:
                bd.count[x]["leaf"] = l.m
                for _ in range(realized(l.m, w)):
                    bd.add(x, BORDER, "leaf", leaf=True)
            bd.count[x]["inner"] = l.mu
            last = depth == D - 1
            for _ in range(realized(l.mu, w)):
                if last:
                    c = bd.add(x, INNER, "inner", leaf=True)
                    if l.kind == T1B:
                        bd.stubs.add(c)
                else:
                    nxt.append(bd.add(x, INNER, "inner"))
        frontier = nxt
    return bd.finish(True)


def _seeded_relabel(at: AnnotatedTree, seed) -> AnnotatedTree:
    """Order every child list by a hash of (seed, path) and renumber in preorder."""
    t = at.tree
    order: List[NodeId] = []
    stack = [(t.root, "")]
    while stack:
        x, path = stack.pop()
        order.append(x)
        tagged = [(c, f"{path}.{i}") for i, c in enumerate(t.children(x))]
        tagged.sort(key=lambda cp: hashlib.blake2b(f"{seed}:{cp[1]}".encode(), digest_size=8).digest())
        stack.extend(reversed(tagged))
    mapping = {x: i for i, x in enumerate(order)}
    return at.relabel(mapping, order)


def _mark_v(at: AnnotatedTree) -> AnnotatedTree:
    """Pick a leafless chain through the first level: follow inner cones from the base."""
    t = at.tree
    x = t.root
    chain = []
    while x is not None and x in at.dense_mark and at.level_mark.get(x) == 1:
        chain.append(x)
        nxt = [c for c in t.children(x) if at.cone_kind.get(c) == INNER and at.same_region(x, c)
               and at.level_mark.get(c) == 1]
        x = min(nxt, key=sort_key) if nxt else None
    at.v_branch = frozenset(chain)
    return at


def expand(d: Descriptor, b: Budget, seed=0) -> AnnotatedTree:
    """Finite approximation of the model named by d, deterministic in seed."""
    d = as_composite(d)
    rep = validate(d)
    if not rep.ok:
        raise DescriptorError(f"invalid descriptor {d}: {rep.clauses()}")
    size = predicted_size(d, b)
    if size > b.node_cap:
        raise BudgetError(f"expansion of {d} needs {size} elements, node_cap is {b.node_cap}")
    at = expand_level(d.levels[0], b)
    for l in d.levels[1:]:
        at, _ = extend_tree(at, expand_level(l, b))
    if d.branch_variant:
        at = _mark_v(at)
    return _seeded_relabel(at, seed)


# --- extension T x| T0 ---------------------------------------------------------------

@dataclass
class ExtensionWitness:
    sigma: Dict[NodeId, NodeId]
    rho: Dict[NodeId, NodeId]
    tau: Dict[NodeId, Dict[NodeId, NodeId]]
    E: FrozenSet[NodeId]
    E_geq: FrozenSet[NodeId]
    e: Dict[NodeId, NodeId]
    rooted: bool

    def to_json(self):
        return {"sigma": [[k, v] for k, v in self.sigma.items()], "rho": [[k, v] for k, v in self.rho.items()],
                "E": sorted(self.E, key=sort_key), "E_geq": sorted(self.E_geq, key=sort_key),
                "e": [[k, v] for k, v in self.e.items()], "rooted": self.rooted}


def _gap_below(chain: Sequence[NodeId], S) -> Optional[NodeId]:
    """For a root-to-z chain with z in S: an element of S below a non-member, if any."""
    seen_out = None
    for y in reversed(chain):
        if y not in S:
            seen_out = y
        elif seen_out is not None:
            return seen_out
    return None


CLAUSE_STAR = "condition (*)"
CLAUSE_STAR2 = "condition (**)"
CLAUSE_STAR3 = "condition (***)"


def extension_conditions(T: AnnotatedTree, T0: AnnotatedTree) -> ValidationReport:
    rep = ValidationReport()
    leaves = T.genuine_leaves()
    if len(T) == 1 or len(T0) == 1:
        rep.add("not a singleton", None, "extension needs two non-singleton trees")
        return rep
    iso = [l for l in leaves if T.is_isolated(l)]
    if iso and len(iso) != len(leaves):
        rep.add(CLAUSE_STAR, None, "leaves are partly isolated")
        return rep
    rooted0 = T0.tree.root not in T0.dense_mark
    if not iso and not rooted0:
        rep.add(CLAUSE_STAR2, None, "non-isolated leaves need a rooted extension")
    if iso:
        P = {T.tree.parent[l] for l in leaves}
        for z in sorted(P, key=sort_key):
            bad = _gap_below(T.tree.ancestors(z), P)
            if bad is not None:
                rep.add(CLAUSE_STAR3, (bad, z), "p(L) is not convex")
    return rep


def extend_tree(T: AnnotatedTree, T0: AnnotatedTree) -> Tuple[AnnotatedTree, ExtensionWitness]:
    """Replace every genuine leaf of T by a copy of the 1-colored tree T0."""
    rep = extension_conditions(T, T0)
    if not rep.ok:
        raise ExpansionError(f"extension refused: {rep.clauses()}")
    t, t0 = T.tree, T0.tree
    leaves = T.genuine_leaves()
    leaf_set = set(leaves)
    rooted = t0.root not in T0.dense_mark
    new_level = max(T.level_mark.values(), default=1) + 1
    r0 = t0.root

    nodes: List[NodeId] = [n for n in t.nodes if n not in leaf_set]
    parent = {c: p for c, p in t.parent.items() if c not in leaf_set}
    leaf_marks = set(l for l in t.leaves if l not in leaf_set)
    color = dict(T.node_color)
    kind = {c: k for c, k in T.cone_kind.items() if c not in leaf_set}
    cls_ = {c: k for c, k in T.cone_class.items() if c not in leaf_set}
    count = {k: dict(v) for k, v in T.class_count.items()}
    dense = set(T.dense_mark)
    level = {n: v for n, v in T.level_mark.items() if n not in leaf_set}
    stubs = set(T.stubs)

    next_id = [max((n for n in t.nodes if isinstance(n, int)), default=-1) + 1]

    def fresh():
        v = next_id[0]
        next_id[0] += 1
        return v

    sigma = {n: n for n in nodes}
    rho: Dict[NodeId, NodeId] = {}
    tau: Dict[NodeId, Dict[NodeId, NodeId]] = {}
    E: set = set()
    e: Dict[NodeId, NodeId] = {}
    old_bcolor = {p: T.declared_bcolor(p) for p in {t.parent[l] for l in leaves}} if not rooted else {}

    for a in leaves:
        pa = t.parent[a]
        cp = {x: fresh() for x in t0.nodes}
        tau[a] = cp
        for x in t0.nodes:
            nodes.append(cp[x])
            level[cp[x]] = new_level
            if x in t0.leaves:
                leaf_marks.add(cp[x])
            if x in T0.node_color:
                color[cp[x]] = T0.node_color[x]
            if x in T0.class_count:
                count[cp[x]] = dict(T0.class_count[x])
            if x in T0.dense_mark:
                dense.add(cp[x])
            if x in T0.stubs:
                stubs.add(cp[x])
            if x in t0.parent:
                parent[cp[x]] = cp[t0.parent[x]]
                kind[cp[x]] = T0.cone_kind[x]
                cls_[cp[x]] = T0.cone_class[x]
        parent[cp[r0]] = pa
        cls_[cp[r0]] = T.cone_class.get(a)
        if rooted:
            kind[cp[r0]] = T.cone_kind[a]
            rho[a] = cp[r0]
            E.add(cp[r0])
        else:
            kind[cp[r0]] = INNER
            rho[a] = pa
            E.add(pa)
        for x in t0.nodes:
            e[cp[x]] = rho[a]

    if not rooted:
        root_color = T0.node_color[r0]
        for p in sorted(E, key=sort_key):
            m_, mu_ = old_bcolor[p]
            new = ColorPair(0, ext_add(m_, mu_))
            color[p] = new
            for c in list(t.children(p)):
                if c in kind and c not in leaf_set:
                    kind[c] = INNER
            e[p] = p
        for p in sorted(E, key=lambda n: t.depth(n)):
            q = t.parent.get(p)
            if p in dense or q is None:
                continue
            if q in dense and color.get(q) == color[p] and T.cone_kind.get(p) == INNER and root_color == color[p]:
                dense.add(p)
    # carry earlier layers
    layers = tuple(frozenset(x for x in L if x not in leaf_set) for L in T.layers) + (frozenset(E),)
    tree = ConcreteTree(nodes, parent, leaf_marks, t.has_virtual_root)
    out = AnnotatedTree(tree, color, kind, frozenset(dense), level, cls_, count, frozenset(stubs), layers,
                        frozenset(T.v_branch), True, T.width if T.width is not None else T0.width)
    E_geq = frozenset(x for x in tree.nodes if any(a in E for a in tree.ancestors(x)))
    for x in E_geq:
        if x not in e:
            e[x] = max((a for a in tree.ancestors(x) if a in E), key=tree.depth)
    return out, ExtensionWitness(sigma, rho, tau, frozenset(E), E_geq, e, rooted)


def check_sigma2(at: AnnotatedTree, w: ExtensionWitness) -> ValidationReport:
    """E convex, Dom(e) = E_>=, e(x) <= x and e(x) = max(E on br(x))."""
    rep = ValidationReport()
    t = at.tree
    E = w.E
    for z in sorted(E, key=sort_key):
        bad = _gap_below(t.ancestors(z), E)
        if bad is not None:
            rep.add("E convex", (bad, z))
    if set(w.e) != set(w.E_geq):
        rep.add("Dom(e) = E_>=", sorted(set(w.e) ^ set(w.E_geq), key=sort_key)[:3])
    for x, v in w.e.items():
        if not t.le(v, x):
            rep.add("e(x) <= x", x)
        on_branch = [y for y in t.ancestors(x) if y in E]
        if not on_branch or max(on_branch, key=t.depth) != v:
            rep.add("e(x) greatest in E on br(x)", x)
    return rep


def check_bcolor_table(T: AnnotatedTree, T0: AnnotatedTree, at: AnnotatedTree, w: ExtensionWitness) -> ValidationReport:
    """The four-case branching-color table of an extension, at every node."""
    rep = ValidationReport()
    t = at.tree
    root_color = T0.declared_bcolor(T0.tree.root)
    inner0 = [n for n in T0.tree.nodes if n not in T0.tree.leaves]
    for x in t.nodes:
        if x in t.leaves:
            continue
        actual = at.declared_bcolor(x)
        if x not in w.E_geq:
            want = T.declared_bcolor(x)
            case = "E<"
        elif x in w.E:
            case = "E"
            if w.rooted:
                want = root_color
            else:
                old = T.declared_bcolor(x)
                want = ColorPair(0, ext_add(old.m, old.mu))
        else:
            case = "E>"
            want = T0.declared_bcolor(inner0[0])
        if actual != want:
            rep.add(f"b-color {case}", x, f"{actual} != {want}")
        if at.node_color.get(x) != want:
            rep.add(f"declared color {case}", x, f"{at.node_color.get(x)} != {want}")
    return rep


def quotient_sim(at: AnnotatedTree, w: ExtensionWitness) -> Tuple[AnnotatedTree, Dict[NodeId, NodeId]]:
    """Collapse each copy of the extension back to a single leaf."""
    t = at.tree
    proj: Dict[NodeId, NodeId] = {}
    cls_rep: Dict[NodeId, NodeId] = {}
    for a, cp in w.tau.items():
        members = set(cp.values())
        base = min(members, key=t.depth)
        if not w.rooted and t.parent.get(base) != w.rho[a]:
            raise ExpansionError(f"witness inconsistent at {a!r}")
        if w.rooted and base != w.rho[a]:
            raise ExpansionError(f"witness inconsistent at {a!r}")
        if set(t.subtree(base)) != members:
            raise ExpansionError(f"copy of {a!r} is not a cone")
        cls_rep[a] = base
        for m in members:
            proj[m] = base
    for n in t.nodes:
        proj.setdefault(n, n)
    keep = [n for n in t.nodes if proj[n] == n]
    reps = set(cls_rep.values())
    tree = ConcreteTree(keep, {c: p for c, p in t.parent.items() if c in set(keep)},
                        [n for n in keep if n in t.leaves or n in reps], t.has_virtual_root)
    ks = set(keep)
    q = AnnotatedTree(tree, {k: v for k, v in at.node_color.items() if k in ks and k not in reps},
                      {k: v for k, v in at.cone_kind.items() if k in ks}, at.dense_mark & ks - reps,
                      {k: v for k, v in at.level_mark.items() if k in ks},
                      {k: v for k, v in at.cone_class.items() if k in ks},
                      {k: dict(v) for k, v in at.class_count.items() if k in ks and k not in reps},
                      at.stubs & ks, tuple(L & ks - reps for L in at.layers[:-1]), at.v_branch & ks,
                      at.colored, at.width)
    return q, proj


# --- branch decomposition and recognition ----------------------------------------------

SINGLETON, OPEN_OPEN, OPEN_CLOSED = "singleton", "open-open", "open-closed"


@dataclass(frozen=True)
class Interval:
    nodes: Tuple[NodeId, ...]
    lower: Optional[NodeId]
    upper: Optional[NodeId]
    form: str
    color: ColorPair

    def level(self) -> OneColoredDescriptor:
        if self.form == SINGLETON:
            return OneColoredDescriptor(T0, ext_add(self.color.m, self.color.mu), 0)
        kind = T1A if self.form == OPEN_OPEN else T1B
        return OneColoredDescriptor(kind, self.color.m, self.color.mu)

    def to_json(self):
        return {"nodes": list(self.nodes), "lower": self.lower, "upper": self.upper, "form": self.form,
                "color": self.color.to_json(), "level": self.level().to_json()}


def _intern_labels(order: Sequence[NodeId], vals: Dict[NodeId, Any]) -> Dict[NodeId, int]:
    ids: Dict[Any, int] = {}
    return {x: ids.setdefault(vals[x], len(ids)) for x in order}


def true_color(at: AnnotatedTree, x) -> ColorPair:
    """Border and inner cone counts at x in the intended model.

    A cone continuing x's dense stretch (or ending in leaves, stubs or
    undecorated points through an inner edge) is inner; a thick cone, or one
    entering another dense stretch, is border.  An isolated point has only
    border cones.
    """
    got = at._colors.get(x)
    if got is None:
        got = at._colors[x] = _true_color(at, x, at.region_labels() if x in at.dense_mark else None)
    return got


def _true_color(at: AnnotatedTree, x, lab) -> ColorPair:
    counts = at.class_count.get(x, {})
    if x not in at.dense_mark:
        total = 0
        for label, kids in at.classes_at(x).items():
            total = ext_add(total, counts.get(label, len(kids)))
        return ColorPair(total, 0)
    m, mu = 0, 0
    for label, kids in at.classes_at(x).items():
        k = counts.get(label, len(kids))
        cats = set()
        for c in kids:
            if c in at.stubs:
                cats.add(INNER)
            elif at.cone_kind.get(c) == BORDER:
                cats.add(BORDER)
            elif c in at.dense_mark:
                cats.add(INNER if lab[x] == lab[c] else BORDER)
            else:
                cats.add(INNER)
        if len(cats) != 1:
            raise RecognitionError("uniform cone class", f"class {label} at {x!r} mixes cone kinds", x)
        if cats == {BORDER}:
            m = ext_add(m, k)
        else:
            mu = ext_add(mu, k)
    return ColorPair(m, mu)


def interval_decomposition(at: AnnotatedTree, alpha) -> List[Interval]:
    """Maximal one-colored intervals of br(alpha) minus alpha, bottom up."""
    t = at.tree
    if alpha not in t.leaves or alpha in at.stubs:
        raise RecognitionError("leaf", f"{alpha!r} is not a genuine leaf")
    path = t.ancestors(alpha)[:-1]
    out: List[Interval] = []
    i = 0
    prev = None
    while i < len(path):
        x = path[i]
        if x not in at.node_color:
            raise RecognitionError("annotations", f"node {x!r} has no color")
        j = i
        while j + 1 < len(path) and at.same_region(path[j], path[j + 1]):
            j += 1
        group = tuple(path[i:j + 1])
        nxt = path[j + 1] if j + 1 < len(path) else alpha
        colors = {true_color(at, y) for y in group}
        if len(colors) != 1:
            raise RecognitionError("one-colored interval", f"colors {sorted(map(str, colors))} in one stretch", group)
        col = colors.pop()
        out.append(_close(at, group, prev, nxt, col))
        prev = group[-1]
        i = j + 1
    return out


def _close(at: AnnotatedTree, group: Tuple, prev, nxt, col: ColorPair) -> Interval:
    if group[0] not in at.dense_mark:
        return Interval(group, group[0], group[0], SINGLETON, col)
    if at.cone_kind.get(nxt) == BORDER or nxt in at.dense_mark:
        return Interval(group, prev, group[-1], OPEN_CLOSED, col)
    return Interval(group, prev, nxt, OPEN_OPEN, col)


def branch_levels(at: AnnotatedTree) -> Dict[NodeId, Tuple[OneColoredDescriptor, ...]]:
    """Levels of every genuine leaf's decomposition in one top-down pass.

    Agrees with interval_decomposition leaf by leaf; shared prefixes are
    computed once.
    """
    t = at.tree
    genuine = set(at.genuine_leaves())
    out: Dict[NodeId, Tuple[OneColoredDescriptor, ...]] = {}
    # state: node, finished levels, current stretch, its lower end, its color
    stack = [(t.root, (), (t.root,), None, true_color(at, t.root))]
    while stack:
        x, done, group, prev, col = stack.pop()
        for c in t.children(x):
            if c in at.stubs:
                continue
            if at.same_region(x, c):
                cc = true_color(at, c)
                if cc != col:
                    raise RecognitionError("one-colored interval",
                                           f"colors {sorted(map(str, {col, cc}))} in one stretch", group + (c,))
                stack.append((c, done, group + (c,), prev, col))
                continue
            lv = done + (_close(at, group, prev, c, col).level(),)
            if c in t.leaves:
                if c in genuine:
                    out[c] = lv
            else:
                stack.append((c, lv, (c,), x, true_color(at, c)))
    return out


def recognize(at: AnnotatedTree) -> CompositeDescriptor:
    """Read the descriptor back from the branch decompositions of every genuine leaf."""
    t = at.tree
    if len(t) == 1:
        return CompositeDescriptor((point(),))
    if not at.genuine_leaves():
        raise RecognitionError("leaves", "no genuine leaf")
    first = None
    for a, levels in sorted(branch_levels(at).items(), key=lambda kv: sort_key(kv[0])):
        if first is None:
            first = (a, levels)
        elif levels != first[1]:
            raise RecognitionError("inconsistent branches",
                                   f"{first[0]!r}: {' '.join(map(str, first[1]))} vs {a!r}: {' '.join(map(str, levels))}",
                                   (first[0], a))
    d = CompositeDescriptor(first[1], bool(at.v_branch))
    rep = validate(d)
    if not rep.ok:
        raise RecognitionError("precolored pattern", f"{d} fails {rep.clauses()}", d.to_json())
    return normalize(d)
