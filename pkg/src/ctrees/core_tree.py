"""Finite good trees: order, meets, branches, cones, predecessors, antichains.

A tree is stored as a parent map.  Leaves are marked explicitly; every other
element is a node.  Trees are treated as immutable values.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Hashable, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

NodeId = Hashable

INF = math.inf


# --- extended cardinals -------------------------------------------------------

def is_extcard(v: Any) -> bool:
    if v is INF or v == INF:
        return True
    return isinstance(v, int) and not isinstance(v, bool) and v >= 0


def ext_add(a, b):
    """Addition on naturals plus infinity, infinity absorbing."""
    if a == INF or b == INF:
        return INF
    return a + b


def ext_min(a, b):
    return a if a <= b else b


def ext_to_json(v):
    return "inf" if v == INF else int(v)


def ext_from_json(v):
    if v == "inf" or v == INF:
        return INF
    if isinstance(v, str):
        v = int(v)
    if not isinstance(v, int) or v < 0:
        raise ValueError(f"not an extended cardinal: {v!r}")
    return v


def ext_str(v) -> str:
    return "inf" if v == INF else str(v)


def realized(count, width: int) -> int:
    """How many copies a declared count gets at a given width."""
    return int(min(count, width))


class ColorPair(NamedTuple):
    """Border-cone count m and inner-cone count mu."""
    m: Any
    mu: Any

    def total(self):
        return ext_add(self.m, self.mu)

    def to_json(self):
        return [ext_to_json(self.m), ext_to_json(self.mu)]

    @classmethod
    def from_json(cls, v) -> "ColorPair":
        return cls(ext_from_json(v[0]), ext_from_json(v[1]))

    def __str__(self):
        return f"({ext_str(self.m)},{ext_str(self.mu)})"


# --- validation reports -------------------------------------------------------

@dataclass
class Violation:
    clause: str
    witness: Any = None
    detail: str = ""

    def to_json(self):
        return {"clause": self.clause, "witness": _jsonable(self.witness), "detail": self.detail}


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)
    notes: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def clauses(self) -> List[str]:
        return sorted({v.clause for v in self.violations})

    def add(self, clause: str, witness=None, detail: str = "") -> None:
        self.violations.append(Violation(clause, witness, detail))

    def note(self, clause: str, witness=None, detail: str = "") -> None:
        self.notes.append(Violation(clause, witness, detail))

    def to_json(self):
        return {
            "ok": self.ok,
            "violations": [v.to_json() for v in self.violations],
            "notes": [v.to_json() for v in self.notes],
        }

    def __bool__(self):
        return self.ok


def _jsonable(x):
    if isinstance(x, (list, tuple, set, frozenset)):
        items = [_jsonable(i) for i in x]
        if isinstance(x, (set, frozenset)):
            items.sort(key=repr)
        return items
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, float) and x == INF:
        return "inf"
    if x is None or isinstance(x, (int, str, bool, float)):
        return x
    if hasattr(x, "to_json"):
        return x.to_json()
    return repr(x)


def sort_key(x) -> Tuple:
    """Total order on mixed node identifiers."""
    if isinstance(x, bool):
        return (0, int(x), "")
    if isinstance(x, int):
        return (0, x, "")
    if isinstance(x, str):
        return (1, 0, x)
    if isinstance(x, tuple):
        return (2, len(x), tuple(sort_key(i) for i in x))
    return (3, 0, repr(x))


class TreeError(ValueError):
    pass


# --- the tree value -----------------------------------------------------------

class ConcreteTree:
    """Finite tree given by a parent map, with marked leaves.

    ``has_virtual_root`` declares that the intended model has no least
    element; the realized minimum then stands for a truncation point and
    T* adds a point below it.
    """

    __slots__ = ("nodes", "parent", "leaves", "has_virtual_root", "_children", "_depth", "_roots", "_index")

    def __init__(self, nodes: Iterable[NodeId], parent: Dict[NodeId, NodeId], leaves: Iterable[NodeId],
                 has_virtual_root: bool = False):
        self.nodes = tuple(nodes)
        self.parent = dict(parent)
        self.leaves = frozenset(leaves)
        self.has_virtual_root = bool(has_virtual_root)
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise TreeError("duplicate node identifiers")
        for c, p in self.parent.items():
            if c not in node_set or p not in node_set:
                raise TreeError(f"parent entry {c!r} -> {p!r} mentions an unknown node")
        if not self.leaves <= node_set:
            raise TreeError("leaf mark on unknown node")
        self._children = None
        self._depth = None
        self._roots = None
        self._index = None

    # structure caches
    def children(self, x: NodeId) -> Tuple[NodeId, ...]:
        if self._children is None:
            ch: Dict[NodeId, List[NodeId]] = {n: [] for n in self.nodes}
            for n in self.nodes:
                p = self.parent.get(n)
                if p is not None:
                    ch[p].append(n)
            self._children = {k: tuple(v) for k, v in ch.items()}
        return self._children[x]

    @property
    def roots(self) -> Tuple[NodeId, ...]:
        if self._roots is None:
            self._roots = tuple(n for n in self.nodes if n not in self.parent)
        return self._roots

    @property
    def root(self) -> Optional[NodeId]:
        r = self.roots
        return r[0] if len(r) == 1 else None

    def index(self, x: NodeId) -> int:
        if self._index is None:
            self._index = {n: i for i, n in enumerate(self.nodes)}
        return self._index[x]

    def depth(self, x: NodeId) -> int:
        if self._depth is None:
            d: Dict[NodeId, int] = {}
            for n in self.nodes:
                chain = []
                y = n
                while y not in d:
                    chain.append(y)
                    if len(chain) > len(self.nodes):
                        raise TreeError("parent map has a cycle")
                    p = self.parent.get(y)
                    if p is None:
                        d[y] = 0
                        chain.pop()
                        break
                    y = p
                base = d[y] if y in d else 0
                for z in reversed(chain):
                    base += 1
                    d[z] = base
            self._depth = d
        return self._depth[x]

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, x):
        if self._index is None:
            self._index = {n: i for i, n in enumerate(self.nodes)}
        return x in self._index

    def is_leaf(self, x: NodeId) -> bool:
        return x in self.leaves

    def inner_nodes(self) -> List[NodeId]:
        return [n for n in self.nodes if n not in self.leaves]

    def leaf_list(self) -> List[NodeId]:
        return [n for n in self.nodes if n in self.leaves]

    # order
    def ancestors(self, x: NodeId) -> List[NodeId]:
        """Chain of elements <= x, from the bottom up to x."""
        out = [x]
        p = self.parent.get(x)
        while p is not None:
            out.append(p)
            p = self.parent.get(p)
        out.reverse()
        return out

    def le(self, x: NodeId, y: NodeId) -> bool:
        dx, dy = self.depth(x), self.depth(y)
        if dx > dy:
            return False
        while dy > dx:
            y = self.parent[y]
            dy -= 1
        return x == y

    def lt(self, x: NodeId, y: NodeId) -> bool:
        return x != y and self.le(x, y)

    def comparable(self, x, y) -> bool:
        return self.le(x, y) or self.le(y, x)

    def meet(self, a: NodeId, b: NodeId) -> Optional[NodeId]:
        """Greatest common lower bound, None if the two lie in different components."""
        da, db = self.depth(a), self.depth(b)
        while da > db:
            a = self.parent[a]
            da -= 1
        while db > da:
            b = self.parent[b]
            db -= 1
        while a != b:
            pa, pb = self.parent.get(a), self.parent.get(b)
            if pa is None or pb is None:
                return None
            a, b = pa, pb
        return a

    def meet_all(self, xs: Iterable[NodeId]) -> Optional[NodeId]:
        it = iter(xs)
        acc = next(it)
        for x in it:
            acc = self.meet(acc, x)
            if acc is None:
                return None
        return acc

    def subtree(self, x: NodeId) -> List[NodeId]:
        """The thick cone at x as a node list, parents before children."""
        out = [x]
        i = 0
        while i < len(out):
            out.extend(self.children(out[i]))
            i += 1
        return out

    def child_towards(self, x: NodeId, y: NodeId) -> NodeId:
        """The child of x lying on the chain below y (requires x < y)."""
        prev = y
        p = self.parent.get(y)
        while p is not None and p != x:
            prev = p
            p = self.parent.get(p)
        if p != x:
            raise TreeError(f"{x!r} is not below {y!r}")
        return prev

    def leaves_above(self, x: NodeId) -> List[NodeId]:
        return [n for n in self.subtree(x) if n in self.leaves]

    # conversions
    def to_json(self) -> Dict[str, Any]:
        return {
            "nodes": list(self.nodes),
            "parent": {str(k): self.parent[k] for k in self.nodes if k in self.parent},
            "leaves": [n for n in self.nodes if n in self.leaves],
            "has_virtual_root": self.has_virtual_root,
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "ConcreteTree":
        try:
            nodes = list(data["nodes"])
            by_str = {str(n): n for n in nodes}
            parent = {by_str[k]: v for k, v in data.get("parent", {}).items()}
            return cls(nodes, parent, data.get("leaves", []), bool(data.get("has_virtual_root", False)))
        except KeyError as exc:
            raise TreeError(f"malformed tree JSON: missing {exc}") from None

    def to_dot(self, name: str = "T", node_attrs: Optional[Callable[[NodeId], Dict[str, str]]] = None,
               edge_attrs: Optional[Callable[[NodeId, NodeId], Dict[str, str]]] = None) -> str:
        lines = [f"digraph {name} {{", "  rankdir=BT;", "  node [label=\"\"];"]
        for n in self.nodes:
            attrs = {"shape": "circle", "width": "0.15"}
            if n in self.leaves:
                attrs.update(style="filled", fillcolor="black")
            else:
                attrs.update(shape="point")
            attrs["xlabel"] = str(n)
            if node_attrs:
                attrs.update(node_attrs(n))
            lines.append(f"  {_dot_id(n)} [{_dot_attrs(attrs)}];")
        for n in self.nodes:
            p = self.parent.get(n)
            if p is not None:
                attrs = {"dir": "none"}
                if edge_attrs:
                    attrs.update(edge_attrs(p, n))
                lines.append(f"  {_dot_id(p)} -> {_dot_id(n)} [{_dot_attrs(attrs)}];")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def __eq__(self, other):
        if not isinstance(other, ConcreteTree):
            return NotImplemented
        return (self.nodes == other.nodes and self.parent == other.parent and self.leaves == other.leaves
                and self.has_virtual_root == other.has_virtual_root)

    def __hash__(self):
        return hash((self.nodes, self.leaves, self.has_virtual_root))

    def __repr__(self):
        return f"ConcreteTree({len(self.nodes)} elements, {len(self.leaves)} leaves)"


def _dot_id(n) -> str:
    return json.dumps(str(n))


def _dot_attrs(attrs: Dict[str, str]) -> str:
    return ", ".join(f"{k}={json.dumps(str(v))}" for k, v in attrs.items())


# --- validation ---------------------------------------------------------------

CLAUSE_TREE = "tree"
CLAUSE_MEET = "meet semi-lattice"
CLAUSE_LEAF_ABOVE = "leaf above every element"
CLAUSE_LEAF_OR_NODE = "element neither leaf nor node"
CLAUSE_LEAF_MARK = "leaf mark"


def is_good_tree(t: ConcreteTree) -> ValidationReport:
    """Check the four good-tree clauses on a finite parent-map structure."""
    rep = ValidationReport()
    if not t.nodes:
        rep.add(CLAUSE_TREE, None, "empty structure")
        return rep
    # tree: every chain below an element is finite and linear, i.e. no cycles
    try:
        for n in t.nodes:
            t.depth(n)
    except TreeError:
        seen_cycle = _find_cycle(t)
        rep.add(CLAUSE_TREE, seen_cycle, "parent map has a cycle")
        return rep
    if len(t.roots) != 1:
        rep.add(CLAUSE_MEET, list(t.roots[:2]), "elements without a common lower bound")
    for n in t.nodes:
        kids = t.children(n)
        if n in t.leaves:
            if kids:
                rep.add(CLAUSE_LEAF_MARK, n, "marked leaf is not maximal")
        elif not kids:
            rep.add(CLAUSE_LEAF_ABOVE, n, "no leaf above this element")
        elif len(kids) < 2:
            rep.add(CLAUSE_LEAF_OR_NODE, n, "not a leaf and not the meet of two distinct elements")
    return rep


def _find_cycle(t: ConcreteTree):
    for start in t.nodes:
        seen = []
        y = start
        while y is not None and y not in seen:
            seen.append(y)
            y = t.parent.get(y)
        if y is not None:
            return seen[seen.index(y):]
    return None


# --- operations named after the contract ---------------------------------------

def meet(t: ConcreteTree, a: NodeId, b: NodeId) -> Optional[NodeId]:
    return t.meet(a, b)


def branch(t: ConcreteTree, alpha: NodeId) -> List[NodeId]:
    """br(alpha): every element below the leaf alpha, increasing, ending at alpha."""
    if alpha not in t.leaves:
        raise TreeError(f"not a leaf: {alpha!r}")
    return t.ancestors(alpha)


def predecessor(t: ConcreteTree, x: NodeId) -> Optional[NodeId]:
    return t.parent.get(x)


def cone(t: ConcreteTree, x: NodeId, y: NodeId) -> frozenset:
    """The cone of y at x: elements z with x < z meet y."""
    if not t.lt(x, y):
        raise TreeError(f"cone needs {x!r} < {y!r}")
    return frozenset(t.subtree(t.child_towards(x, y)))


def thick_cone(t: ConcreteTree, x: NodeId) -> frozenset:
    return frozenset(t.subtree(x))


def pruned_cone(t: ConcreteTree, x: NodeId, y: NodeId) -> frozenset:
    return cone(t, x, y) - thick_cone(t, y)


def cones_at(t: ConcreteTree, x: NodeId) -> List[frozenset]:
    return [frozenset(t.subtree(c)) for c in t.children(x)]


def is_antichain(t: ConcreteTree, A: Iterable[NodeId]) -> bool:
    A = list(A)
    return all(not t.comparable(a, b) for i, a in enumerate(A) for b in A[i + 1:])


def antichain_order(t: ConcreteTree, A: Iterable[NodeId], B: Iterable[NodeId]) -> str:
    """Compare antichains: less iff every a lies below some b and every b above some a."""
    A, B = frozenset(A), frozenset(B)
    if not is_antichain(t, A) or not is_antichain(t, B):
        raise TreeError("inputs must be antichains")
    if A == B:
        return "equal"
    up = all(any(t.lt(a, b) for b in B) for a in A)
    down = all(any(t.lt(a, b) for a in A) for b in B)
    if up and down:
        return "less"
    return "incomparable"


# --- construction helpers -----------------------------------------------------

def tree_from_children(children: Dict[NodeId, Sequence[NodeId]], root: NodeId,
                       has_virtual_root: bool = False) -> ConcreteTree:
    """Build a tree from a child map; childless elements become leaves."""
    nodes, parent = [], {}
    stack = [root]
    while stack:
        n = stack.pop(0)
        nodes.append(n)
        for c in children.get(n, ()):
            parent[c] = n
            stack.append(c)
    leaves = [n for n in nodes if not children.get(n)]
    return ConcreteTree(nodes, parent, leaves, has_virtual_root)


def tree_from_shape(shape, has_virtual_root: bool = False) -> ConcreteTree:
    """Build a tree with integer ids from a nested tuple shape (a leaf is ())."""
    nodes, parent, leaves = [], {}, []
    queue = [(shape, None)]
    while queue:
        s, p = queue.pop(0)
        i = len(nodes)
        nodes.append(i)
        if p is not None:
            parent[i] = p
        if not s:
            leaves.append(i)
        for c in s:
            queue.append((c, i))
    return ConcreteTree(nodes, parent, leaves, has_virtual_root)


def shape_of(t: ConcreteTree, x: Optional[NodeId] = None):
    """Canonical nested-tuple shape of the subtree at x."""
    if x is None:
        x = t.root
    memo: Dict[NodeId, tuple] = {}
    for n in reversed(t.subtree(x)):
        memo[n] = tuple(sorted((memo[c] for c in t.children(n)), key=_shape_key))
    return memo[x]


def _shape_key(s):
    return (_shape_size(s), repr(s))


def _shape_size(s) -> int:
    return 1 + sum(_shape_size(c) for c in s)


def relabel(t: ConcreteTree, mapping: Dict[NodeId, NodeId]) -> ConcreteTree:
    return ConcreteTree([mapping[n] for n in t.nodes], {mapping[c]: mapping[p] for c, p in t.parent.items()},
                        [mapping[n] for n in t.leaves], t.has_virtual_root)


def canonical_relabel(t: ConcreteTree) -> Tuple[ConcreteTree, Dict[NodeId, int]]:
    """Integer relabeling in breadth-first order with children sorted by canonical shape."""
    forms = subtree_forms(t)
    order: List[NodeId] = []
    queue = list(t.roots)
    queue.sort(key=lambda n: forms[n])
    while queue:
        n = queue.pop(0)
        order.append(n)
        queue.extend(sorted(t.children(n), key=lambda c: forms[c]))
    mapping = {n: i for i, n in enumerate(order)}
    return relabel(t, mapping), mapping


def _good_shapes(n: int, memo: Dict[int, List[tuple]]) -> List[tuple]:
    if n in memo:
        return memo[n]
    out: List[tuple] = []
    if n == 1:
        out.append(())
    else:
        # multisets of at least two child shapes whose sizes add up to n - 1
        def rec(remaining: int, min_key, acc: List[tuple]):
            if remaining == 0:
                if len(acc) >= 2:
                    out.append(tuple(acc))
                return
            for size in range(1, remaining + 1):
                for s in _good_shapes(size, memo):
                    k = (size, repr(s))
                    if min_key is not None and k < min_key:
                        continue
                    rec(remaining - size, k, acc + [s])
        rec(n - 1, None, [])
    memo[n] = out
    return out


def enumerate_good_trees(max_nodes: int, min_nodes: int = 1) -> Iterator[ConcreteTree]:
    """All good trees with node count in [min_nodes, max_nodes], one per isomorphism class."""
    memo: Dict[int, List[tuple]] = {}
    for n in range(min_nodes, max_nodes + 1):
        for s in _good_shapes(n, memo):
            yield tree_from_shape(s)


def random_good_tree(rng: random.Random, max_nodes: int) -> ConcreteTree:
    """A random good tree with at most max_nodes elements (and at least one)."""
    target = rng.randint(1, max_nodes)
    children: Dict[int, List[int]] = {0: []}
    count = 1
    while count < target:
        leaves = [n for n, ch in children.items() if not ch]
        inner = [n for n, ch in children.items() if ch]
        if inner and (count + 2 > target or rng.random() < 0.35):
            p = rng.choice(inner)
            children[p].append(count)
            children[count] = []
            count += 1
        elif count + 2 <= target:
            p = rng.choice(leaves)
            for _ in range(2):
                children[p].append(count)
                children[count] = []
                count += 1
        else:
            break
    return tree_from_children(children, 0)


# --- canonical forms, isomorphism and automorphism orbits -----------------------

class Interner:
    """Maps structural keys to small integers; share one between trees to compare them."""

    def __init__(self):
        self.table: Dict[Any, int] = {}

    def __call__(self, key) -> int:
        v = self.table.get(key)
        if v is None:
            v = self.table[key] = len(self.table)
        return v


def subtree_forms(t: ConcreteTree, label: Optional[Callable[[NodeId], Any]] = None,
                  interner: Optional[Interner] = None) -> Dict[NodeId, int]:
    """Canonical code of the subtree at every element (AHU encoding)."""
    intern = interner or Interner()
    forms: Dict[NodeId, int] = {}
    for n in sorted(t.nodes, key=t.depth, reverse=True):
        lab = label(n) if label else (n in t.leaves)
        forms[n] = intern((lab, tuple(sorted(forms[c] for c in t.children(n)))))
    return forms


def canonical_form(t: ConcreteTree, label: Optional[Callable[[NodeId], Any]] = None,
                   interner: Optional[Interner] = None):
    forms = subtree_forms(t, label, interner)
    return (t.has_virtual_root, tuple(sorted(forms[r] for r in t.roots)))


def isomorphic(t1: ConcreteTree, t2: ConcreteTree, label1=None, label2=None) -> bool:
    shared = Interner()
    return canonical_form(t1, label1, shared) == canonical_form(t2, label2, shared)


def orbit_keys(t: ConcreteTree, label: Optional[Callable[[NodeId], Any]] = None) -> Dict[NodeId, tuple]:
    """Automorphism-orbit invariant of each element: the forms along its root path.

    Two elements share a key iff some automorphism (respecting ``label``) maps
    one to the other.
    """
    forms = subtree_forms(t, label)
    keys: Dict[NodeId, tuple] = {}
    for n in sorted(t.nodes, key=t.depth):
        p = t.parent.get(n)
        keys[n] = (keys[p] if p is not None else ()) + (forms[n],)
    return keys


def automorphism_orbits(t: ConcreteTree, label: Optional[Callable[[NodeId], Any]] = None) -> List[List[NodeId]]:
    keys = orbit_keys(t, label)
    groups: Dict[tuple, List[NodeId]] = {}
    for n in t.nodes:
        groups.setdefault(keys[n], []).append(n)
    return list(groups.values())
