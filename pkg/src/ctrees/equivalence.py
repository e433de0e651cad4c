"""Quantifier-free types, generated substructures, finite isomorphism and
bounded back-and-forth games between annotated trees.

Games are played on lazily grown models: every annotated tree is read as a
finite automaton of node states (leaves, isolated points and dense regions),
and a move either picks a realized element, opens a fresh cone allowed by the
declared counts, or inserts a new node into a dense interval.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

from .core_tree import INF, ConcreteTree, Interner, TreeError, ext_add, ext_str, sort_key
from .expand import BORDER, INNER, AnnotatedTree, true_color

NodeId = Any
Tree = Union[AnnotatedTree, ConcreteTree]


class SignatureError(ValueError):
    pass


# --- signatures ----------------------------------------------------------------------

_TAGS = ("L1", "L1P", "L2", "Ln", "LnP", "LnV")


@dataclass(frozen=True)
class Signature:
    """Which symbols the atomic formulas may use.

    L1 = {L, N, <=, meet}; L1P adds p; L2 adds e, E, E>= for one layer; Ln(k)
    has e_i, E_i, E>=_i for i <= k; LnP(k) adds p, D, F; LnV(k) adds V, meet_V.
    """
    tag: str = "L1"
    k: int = 0

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise SignatureError(f"unknown signature {self.tag!r}")
        if self.tag in ("Ln", "LnP", "LnV") and self.k < 1:
            raise SignatureError(f"{self.tag} needs a layer count k >= 1")

    @classmethod
    def parse(cls, text: str) -> "Signature":
        m = re.fullmatch(r"\s*(L1P|L1|L2|LnP|LnV|Ln)\s*(?:\(\s*(\d+)\s*\))?\s*", text)
        if not m:
            raise SignatureError(f"cannot parse signature {text!r}")
        tag, k = m.group(1), m.group(2)
        if tag in ("L1", "L1P", "L2") and k is not None:
            raise SignatureError(f"{tag} takes no layer count")
        return cls(tag, int(k) if k is not None else 0)

    def __str__(self):
        return f"{self.tag}({self.k})" if self.tag in ("Ln", "LnP", "LnV") else self.tag

    @property
    def has_p(self) -> bool:
        return self.tag in ("L1P", "LnP")

    @property
    def has_df(self) -> bool:
        return self.tag == "LnP"

    @property
    def layers(self) -> int:
        return 1 if self.tag == "L2" else self.k

    @property
    def has_v(self) -> bool:
        return self.tag == "LnV"

    def symbols(self) -> List[str]:
        out = ["L", "N", "<=", "meet"]
        if self.has_p:
            out.append("p")
        for i in range(1, self.layers + 1):
            out += [f"e_{i}", f"E_{i}", f"E>=_{i}"]
        if self.has_df:
            out += ["D", "F"]
        if self.has_v:
            out += ["V", "meet_V"]
        return out


L1 = Signature("L1")


def _annotated(T: Tree) -> AnnotatedTree:
    if isinstance(T, AnnotatedTree):
        return T
    if isinstance(T, ConcreteTree):
        return AnnotatedTree.from_finite(T)
    raise TypeError(f"expected a tree, got {type(T).__name__}")


def supports(T: AnnotatedTree, sig: Signature) -> bool:
    """Whether the tree carries every symbol of sig."""
    if sig.layers > len(T.layers):
        return False
    if sig.has_v and not T.v_branch:
        return False
    return True


# --- structure views -------------------------------------------------------------------
#
# A view answers the questions atomic formulas ask: order, meets, the unary
# functions and the unary predicates.  Annotated trees and game models both
# provide one.

class _View:
    sig: Signature

    def anc(self, x) -> List[NodeId]:  # root first, x last
        raise NotImplementedError

    def atomic(self, x) -> tuple:
        raise NotImplementedError

    def edge(self, x) -> Optional[str]:
        raise NotImplementedError

    def parent(self, x):
        raise NotImplementedError

    def in_layer(self, i: int, x) -> bool:
        raise NotImplementedError

    def in_v(self, x) -> bool:
        raise NotImplementedError

    def le(self, x, y) -> bool:
        return x in self.anc(y)

    def meet(self, x, y):
        ax, ay = self.anc(x), self.anc(y)
        m = None
        for a, b in zip(ax, ay):
            if a != b:
                break
            m = a
        return m

    def p(self, x):
        return self.parent(x) if self.edge(x) == BORDER else None

    def e(self, i: int, x):
        for y in reversed(self.anc(x)):
            if self.in_layer(i, y):
                return y
        return None

    def vmeet(self, x):
        for y in reversed(self.anc(x)):
            if self.in_v(y):
                return y
        return None

    def unary(self) -> List[Tuple[str, Any]]:
        out: List[Tuple[str, Any]] = []
        if self.sig.has_p:
            out.append(("p", self.p))
        for i in range(1, self.sig.layers + 1):
            out.append((f"e_{i}", lambda x, i=i: self.e(i, x)))
        if self.sig.has_v:
            out.append(("meet_V", self.vmeet))
        return out


class _TreeView(_View):
    def __init__(self, T: AnnotatedTree, sig: Signature, colors: bool = False):
        self.T = T
        self.sig = sig
        self.colors = colors
        self._anc: Dict[NodeId, List[NodeId]] = {}
        self._atomic: Dict[NodeId, tuple] = {}

    def anc(self, x):
        got = self._anc.get(x)
        if got is None:
            got = self._anc[x] = self.T.tree.ancestors(x)
        return got

    def parent(self, x):
        return self.T.tree.parent.get(x)

    def edge(self, x):
        return self.T.cone_kind.get(x) if x in self.T.tree.parent else None

    def in_layer(self, i, x):
        return i <= len(self.T.layers) and x in self.T.layers[i - 1]

    def in_v(self, x):
        return x in self.T.v_branch

    def atomic(self, x):
        got = self._atomic.get(x)
        if got is None:
            got = self._atomic[x] = tree_atomic(self.T, x, self.sig, self.colors, self)
        return got


def tree_atomic(T: AnnotatedTree, x, sig: Signature, colors: bool, view: Optional[_View] = None) -> tuple:
    """The unary predicates of sig (plus colors, when asked) holding at x."""
    view = view or _TreeView(T, sig)
    leaf = x in T.tree.leaves and x not in T.stubs
    out: List[Any] = ["L" if leaf else "N"]
    if colors and not leaf:
        out.append(("col", str(true_color(T, x)), x in T.dense_mark))
    for i in range(1, sig.layers + 1):
        out.append((view.in_layer(i, x), view.e(i, x) is not None))
    if sig.has_df:
        out.append((view.edge(x) == BORDER, any(T.cone_kind.get(c) == BORDER for c in T.tree.children(x))))
    if sig.has_v:
        out.append(view.in_v(x))
    return tuple(out)


def _check_nodes(T: AnnotatedTree, xs: Iterable[NodeId]):
    for x in xs:
        if x not in T.tree or x in T.stubs:
            raise TreeError(f"{x!r} is not an element of the tree")


# --- closure, n_t, qf-types --------------------------------------------------------

def _close(view: _View, seeds: Sequence[NodeId]) -> Tuple[List[NodeId], List[tuple]]:
    """Deterministic generation of the substructure spanned by seeds.

    Returns the elements in order of discovery and the list of generation
    events (operation, argument indices, result index or None).
    """
    elems: List[NodeId] = []
    index: Dict[NodeId, int] = {}
    events: List[tuple] = []

    def put(x) -> int:
        if x not in index:
            index[x] = len(elems)
            elems.append(x)
        return index[x]

    for s in seeds:
        events.append(("seed", put(s)))
    funcs = view.unary()
    k = 0
    while k < len(elems):
        x = elems[k]
        for name, f in funcs:
            y = f(x)
            events.append((name, k, None if y is None else put(y)))
        for j in range(k):
            events.append(("meet", j, k, put(view.meet(elems[j], x))))
        k += 1
    return elems, events


def closure(T: Tree, A: Iterable[NodeId], sig: Signature = L1) -> FrozenSet[NodeId]:
    """Smallest superset of A closed under meets and the functions of sig."""
    T = _annotated(T)
    A = list(A)
    _check_nodes(T, A)
    elems, _ = _close(_TreeView(T, sig), sorted(set(A), key=sort_key))
    return frozenset(elems)


def attach_node(T: Tree, A: Iterable[NodeId], t) -> NodeId:
    """The node n_t: the largest meet of t with an element of A."""
    T = _annotated(T)
    A = list(A)
    if not A:
        raise ValueError("attach_node needs a nonempty set")
    _check_nodes(T, A + [t])
    tree = T.tree
    return max((tree.meet(t, a) for a in A), key=tree.depth)


def _qf(view: _View, tup: Sequence[NodeId]) -> tuple:
    elems, events = _close(view, list(tup))
    atoms = tuple(view.atomic(x) for x in elems)
    order = tuple(tuple(view.le(x, y) for y in elems) for x in elems)
    return (tuple(events), atoms, order)


def qf_type(T: Tree, tup: Sequence[NodeId], sig: Signature = L1, colors: bool = False) -> tuple:
    """Canonical encoding of the quantifier-free type of tup.

    Two tuples get equal encodings iff the substructures they generate are
    isomorphic by the map sending one tuple to the other.
    """
    T = _annotated(T)
    _check_nodes(T, tup)
    return _qf(_TreeView(T, sig, colors), list(tup))


# --- finite isomorphism ----------------------------------------------------------------

def _full_label(T: AnnotatedTree, x) -> tuple:
    return (x in T.tree.leaves, x in T.stubs, T.node_color.get(x) if T.colored else None, x in T.dense_mark,
            T.cone_kind.get(x), tuple(x in E for E in T.layers), x in T.v_branch)


def iso_finite(T1: Tree, T2: Tree, sig: Optional[Signature] = None,
               fixed: Sequence[Tuple[NodeId, NodeId]] = ()) -> Optional[Dict[NodeId, NodeId]]:
    """An isomorphism T1 -> T2 extending the pairs in fixed, or None.

    Without sig every annotation must be preserved; with sig only the
    predicates of sig (and p through the edge kinds when sig has p).
    Subtrees are matched recursively with memoized pair compatibility and a
    perfect matching between children.
    """
    T1, T2 = _annotated(T1), _annotated(T2)
    t1, t2 = T1.tree, T2.tree
    pins1: Dict[NodeId, set] = {}
    pins2: Dict[NodeId, set] = {}
    for i, (a, b) in enumerate(fixed):
        pins1.setdefault(a, set()).add(i)
        pins2.setdefault(b, set()).add(i)
    if sig is None:
        lab1 = lambda x: _full_label(T1, x)
        lab2 = lambda x: _full_label(T2, x)
    else:
        v1, v2 = _TreeView(T1, sig), _TreeView(T2, sig)
        lab1 = lambda x: (x in T1.stubs, v1.atomic(x), v1.edge(x) if sig.has_p else None)
        lab2 = lambda x: (x in T2.stubs, v2.atomic(x), v2.edge(x) if sig.has_p else None)
    if len(t1) != len(t2):
        return None

    size1, size2 = _sizes(t1), _sizes(t2)
    memo: Dict[Tuple[NodeId, NodeId], bool] = {}

    def label(side, x):
        return (lab1(x), frozenset(pins1.get(x, ()))) if side == 1 else (lab2(x), frozenset(pins2.get(x, ())))

    def compat(x, y) -> bool:
        key = (x, y)
        if key in memo:
            return memo[key]
        ok = (size1[x] == size2[y] and label(1, x) == label(2, y)
              and len(t1.children(x)) == len(t2.children(y))
              and _matching(t1.children(x), t2.children(y), compat) is not None)
        memo[key] = ok
        return ok

    roots = _matching(t1.roots, t2.roots, compat)
    if roots is None or t1.has_virtual_root != t2.has_virtual_root:
        return None
    out: Dict[NodeId, NodeId] = {}
    stack = list(roots.items())
    while stack:
        x, y = stack.pop()
        out[x] = y
        stack.extend(_matching(t1.children(x), t2.children(y), compat).items())
    return out


def _sizes(t: ConcreteTree) -> Dict[NodeId, int]:
    size: Dict[NodeId, int] = {}
    for n in sorted(t.nodes, key=t.depth, reverse=True):
        size[n] = 1 + sum(size[c] for c in t.children(n))
    return size


def _matching(xs: Sequence, ys: Sequence, ok) -> Optional[Dict]:
    """A perfect matching xs -> ys along ok, by augmenting paths."""
    if len(xs) != len(ys):
        return None
    match_y: Dict[Any, Any] = {}

    def augment(x, seen) -> bool:
        for y in sorted(ys, key=lambda y: y != x):
            if y in seen or not ok(x, y):
                continue
            seen.add(y)
            if y not in match_y or augment(match_y[y], seen):
                match_y[y] = x
                return True
        return False

    for x in xs:
        if not augment(x, set()):
            return None
    return {x: y for y, x in match_y.items()}


# --- state automaton of an annotated tree ---------------------------------------------

LEAF, POINT, REGION = "leaf", "point", "region"


@dataclass(frozen=True)
class _State:
    kind: str
    atomic: tuple
    classes: Tuple[Tuple[Any, str, int, Any], ...]  # (key, edge kind, target state, declared count)
    mu: Any = 0  # continuation cones of a region
    exits: Tuple[int, ...] = ()  # states of the limit points of a region
    layers: Tuple[bool, ...] = ()
    v: bool = False


@dataclass
class Automaton:
    states: Dict[int, _State]
    root: int
    root_open: bool
    cid: Dict[int, int] = field(default_factory=dict)

    def canonical(self) -> Dict[int, tuple]:
        """Structural names of the states, comparable across automata."""
        out: Dict[int, tuple] = {}

        def name(s):
            if s not in out:
                st = self.states[s]
                out[s] = (st.kind, st.atomic, tuple((k, e, name(tg), ext_str(c)) for k, e, tg, c in st.classes),
                          ext_str(st.mu), tuple(name(x) for x in st.exits), st.layers, st.v)
            return out[s]

        for s in self.states:
            name(s)
        return out

    def name_states(self, interner: Interner) -> None:
        self.cid = {s: interner(c) for s, c in self.canonical().items()}

    def capacity(self, s: int, key) -> Any:
        st = self.states[s]
        if key == "c":
            return st.mu
        for k, _, _, count in st.classes:
            if k == key:
                return count
        return 0


def automaton(T: Tree, sig: Signature = L1, colors: bool = True) -> Automaton:
    """Coarsest labelling of T's nodes compatible with the atomic predicates,
    the cone structure and the dense stretches; one state per label."""
    T = _annotated(T)
    t = T.tree
    view = _TreeView(T, sig, colors and T.colored)
    nodes = [n for n in t.nodes if n not in T.stubs]
    dense = T.dense_mark

    def kind(x):
        if x in t.leaves:
            return LEAF
        return REGION if x in dense else POINT

    lab = _relabel(nodes, {x: (kind(x), view.atomic(x)) for x in nodes})
    while True:
        new = _relabel(nodes, {x: (lab[x], _profile(T, x, lab)[0]) for x in nodes})
        if len(set(new.values())) == len(set(lab.values())):
            break
        lab = new
    states: Dict[int, _State] = {}
    exits: Dict[int, set] = {}
    for x in nodes:
        (classes, mu), ex = _profile(T, x, lab)
        exits.setdefault(lab[x], set()).update(ex)
        if lab[x] not in states:
            keyed = tuple((("b" if kind(x) == REGION else "p", i), e, tg, k) for i, (e, tg, k) in enumerate(classes))
            flags = tuple(view.in_layer(i, x) for i in range(1, sig.layers + 1))
            states[lab[x]] = _State(kind(x), view.atomic(x), keyed, mu, (), flags, view.in_v(x))
    for s, st in list(states.items()):
        if st.kind == REGION:
            states[s] = _State(st.kind, st.atomic, st.classes, st.mu, tuple(sorted(exits[s])), st.layers, st.v)
    root = t.root if t.root is not None else t.roots[0]
    return Automaton(states, lab[root], root in dense)


def _relabel(order, vals) -> Dict[NodeId, int]:
    ids: Dict[Any, int] = {}
    return {x: ids.setdefault(vals[x], len(ids)) for x in order}


def _profile(T: AnnotatedTree, x, lab) -> Tuple[Tuple[tuple, Any], set]:
    """(cone classes with targets and counts, continuation count) and the exit labels at x."""
    t = T.tree
    if x in t.leaves:
        return ((), 0), set()
    region = x in T.dense_mark
    entries = []
    mu = 0
    exits = set()
    counts = T.class_count.get(x, {})
    for label, kids in sorted(T.classes_at(x).items()):
        k = counts.get(label, len(kids))
        real = [c for c in kids if c not in T.stubs]
        if region:
            conts = [c in T.stubs or (T.cone_kind.get(c) != BORDER
                                      and (c not in T.dense_mark or lab[c] == lab[x])) for c in kids]
            if all(conts):
                mu = ext_add(mu, k)
                exits.update(lab[c] for c in real if c not in T.dense_mark)
                continue
            if any(conts):
                raise TreeError(f"class {label} at {x!r} mixes continuing and exiting cones")
        if not real:
            continue
        target = min(lab[c] for c in real)
        entries.append((T.cone_kind.get(real[0]), target, k))
    entries.sort(key=lambda e: (e[0] or "", e[1], ext_str(e[2])))
    return (tuple(entries), mu), exits


# --- game models -------------------------------------------------------------------

class GameModel(_View):
    """A finite piece of the model an automaton describes, grown on demand."""

    def __init__(self, aut: Automaton, sig: Signature):
        self.aut = aut
        self.sig = sig
        self.par: Dict[int, Optional[int]] = {}
        self.kids: Dict[int, List[int]] = {}
        self.state: Dict[int, int] = {}
        self.edg: Dict[int, Optional[str]] = {}
        self.ckey: Dict[int, Any] = {}
        self.root: Optional[int] = None
        self.next_id = 0

    @classmethod
    def initial(cls, aut: Automaton, sig: Signature) -> "GameModel":
        m = cls(aut, sig)
        m.unfold(aut.root, None, None, None)
        return m

    def copy(self) -> "GameModel":
        m = GameModel(self.aut, self.sig)
        m.par = dict(self.par)
        m.kids = {k: list(v) for k, v in self.kids.items()}
        m.state = dict(self.state)
        m.edg = dict(self.edg)
        m.ckey = dict(self.ckey)
        m.root = self.root
        m.next_id = self.next_id
        return m

    # construction
    def _add(self, parent, s, edge, key) -> int:
        z = self.next_id
        self.next_id += 1
        self.par[z] = parent
        self.kids[z] = []
        self.state[z] = s
        self.edg[z] = edge
        self.ckey[z] = key
        if parent is None:
            self.root = z
        else:
            self.kids[parent].append(z)
        return z

    def unfold(self, s, parent, edge, key, depth=0) -> List[int]:
        """One copy of every cone class below a fresh node of state s."""
        if depth > 64:
            raise TreeError("state automaton does not terminate")
        z = self._add(parent, s, edge, key)
        out = [z]
        st = self.aut.states[s]
        for k, e, target, count in st.classes:
            if count != 0:
                out += self.unfold(target, z, e, k, depth + 1)
        if st.kind == REGION and st.mu != 0 and st.exits:
            out += self.unfold(st.exits[0], z, INNER, "c", depth + 1)
        return out

    def used(self, x, key) -> int:
        return sum(1 for c in self.kids[x] if self.ckey[c] == key)

    def open_classes(self, x) -> List[Any]:
        st = self.aut.states[self.state[x]]
        keys = [k for k, _, _, _ in st.classes]
        if st.kind == REGION:
            keys.append("c")
        return [k for k in keys if self.aut.capacity(self.state[x], k) == INF
                or self.used(x, k) < self.aut.capacity(self.state[x], k)]

    def fresh(self, x, key) -> List[int]:
        """Open one more cone of class key at x."""
        st = self.aut.states[self.state[x]]
        if key == "c":
            return self.unfold(self.state[x], x, INNER, "c")
        for k, e, target, _ in st.classes:
            if k == key:
                return self.unfold(target, x, e, k)
        raise KeyError(key)

    def dense_edges(self) -> List[Tuple[Optional[int], int]]:
        out: List[Tuple[Optional[int], int]] = []
        if self.aut.root_open:
            out.append((None, self.root))
        for v, u in self.par.items():
            if u is None or self.edg[v] != INNER:
                continue
            if self.is_region(u) or self.is_region(v):
                out.append((u, v))
        return out

    def insert(self, u, v) -> int:
        """A new node of the dense interval ]u, v[ directly below v."""
        s = self.state[v] if self.is_region(v) else self.state[u]
        z = self.next_id
        self.next_id += 1
        self.state[z] = s
        self.kids[z] = [v]
        self.edg[z] = self.edg[v]
        self.ckey[z] = self.ckey[v]
        self.par[z] = u
        if u is None:
            self.root = z
        else:
            self.kids[u][self.kids[u].index(v)] = z
        self.par[v] = z
        self.edg[v] = INNER
        self.ckey[v] = "c"
        return z

    # view interface
    def is_region(self, x) -> bool:
        return self.aut.states[self.state[x]].kind == REGION

    def anc(self, x):
        out = []
        while x is not None:
            out.append(x)
            x = self.par[x]
        out.reverse()
        return out

    def parent(self, x):
        return self.par[x]

    def edge(self, x):
        return self.edg[x]

    def atomic(self, x):
        return self.aut.states[self.state[x]].atomic

    def in_layer(self, i, x):
        return self.aut.states[self.state[x]].layers[i - 1]

    def in_v(self, x):
        return self.aut.states[self.state[x]].v

    def nodes(self) -> List[int]:
        return list(self.par)

    def __len__(self):
        return len(self.par)

    def key(self, peb: Sequence[int], interner: Interner):
        """Canonical form of the model with the pebbles marked."""
        marks: Dict[int, List[int]] = {}
        for i, x in enumerate(peb):
            marks.setdefault(x, []).append(i)
        depth: Dict[int, int] = {}
        for x in self.anc_order():
            p = self.par[x]
            depth[x] = 0 if p is None else depth[p] + 1
        forms: Dict[int, int] = {}
        for x in sorted(self.par, key=lambda n: -depth[n]):
            forms[x] = interner((self.aut.cid[self.state[x]], self.edg[x], self.ckey[x], tuple(marks.get(x, ())),
                                 tuple(sorted(forms[c] for c in self.kids[x]))))
        return forms[self.root]

    def anc_order(self) -> List[int]:
        out, stack = [], [self.root]
        while stack:
            x = stack.pop()
            out.append(x)
            stack.extend(self.kids[x])
        return out

    def to_json(self):
        return {"nodes": [{"id": x, "parent": self.par[x], "state": self.state[x], "edge": self.edg[x]}
                          for x in self.anc_order()]}


# --- the game ----------------------------------------------------------------------------

@dataclass
class GameResult:
    equivalent: bool
    rounds: int
    distinguished_at: Optional[int] = None
    witness: Optional[Dict[str, Any]] = None
    positions: int = 0

    @property
    def verdict(self) -> str:
        return "equivalent" if self.equivalent else "distinguished"

    def to_json(self):
        return {"verdict": self.verdict, "rounds": self.rounds, "distinguished_at": self.distinguished_at,
                "witness": self.witness, "positions": self.positions}


class _Game:
    def __init__(self, left: GameModel, right: GameModel, iso_shortcut: bool):
        self.start = (left, (), right, ())
        self.intern = Interner()
        left.aut.name_states(self.intern)
        right.aut.name_states(self.intern)
        self.memo: Dict[tuple, bool] = {}
        self.move_cache: Dict[Any, list] = {}
        self.iso_shortcut = iso_shortcut

    def pkey(self, pos, r):
        L, a, R, b = pos
        return (L.key(a, self.intern), R.key(b, self.intern), r)

    def moves(self, M: GameModel, peb: Tuple[int, ...]) -> List[Tuple[GameModel, int, tuple]]:
        """Every way to place a new pebble, one per resulting position up to
        isomorphism, each with the qf-type of the extended pebble tuple."""
        mkey = M.key(peb, self.intern)
        got = self.move_cache.get(mkey)
        if got is not None:
            return got
        cands: List[Tuple[GameModel, int]] = [(M, x) for x in M.anc_order() if x not in peb]
        for x in M.anc_order():
            for k in M.open_classes(x):
                M2 = M.copy()
                cands += [(M2, n) for n in M2.fresh(x, k)]
        for u, v in M.dense_edges():
            M2 = M.copy()
            z = M2.insert(u, v)
            cands.append((M2, z))
            for k in M2.open_classes(z):
                M3 = M2.copy()
                cands += [(M3, n) for n in M3.fresh(z, k)]
        seen = set()
        out = []
        for M2, x in cands:
            k = M2.key(peb + (x,), self.intern)
            if k not in seen:
                seen.add(k)
                out.append((M2, x, _qf(M2, peb + (x,))))
        self.move_cache[mkey] = out
        return out

    def dup_wins(self, pos, r) -> bool:
        if r == 0:
            return True
        key = self.pkey(pos, r)
        if key in self.memo:
            return self.memo[key]
        if self.iso_shortcut and key[0] == key[1]:
            self.memo[key] = True
            return True
        self.memo[key] = ok = self._search(pos, r) is None
        return ok

    def _replies(self, pos, side, want):
        L, a, R, b = pos
        D, dp = (R, b) if side == 0 else (L, a)
        return [(D2, y) for D2, y, q in self.moves(D, dp) if q == want]

    def _next(self, pos, side, S2, x, D2, y):
        L, a, R, b = pos
        if side == 0:
            return (S2, a + (x,), D2, b + (y,))
        return (D2, a + (y,), S2, b + (x,))

    def _search(self, pos, r):
        """A Spoiler move no Duplicator reply survives, or None."""
        L, a, R, b = pos
        for side in (0, 1):
            S, sp = (L, a) if side == 0 else (R, b)
            for S2, x, want in self.moves(S, sp):
                if not any(self.dup_wins(self._next(pos, side, S2, x, D2, y), r - 1)
                           for D2, y in self._replies(pos, side, want)):
                    return side, S2, x, want
        return None

    def explain(self, pos, r, depth=0) -> Optional[Dict[str, Any]]:
        if r == 0 or self.dup_wins(pos, r):
            return None
        side, S2, x, want = self._search(pos, r)
        sp = pos[1] if side == 0 else pos[3]
        replies = [{"reply": _describe(D2, y), "then": self.explain(self._next(pos, side, S2, x, D2, y), r - 1, depth + 1)}
                   for D2, y in self._replies(pos, side, want)]
        return {"round": depth + 1, "side": "left" if side == 0 else "right", "spoiler": _describe(S2, x),
                "closure": [_describe(S2, z) for z in _close(S2, list(sp + (x,)))[0]], "replies": replies}


def _describe(M: GameModel, x) -> Dict[str, Any]:
    return {"node": x, "depth": len(M.anc(x)) - 1, "atomic": repr(M.atomic(x))}


def back_and_forth(T1: Tree, T2: Tree, sig: Signature = L1, rounds: int = 3,
                   iso_shortcut: bool = True, colors: Optional[bool] = None) -> GameResult:
    """Decide the rounds-round game between the models T1 and T2 describe.

    By default, when both trees are colored, the atomic type of a node
    includes its color and whether it is dense; colors=False plays in the
    bare signature.  Returns the least number of rounds in which the spoiler
    wins, with a strategy, when that is at most rounds.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    A1, A2 = _annotated(T1), _annotated(T2)
    for name, A in (("first", A1), ("second", A2)):
        if not supports(A, sig):
            raise SignatureError(f"the {name} tree does not carry every symbol of {sig}")
    if colors is None:
        colors = A1.colored and A2.colored
    left = GameModel.initial(automaton(A1, sig, colors), sig)
    right = GameModel.initial(automaton(A2, sig, colors), sig)
    game = _Game(left, right, iso_shortcut)
    for r in range(1, rounds + 1):
        if not game.dup_wins(game.start, r):
            return GameResult(False, rounds, r, game.explain(game.start, r), len(game.memo))
    return GameResult(True, rounds, None, None, len(game.memo))
