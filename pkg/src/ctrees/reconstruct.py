"""Building structures from labeled class trees: connection, replication,
sticking a rooted structure on a leafless branch, and unfolding the labeled
quotient into the tree of its fibers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .core_tree import INF, ColorPair, ConcreteTree, ext_add, sort_key
from .cset import ConcreteCSet
from .descriptor import composite, point
from .expand import BORDER, INNER, AnnotatedTree, Budget, BudgetError, expand
from .classify import LabeledClassTree, validate_constraints

NodeId = Any


class ReconstructError(ValueError):
    def __init__(self, message: str, clauses: Sequence[str] = ()):
        super().__init__(message)
        self.clauses = list(clauses)


# --- copying annotated trees ---------------------------------------------------------------

class _Assembler:
    """Accumulates renamed copies of annotated trees under fresh integer ids."""

    def __init__(self):
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
        self.colored = True

    def fresh(self) -> int:
        n = len(self.nodes)
        self.nodes.append(n)
        return n

    def copy(self, at: AnnotatedTree) -> Tuple[Dict[NodeId, int], List[int]]:
        t = at.tree
        m = {x: self.fresh() for x in t.nodes}
        for c, p in t.parent.items():
            self.parent[m[c]] = m[p]
        self.leaves.update(m[l] for l in t.leaves)
        for src, dst in ((at.node_color, self.color), (at.cone_kind, self.kind), (at.level_mark, self.level),
                         (at.cone_class, self.cls)):
            for k, v in src.items():
                dst[m[k]] = v
        for k, v in at.class_count.items():
            self.count[m[k]] = dict(v)
        self.dense.update(m[x] for x in at.dense_mark)
        self.stubs.update(m[x] for x in at.stubs)
        self.colored = self.colored and at.colored
        return m, [m[r] for r in t.roots]

    def finish(self, width: Optional[int], v_branch=frozenset(), virtual_root: bool = False) -> AnnotatedTree:
        tree = ConcreteTree(self.nodes, self.parent, self.leaves, virtual_root)
        return AnnotatedTree(tree, self.color, self.kind, frozenset(self.dense), self.level, self.cls, self.count,
                             frozenset(self.stubs), (), frozenset(v_branch), self.colored, width)


def connect(parts: Sequence[Tuple[AnnotatedTree, Any]], width: Optional[int] = None) -> AnnotatedTree:
    """A new root whose cones are copies of the parts, each repeated its multiplicity.

    Finite multiplicities are realized exactly.  Infinite ones need a width
    and are realized as width copies; declared counts stay in the annotations.
    """
    if not parts:
        raise ReconstructError("connect needs at least one part")
    total = 0
    for _, k in parts:
        if not (k == INF or (isinstance(k, int) and k >= 1)):
            raise ReconstructError(f"multiplicity {k!r} is not a positive cardinal")
        total = ext_add(total, k)
    if total != INF and total < 2:
        raise ReconstructError("a connection needs at least two cones at the new root")
    asm = _Assembler()
    r = asm.fresh()
    asm.level[r] = 1
    asm.count[r] = {}
    m = mu = 0
    for i, (at, k) in enumerate(parts):
        if k == INF and width is None:
            raise ReconstructError("an infinite multiplicity needs a width")
        copies = width if k == INF else k
        label = f"part{i}"
        asm.count[r][label] = k
        rooted = not at.tree.has_virtual_root
        if rooted:
            m = ext_add(m, k)
        else:
            mu = ext_add(mu, k)
        for _ in range(copies):
            _, roots = asm.copy(at)
            for x in roots:
                asm.parent[x] = r
                asm.kind[x] = BORDER if rooted else INNER
                asm.cls[x] = label
    asm.color[r] = ColorPair(m, mu)
    return asm.finish(None)


def replicate(H: AnnotatedTree, k, width: Optional[int] = None) -> AnnotatedTree:
    """k copies of H as the cones at a new root; one copy is H itself."""
    if k == 1:
        return H
    return connect([(H, k)], width)


# --- sticking ------------------------------------------------------------------------------

@dataclass
class StickingInput:
    M: AnnotatedTree
    C: AnnotatedTree
    V: Optional[Sequence[NodeId]] = None  # defaults to the marked branch of M


def _check_branch(M: AnnotatedTree, V: Sequence[NodeId]) -> List[NodeId]:
    t = M.tree
    if not V:
        raise ReconstructError("the branch is empty")
    V = sorted(V, key=t.depth)
    if V[0] not in t.roots:
        raise ReconstructError("the branch must start at the bottom of the tree")
    for a, b in zip(V, V[1:]):
        if t.parent.get(b) != a:
            raise ReconstructError(f"the branch is not a chain at {b}")
    for x in V:
        if x in t.leaves:
            raise ReconstructError(f"the branch has a leaf {x}")
        if x not in M.dense_mark or M.level_mark.get(x, 1) != 1:
            raise ReconstructError(f"{x} is not a dense node of the first level")
    top = V[-1]
    if any(c in M.dense_mark and M.same_region(top, c) and M.level_mark.get(c, 1) == 1 for c in t.children(top)):
        raise ReconstructError("the branch is not maximal in the first level")
    return V


def stick(inp: StickingInput) -> AnnotatedTree:
    """Graft the rooted structure C above the leafless branch V of M, so that
    C becomes the thick cone at the supremum of V."""
    M, C = inp.M, inp.C
    V = _check_branch(M, list(inp.V) if inp.V is not None else sorted(M.v_branch, key=sort_key))
    if C.tree.has_virtual_root or len(C.tree.roots) != 1:
        raise ReconstructError("the structure to stick must have a root")
    asm = _Assembler()
    mm, _ = asm.copy(M)
    _, (c_root,) = asm.copy(C)
    top = mm[V[-1]]
    asm.parent[c_root] = top
    asm.kind[c_root] = INNER
    asm.cls[c_root] = "stuck"
    asm.count.setdefault(top, {})["stuck"] = 1
    # the interval below C stays open at the bottom, so M's missing root is kept
    return asm.finish(None, [mm[x] for x in V], M.tree.has_virtual_root)


# --- unfolding -----------------------------------------------------------------------------

@dataclass
class Unfolded:
    nodes: List[str]
    parent: Dict[str, str]
    fiber: Dict[str, List[str]]
    vertex: Dict[str, str] = field(default_factory=dict)

    def tree(self) -> ConcreteTree:
        kids = set(self.parent.values())
        return ConcreteTree(self.nodes, self.parent, [x for x in self.nodes if x not in kids])

    def to_json(self):
        return {"nodes": self.nodes, "parent": self.parent, "fiber": self.fiber}


def _topdown(X: LabeledClassTree) -> List[str]:
    out, stack = [], [X.root.id]
    while stack:
        v = stack.pop()
        out.append(v)
        stack.extend(reversed(X.children(v)))
    return out


def unfold(X: LabeledClassTree) -> Unfolded:
    """The tree whose fibers over the vertices are antichains of the declared sizes."""
    if not X.vertices:
        return Unfolded([], {}, {})
    if X.root.n != 1:
        raise ReconstructError("the root vertex must have n = 1", ["1'"])
    nodes: List[str] = []
    parent: Dict[str, str] = {}
    fiber: Dict[str, List[str]] = {}
    vertex: Dict[str, str] = {}
    for vid in _topdown(X):
        v = X[vid]
        fiber[vid] = [f"{vid}#{j}" for j in range(v.n)]
        for j, x in enumerate(fiber[vid]):
            nodes.append(x)
            vertex[x] = vid
        if v.parent is not None:
            pn = X[v.parent].n
            if v.n % pn:
                raise ReconstructError(f"n = {v.n} at {vid} is not a multiple of {pn}", ["1'"])
            q = v.n // pn
            for j, x in enumerate(fiber[vid]):
                parent[x] = fiber[v.parent][j // q]
    return Unfolded(nodes, parent, fiber, vertex)


# --- reconstruction ------------------------------------------------------------------------

def leaf_cset(at: AnnotatedTree) -> ConcreteCSet:
    """The C-relation on the genuine leaves: C(a,b,c) iff a^b = a^c < b^c."""
    t = at.tree
    genuine = set(at.genuine_leaves())
    under: Dict[NodeId, List[NodeId]] = {}
    triples = []
    for x in sorted(t.nodes, key=t.depth, reverse=True):
        groups = [under[c] for c in t.children(x)]
        for i, g in enumerate(groups):
            others = [a for j, h in enumerate(groups) if j != i for a in h]
            for b in g:
                for c in g:
                    triples.extend((a, b, c) for a in others)
        under[x] = [l for g in groups for l in g] + ([x] if x in genuine else [])
    return ConcreteCSet([l for l in t.nodes if l in genuine], triples)


def reconstruct(X: LabeledClassTree, b: Budget, seed=0, strict_9: bool = False,
                emit_cset: bool = True) -> Tuple[Optional[ConcreteCSet], AnnotatedTree]:
    """Build the structure whose labeled quotient is X, bottom-up over the unfolded tree."""
    if not X.vertices:
        raise ReconstructError("an empty labeled tree describes an indiscernible structure; expand its theory instead")
    rep = validate_constraints(X, strict_9)
    if not rep.ok:
        raise ReconstructError(f"labels violate {', '.join(rep.clauses())}", rep.clauses())
    unfold(X)
    order = _topdown(X)
    built_N: Dict[str, AnnotatedTree] = {}
    built_M: Dict[str, AnnotatedTree] = {}
    virtual = X.virtual_root()
    for vid in reversed(order):
        v = X[vid]
        if virtual and v.parent is None:
            # no root: the structure is the one built over the unique successor
            continue
        parts: List[Tuple[AnnotatedTree, Any]] = [(built_N[c], X[c].n // v.n) for c in X.children(vid)]
        for i, (d, k) in enumerate(v.cones):
            parts.append((expand(d, b, f"{seed}:{vid}:{i}"), k))
        if not parts:
            M_a = expand(composite(point()), b, f"{seed}:{vid}")
        elif len(parts) == 1 and parts[0][1] == 1:
            raise ReconstructError(f"vertex {vid} has a single cone", ["2'"])
        else:
            M_a = connect(parts, b.width)
        built_M[vid] = M_a
        if v.edge_label is not None:
            G = expand(v.edge_label, b, f"{seed}:{vid}:edge")
            built_N[vid] = stick(StickingInput(G, M_a))
        else:
            built_N[vid] = M_a
        if len(built_N[vid]) > b.node_cap:
            raise BudgetError(f"the structure at {vid} has {len(built_N[vid])} elements, node_cap is {b.node_cap}")
    root = X.root
    if virtual:
        (child,) = X.children(root.id)
        out = built_N[child]
    else:
        out = built_M[root.id]
    return (leaf_cset(out) if emit_cset else None), out
