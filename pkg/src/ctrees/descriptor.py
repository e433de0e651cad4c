"""Symbolic names for complete theories of colored good trees.

A level is one 1-colored theory (kind plus color); a composite stacks levels,
the leaves of each level being replaced by copies of the next.  The branch
variant marks a distinguished leafless branch of the first level.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from .core_tree import INF, ColorPair, ValidationReport, ext_add, ext_from_json, ext_str, ext_to_json, is_extcard

T00, T0, T1A, T1B = "T00", "T0", "T1a", "T1b"
KINDS = (T00, T0, T1A, T1B)

CLAUSE_KIND = "kind"
CLAUSE_COLOR = "color of kind"
CLAUSE_SIZE = "m + mu >= 2"
CLAUSE_ADJ = "(1.a) followed by (0)"
CLAUSE_POINT = "point level alone"
CLAUSE_EMPTY = "nonempty"
CLAUSE_V = "branch variant needs mu1 != 0"


class DescriptorError(ValueError):
    pass


@dataclass(frozen=True)
class OneColoredDescriptor:
    kind: str
    m: Any = 0
    mu: Any = 0

    @property
    def color(self) -> ColorPair:
        return ColorPair(self.m, self.mu)

    @property
    def rooted(self) -> bool:
        return self.kind in (T00, T0)

    def to_json(self) -> Dict[str, Any]:
        return {"kind": self.kind, "m": ext_to_json(self.m), "mu": ext_to_json(self.mu)}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "OneColoredDescriptor":
        try:
            return cls(data["kind"], ext_from_json(data.get("m", 0)), ext_from_json(data.get("mu", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise DescriptorError(f"malformed level {data!r}") from exc

    def __str__(self):
        if self.kind == T00:
            return "(T00)"
        return f"({self.kind},{ext_str(self.m)},{ext_str(self.mu)})"


def point() -> OneColoredDescriptor:
    return OneColoredDescriptor(T00, 0, 0)


def t0(m) -> OneColoredDescriptor:
    return OneColoredDescriptor(T0, m, 0)


def t1a(mu) -> OneColoredDescriptor:
    return OneColoredDescriptor(T1A, 0, mu)


def t1b(m, mu) -> OneColoredDescriptor:
    return OneColoredDescriptor(T1B, m, mu)


@dataclass(frozen=True)
class CompositeDescriptor:
    levels: Tuple[OneColoredDescriptor, ...]
    branch_variant: bool = False

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))

    def __len__(self):
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

    def to_json(self) -> Dict[str, Any]:
        return {"levels": [l.to_json() for l in self.levels], "branch_variant": self.branch_variant}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "CompositeDescriptor":
        if not isinstance(data, dict) or "levels" not in data:
            raise DescriptorError("descriptor JSON needs a 'levels' list")
        return cls(tuple(OneColoredDescriptor.from_json(l) for l in data["levels"]),
                   bool(data.get("branch_variant", False)))

    def __str__(self):
        s = " x| ".join(str(l) for l in self.levels)
        return s + " (V)" if self.branch_variant else s


Descriptor = Union[OneColoredDescriptor, CompositeDescriptor]


def composite(*levels: OneColoredDescriptor, branch_variant: bool = False) -> CompositeDescriptor:
    return CompositeDescriptor(tuple(levels), branch_variant)


def BranchVariantDescriptor(base: CompositeDescriptor) -> CompositeDescriptor:
    return CompositeDescriptor(base.levels, True)


def as_composite(d: Descriptor) -> CompositeDescriptor:
    if isinstance(d, OneColoredDescriptor):
        return CompositeDescriptor((d,))
    return d


# --- validation -------------------------------------------------------------------

def _validate_level(l: OneColoredDescriptor, i: int, rep: ValidationReport) -> None:
    if l.kind not in KINDS:
        rep.add(CLAUSE_KIND, i, f"unknown kind {l.kind!r}")
        return
    for v in (l.m, l.mu):
        if not is_extcard(v):
            rep.add(CLAUSE_COLOR, i, f"{v!r} is neither a natural number nor infinite")
            return
    m, mu = l.m, l.mu
    if l.kind == T00 and (m, mu) != (0, 0):
        rep.add(CLAUSE_COLOR, i, "(T00) has color (0,0)")
    elif l.kind == T0 and not (mu == 0 and m >= 2):
        rep.add(CLAUSE_COLOR, i, "(T0) needs m >= 2 and mu = 0")
    elif l.kind == T1A and not (m == 0 and mu >= 2):
        rep.add(CLAUSE_COLOR, i, "(T1a) needs m = 0 and mu >= 2")
    elif l.kind == T1B and not (m >= 1 and mu >= 1):
        rep.add(CLAUSE_COLOR, i, "(T1b) needs m >= 1 and mu >= 1")
    if l.kind != T00 and ext_add(m, mu) < 2:
        rep.add(CLAUSE_SIZE, i, "")


def validate(d: Descriptor) -> ValidationReport:
    rep = ValidationReport()
    d = as_composite(d)
    if not d.levels:
        rep.add(CLAUSE_EMPTY, None, "no levels")
        return rep
    for i, l in enumerate(d.levels):
        _validate_level(l, i, rep)
        if l.kind == T00 and len(d.levels) > 1:
            rep.add(CLAUSE_POINT, i, "(T00) only names the one-point tree")
    for i in range(len(d.levels) - 1):
        if d.levels[i].kind == T1A and d.levels[i + 1].kind != T0:
            rep.add(CLAUSE_ADJ, i, f"level {i} is (1.a) but level {i + 1} is {d.levels[i + 1].kind}")
    if d.branch_variant and d.levels[0].mu == 0:
        rep.add(CLAUSE_V, 0, "first level has no leafless branch")
    return rep


def _require_valid(d: Descriptor) -> CompositeDescriptor:
    rep = validate(d)
    if not rep.ok:
        raise DescriptorError(f"invalid descriptor {d}: {rep.clauses()}")
    return as_composite(d)


# --- normalization ----------------------------------------------------------------

def _exc1_at(levels: Sequence[OneColoredDescriptor], i: int) -> bool:
    if i + 1 >= len(levels):
        return False
    a, b = levels[i], levels[i + 1]
    return a.kind == T1B and b.kind == T1A and b.mu == ext_add(a.m, a.mu)


def _exc2_at(levels: Sequence[OneColoredDescriptor], i: int) -> bool:
    if i + 2 >= len(levels):
        return False
    a, b, c = levels[i:i + 3]
    return a.kind == T1A and b.kind == T0 and c.kind == T1A and a.mu == b.m == c.mu


def rewrites(levels: Tuple[OneColoredDescriptor, ...]) -> List[Tuple[OneColoredDescriptor, ...]]:
    """All one-step Exception merges of a level sequence."""
    out = []
    for i in range(len(levels)):
        if _exc1_at(levels, i):
            out.append(levels[:i] + (levels[i + 1],) + levels[i + 2:])
        if _exc2_at(levels, i):
            out.append(levels[:i] + (levels[i + 2],) + levels[i + 3:])
    return out


def is_normal(d: Descriptor) -> bool:
    return not rewrites(as_composite(d).levels)


def normalize(d: Descriptor) -> CompositeDescriptor:
    """Merge Exception patterns, leftmost first, until none is left."""
    d = _require_valid(d)
    levels = d.levels
    while True:
        step = rewrites(levels)
        if not step:
            break
        levels = step[0]
    return CompositeDescriptor(levels, d.branch_variant)


def all_normal_forms(d: Descriptor) -> Set[Tuple[OneColoredDescriptor, ...]]:
    """Every normal form reachable by any order of merges."""
    start = as_composite(d).levels
    seen = {start}
    stack = [start]
    out = set()
    while stack:
        cur = stack.pop()
        nxt = rewrites(cur)
        if not nxt:
            out.add(cur)
        for n in nxt:
            if n not in seen:
                seen.add(n)
                stack.append(n)
    return out


def sweep_levels(params: Iterable = (1, 2, 3, INF)) -> List[OneColoredDescriptor]:
    params = list(params)
    out: List[OneColoredDescriptor] = []
    for p in params:
        if p >= 2:
            out.append(t0(p))
            out.append(t1a(p))
    for m, mu in itertools.product(params, params):
        out.append(t1b(m, mu))
    return out


def enumerate_descriptors(max_depth: int, params: Iterable = (1, 2, 3, INF),
                          include_point: bool = True) -> List[CompositeDescriptor]:
    """All valid composites up to max_depth with the given parameter values."""
    levels = sweep_levels(params)
    out = [composite(point())] if include_point else []
    frontier: List[Tuple[OneColoredDescriptor, ...]] = [()]
    for _ in range(max_depth):
        new = []
        for pre in frontier:
            for l in levels:
                if pre and pre[-1].kind == T1A and l.kind != T0:
                    continue
                new.append(pre + (l,))
        out.extend(CompositeDescriptor(t) for t in new)
        frontier = new
    return out


def confluence_sweep(max_depth: int = 4, params: Iterable = (1, 2, 3, INF)) -> List[Dict[str, Any]]:
    """Composites whose merges can end in more than one normal form (empty when confluent)."""
    divergences = []
    for d in enumerate_descriptors(max_depth, params, include_point=False):
        forms = all_normal_forms(d)
        if len(forms) > 1:
            divergences.append({"descriptor": str(d), "normal_forms": [str(CompositeDescriptor(f)) for f in forms]})
    return divergences


# --- accessors ----------------------------------------------------------------------

def depth(d: Descriptor) -> int:
    return len(normalize(d).levels)


def first_level(d: Descriptor) -> OneColoredDescriptor:
    return normalize(d).levels[0]


def tail(d: Descriptor) -> Optional[CompositeDescriptor]:
    n = normalize(d)
    return CompositeDescriptor(n.levels[1:]) if len(n.levels) > 1 else None


def descriptor_equal(d1: Descriptor, d2: Descriptor) -> bool:
    return normalize(d1) == normalize(d2)


# --- text form ------------------------------------------------------------------------

def _card(s: str):
    s = s.strip().lower()
    if s in ("inf", "oo", "infinity", "∞"):
        return INF
    try:
        v = int(s)
    except ValueError:
        raise DescriptorError(f"bad cardinal {s!r}") from None
    if v < 0:
        raise DescriptorError(f"negative cardinal {s!r}")
    return v


def parse_level(text: str) -> OneColoredDescriptor:
    """Parse T00, T0:m, T1a:mu, T1b:m:mu or any KIND:m:mu."""
    parts = [p.strip() for p in text.strip().strip("()").replace(",", ":").split(":")]
    kind = next((k for k in KINDS if k.lower() == parts[0].lower()), None)
    if kind is None:
        raise DescriptorError(f"unknown kind in {text!r}")
    nums = [_card(p) for p in parts[1:]]
    if len(nums) == 2:
        return OneColoredDescriptor(kind, nums[0], nums[1])
    if kind == T00 and not nums:
        return point()
    if kind == T0 and len(nums) == 1:
        return t0(nums[0])
    if kind == T1A and len(nums) == 1:
        return t1a(nums[0])
    raise DescriptorError(f"cannot read level {text!r}")


def parse_descriptor(text: str) -> CompositeDescriptor:
    """Read a descriptor from JSON or from the compact form 'T1b:1:1/T1a:2' (suffix '+V' for the branch variant)."""
    s = text.strip()
    if s.startswith("{"):
        try:
            return CompositeDescriptor.from_json(json.loads(s))
        except json.JSONDecodeError as exc:
            raise DescriptorError(f"bad descriptor JSON: {exc}") from None
    bv = False
    if s.upper().endswith("+V"):
        bv, s = True, s[:-2]
    if not s:
        raise DescriptorError("empty descriptor")
    return CompositeDescriptor(tuple(parse_level(p) for p in s.split("/")), bv)


def format_descriptor(d: Descriptor) -> str:
    d = as_composite(d)

    def one(l):
        if l.kind == T00:
            return "T00"
        return f"{l.kind}:{ext_str(l.m)}:{ext_str(l.mu)}"

    return "/".join(one(l) for l in d.levels) + ("+V" if d.branch_variant else "")
