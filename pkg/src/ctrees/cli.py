"""Command-line frontend.

Exit status: 0 on success, equivalence or validity; 1 on a negative verdict
(distinguished, invalid, not isomorphic); 2 on input errors.  Failures write
exactly one JSON object to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

from .core_tree import ConcreteTree, TreeError, _jsonable
from .cset import ConcreteCSet, CSetError, canonical_tree, check_c_axioms, cset_isomorphic, leaves_cset
from .descriptor import CompositeDescriptor, DescriptorError, format_descriptor, parse_descriptor
from .expand import (
    AnnotatedTree, Budget, BudgetError, ExpansionError, RecognitionError, expand, extend_tree,
    extension_conditions, quotient_sim, recognize,
)
from .equivalence import Signature, SignatureError, back_and_forth, iso_finite
from .classify import (
    ClassifyError, LabelError, LabeledClassTree, canonical_partition, theta, theta_bar, validate_constraints,
)
from .reconstruct import ReconstructError, reconstruct, unfold

SIGS = {"l1": "L1", "l1p": "L1P", "l2": "L2", "ln": "Ln", "lnp": "LnP", "lnv": "LnV"}


class CliError(Exception):
    def __init__(self, kind: str, message: str, status: int = 2):
        super().__init__(message)
        self.kind = kind
        self.status = status


@dataclass
class CommandConfig:
    subcommand: str
    inputs: List[str]
    out: Optional[str]
    budget: Budget
    seed: int
    rounds: int
    sig: Optional[str]
    strict_9: bool
    emit_dot: Optional[str]
    emit_cset: Optional[str]

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "CommandConfig":
        if ns.rounds < 1:
            raise CliError("usage", f"--rounds must be at least 1, got {ns.rounds}")
        return cls(ns.command, list(ns.inputs), ns.out, Budget.parse(ns.budget), ns.seed, ns.rounds, ns.sig,
                   ns.strict_9, ns.emit_dot, ns.emit_cset)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


# --- input and output ---------------------------------------------------------------------------

def _load(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError("io", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError("json", f"{path} is not valid JSON: {exc.msg} at line {exc.lineno}") from None


def _structure(path: str):
    """A C-set, tree, annotated tree or labeled tree, by the keys of the JSON object."""
    data = _load(path)
    if not isinstance(data, dict):
        raise CliError("input", f"{path}: expected a JSON object")
    if "vertices" in data:
        return LabeledClassTree.from_json(data)
    if "elements" in data:
        return ConcreteCSet.from_json(data)
    if "nodes" in data:
        if "node_color" in data:
            return AnnotatedTree.from_json(data)
        return ConcreteTree.from_json(data)
    if "descriptor" in data:
        return _descriptor(data["descriptor"])
    raise CliError("input", f"{path}: not a C-set, tree or labeled tree")


def _descriptor(x):
    if isinstance(x, str):
        return parse_descriptor(x)
    return CompositeDescriptor.from_json(x)


def _expect(obj, types, what: str, path: str):
    if not isinstance(obj, types):
        raise CliError("input", f"{path}: expected {what}, got {type(obj).__name__}")
    return obj


def _tree_like(path: str, b: Budget, seed: int):
    obj = _structure(path)
    if isinstance(obj, ConcreteCSet):
        return AnnotatedTree.from_finite(canonical_tree(obj)[0])
    if isinstance(obj, ConcreteTree):
        return AnnotatedTree.from_finite(obj)
    if isinstance(obj, AnnotatedTree):
        return obj
    if isinstance(obj, LabeledClassTree):
        raise CliError("input", f"{path}: expected a tree, got a labeled class tree")
    return expand(obj, b, seed)


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _write(path: Optional[str], text: str, stdout) -> None:
    if path is None:
        stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError("io", f"cannot write {path}: {exc.strerror}") from None


def _sig(name: Optional[str], *trees) -> Signature:
    if name is None:
        return Signature("L1")
    tag = SIGS[name]
    if tag in ("L1", "L1P", "L2"):
        return Signature(tag)
    k = max([len(t.layers) for t in trees if isinstance(t, AnnotatedTree)] + [1])
    return Signature(tag, k)


# --- subcommands ----------------------------------------------------------------------------------

def _nargs(cfg: CommandConfig, n: int) -> List[str]:
    if len(cfg.inputs) != n:
        raise CliError("usage", f"{cfg.subcommand} takes {n} input(s), got {len(cfg.inputs)}")
    return cfg.inputs


def cmd_check_cset(cfg, out):
    (p,) = _nargs(cfg, 1)
    M = _expect(_structure(p), ConcreteCSet, "a C-set", p)
    rep = check_c_axioms(M)
    _write(cfg.out, _dumps(rep), out)
    return 0 if rep.ok else 1


def cmd_tree(cfg, out):
    (p,) = _nargs(cfg, 1)
    M = _expect(_structure(p), ConcreteCSet, "a C-set", p)
    T, lm = canonical_tree(M)
    _write(cfg.out, _dumps({"tree": T, "leaf_map": lm}), out)
    return 0


def cmd_leaves(cfg, out):
    (p,) = _nargs(cfg, 1)
    T = _structure(p)
    if isinstance(T, AnnotatedTree):
        from .reconstruct import leaf_cset
        M = leaf_cset(T)
    else:
        M = leaves_cset(_expect(T, ConcreteTree, "a tree", p))[0]
    _write(cfg.out, _dumps(M), out)
    return 0


def _desc_arg(text: str):
    try:
        return parse_descriptor(text)
    except DescriptorError:
        if not os.path.exists(text):
            raise
        obj = _structure(text)
        if isinstance(obj, (ConcreteCSet, ConcreteTree, AnnotatedTree, LabeledClassTree)):
            raise CliError("input", f"{text}: expected a descriptor") from None
        return obj


def cmd_expand(cfg, out):
    (p,) = _nargs(cfg, 1)
    at = expand(_desc_arg(p), cfg.budget, cfg.seed)
    _write(cfg.out, _dumps(at), out)
    if cfg.emit_dot:
        _write(cfg.emit_dot, at.to_dot(), out)
    return 0


def cmd_recognize(cfg, out):
    (p,) = _nargs(cfg, 1)
    at = _tree_like(p, cfg.budget, cfg.seed)
    d = recognize(at)
    _write(cfg.out, _dumps({"descriptor": format_descriptor(d), "levels": d}), out)
    return 0


def cmd_extend(cfg, out):
    p, q = _nargs(cfg, 2)
    T, T0 = _tree_like(p, cfg.budget, cfg.seed), _tree_like(q, cfg.budget, cfg.seed)
    rep = extension_conditions(T, T0)
    if not rep.ok:
        _write(cfg.out, _dumps({"conditions": rep}), out)
        return 1
    at, w = extend_tree(T, T0)
    _write(cfg.out, _dumps({"tree": at, "witness": w}), out)
    if cfg.emit_dot:
        _write(cfg.emit_dot, at.to_dot(), out)
    return 0


def cmd_quotient(cfg, out):
    p, q = _nargs(cfg, 2)
    T, T0 = _tree_like(p, cfg.budget, cfg.seed), _tree_like(q, cfg.budget, cfg.seed)
    at, w = extend_tree(T, T0)
    Q, proj = quotient_sim(at, w)
    same = iso_finite(Q, T) is not None
    _write(cfg.out, _dumps({"quotient": Q, "projection": [[k, v] for k, v in proj.items()],
                            "isomorphic_to_first": same}), out)
    return 0 if same else 1


def cmd_ef(cfg, out):
    p, q = _nargs(cfg, 2)
    A, B_ = _tree_like(p, cfg.budget, cfg.seed), _tree_like(q, cfg.budget, cfg.seed)
    res = back_and_forth(A, B_, _sig(cfg.sig, A, B_), cfg.rounds)
    _write(cfg.out, _dumps(res), out)
    return 0 if res.equivalent else 1


def cmd_iso(cfg, out):
    p, q = _nargs(cfg, 2)
    a, b = _structure(p), _structure(q)
    if isinstance(a, ConcreteCSet) and isinstance(b, ConcreteCSet):
        f = cset_isomorphic(a, b)
    else:
        A, B_ = _tree_like(p, cfg.budget, cfg.seed), _tree_like(q, cfg.budget, cfg.seed)
        f = iso_finite(A, B_, _sig(cfg.sig, A, B_) if cfg.sig else None)
    _write(cfg.out, _dumps({"isomorphic": f is not None, "map": None if f is None else [[k, v] for k, v in f.items()]}),
           out)
    return 0 if f is not None else 1


def cmd_classify(cfg, out):
    (p,) = _nargs(cfg, 1)
    M = _structure(p)
    if isinstance(M, LabeledClassTree):
        raise CliError("input", f"{p}: expected a structure, got a labeled class tree")
    if not isinstance(M, (ConcreteCSet, ConcreteTree, AnnotatedTree)):
        M = expand(M, cfg.budget, cfg.seed)
    th = theta(M)
    X = theta_bar(M, th)
    _write(cfg.out, _dumps({"partition": canonical_partition(M), "theta": th, "labeled_tree": X}), out)
    if cfg.emit_dot:
        _write(cfg.emit_dot, X.to_dot(), out)
    return 0


def _labeled(p: str) -> LabeledClassTree:
    return _expect(_structure(p), LabeledClassTree, "a labeled class tree", p)


def cmd_validate_labels(cfg, out):
    (p,) = _nargs(cfg, 1)
    rep = validate_constraints(_labeled(p), cfg.strict_9)
    _write(cfg.out, _dumps(rep), out)
    return 0 if rep.ok else 1


def cmd_unfold(cfg, out):
    (p,) = _nargs(cfg, 1)
    U = unfold(_labeled(p))
    _write(cfg.out, _dumps(U), out)
    if cfg.emit_dot:
        _write(cfg.emit_dot, U.tree().to_dot("Unfolded"), out)
    return 0


def cmd_reconstruct(cfg, out):
    (p,) = _nargs(cfg, 1)
    M, at = reconstruct(_labeled(p), cfg.budget, cfg.seed, cfg.strict_9, emit_cset=cfg.emit_cset is not None)
    _write(cfg.out, _dumps(at), out)
    if cfg.emit_cset:
        _write(cfg.emit_cset, _dumps(M), out)
    if cfg.emit_dot:
        _write(cfg.emit_dot, at.to_dot(), out)
    return 0


def cmd_roundtrip(cfg, out):
    (p,) = _nargs(cfg, 1)
    X = _labeled(p)
    _, at = reconstruct(X, cfg.budget, cfg.seed, cfg.strict_9, emit_cset=False)
    Y = theta_bar(at)
    same = Y.label_isomorphic(X)
    _write(cfg.out, _dumps({"recovered": Y, "label_isomorphic": same}), out)
    if cfg.emit_dot:
        _write(cfg.emit_dot, Y.to_dot(), out)
    return 0 if same else 1


def cmd_export_dot(cfg, out):
    (p,) = _nargs(cfg, 1)
    obj = _structure(p)
    if isinstance(obj, ConcreteCSet):
        obj = canonical_tree(obj)[0]
    elif not isinstance(obj, (ConcreteTree, AnnotatedTree, LabeledClassTree)):
        obj = expand(obj, cfg.budget, cfg.seed)
    _write(cfg.emit_dot or cfg.out, obj.to_dot(), out)
    return 0


COMMANDS = {
    "check-cset": (cmd_check_cset, "check the C-axioms of a C-set"),
    "tree": (cmd_tree, "canonical tree of a C-set"),
    "leaves": (cmd_leaves, "C-set on the leaves of a tree"),
    "expand": (cmd_expand, "budgeted model of a descriptor (string or JSON file)"),
    "recognize": (cmd_recognize, "descriptor of a colored tree"),
    "extend": (cmd_extend, "replace the leaves of the first tree by copies of the second"),
    "quotient": (cmd_quotient, "extend, then collapse the copies and compare with the first tree"),
    "ef": (cmd_ef, "back-and-forth game between two trees"),
    "iso": (cmd_iso, "isomorphism of two C-sets or trees"),
    "classify": (cmd_classify, "canonical partition, Theta and its labeled quotient"),
    "validate-labels": (cmd_validate_labels, "check the label constraints of a labeled class tree"),
    "unfold": (cmd_unfold, "tree of fibers of a labeled class tree"),
    "reconstruct": (cmd_reconstruct, "structure with the given labeled class tree"),
    "roundtrip": (cmd_roundtrip, "reconstruct, classify again and compare"),
    "export-dot": (cmd_export_dot, "Graphviz rendering of any JSON input"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ctrees", description="Colored trees, C-sets and their classification.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("inputs", nargs="*")
        sp.add_argument("--budget", default="2,2,2000", help="dense depth, width and node cap as d,w,cap")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--rounds", type=int, default=3)
        sp.add_argument("--sig", choices=sorted(SIGS))
        sp.add_argument("--strict-9", dest="strict_9", action="store_true")
        sp.add_argument("--out")
        sp.add_argument("--emit-dot")
        sp.add_argument("--emit-cset")
    return ap


def run(argv: Sequence[str], stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    err: Dict[str, Any]
    try:
        cfg = CommandConfig.from_args(build_parser().parse_args(list(argv)))
        status = COMMANDS[cfg.subcommand][0](cfg, stdout)
        if status == 0:
            return 0
        err = {"error": "verdict", "message": f"{cfg.subcommand}: negative verdict"}
    except CliError as exc:
        err = {"error": exc.kind, "message": str(exc)}
        status = exc.status
    except BudgetError as exc:
        err, status = {"error": "budget", "message": str(exc)}, 2
    except RecognitionError as exc:
        err, status = {"error": "recognition", "message": str(exc), "clause": exc.clause}, 1
    except ReconstructError as exc:
        err, status = {"error": "labels", "message": str(exc), "clauses": exc.clauses}, 2
    except ClassifyError as exc:
        err, status = {"error": "classify", "message": str(exc), "witness": _jsonable(exc.witness)}, 2
    except (CSetError, TreeError, DescriptorError, LabelError, ExpansionError, SignatureError) as exc:
        err, status = {"error": "input", "message": str(exc)}, 2
    except (ValueError, KeyError, TypeError) as exc:
        err, status = {"error": "input", "message": f"{type(exc).__name__}: {exc}"}, 2
    stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return status


def main(argv: Optional[Sequence[str]] = None) -> None:
    sys.exit(run(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
