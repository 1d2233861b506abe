"""JSON encoding of proof outlines.

An outline file names two ``.qw`` programs (paths relative to the file, or
inline sources), a table of predicates and a list of segments::

    {
      "left": "P1.qw", "right": "P2.qw",
      "projective": false,
      "predicates": {"EqB": {"regs": [["q<1>", 2], ["q<2>", 2]], "matrix": ...}},
      "segments": [{"rule": RULE, "pre": "EqB", "post": "I", "gamma": [COND]}]
    }

``RULE`` is ``{"rule": name, "left": ref, "right": ref, "premises": {...},
"payload": {...}}``.  A fragment ``ref`` walks into a program body: path
parts alternate between a statement selector (``"2"`` or a slice ``"0:2"``)
and a branch selector (an outcome, or ``"body"`` for loops), e.g. ``"2/1"``
is branch 1 of the third statement.  An empty or missing ref means ``skip``.

Premise keys ``"0"`` and ``"0,1"`` become the outcome ``0`` and the outcome
pair ``(0, 1)``; ``inner``, ``body``, ``parts`` and ``cases`` keep their names.
Payload strings name predicates; ``branch_pre`` maps outcomes to names,
``gamma`` holds conditions and ``probs`` a list of numbers.

``COND`` is one of ``{"kind": "meas", "left": SIDE|null, "right": SIDE|null}``
with ``SIDE = {"ref": ref, "program": "left"|"right", "regs": [...]}``,
``{"kind": "loop", "left": ref, "right": ref}`` or
``{"kind": "separability", "partition": [[names], ...]}``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import linalg as la
from .judgment import MeasEq, MeasLoopEq, Separability
from .lang import parse
from .lang.ast import IfMeas, Program, Seq, Skip, Stmt, WhileMeas, seq
from .outline import ProofOutline, Segment
from .rules import RuleInstance
from .spaces import Register, RegOp

PREDICATE_KEYS = {"pre", "invariant", "b0", "b1", "inner_post", "inner_pre", "frame", "post"}


class OutlineFormatError(ValueError):
    pass


def load_matrix(obj: Any) -> np.ndarray:
    """A matrix from ``linalg.to_json`` output or from nested lists of numbers / ``[re, im]`` pairs."""
    if isinstance(obj, dict):
        return la.from_json(obj)

    def entry(x):
        if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(t, (int, float)) for t in x):
            return complex(x[0], x[1])
        if isinstance(x, str):
            return complex(x.replace(" ", "").replace("i", "j"))
        return complex(x)

    try:
        rows = [[entry(x) for x in row] for row in obj]
    except TypeError as exc:
        raise OutlineFormatError(f"cannot read matrix: {exc}") from exc
    m = np.array(rows, dtype=complex)
    if m.ndim != 2:
        raise OutlineFormatError("matrix must be two-dimensional")
    return m


def predicate_to_json(op: RegOp) -> dict:
    return {"regs": [[r.name, r.dim] for r in op.regs], "matrix": la.to_json(op.matrix)}


def predicate_from_json(obj: dict) -> RegOp:
    try:
        regs = tuple(Register(n, int(d)) for n, d in obj["regs"])
        return RegOp(load_matrix(obj["matrix"]), regs)
    except (KeyError, TypeError) as exc:
        raise OutlineFormatError(f"malformed predicate: {exc}") from exc


def _block(s: Stmt) -> tuple[Stmt, ...]:
    if isinstance(s, Seq):
        return s.stmts
    if isinstance(s, Skip):
        return ()
    return (s,)


def resolve_fragment(body: Stmt, ref: Optional[str]) -> Stmt:
    if ref is None or ref == "":
        return Skip()
    cur: Stmt = body
    for i, part in enumerate(str(ref).split("/")):
        if i % 2 == 0:
            stmts = _block(cur)
            try:
                if ":" in part:
                    a, b = part.split(":")
                    cur = seq(*stmts[int(a) if a else None:int(b) if b else None])
                else:
                    cur = stmts[int(part)]
            except (ValueError, IndexError) as exc:
                raise OutlineFormatError(f"bad statement selector {part!r} in {ref!r}") from exc
        else:
            if part == "body":
                if not isinstance(cur, WhileMeas):
                    raise OutlineFormatError(f"{ref!r}: 'body' needs a while loop")
                cur = cur.body
            else:
                if not isinstance(cur, IfMeas):
                    raise OutlineFormatError(f"{ref!r}: branch selector needs an if statement")
                try:
                    cur = cur.branch(int(part))
                except (ValueError, KeyError) as exc:
                    raise OutlineFormatError(f"{ref!r}: no branch {part!r}") from exc
    return cur


class _Loader:
    def __init__(self, p1: Program, p2: Program, predicates: dict[str, RegOp]):
        self.programs = {"left": p1, "right": p2}
        self.predicates = predicates

    def predicate(self, name: str) -> RegOp:
        try:
            return self.predicates[name]
        except KeyError as exc:
            raise OutlineFormatError(f"unknown predicate {name!r}") from exc

    def fragment(self, side: str, ref) -> Stmt:
        return resolve_fragment(self.programs[side].body, ref)

    def condition(self, obj: dict):
        kind = obj.get("kind")
        if kind == "meas":
            sides = []
            for own in ("left", "right"):
                side_obj = obj.get(own)
                if side_obj is None:
                    sides += [None, ()]
                    continue
                stmt = self.fragment(side_obj.get("program", own), side_obj["ref"])
                if not isinstance(stmt, (IfMeas, WhileMeas)):
                    raise OutlineFormatError(f"measurement reference {side_obj['ref']!r} is not an if or while")
                sides += [stmt.meas, tuple(side_obj.get("regs", stmt.regs))]
            return MeasEq(*sides)
        if kind == "loop":
            l, r = self.fragment("left", obj["left"]), self.fragment("right", obj["right"])
            decl = tuple(self.programs["left"].registers) + tuple(
                x for x in self.programs["right"].registers if x.name not in {y.name for y in self.programs["left"].registers}
            )
            return MeasLoopEq(l, r, decl)
        if kind == "separability":
            return Separability(tuple(tuple(b) for b in obj["partition"]))
        raise OutlineFormatError(f"unknown condition kind {kind!r}")

    def rule(self, obj: dict) -> RuleInstance:
        if "rule" not in obj:
            raise OutlineFormatError("rule instance without a 'rule' name")
        premises = {}
        for key, val in obj.get("premises", {}).items():
            premises[_premise_key(key)] = [self.rule(v) for v in val] if isinstance(val, list) else self.rule(val)
        payload = {}
        for key, val in obj.get("payload", {}).items():
            if key in PREDICATE_KEYS:
                payload[key] = self.predicate(val)
            elif key == "branch_pre":
                payload[key] = {int(k): self.predicate(v) for k, v in val.items()}
            elif key == "gamma":
                payload[key] = tuple(self.condition(c) for c in val)
            else:
                payload[key] = val
        return RuleInstance(
            obj["rule"],
            self.fragment("left", obj.get("left")),
            self.fragment("right", obj.get("right")),
            premises,
            payload,
        )


def _premise_key(key: str):
    if key in ("inner", "body", "parts", "cases"):
        return key
    try:
        if "," in key:
            return tuple(int(x) for x in key.split(","))
        return int(key)
    except ValueError as exc:
        raise OutlineFormatError(f"unknown premise key {key!r}") from exc


def _program(obj: dict, side: str, base: Optional[Path]) -> Program:
    if f"{side}_source" in obj:
        return parse(obj[f"{side}_source"])
    if side not in obj:
        raise OutlineFormatError(f"outline names no {side} program")
    path = Path(obj[side])
    if base is not None and not path.is_absolute():
        path = base / path
    try:
        return parse(path.read_text())
    except OSError as exc:
        raise OutlineFormatError(f"cannot read {path}: {exc}") from exc


def outline_from_json(obj: dict, base: Optional[Path] = None) -> ProofOutline:
    p1, p2 = _program(obj, "left", base), _program(obj, "right", base)
    predicates = {k: predicate_from_json(v) for k, v in obj.get("predicates", {}).items()}
    loader = _Loader(p1, p2, predicates)
    segments = []
    for seg in obj.get("segments", []):
        try:
            segments.append(
                Segment(
                    loader.rule(seg["rule"]),
                    loader.predicate(seg["pre"]),
                    loader.predicate(seg["post"]),
                    tuple(loader.condition(c) for c in seg.get("gamma", [])),
                )
            )
        except KeyError as exc:
            raise OutlineFormatError(f"segment is missing {exc}") from exc
    return ProofOutline(p1, p2, segments, bool(obj.get("projective", False)), obj.get("name", ""))


def read_outline(path: str | Path) -> ProofOutline:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise OutlineFormatError(f"cannot load {path}: {exc}") from exc
    return outline_from_json(obj, path.parent)


def judgment_from_json(obj: dict, base: Optional[Path] = None):
    """``{"left", "right", "pre", "post", "gamma"?, "projective"?}`` with inline predicates.

    Returns ``(Judgment, projective_flag)``.
    """
    from .judgment import Judgment

    p1, p2 = _program(obj, "left", base), _program(obj, "right", base)
    loader = _Loader(p1, p2, {})
    try:
        pre, post = predicate_from_json(obj["pre"]), predicate_from_json(obj["post"])
    except KeyError as exc:
        raise OutlineFormatError(f"judgment is missing {exc}") from exc
    gamma = tuple(loader.condition(c) for c in obj.get("gamma", []))
    return Judgment(p1, p2, pre, post, gamma), bool(obj.get("projective", False))


def read_judgment(path: str | Path):
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise OutlineFormatError(f"cannot load {path}: {exc}") from exc
    return judgment_from_json(obj, path.parent)
