"""Decomposed reactive specifications and their BoSy-style JSON format."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Sequence

from . import ltl
from .ltl import Ltl


class SpecError(Exception):
    pass


class RealizabilityStatus(enum.Enum):
    REALIZABLE = "realizable"
    UNREALIZABLE = "unrealizable"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Specification:
    """Inputs/outputs plus assumption and guarantee formulas.

    The overall property is (/\\ assumptions) -> (/\\ guarantees); only
    "mealy" semantics (outputs at t may read inputs at t) are supported."""

    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    assumptions: tuple[Ltl, ...] = ()
    guarantees: tuple[Ltl, ...] = ()
    semantics: str = "mealy"

    def __post_init__(self):
        if self.semantics != "mealy":
            raise SpecError(f"unsupported semantics {self.semantics!r}")
        overlap = set(self.inputs) & set(self.outputs)
        if overlap:
            raise SpecError(f"propositions {sorted(overlap)} are both input "
                            "and output")
        declared = set(self.inputs) | set(self.outputs)
        for role, fs in (("assumption", self.assumptions),
                         ("guarantee", self.guarantees)):
            for f in fs:
                undeclared = ltl.atoms(f) - declared
                if undeclared:
                    raise SpecError(
                        f"{role} {ltl.print_formula(f)} uses undeclared "
                        f"propositions {sorted(undeclared)}")

    def occurring(self) -> tuple[tuple[str, ...], tuple[str, ...]]:
        """Propositions actually used, in declared order."""
        used: set[str] = set()
        for f in self.assumptions + self.guarantees:
            used |= ltl.atoms(f)
        return (tuple(n for n in self.inputs if n in used),
                tuple(n for n in self.outputs if n in used))

    def num_properties(self) -> int:
        return len(self.assumptions) + len(self.guarantees)


def conjoin(formulas: Sequence[Ltl]) -> Ltl:
    """Right-associative conjunction; empty conjunction is true."""
    if not formulas:
        return ltl.TRUE
    result = formulas[-1]
    for f in reversed(formulas[:-1]):
        result = ltl.And(f, result)
    return result


def to_formula(s: Specification) -> Ltl:
    """Single LTL formula equivalent to the specification."""
    guarantee = conjoin(s.guarantees)
    if not s.assumptions:
        return guarantee
    return ltl.Implies(conjoin(s.assumptions), guarantee)


def read_spec(text: str) -> Specification:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError(f"invalid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise SpecError("specification document must be a JSON object")
    missing = [k for k in ("semantics", "inputs", "outputs", "assumptions",
                           "guarantees") if k not in doc]
    if missing:
        raise SpecError(f"missing fields: {missing}")

    def parse_all(role: str) -> tuple[Ltl, ...]:
        out = []
        for src in doc[role]:
            try:
                out.append(ltl.parse(src))
            except ltl.LtlError as e:
                raise SpecError(f"cannot parse {role} formula {src!r}: {e}") from None
        return tuple(out)

    return Specification(
        inputs=tuple(doc["inputs"]),
        outputs=tuple(doc["outputs"]),
        assumptions=parse_all("assumptions"),
        guarantees=parse_all("guarantees"),
        semantics=doc["semantics"],
    )


def spec_to_dict(s: Specification) -> dict:
    return {
        "semantics": s.semantics,
        "inputs": list(s.inputs),
        "outputs": list(s.outputs),
        "assumptions": [ltl.print_formula(f) for f in s.assumptions],
        "guarantees": [ltl.print_formula(f) for f in s.guarantees],
    }


def write_spec(s: Specification, indent: int | None = 2) -> str:
    return json.dumps(spec_to_dict(s), indent=indent)
