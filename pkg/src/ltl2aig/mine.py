"""Mining assumption/guarantee patterns from a corpus of specifications:
filter, canonicalize proposition names, deduplicate, and instantiate
patterns with random renaming."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import ltl
from .ltl import Ltl
from .specs import Specification

MAX_PATTERN_INPUTS = 5
MAX_PATTERN_OUTPUTS = 5
MAX_PATTERN_SIZE = 25

DEFAULT_INPUTS = ("i0", "i1", "i2", "i3", "i4")
DEFAULT_OUTPUTS = ("o0", "o1", "o2", "o3", "o4")


class MineError(Exception):
    pass


@dataclass(frozen=True)
class Pattern:
    formula: Ltl              # canonical: atoms renamed to i0.., o0..
    sources: tuple[str, ...]  # benchmark ids the pattern was mined from

    @property
    def num_inputs(self) -> int:
        return len(ltl.propositions(self.formula)[0])

    @property
    def num_outputs(self) -> int:
        return len(ltl.propositions(self.formula)[1])

    def is_trivial(self) -> bool:
        return self.formula == ltl.TRUE


@dataclass(frozen=True)
class PatternPool:
    assumptions: tuple[Pattern, ...]
    guarantees: tuple[Pattern, ...]
    meta: dict = field(default_factory=dict, compare=False)


def canonicalize(f: Ltl, inputs: Iterable[str], outputs: Iterable[str]) -> Ltl:
    """Rename atoms to i0,i1,../o0,o1,.. in order of first occurrence."""
    inputs, outputs = set(inputs), set(outputs)
    mapping: dict[str, str] = {}
    n_in = n_out = 0
    for name in ltl.atoms_in_order(f):
        if name in inputs:
            mapping[name] = f"i{n_in}"
            n_in += 1
        elif name in outputs:
            mapping[name] = f"o{n_out}"
            n_out += 1
        else:
            raise MineError(f"atom {name!r} is neither a declared input nor "
                            "output of its source specification")
    return ltl.rename(f, mapping)


def passes_filter(f: Ltl, inputs: Iterable[str], outputs: Iterable[str]) -> bool:
    """At most 5 distinct inputs, 5 distinct outputs, syntax tree size 25."""
    if ltl.ast_size(f) > MAX_PATTERN_SIZE:
        return False
    ins, outs = set(inputs), set(outputs)
    used = ltl.atoms(f)
    return (len(used & ins) <= MAX_PATTERN_INPUTS
            and len(used & outs) <= MAX_PATTERN_OUTPUTS)


def mine_patterns(corpus: Sequence[tuple[str, Specification]]) -> PatternPool:
    """Collect assumption and guarantee patterns from (benchmark id, spec)
    pairs; patterns are deduplicated after canonical renaming."""
    kept: dict[str, dict[str, Pattern]] = {"assumptions": {}, "guarantees": {}}
    seen = {"assumptions": 0, "guarantees": 0}
    filtered = 0
    for bench_id, spec in corpus:
        for role, group in (("assumptions", spec.assumptions),
                            ("guarantees", spec.guarantees)):
            for f in group:
                seen[role] += 1
                if not passes_filter(f, spec.inputs, spec.outputs):
                    filtered += 1
                    continue
                canon = canonicalize(f, spec.inputs, spec.outputs)
                key = ltl.print_formula(canon)
                prior = kept[role].get(key)
                if prior is None:
                    kept[role][key] = Pattern(canon, (bench_id,))
                elif bench_id not in prior.sources:
                    kept[role][key] = Pattern(canon,
                                              prior.sources + (bench_id,))
    return PatternPool(
        assumptions=tuple(kept["assumptions"].values()),
        guarantees=tuple(kept["guarantees"].values()),
        meta={
            "benchmarks": len(corpus),
            "raw_assumptions": seen["assumptions"],
            "raw_guarantees": seen["guarantees"],
            "filtered_out": filtered,
            "dedup": "canonical-rename-before-instantiation",
        },
    )


def instantiate(
    pattern: Pattern,
    rng: random.Random,
    inputs: Sequence[str] = DEFAULT_INPUTS,
    outputs: Sequence[str] = DEFAULT_OUTPUTS,
) -> Ltl:
    """Randomly rename the pattern's atoms into the target alphabets.

    Each distinct input atom gets a uniformly random target input, distinct
    source atoms mapping to distinct targets (same for outputs)."""
    src_in, src_out = ltl.propositions(pattern.formula)
    if len(src_in) > len(inputs) or len(src_out) > len(outputs):
        raise MineError("pattern uses more propositions than the "
                        "instantiation alphabet provides")
    order = ltl.atoms_in_order(pattern.formula)
    mapping: dict[str, str] = {}
    in_targets = rng.sample(list(inputs), len(src_in))
    out_targets = rng.sample(list(outputs), len(src_out))
    for name in order:
        if name in src_in:
            mapping[name] = in_targets[sum(1 for m in mapping if m in src_in)]
        else:
            mapping[name] = out_targets[sum(1 for m in mapping if m in src_out)]
    return ltl.rename(pattern.formula, mapping)


# ---------------------------------------------------------------------------
# Persistence

def pool_to_json(pool: PatternPool) -> str:
    doc = {
        "assumptions": [ltl.print_formula(p.formula) for p in pool.assumptions],
        "guarantees": [ltl.print_formula(p.formula) for p in pool.guarantees],
        "provenance": {
            "assumptions": [list(p.sources) for p in pool.assumptions],
            "guarantees": [list(p.sources) for p in pool.guarantees],
        },
        "meta": pool.meta,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def pool_from_json(text: str) -> PatternPool:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise MineError(f"invalid pattern pool JSON: {e}") from None
    try:
        def load(role):
            formulas = doc[role]
            sources = doc.get("provenance", {}).get(role, [[]] * len(formulas))
            return tuple(Pattern(ltl.parse(src), tuple(prov))
                         for src, prov in zip(formulas, sources))
        return PatternPool(load("assumptions"), load("guarantees"),
                           dict(doc.get("meta", {})))
    except (KeyError, ltl.LtlError) as e:
        raise MineError(f"malformed pattern pool: {e}") from None
