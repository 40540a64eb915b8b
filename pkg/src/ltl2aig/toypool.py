"""A small built-in specification corpus for desk-scale runs.

The patterns are sized so the bounded enumeration oracle can certify every
sample quickly, while still producing a mix of realizable and unrealizable
specifications and a spread of circuit sizes. Guarantees combine boolean
functions of the inputs (one and two outputs, with and without a latch)
with until/liveness properties; assumptions pin the future of an input to
a function of current outputs, which makes broken specifications
recoverable and forces gate logic into certified counter-strategies."""

from __future__ import annotations

from . import mine, specs
from .datagen import GenConfig
from .ltl import parse
from .mine import PatternPool
from .specs import Specification
from .synth import OracleConfig

TOY_INPUTS = ("i0", "i1")
TOY_OUTPUTS = ("o0", "o1")

_GUARANTEES = (
    "(G ((o0 <-> (i0 & i1)) & (o1 <-> (i0 | i1))))",
    "(G ((o0 <-> (i0 <-> i1)) & (o1 <-> (! (i0 | i1)))))",
    "(G ((o0 <-> (! (i0 <-> i1))) & (o1 <-> (i0 & i1))))",
    "(G (o0 <-> (i0 & i1)))",
    "(G (o0 <-> (i0 | i1)))",
    "(G (((X o0) <-> (o0 <-> i0)) & (o1 <-> (o0 & i0))))",
    "(X (G (o0 U i0)))",
    "(X (G ((! o0) U i0)))",
    "(X (G (F (i0 & o0))))",
    "(G (F i0))",
    "(G (! o0))",
)

_ASSUMPTIONS = (
    "(G ((X i0) <-> (o0 & o1)))",
    "(G ((X i0) <-> (o0 | o1)))",
    "(G ((X i0) <-> (o0 <-> o1)))",
    "(G ((X i0) <-> (o0 & (! o1))))",
    "(G ((X i0) <-> (! (o0 | o1))))",
    "(G ((X i0) <-> o0))",
    "(G ((X i0) <-> (i0 <-> o0)))",
)


def toy_corpus() -> list[tuple[str, Specification]]:
    """The corpus as (benchmark id, specification) pairs, one benchmark per
    assumption so mining provenance stays meaningful."""
    corpus = []
    n = max(len(_ASSUMPTIONS), len(_GUARANTEES))
    for k in range(n):
        corpus.append((
            f"toy{k:02d}",
            Specification(
                inputs=TOY_INPUTS,
                outputs=TOY_OUTPUTS,
                assumptions=(parse(_ASSUMPTIONS[k % len(_ASSUMPTIONS)]),),
                guarantees=(parse(_GUARANTEES[k % len(_GUARANTEES)]),
                            parse(_GUARANTEES[(k + 1) % len(_GUARANTEES)])),
            ),
        ))
    return corpus


def toy_pool() -> PatternPool:
    return mine.mine_patterns(toy_corpus())


def desk_gen_config(target_count: int = 1000, seed: int = 0,
                    **overrides) -> GenConfig:
    """Generation config sized for the bounded oracle."""
    defaults = dict(
        target_count=target_count,
        seed=seed,
        max_guarantees=6,
        instantiation_inputs=TOY_INPUTS,
        instantiation_outputs=TOY_OUTPUTS,
        attempt_factor=60,
    )
    defaults.update(overrides)
    return GenConfig(**defaults)


def desk_oracle_config(**overrides) -> OracleConfig:
    defaults = dict(
        mode="bounded",
        max_system_states=2,
        max_env_states=2,
        max_candidates=6000,
    )
    defaults.update(overrides)
    return OracleConfig(**defaults)
