import random

import pytest
from hypothesis import given, settings

from ltl2aig import aiger, buchi, ltl, specs, verify
from ltl2aig.aiger import AigerCircuit, parse_aiger
from ltl2aig.buchi import accepts_lasso, ltl_to_buchi, nnf
from ltl2aig.ltl import LassoWord, Not, eval_lasso, parse
from ltl2aig.verify import (
    Verdict, bounded_lasso_oracle, check_circuit, check_counter_strategy,
    completeness_bound,
)

from strategies import formulas, lassos

ARBITER = parse_aiger("aag 3 2 1 2 0\n2\n4\n6 7\n6\n7\n")
ARBITER_SPEC = parse("(G !(g1 & g2)) & (G (r1 -> F g1)) & (G (r2 -> F g2))")
ARB_IN, ARB_OUT = ["r1", "r2"], ["g1", "g2"]


# ---------------------------------------------------------------------------
# Büchi construction

def test_true_automaton_accepts_everything():
    a = ltl_to_buchi(ltl.TRUE)
    assert a.num_states == 1
    assert accepts_lasso(a, LassoWord.make([], [set()]))
    assert accepts_lasso(a, LassoWord.make([{"a"}], [{"b"}, set()]))


def test_false_automaton_accepts_nothing():
    a = ltl_to_buchi(ltl.FALSE)
    assert not accepts_lasso(a, LassoWord.make([], [set()]))


def test_globally_automaton():
    a = ltl_to_buchi(parse("G a"))
    assert accepts_lasso(a, LassoWord.make([], [{"a"}]))
    assert not accepts_lasso(a, LassoWord.make([{"a"}, {"a"}], [set()]))
    rng = random.Random(7)
    f = parse("G a")
    for _ in range(100):
        w = _random_lasso(rng, ["a", "b"])
        assert accepts_lasso(a, w) == eval_lasso(f, w)


def test_eventually_globally_automaton():
    a = ltl_to_buchi(parse("F G a"))
    assert accepts_lasso(a, LassoWord.make([set()], [{"a"}]))
    assert not accepts_lasso(a, LassoWord.make([], [set()]))
    rng = random.Random(8)
    f = parse("F G a")
    for _ in range(100):
        w = _random_lasso(rng, ["a", "b"])
        assert accepts_lasso(a, w) == eval_lasso(f, w)


def test_labels_are_satisfiable():
    for src in ("G (a -> F b)", "(a U b) <-> X c", "G F (a & !b)"):
        a = ltl_to_buchi(parse(src))
        for _, label, _ in a.transitions():
            assert not (label.positive & label.negative)


def _random_lasso(rng, props, max_prefix=3, max_period=4):
    prefix = [frozenset(p for p in props if rng.random() < 0.5)
              for _ in range(rng.randrange(max_prefix + 1))]
    period = [frozenset(p for p in props if rng.random() < 0.5)
              for _ in range(rng.randrange(1, max_period + 1))]
    return LassoWord(tuple(prefix), tuple(period))


@settings(max_examples=300, deadline=None)
@given(formulas(max_depth=6), lassos())
def test_buchi_matches_eval(f, w):
    assert accepts_lasso(ltl_to_buchi(f), w) == eval_lasso(f, w)


@settings(max_examples=150, deadline=None)
@given(formulas(max_depth=6), lassos())
def test_nnf_preserves_semantics(f, w):
    assert eval_lasso(nnf(f), w) == eval_lasso(f, w)


# ---------------------------------------------------------------------------
# check_circuit

def test_arbiter_satisfies_spec():
    assert check_circuit(ARBITER, ARBITER_SPEC, ARB_IN, ARB_OUT).holds


def test_arbiter_violates_never_grant():
    f = parse("G !g1")
    v = check_circuit(ARBITER, f, ARB_IN, ARB_OUT)
    assert not v.holds
    w = v.counterexample
    assert eval_lasso(Not(f), w)
    assert any("g1" in a for a in w.prefix + w.period)


def test_counterexample_reproducible_by_simulation():
    f = parse("G !g1")
    w = check_circuit(ARBITER, f, ARB_IN, ARB_OUT).counterexample
    in_word = LassoWord(
        tuple(a & {"r1", "r2"} for a in w.prefix),
        tuple(a & {"r1", "r2"} for a in w.period))
    trace = aiger.run_lasso(ARBITER, in_word, ARB_IN, ARB_OUT)
    # same infinite trace, compared on a long unrolling
    horizon = 2 * (len(w.prefix) + len(w.period)) * (len(trace.prefix) + len(trace.period))
    assert [w.letter(t) for t in range(horizon)] == \
        [trace.letter(t) for t in range(horizon)]


def test_role_mismatch_rejected():
    with pytest.raises(verify.VerifyError):
        check_circuit(ARBITER, ARBITER_SPEC, ["r1"], ["g1", "g2"])
    with pytest.raises(verify.VerifyError):
        check_circuit(ARBITER, parse("G x"), ARB_IN, ARB_OUT)


def test_priority_arbiter_circuit_certifies():
    c = parse_aiger("aag 7 5 1 5 1\n2\n4\n6\n8\n10\n12 4\n14\n0\n13\n14\n0\n14 12 5\n")
    s = specs.read_spec("""
    {"semantics": "mealy",
     "inputs": ["i0", "i1", "i2", "i3", "i4"],
     "outputs": ["o0", "o1", "o2", "o3", "o4"],
     "assumptions": ["(G (F (! (i1))))"],
     "guarantees": ["(G ((! (o0)) || (! (o2))))",
                    "(G ((i0) -> (F (o2))))",
                    "(G ((i1) -> (X ((! (o2)) U (o0)))))"]}
    """)
    assert check_circuit(c, specs.to_formula(s), s.inputs, s.outputs).holds


# ---------------------------------------------------------------------------
# check_counter_strategy

COPY_SPEC = specs.Specification(
    ("i0",), ("o0",), (), (parse("G (o0 <-> i0)"),))

CONTRADICTORY_SPEC = specs.Specification(
    ("i0",), ("o0",), (),
    (parse("G (o0 <-> i0)"), parse("G (o0 <-> !i0)")))

CONST_ENV = parse_aiger("aag 1 1 0 1 0\n2\n1\n")   # emits i0=1 regardless of o0
COPY_SYSTEM = parse_aiger("aag 1 1 0 1 0\n2\n2\n")  # o0 := i0


def test_contradictory_guarantees_any_env_wins():
    assert check_counter_strategy(CONST_ENV, CONTRADICTORY_SPEC).holds


def test_system_circuit_is_not_a_counter_strategy():
    v = check_counter_strategy(COPY_SYSTEM, COPY_SPEC)
    assert not v.holds


def test_duality_on_arbiter():
    holds_f = check_circuit(ARBITER, ARBITER_SPEC, ARB_IN, ARB_OUT).holds
    holds_not_f = check_circuit(ARBITER, Not(ARBITER_SPEC), ARB_IN, ARB_OUT).holds
    assert not (holds_f and holds_not_f)


# ---------------------------------------------------------------------------
# bounded lasso oracle

def test_oracle_arbiter_eventually_grants():
    assert bounded_lasso_oracle(ARBITER, parse("F g1"), ARB_IN, ARB_OUT, 4).holds


def test_oracle_finds_violation():
    v = bounded_lasso_oracle(ARBITER, parse("G !g1"), ARB_IN, ARB_OUT, 2)
    assert not v.holds
    assert eval_lasso(Not(parse("G !g1")), v.counterexample)


def test_oracle_trivial_formula():
    assert bounded_lasso_oracle(ARBITER, ltl.TRUE, ARB_IN, ARB_OUT, 2).holds


def _random_circuit(rng: random.Random, n_in: int, n_out: int, n_latch: int,
                    n_and: int) -> AigerCircuit:
    inputs = tuple(2 * (k + 1) for k in range(n_in))
    latch_vars = [n_in + k + 1 for k in range(n_latch)]
    and_vars = [n_in + n_latch + k + 1 for k in range(n_and)]
    max_var = n_in + n_latch + n_and

    def random_lit(pool_max: int) -> int:
        var = rng.randrange(0, pool_max + 1)
        return 2 * var + rng.randrange(2) if var else rng.randrange(2)

    ands = []
    for k, v in enumerate(and_vars):
        pool = n_in + n_latch + k
        ands.append((2 * v, random_lit(pool), random_lit(pool)))
    latches = tuple((2 * v, random_lit(max_var)) for v in latch_vars)
    outputs = tuple(random_lit(max_var) for _ in range(n_out))
    return AigerCircuit(max_var, inputs, latches, outputs, tuple(ands)).validate()


def test_checker_agrees_with_oracle_on_random_instances():
    rng = random.Random(2024)
    names_in, names_out = ["i0"], ["o0", "o1"]
    props = names_in + names_out
    checked = 0
    while checked < 60:
        c = _random_circuit(rng, 1, 2, rng.randrange(3), rng.randrange(4))
        f = _random_formula(rng, props, rng.randrange(1, 8))
        k = completeness_bound(c, f)
        if sum(n * 2 ** n for n in range(1, k + 1)) > 60_000:
            continue
        fast = check_circuit(c, f, names_in, names_out)
        slow = bounded_lasso_oracle(c, f, names_in, names_out, k)
        assert fast.holds == slow.holds, (aiger.serialize(c), ltl.print_formula(f))
        checked += 1


def _random_formula(rng: random.Random, props, size: int) -> ltl.Ltl:
    if size <= 1:
        return ltl.Atom(rng.choice(props)) if rng.random() < 0.85 else \
            rng.choice([ltl.TRUE, ltl.FALSE])
    op = rng.choice([ltl.Not, ltl.Next, ltl.Eventually, ltl.Globally,
                     ltl.And, ltl.Or, ltl.Implies, ltl.Until, ltl.Release])
    if op in (ltl.Not, ltl.Next, ltl.Eventually, ltl.Globally):
        return op(_random_formula(rng, props, size - 1))
    left_size = rng.randrange(1, size)
    return op(_random_formula(rng, props, left_size),
              _random_formula(rng, props, size - left_size))


@settings(max_examples=60, deadline=None)
@given(formulas(props=("r1", "r2", "g1", "g2"), max_depth=5), lassos())
def test_verdicts_match_trace_semantics(f, w):
    # counterexamples returned by check_circuit falsify f
    v = check_circuit(ARBITER, f, ARB_IN, ARB_OUT)
    if not v.holds:
        assert eval_lasso(Not(f), v.counterexample)


def test_completeness_bound_value():
    # arbiter reaches both latch states; G !g1 negates to a 2-state automaton
    k = completeness_bound(ARBITER, parse("G !g1"))
    nba = ltl_to_buchi(Not(parse("G !g1")))
    assert k == 2 * 2 * nba.num_states


def test_timeout_raises():
    big = parse_aiger("aag 3 2 1 2 0\n2\n4\n6 7\n6\n7\n")
    with pytest.raises(verify.VerifyTimeout):
        check_circuit(big, ARBITER_SPEC, ARB_IN, ARB_OUT, timeout=-1.0)
