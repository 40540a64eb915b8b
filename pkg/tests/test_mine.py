import math
import random
from collections import Counter

import pytest

from ltl2aig import ltl, mine
from ltl2aig.mine import (
    Pattern, canonicalize, instantiate, mine_patterns, passes_filter,
    pool_from_json, pool_to_json,
)
from ltl2aig.specs import Specification, read_spec

PRIORITY_ARBITER = read_spec("""
{"semantics": "mealy",
 "inputs": ["r_m", "r_0"],
 "outputs": ["g_m", "g_0"],
 "assumptions": ["(G (F (! (r_m))))"],
 "guarantees": ["(true)",
                "(G ((! (g_m)) || (! (g_0))))",
                "(G ((r_0) -> (F (g_0))))",
                "(G ((r_m) -> (X ((! (g_0)) U (g_m)))))"]}
""")


def test_mine_priority_arbiter():
    pool = mine_patterns([("arbiter", PRIORITY_ARBITER)])
    assert len(pool.assumptions) == 1
    assert len(pool.guarantees) == 4
    assert pool.assumptions[0].formula == ltl.parse("G F ! i0")
    assert pool.assumptions[0].sources == ("arbiter",)
    assert any(p.is_trivial() for p in pool.guarantees)


def test_mine_deduplicates_across_benchmarks():
    other = Specification(("req",), ("ack",), (ltl.parse("G F ! req"),),
                          (ltl.parse("G (req -> F ack)"),))
    pool = mine_patterns([("a", PRIORITY_ARBITER), ("b", other)])
    # G F !i0 appears in both benchmarks; response pattern matches r_0 -> F g_0
    assert len(pool.assumptions) == 1
    assert pool.assumptions[0].sources == ("a", "b")
    assert len(pool.guarantees) == 4


def test_mine_empty_corpus():
    pool = mine_patterns([])
    assert pool.assumptions == () and pool.guarantees == ()


def test_filter_boundaries():
    # 25-node formula passes, 26 does not
    deep_25 = ltl.parse("!" * 24 + "i0")
    deep_26 = ltl.parse("!" * 25 + "i0")
    assert passes_filter(deep_25, ["i0"], [])
    assert not passes_filter(deep_26, ["i0"], [])
    six_inputs = ltl.parse("a & (b & (c & (d & (e & f))))")
    five_inputs = ltl.parse("a & (b & (c & (d & e)))")
    names = list("abcdef")
    assert not passes_filter(six_inputs, names, [])
    assert passes_filter(five_inputs, names, [])


def test_mine_applies_filter():
    spec = Specification(
        tuple("abcdef"), ("z",), (),
        (ltl.parse("a & (b & (c & (d & (e & f))))"), ltl.parse("G z")))
    pool = mine_patterns([("x", spec)])
    assert len(pool.guarantees) == 1


def test_canonicalize_first_occurrence_order():
    f = ltl.parse("(g_0 U r_m) | G g_m")
    canon = canonicalize(f, ["r_m", "r_0"], ["g_m", "g_0"])
    assert canon == ltl.parse("(o0 U i0) | G o1")


def test_dedup_idempotence():
    pool = mine_patterns([("arbiter", PRIORITY_ARBITER)])
    wrapped = Specification(
        ("i0", "i1", "i2", "i3", "i4"), ("o0", "o1", "o2", "o3", "o4"),
        tuple(p.formula for p in pool.assumptions),
        tuple(p.formula for p in pool.guarantees))
    again = mine_patterns([("rewrapped", wrapped)])
    assert len(again.assumptions) == len(pool.assumptions)
    assert len(again.guarantees) == len(pool.guarantees)


def test_instantiate_request_response_uniform():
    pattern = Pattern(ltl.parse("G (i0 -> F o0)"), ())
    rng = random.Random(11)
    counts = Counter()
    n = 100_000
    for _ in range(n):
        inst = instantiate(pattern, rng)
        ins, outs = ltl.propositions(inst)
        counts[(next(iter(ins)), next(iter(outs)))] += 1
    assert len(counts) == 25
    # chi-square against uniform over 25 cells, 24 dof, alpha ~ 1e-4
    expected = n / 25
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2 < 80.0


def test_instantiate_deterministic_with_seed():
    pattern = Pattern(ltl.parse("G (i0 -> F o0)"), ())
    a = instantiate(pattern, random.Random(5))
    b = instantiate(pattern, random.Random(5))
    assert a == b


def test_instantiate_injective_within_class():
    pattern = Pattern(ltl.parse("(o0 U i0) | ((G o1) & F i1)"), ())
    rng = random.Random(3)
    for _ in range(200):
        inst = instantiate(pattern, rng)
        ins, outs = ltl.propositions(inst)
        assert len(ins) == 2 and len(outs) == 2


def test_instantiate_distinct_results_count():
    pattern = Pattern(ltl.parse("(o2 U i3) | G o2"), ())
    canon = canonicalize(pattern.formula, ["i3"], ["o2"])
    pattern = Pattern(canon, ())
    rng = random.Random(0)
    seen = {ltl.print_formula(instantiate(pattern, rng)) for _ in range(5000)}
    assert len(seen) == 25


def test_pool_json_round_trip():
    pool = mine_patterns([("arbiter", PRIORITY_ARBITER)])
    again = pool_from_json(pool_to_json(pool))
    assert again.assumptions == pool.assumptions
    assert again.guarantees == pool.guarantees
    with pytest.raises(mine.MineError):
        pool_from_json("{nope")
