"""Built-in model checking: circuit against LTL formula via the product
with a Büchi automaton for the negation, emptiness by nested depth-first
search, plus an independent brute-force lasso oracle."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from . import aiger, ltl, specs
from .aiger import AigerCircuit
from .buchi import BuchiAutomaton, ltl_to_buchi
from .ltl import LassoWord, Ltl, Not, eval_lasso


class VerifyError(Exception):
    pass


class VerifyTimeout(VerifyError):
    pass


@dataclass(frozen=True)
class Verdict:
    holds: bool
    counterexample: Optional[LassoWord] = None

    def __post_init__(self):
        if self.holds and self.counterexample is not None:
            raise VerifyError("holding verdict cannot carry a counterexample")
        if not self.holds and self.counterexample is None:
            raise VerifyError("failing verdict must carry a counterexample")


HOLDS = Verdict(True)


# ---------------------------------------------------------------------------
# Nested depth-first search over an implicit product graph

def _find_accepting_lasso(
    roots: Iterable,
    successors: Callable,
    is_accepting: Callable,
    deadline: Optional[float] = None,
):
    """Accepting lasso in an implicit Büchi graph, or None.

    successors(state) returns a sequence of (letter, next_state); the lasso
    is returned as (prefix_letters, cycle_letters). Red searches run at
    blue post-order, per the classic nested DFS."""
    blue: set = set()
    red: set = set()
    blue_parent: dict = {}
    succ_cache: dict = {}

    def succs(s):
        got = succ_cache.get(s)
        if got is None:
            got = list(successors(s))
            succ_cache[s] = got
        return got

    def check_deadline():
        if deadline is not None and time.monotonic() > deadline:
            raise VerifyTimeout("model check budget exhausted")

    for root in roots:
        if root in blue:
            continue
        blue.add(root)
        stack = [(root, iter(succs(root)))]
        while stack:
            check_deadline()
            s, it = stack[-1]
            nxt = next(it, None)
            if nxt is not None:
                letter, t = nxt
                if t not in blue:
                    blue.add(t)
                    blue_parent[t] = (s, letter)
                    stack.append((t, iter(succs(t))))
                continue
            stack.pop()
            if not is_accepting(s):
                continue
            cycle = _red_search(s, succs, red, check_deadline)
            if cycle is None:
                continue
            prefix = []
            cur = s
            while cur in blue_parent:
                parent, letter = blue_parent[cur]
                prefix.append(letter)
                cur = parent
            prefix.reverse()
            return prefix, cycle
    return None


def _red_search(seed, succs, red, check_deadline):
    """Letters of a cycle seed -> ... -> seed, or None."""
    red_parent: dict = {}
    stack = [(seed, iter(succs(seed)))]
    while stack:
        check_deadline()
        s, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            stack.pop()
            continue
        letter, t = nxt
        if t == seed:
            cycle = [letter]
            cur = s
            while cur != seed:
                parent, lt = red_parent[cur]
                cycle.append(lt)
                cur = parent
            cycle.reverse()
            return cycle
        if t not in red:
            red.add(t)
            red_parent[t] = (s, letter)
            stack.append((t, iter(succs(t))))
    return None


# ---------------------------------------------------------------------------
# Products of transducers with Büchi automata

def _role_letter_maker(input_names: Sequence[str], output_names: Sequence[str]):
    cache: dict[tuple[int, int], frozenset[str]] = {}

    def make(in_bits: int, out_bits: int) -> frozenset[str]:
        key = (in_bits, out_bits)
        letter = cache.get(key)
        if letter is None:
            held = {n for k, n in enumerate(input_names) if (in_bits >> k) & 1}
            held |= {n for k, n in enumerate(output_names) if (out_bits >> k) & 1}
            letter = frozenset(held)
            cache[key] = letter
        return letter

    return make


_VIRT = -1


class TransducerChecker:
    """Universal check of one formula over fixed roles, reusable across
    many candidate machines; the Büchi automaton for the negation and the
    letter table are built once."""

    def __init__(self, f: Ltl, input_names: Sequence[str],
                 output_names: Sequence[str],
                 input_valuations: Optional[Sequence[int]] = None):
        self.negated = ltl_to_buchi(Not(f))
        if input_valuations is None:
            input_valuations = range(1 << len(input_names))
        self.input_valuations = list(input_valuations)
        # letter matrix indexed [input_bits][output_bits]
        n_out = len(output_names)
        make = _role_letter_maker(input_names, output_names)
        self.letters = [[make(i, o) for o in range(1 << n_out)]
                        for i in range(1 << len(input_names))]
        self._admitted: dict = {}  # (nba state | _VIRT, letter) -> targets

    def check(self, init_state, step_fn, timeout: Optional[float] = None,
              ) -> Verdict:
        """step_fn(state, input_bits) -> (output_bits, next_state); holds
        iff every infinite input sequence yields a trace satisfying f."""
        negated = self.negated
        letters = self.letters
        input_valuations = self.input_valuations
        admitted = self._admitted
        labels = negated.labels
        nba_succ = negated.successors
        deadline = time.monotonic() + timeout if timeout is not None else None
        accepting = negated.accepting
        step_cache: dict = {}

        def successors(node):
            s, q = node
            for in_bits in input_valuations:
                key = (s, in_bits)
                got = step_cache.get(key)
                if got is None:
                    got = step_fn(s, in_bits)
                    step_cache[key] = got
                out_bits, s2 = got
                letter = letters[in_bits][out_bits]
                tkey = (q, letter)
                targets = admitted.get(tkey)
                if targets is None:
                    pool = negated.initial if q == _VIRT else nba_succ[q]
                    targets = tuple(q2 for q2 in pool
                                    if labels[q2].admits(letter))
                    admitted[tkey] = targets
                for q2 in targets:
                    yield letter, (s2, q2)

        found = _find_accepting_lasso(
            [(init_state, _VIRT)], successors,
            lambda node: node[1] in accepting, deadline)
        if found is None:
            return HOLDS
        prefix, cycle = found
        return Verdict(False, LassoWord(tuple(prefix), tuple(cycle)))


def check_transducer(
    init_state,
    step_fn: Callable[[object, int], tuple[int, object]],
    input_names: Sequence[str],
    output_names: Sequence[str],
    f: Ltl,
    input_valuations: Optional[Sequence[int]] = None,
    timeout: Optional[float] = None,
) -> Verdict:
    checker = TransducerChecker(f, input_names, output_names, input_valuations)
    return checker.check(init_state, step_fn, timeout=timeout)


def _referenced_input_vars(c: AigerCircuit) -> set[int]:
    used: set[int] = set()
    for _, nxt in c.latches:
        used.add(nxt >> 1)
    for lit in c.outputs:
        used.add(lit >> 1)
    for lhs, rhs0, rhs1 in c.and_gates:
        used.add(rhs0 >> 1)
        used.add(rhs1 >> 1)
    return {lit >> 1 for lit in c.inputs} & used


def _check_roles(c: AigerCircuit, f: Ltl, input_names: Sequence[str],
                 output_names: Sequence[str]) -> None:
    if len(input_names) != c.num_inputs or len(output_names) != c.num_outputs:
        raise VerifyError(
            f"role mapping ({len(input_names)} inputs, {len(output_names)} "
            f"outputs) does not fit circuit with {c.num_inputs} inputs and "
            f"{c.num_outputs} outputs")
    names = list(input_names) + list(output_names)
    if len(set(names)) != len(names):
        raise VerifyError("role names must be distinct")
    stray = ltl.atoms(f) - set(names)
    if stray:
        raise VerifyError(f"formula propositions {sorted(stray)} are not "
                          "covered by the role mapping")


def check_circuit(
    c: AigerCircuit,
    f: Ltl,
    input_names: Sequence[str],
    output_names: Sequence[str],
    timeout: Optional[float] = None,
) -> Verdict:
    """Does every infinite input sequence drive c to a trace satisfying f?

    Inputs the circuit never reads and that f never mentions are pinned to
    0 during the search; this does not change the verdict."""
    _check_roles(c, f, input_names, output_names)
    step_fn = aiger.compile_step(c)
    formula_atoms = ltl.atoms(f)
    referenced = _referenced_input_vars(c)
    free_bits = [k for k, lit in enumerate(c.inputs)
                 if lit >> 1 in referenced or input_names[k] in formula_atoms]
    valuations = [sum(bits[j] << free_bits[j] for j in range(len(free_bits)))
                  for bits in itertools.product((0, 1), repeat=len(free_bits))]

    def step(state_bits, in_bits):
        return step_fn(state_bits, in_bits)

    return check_transducer(0, step, input_names, output_names, f,
                            input_valuations=valuations, timeout=timeout)


def check_counter_strategy(
    c_env: AigerCircuit,
    s: specs.Specification,
    input_names: Optional[Sequence[str]] = None,
    output_names: Optional[Sequence[str]] = None,
    timeout: Optional[float] = None,
) -> Verdict:
    """Certify an environment machine: it reads the system outputs and
    must force violation of the specification on every trace.

    By default the circuit's inputs are the specification outputs in
    declared order, and its outputs the specification inputs."""
    if input_names is None:
        input_names = s.outputs
    if output_names is None:
        output_names = s.inputs
    return check_circuit(c_env, Not(specs.to_formula(s)),
                         input_names, output_names, timeout=timeout)


# ---------------------------------------------------------------------------
# Independent brute-force oracle

def bounded_lasso_oracle(
    c: AigerCircuit,
    f: Ltl,
    input_names: Sequence[str],
    output_names: Sequence[str],
    k: int,
) -> Verdict:
    """Enumerate every input lasso with |prefix| + |period| <= k, simulate,
    and evaluate the trace; complete once k reaches completeness_bound."""
    if k < 1:
        raise VerifyError("bound must be at least 1")
    _check_roles(c, f, input_names, output_names)
    n_in = len(input_names)
    letter_cache = [frozenset(n for j, n in enumerate(input_names) if (v >> j) & 1)
                    for v in range(1 << n_in)]
    for total in range(1, k + 1):
        for period_len in range(1, total + 1):
            prefix_len = total - period_len
            for vals in itertools.product(range(1 << n_in), repeat=total):
                word = LassoWord(
                    tuple(letter_cache[v] for v in vals[:prefix_len]),
                    tuple(letter_cache[v] for v in vals[prefix_len:]))
                trace = aiger.run_lasso(c, word, input_names, output_names)
                if not eval_lasso(f, trace):
                    return Verdict(False, trace)
    return HOLDS


def reachable_latch_states(c: AigerCircuit) -> int:
    step_fn = aiger.compile_step(c)
    seen = {0}
    frontier = [0]
    n_in = c.num_inputs
    while frontier:
        s = frontier.pop()
        for v in range(1 << n_in):
            _, s2 = step_fn(s, v)
            if s2 not in seen:
                seen.add(s2)
                frontier.append(s2)
    return len(seen)


def completeness_bound(c: AigerCircuit, f: Ltl) -> int:
    """Lasso-length bound that makes bounded_lasso_oracle a complete check:
    twice the product of reachable latch states and the states of the
    Büchi automaton for the negated formula."""
    nba = ltl_to_buchi(Not(f))
    return 2 * max(1, reachable_latch_states(c)) * max(1, nba.num_states)
