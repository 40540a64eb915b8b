"""AIGER ASCII (version 20071012): parsing, validation, serialization,
literal arithmetic, and Mealy-machine simulation."""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional, Sequence

from .ltl import LassoWord


class AigerError(Exception):
    pass


@dataclass(frozen=True)
class AigerCircuit:
    """An and-inverter graph with latches.

    Literal n encodes variable n // 2, negated iff n is odd; literals 0 and
    1 are the constants false and true. Latches initialize to 0."""

    max_var: int
    inputs: tuple[int, ...]
    latches: tuple[tuple[int, int], ...]  # (current literal, next literal)
    outputs: tuple[int, ...]
    and_gates: tuple[tuple[int, int, int], ...]  # (lhs, rhs0, rhs1)
    input_symbols: Optional[tuple[str, ...]] = None
    latch_symbols: Optional[tuple[str, ...]] = None
    output_symbols: Optional[tuple[str, ...]] = None

    @property
    def num_inputs(self) -> int:
        return len(self.inputs)

    @property
    def num_latches(self) -> int:
        return len(self.latches)

    @property
    def num_outputs(self) -> int:
        return len(self.outputs)

    @property
    def num_and_gates(self) -> int:
        return len(self.and_gates)

    def validate(self) -> "AigerCircuit":
        max_lit = 2 * self.max_var + 1
        defined: dict[int, str] = {}

        def define(var: int, what: str) -> None:
            if var in defined:
                raise AigerError(
                    f"variable {var} defined as both {defined[var]} and {what}")
            defined[var] = what

        def check_lit(lit: int, what: str) -> None:
            if not 0 <= lit <= max_lit:
                raise AigerError(
                    f"{what} literal {lit} out of range (max variable index "
                    f"{self.max_var})")

        for lit in self.inputs:
            check_lit(lit, "input")
            if lit < 2 or lit % 2:
                raise AigerError(f"input literal {lit} must be even and positive")
            define(lit // 2, "input")
        for cur, nxt in self.latches:
            check_lit(cur, "latch current")
            check_lit(nxt, "latch next")
            if cur < 2 or cur % 2:
                raise AigerError(
                    f"latch current literal {cur} must be even and positive")
            define(cur // 2, "latch")
        for lhs, rhs0, rhs1 in self.and_gates:
            for lit, what in ((lhs, "AND lhs"), (rhs0, "AND rhs"), (rhs1, "AND rhs")):
                check_lit(lit, what)
            if lhs < 2 or lhs % 2:
                raise AigerError(f"AND lhs literal {lhs} must be even and positive")
            define(lhs // 2, "AND gate")
        for lit in self.outputs:
            check_lit(lit, "output")
        for cur, nxt in self.latches:
            if nxt >= 2 and nxt // 2 not in defined:
                raise AigerError(f"latch next literal {nxt} is undefined")
        for lhs, rhs0, rhs1 in self.and_gates:
            for lit in (rhs0, rhs1):
                if lit >= 2 and lit // 2 not in defined:
                    raise AigerError(f"AND input literal {lit} is undefined")
        for lit in self.outputs:
            if lit >= 2 and lit // 2 not in defined:
                raise AigerError(f"output literal {lit} is undefined")
        for name, symbols, count in (
            ("input", self.input_symbols, self.num_inputs),
            ("latch", self.latch_symbols, self.num_latches),
            ("output", self.output_symbols, self.num_outputs),
        ):
            if symbols is not None and len(symbols) != count:
                raise AigerError(f"{name} symbol table has {len(symbols)} entries, "
                                 f"expected {count}")
        _topo_order(self)  # raises on combinational cycles
        return self

    def strip_symbols(self) -> "AigerCircuit":
        return AigerCircuit(self.max_var, self.inputs, self.latches,
                            self.outputs, self.and_gates)

    def stats(self) -> tuple[int, int, int]:
        """(max variable index, latch count, AND-gate count)."""
        return self.max_var, self.num_latches, self.num_and_gates


def structurally_equal(a: AigerCircuit, b: AigerCircuit) -> bool:
    """Equality of the graph itself, ignoring symbol tables."""
    return a.strip_symbols() == b.strip_symbols()


@functools.lru_cache(maxsize=4096)
def _topo_order(c: AigerCircuit) -> tuple[tuple[int, int, int], ...]:
    """AND gates sorted so every gate follows the gates it reads."""
    gate_of = {lhs // 2: (lhs, rhs0, rhs1) for lhs, rhs0, rhs1 in c.and_gates}
    order: list[tuple[int, int, int]] = []
    state: dict[int, int] = {}  # 1 = visiting, 2 = done

    for root in gate_of:
        if state.get(root) == 2:
            continue
        stack = [(root, False)]
        while stack:
            var, processed = stack.pop()
            if processed:
                state[var] = 2
                order.append(gate_of[var])
                continue
            mark = state.get(var)
            if mark == 2:
                continue
            if mark == 1:
                raise AigerError(f"combinational cycle through variable {var}")
            state[var] = 1
            stack.append((var, True))
            _, rhs0, rhs1 = gate_of[var]
            for lit in (rhs0, rhs1):
                dep = lit // 2
                if dep in gate_of and state.get(dep) != 2:
                    if state.get(dep) == 1:
                        raise AigerError(f"combinational cycle through variable {dep}")
                    stack.append((dep, False))
    return tuple(order)


# ---------------------------------------------------------------------------
# Text format

def parse_aiger(text: str) -> AigerCircuit:
    lines = text.splitlines()
    if not lines:
        raise AigerError("empty input")
    header = lines[0].split()
    if len(header) != 6 or header[0] != "aag":
        raise AigerError(f"malformed header: {lines[0]!r}")
    try:
        m, i, l, o, a = (int(x) for x in header[1:])
    except ValueError:
        raise AigerError(f"malformed header: {lines[0]!r}") from None
    if min(m, i, l, o, a) < 0:
        raise AigerError("header counts must be non-negative")

    body = lines[1:]
    needed = i + l + o + a
    if len(body) < needed:
        raise AigerError(f"expected {needed} definition lines, got {len(body)}")

    def ints(line: str, n: int, what: str) -> list[int]:
        parts = line.split()
        if len(parts) != n:
            raise AigerError(f"{what} line {line!r} must have {n} integers")
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise AigerError(f"{what} line {line!r} is not numeric") from None
        if any(v < 0 for v in vals):
            raise AigerError(f"{what} line {line!r} has a negative literal")
        return vals

    pos = 0
    inputs = tuple(ints(body[pos + k], 1, "input")[0] for k in range(i))
    pos += i
    latches = tuple(tuple(ints(body[pos + k], 2, "latch")) for k in range(l))
    pos += l
    outputs = tuple(ints(body[pos + k], 1, "output")[0] for k in range(o))
    pos += o
    ands = tuple(tuple(ints(body[pos + k], 3, "AND gate")) for k in range(a))
    pos += a

    in_syms: dict[int, str] = {}
    latch_syms: dict[int, str] = {}
    out_syms: dict[int, str] = {}
    for line in body[pos:]:
        if line.startswith("c"):
            break  # comment section
        if not line.strip():
            continue
        parts = line.split(maxsplit=1)
        tag = parts[0]
        if len(parts) != 2 or tag[0] not in "ilo" or not tag[1:].isdigit():
            raise AigerError(f"malformed symbol line {line!r}")
        idx = int(tag[1:])
        table, count = {
            "i": (in_syms, i), "l": (latch_syms, l), "o": (out_syms, o),
        }[tag[0]]
        if idx >= count:
            raise AigerError(f"symbol index out of range in {line!r}")
        table[idx] = parts[1]

    def sym_tuple(table: dict[int, str], count: int) -> Optional[tuple[str, ...]]:
        if not table:
            return None
        return tuple(table.get(k, "") for k in range(count))

    circuit = AigerCircuit(
        m, inputs, latches, outputs, ands,  # type: ignore[arg-type]
        sym_tuple(in_syms, i), sym_tuple(latch_syms, l), sym_tuple(out_syms, o))
    return circuit.validate()


def serialize(c: AigerCircuit) -> str:
    lines = [f"aag {c.max_var} {c.num_inputs} {c.num_latches} "
             f"{c.num_outputs} {c.num_and_gates}"]
    lines.extend(str(lit) for lit in c.inputs)
    lines.extend(f"{cur} {nxt}" for cur, nxt in c.latches)
    lines.extend(str(lit) for lit in c.outputs)
    lines.extend(f"{a} {b} {d}" for a, b, d in c.and_gates)
    for prefix, symbols in (("i", c.input_symbols), ("l", c.latch_symbols),
                            ("o", c.output_symbols)):
        if symbols is not None:
            lines.extend(f"{prefix}{k} {name}" for k, name in enumerate(symbols))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Simulation

def lit_value(lit: int, assignment) -> int:
    """Value of a literal under a variable assignment (dict or list)."""
    if lit == 0:
        return 0
    if lit == 1:
        return 1
    var = lit >> 1
    try:
        bit = assignment[var]
    except (KeyError, IndexError):
        raise AigerError(f"variable {var} is unassigned") from None
    if bit is None:
        raise AigerError(f"variable {var} is unassigned")
    return bit ^ (lit & 1)


def step(c: AigerCircuit, state: Sequence[int], inputs: Sequence[int],
         ) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """One Mealy step: (outputs at t, latch state at t+1)."""
    if len(state) != c.num_latches:
        raise AigerError(f"state width {len(state)} != latch count {c.num_latches}")
    if len(inputs) != c.num_inputs:
        raise AigerError(f"input width {len(inputs)} != input count {c.num_inputs}")
    val: list[Optional[int]] = [None] * (c.max_var + 1)
    for lit, bit in zip(c.inputs, inputs):
        val[lit >> 1] = int(bit)
    for (cur, _), bit in zip(c.latches, state):
        val[cur >> 1] = int(bit)
    for lhs, rhs0, rhs1 in _topo_order(c):
        val[lhs >> 1] = lit_value(rhs0, val) & lit_value(rhs1, val)
    outs = tuple(lit_value(lit, val) for lit in c.outputs)
    nxt = tuple(lit_value(n, val) for _, n in c.latches)
    return outs, nxt


def compile_step(c: AigerCircuit):
    """Fast stepper over bit-packed state/input ints.

    Returns step_fn(state_bits, input_bits) -> (output_bits, next_bits),
    bit k of each int being latch/input/output index k."""
    order = _topo_order(c)
    n_in, n_latch = c.num_inputs, c.num_latches
    in_vars = [lit >> 1 for lit in c.inputs]
    latch_vars = [cur >> 1 for cur, _ in c.latches]
    latch_next = [nxt for _, nxt in c.latches]
    outputs = c.outputs
    size = c.max_var + 1

    def step_fn(state_bits: int, input_bits: int) -> tuple[int, int]:
        val = [0] * size
        for k in range(n_in):
            val[in_vars[k]] = (input_bits >> k) & 1
        for k in range(n_latch):
            val[latch_vars[k]] = (state_bits >> k) & 1
        for lhs, rhs0, rhs1 in order:
            a = val[rhs0 >> 1] ^ (rhs0 & 1) if rhs0 > 1 else rhs0
            b = val[rhs1 >> 1] ^ (rhs1 & 1) if rhs1 > 1 else rhs1
            val[lhs >> 1] = a & b
        out_bits = 0
        for k, lit in enumerate(outputs):
            v = val[lit >> 1] ^ (lit & 1) if lit > 1 else lit
            out_bits |= v << k
        next_bits = 0
        for k, lit in enumerate(latch_next):
            v = val[lit >> 1] ^ (lit & 1) if lit > 1 else lit
            next_bits |= v << k
        return out_bits, next_bits

    return step_fn


def initial_state(c: AigerCircuit) -> tuple[int, ...]:
    return (0,) * c.num_latches


def run_lasso(c: AigerCircuit, word: LassoWord, input_names: Sequence[str],
              output_names: Sequence[str]) -> LassoWord:
    """Simulate the circuit on an ultimately periodic input word.

    Runs until the (latch state, position in input period) pair repeats,
    which closes the trace into a lasso over input and output propositions."""
    if len(input_names) != c.num_inputs:
        raise AigerError("input name list does not match circuit inputs")
    if len(output_names) != c.num_outputs:
        raise AigerError("output name list does not match circuit outputs")
    extra = word.propositions() - set(input_names)
    if extra:
        raise AigerError(f"input word mentions non-input propositions {sorted(extra)}")

    p, q = len(word.prefix), len(word.period)
    step_fn = compile_step(c)
    state_bits = 0
    letters: list[frozenset[str]] = []
    seen: dict[tuple[int, int], int] = {}
    t = 0
    while True:
        if t >= p:
            key = (state_bits, (t - p) % q)
            if key in seen:
                start = seen[key]
                return LassoWord(tuple(letters[:start]), tuple(letters[start:]))
            seen[key] = t
        letter = word.letter(t)
        in_bits = 0
        for k, name in enumerate(input_names):
            if name in letter:
                in_bits |= 1 << k
        out_bits, state_bits = step_fn(state_bits, in_bits)
        held = {name for k, name in enumerate(input_names) if (in_bits >> k) & 1}
        held |= {name for k, name in enumerate(output_names) if (out_bits >> k) & 1}
        letters.append(frozenset(held))
        t += 1


def stats(c: AigerCircuit) -> tuple[int, int, int]:
    return c.stats()
