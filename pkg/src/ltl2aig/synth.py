"""Realizability/synthesis oracle: a bounded enumeration synthesizer for
desk-scale runs and a subprocess adapter for external tools.

Every artifact is certified by the built-in model checker before it is
returned; an artifact that fails certification is a hard error."""

from __future__ import annotations

import itertools
import os
import shlex
import signal
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import aiger, ltl, specs, verify
from .aiger import AigerCircuit
from .specs import RealizabilityStatus, Specification

ORACLE_CMD_ENV_VAR = "LTL2AIG_ORACLE_CMD"


class OracleError(Exception):
    pass


@dataclass(frozen=True)
class OracleResult:
    status: RealizabilityStatus
    artifact: Optional[AigerCircuit] = None
    elapsed: float = 0.0

    def __post_init__(self):
        if self.status is RealizabilityStatus.UNKNOWN and self.artifact is not None:
            raise OracleError("unknown result cannot carry an artifact")


@dataclass(frozen=True)
class OracleConfig:
    mode: str = "bounded"  # "bounded" | "external"
    command: str = ""      # template; {input} and {timeout} are substituted
    timeout: float = 120.0
    max_system_states: int = 2
    max_env_states: int = 2
    max_candidates: int = 100_000  # per state count; guards enumeration blow-up
    check_timeout: Optional[float] = None  # per-candidate model check budget

    def __post_init__(self):
        if self.timeout <= 0:
            raise OracleError("timeout must be positive")
        if self.mode not in ("bounded", "external"):
            raise OracleError(f"unknown oracle mode {self.mode!r}")
        if self.mode == "external" and not (self.command or
                                            os.environ.get(ORACLE_CMD_ENV_VAR)):
            raise OracleError("external mode needs a command template")


# ---------------------------------------------------------------------------
# AND-inverter netlist construction

class _AigBuilder:
    """Incremental AIG with constant folding and structural hashing."""

    def __init__(self, num_inputs: int, num_latches: int):
        self.num_inputs = num_inputs
        self.num_latches = num_latches
        self.next_var = num_inputs + num_latches + 1
        self.gates: list[tuple[int, int, int]] = []
        self.cache: dict[tuple[int, int], int] = {}

    def input_lit(self, k: int) -> int:
        return 2 * (k + 1)

    def latch_lit(self, k: int) -> int:
        return 2 * (self.num_inputs + k + 1)

    def and_(self, a: int, b: int) -> int:
        if a > b:
            a, b = b, a
        if a == 0:
            return 0
        if a == 1:
            return b
        if a == b:
            return a
        if a ^ 1 == b:
            return 0
        lit = self.cache.get((a, b))
        if lit is None:
            lit = 2 * self.next_var
            self.next_var += 1
            self.gates.append((lit, a, b))
            self.cache[(a, b)] = lit
        return lit

    def or_(self, a: int, b: int) -> int:
        return self.and_(a ^ 1, b ^ 1) ^ 1

    def ite(self, cond: int, then_lit: int, else_lit: int) -> int:
        return self.or_(self.and_(cond, then_lit),
                        self.and_(cond ^ 1, else_lit))

    def from_table(self, table: tuple[int, ...], var_lits: Sequence[int]) -> int:
        """Literal computing the boolean function given as a truth table;
        bit j of the table index is the value of var_lits[j]."""
        assert len(table) == 1 << len(var_lits)
        if all(b == 0 for b in table):
            return 0
        if all(b == 1 for b in table):
            return 1
        split = len(var_lits) - 1
        half = 1 << split
        low = self.from_table(table[:half], var_lits[:split])
        high = self.from_table(table[half:], var_lits[:split])
        if low == high:
            return low
        return self.ite(var_lits[split], high, low)


def _encode_machine(
    circuit_input_names: Sequence[str],
    circuit_output_names: Sequence[str],
    read_idx: Sequence[int],
    write_idx: Sequence[int],
    num_states: int,
    output_table,
    next_table,
) -> AigerCircuit:
    """Compile a finite-state transducer table into an AIGER circuit.

    read_idx/write_idx select the circuit inputs the machine actually reads
    and the outputs it actually drives; other outputs are constant 0.
    output_table(state, read_bits) -> driven-output bits;
    next_table(state, read_bits) -> next state."""
    n_in, n_out = len(circuit_input_names), len(circuit_output_names)
    n_bits = max(1, (num_states - 1).bit_length()) if num_states > 1 else 0
    b = _AigBuilder(n_in, n_bits)
    var_lits = [b.latch_lit(k) for k in range(n_bits)] + \
               [b.input_lit(k) for k in read_idx]

    def table_for(bit_fn) -> tuple[int, ...]:
        rows = []
        for idx in range(1 << len(var_lits)):
            state = idx & ((1 << n_bits) - 1) if n_bits else 0
            read_bits = idx >> n_bits
            rows.append(bit_fn(state % num_states, read_bits))
        return tuple(rows)

    out_lits = [0] * n_out
    for j, out_pos in enumerate(write_idx):
        out_lits[out_pos] = b.from_table(
            table_for(lambda s, r, j=j: (output_table(s, r) >> j) & 1), var_lits)
    next_lits = [
        b.from_table(table_for(lambda s, r, k=k: (next_table(s, r) >> k) & 1),
                     var_lits)
        for k in range(n_bits)]

    inputs = tuple(2 * (k + 1) for k in range(n_in))
    latches = tuple((b.latch_lit(k), next_lits[k]) for k in range(n_bits))
    circuit = AigerCircuit(
        max_var=b.next_var - 1,
        inputs=inputs,
        latches=latches,
        outputs=tuple(out_lits),
        and_gates=tuple(b.gates),
        input_symbols=tuple(circuit_input_names),
        latch_symbols=tuple(f"l{k}" for k in range(n_bits)) if n_bits else None,
        output_symbols=tuple(circuit_output_names),
    )
    return circuit.validate()


# ---------------------------------------------------------------------------
# Bounded enumeration synthesis

def _enumerate_tables(num_states: int, num_read_vals: int, num_write_vals: int):
    """All (output_table, next_table) pairs, lexicographic; tables are flat
    tuples indexed by state * num_read_vals + read_bits."""
    entries = num_states * num_read_vals
    choices = [(out, nxt) for out in range(num_write_vals)
               for nxt in range(num_states)]
    for combo in itertools.product(choices, repeat=entries):
        out_flat = tuple(c[0] for c in combo)
        next_flat = tuple(c[1] for c in combo)
        yield out_flat, next_flat


def _count_tables(num_states: int, num_read_vals: int, num_write_vals: int) -> int:
    return (num_write_vals * num_states) ** (num_states * num_read_vals)


def _behavior_signature(num_states: int, num_read_vals: int, step_fn):
    """Canonical signature of the reachable behavior from state 0; tables
    that differ only on unreachable entries share a signature."""
    seen = {0: 0}
    order = [0]
    rows = []
    for st in order:
        for r in range(num_read_vals):
            out, nxt = step_fn(st, r)
            if nxt not in seen:
                seen[nxt] = len(seen)
                order.append(nxt)
            rows.append((out, seen[nxt]))
    return tuple(rows)


def bounded_synthesize(
    s: Specification,
    max_system_states: int = 2,
    max_env_states: int = 2,
    max_candidates: int = 100_000,
    check_timeout: Optional[float] = None,
) -> OracleResult:
    """Enumerate Mealy system machines (fewest states first, lexicographic
    tables), certifying each candidate; if none verifies, enumerate Moore
    environment machines as counter-strategies. Unknown when both bounds
    are exhausted. Complete only up to the given bounds."""
    start = time.monotonic()
    occ_in, occ_out = s.occurring()
    formula = specs.to_formula(s)
    negated = ltl.Not(formula)
    in_idx = [s.inputs.index(n) for n in occ_in]
    out_idx = [s.outputs.index(n) for n in occ_out]

    def certify_system(out_t, next_t, num_states, nvals) -> AigerCircuit:
        candidate = _encode_machine(
            s.inputs, s.outputs, in_idx, out_idx, num_states,
            lambda st, r: out_t[st * nvals + r],
            lambda st, r: next_t[st * nvals + r])
        if not verify.check_circuit(candidate, formula, s.inputs, s.outputs,
                                    timeout=check_timeout).holds:
            raise OracleError("internal: table machine passed the product "
                              "check but its circuit failed certification")
        return candidate

    # system side: reads occurring inputs, drives occurring outputs; the
    # candidate table is checked directly, only the winner is compiled to
    # AIGER and re-certified by check_circuit
    sys_checker = verify.TransducerChecker(formula, occ_in, occ_out)
    sys_seen: set = set()
    for num_states in range(1, max_system_states + 1):
        nvals = 1 << len(occ_in)
        if _count_tables(num_states, nvals, 1 << len(occ_out)) > max_candidates:
            break
        for out_t, next_t in _enumerate_tables(
                num_states, nvals, 1 << len(occ_out)):
            def table_step(st, r, out_t=out_t, next_t=next_t, nvals=nvals):
                e = st * nvals + r
                return out_t[e], next_t[e]
            sig = _behavior_signature(num_states, nvals, table_step)
            if sig in sys_seen:
                continue
            sys_seen.add(sig)
            if sys_checker.check(0, table_step, timeout=check_timeout).holds:
                return OracleResult(
                    RealizabilityStatus.REALIZABLE,
                    certify_system(out_t, next_t, num_states, nvals),
                    time.monotonic() - start)

    def certify_env(emit_t, next_t, num_states, nvals) -> AigerCircuit:
        candidate = _encode_machine(
            s.outputs, s.inputs, out_idx, in_idx, num_states,
            lambda st, r: emit_t[st],
            lambda st, r: next_t[st * nvals + r])
        if not verify.check_counter_strategy(
                candidate, s, timeout=check_timeout).holds:
            raise OracleError("internal: environment table passed the product "
                              "check but its circuit failed certification")
        return candidate

    # environment side: a Moore machine reading the occurring outputs and
    # emitting inputs from its state alone
    env_checker = verify.TransducerChecker(negated, occ_out, occ_in)
    env_seen: set = set()
    for num_states in range(1, max_env_states + 1):
        nvals = 1 << len(occ_out)
        count = ((1 << len(occ_in)) ** num_states
                 * num_states ** (num_states * nvals))
        if count > max_candidates:
            break
        for emit_t in itertools.product(range(1 << len(occ_in)),
                                        repeat=num_states):
            for next_t in itertools.product(range(num_states),
                                            repeat=num_states * nvals):
                def table_step(st, r, emit_t=emit_t, next_t=next_t,
                               nvals=nvals):
                    return emit_t[st], next_t[st * nvals + r]
                sig = _behavior_signature(num_states, nvals, table_step)
                if sig in env_seen:
                    continue
                env_seen.add(sig)
                if env_checker.check(0, table_step,
                                     timeout=check_timeout).holds:
                    return OracleResult(
                        RealizabilityStatus.UNREALIZABLE,
                        certify_env(emit_t, next_t, num_states, nvals),
                        time.monotonic() - start)

    return OracleResult(RealizabilityStatus.UNKNOWN, None,
                        time.monotonic() - start)


# ---------------------------------------------------------------------------
# External tool adapter

def _certify(s: Specification, status: RealizabilityStatus,
             artifact: AigerCircuit, check_timeout: Optional[float]) -> None:
    if status is RealizabilityStatus.REALIZABLE:
        verdict = verify.check_circuit(
            artifact, specs.to_formula(s), s.inputs, s.outputs,
            timeout=check_timeout)
    else:
        verdict = verify.check_counter_strategy(
            artifact, s, timeout=check_timeout)
    if not verdict.holds:
        raise OracleError(
            f"tool artifact failed certification as {status.value}")


def query_external(s: Specification, cfg: OracleConfig) -> OracleResult:
    """Run the configured tool: spec JSON on stdin (or via an {input} file),
    first stdout line REALIZABLE|UNREALIZABLE|UNKNOWN, then AIGER ASCII."""
    start = time.monotonic()
    template = os.environ.get(ORACLE_CMD_ENV_VAR) or cfg.command
    spec_text = specs.write_spec(s)
    tmp_path = None
    try:
        if "{input}" in template:
            fd, tmp_path = tempfile.mkstemp(suffix=".json", prefix="spec-")
            with os.fdopen(fd, "w") as fh:
                fh.write(spec_text)
            template = template.replace("{input}", tmp_path)
            stdin_text = None
        else:
            stdin_text = spec_text
        template = template.replace("{timeout}", str(int(cfg.timeout)))
        argv = shlex.split(template)

        proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.PIPE, text=True, start_new_session=True)
        try:
            out, err = proc.communicate(input=stdin_text, timeout=cfg.timeout)
        except subprocess.TimeoutExpired:
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            proc.wait()
            return OracleResult(RealizabilityStatus.UNKNOWN, None,
                                time.monotonic() - start)
    except OSError as e:
        raise OracleError(f"cannot run oracle command {template!r}: {e}") from None
    finally:
        if tmp_path is not None:
            try:
                os.unlink(tmp_path)
            except OSError:
                pass

    if proc.returncode != 0:
        raise OracleError(
            f"oracle exited with status {proc.returncode}: {err.strip()[:500]}")
    lines = out.splitlines()
    if not lines:
        raise OracleError("oracle produced no output")
    status_word = lines[0].strip().upper()
    if status_word == "UNKNOWN":
        return OracleResult(RealizabilityStatus.UNKNOWN, None,
                            time.monotonic() - start)
    if status_word not in ("REALIZABLE", "UNREALIZABLE"):
        raise OracleError(f"unrecognized oracle status line {lines[0]!r}")
    status = (RealizabilityStatus.REALIZABLE if status_word == "REALIZABLE"
              else RealizabilityStatus.UNREALIZABLE)
    try:
        artifact = aiger.parse_aiger("\n".join(lines[1:]) + "\n")
    except aiger.AigerError as e:
        raise OracleError(f"oracle emitted invalid AIGER: {e}") from None
    _certify(s, status, artifact, cfg.check_timeout)
    return OracleResult(status, artifact, time.monotonic() - start)


class Oracle:
    """Front door used by dataset generation; memoizes by specification."""

    def __init__(self, cfg: OracleConfig):
        self.cfg = cfg
        self._cache: dict[str, OracleResult] = {}

    def query(self, s: Specification) -> OracleResult:
        key = specs.write_spec(s, indent=None)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        result = query(s, self.cfg)
        self._cache[key] = result
        return result


def query(s: Specification, cfg: OracleConfig) -> OracleResult:
    if cfg.mode == "external":
        return query_external(s, cfg)
    return bounded_synthesize(
        s, cfg.max_system_states, cfg.max_env_states,
        cfg.max_candidates, cfg.check_timeout)
