"""Token sequences for the model: per-property spec encodings with tree
positions, and circuit target sequences with a leading realizability
token. Circuit headers and symbol tables are not tokenized; decode
reconstructs the header from the fixed input/output convention."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from . import aiger, ltl
from .aiger import AigerCircuit
from .ltl import Ltl
from .specs import RealizabilityStatus, Specification

PAD = "<pad>"
START = "<start>"
EOS = "<eos>"
NL = "<nl>"
ASSUME = "<assume>"
REAL = "<real>"
UNREAL = "<unreal>"

SPECIALS = (PAD, START, EOS, NL, ASSUME, REAL, UNREAL)
LTL_TOKENS = ("true", "false", "!", "&", "|", "->", "<->",
              "X", "U", "R", "F", "G")
DEFAULT_ATOMS = ("i0", "i1", "i2", "i3", "i4", "o0", "o1", "o2", "o3", "o4")
DEFAULT_VAR_CAP = 50


class TokenizeError(Exception):
    pass


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    var_cap: int
    index: dict = field(compare=False, repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.index:
            object.__setattr__(
                self, "index", {t: i for i, t in enumerate(self.tokens)})
        if len(self.index) != len(self.tokens):
            raise TokenizeError("duplicate tokens in vocabulary")
        if self.tokens[0] != PAD:
            raise TokenizeError("token 0 must be the padding token")

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise TokenizeError(f"token {token!r} not in vocabulary") from None

    def token(self, idx: int) -> str:
        try:
            return self.tokens[idx]
        except IndexError:
            raise TokenizeError(f"token id {idx} out of range") from None

    @property
    def pad_id(self) -> int:
        return 0

    def to_json(self) -> str:
        return json.dumps({"tokens": list(self.tokens),
                           "var_cap": self.var_cap})

    @staticmethod
    def from_json(text: str) -> "Vocabulary":
        doc = json.loads(text)
        return Vocabulary(tuple(doc["tokens"]), int(doc["var_cap"]))


def build_vocabulary(var_cap: int = DEFAULT_VAR_CAP,
                     atoms: Sequence[str] = DEFAULT_ATOMS) -> Vocabulary:
    """Specials, LTL operator/atom tokens, and the integer tokens
    0 .. 2*var_cap+1 every AIGER literal can take."""
    tokens = list(SPECIALS) + list(LTL_TOKENS) + list(atoms)
    tokens += [str(n) for n in range(2 * var_cap + 2)]
    return Vocabulary(tuple(tokens), var_cap)


# ---------------------------------------------------------------------------
# Specifications

@dataclass(frozen=True)
class EncodedProperty:
    token_ids: tuple[int, ...]      # fixed length, padded
    positions: tuple[tuple[int, ...], ...]  # one vector of length 2*D each
    length: int                     # real tokens before padding
    is_assumption: bool


@dataclass(frozen=True)
class EncodedSpec:
    properties: tuple[EncodedProperty, ...]
    max_depth: int
    prop_length: int


def encode_property(f: Ltl, vocab: Vocabulary, max_depth: int,
                    prop_length: int, is_assumption: bool) -> EncodedProperty:
    try:
        placed = ltl.tree_positions(f, max_depth)
    except ltl.LtlError as e:
        raise TokenizeError(
            f"cannot encode property {ltl.print_formula(f)}: {e}") from None
    width = 2 * max_depth
    zero = (0,) * width
    tokens = list(placed.tokens)
    positions = list(placed.vectors)
    if is_assumption:
        tokens.insert(0, ASSUME)
        positions.insert(0, zero)
    if len(tokens) > prop_length:
        raise TokenizeError(
            f"property {ltl.print_formula(f)} needs {len(tokens)} tokens, "
            f"limit is {prop_length}")
    ids = [vocab.id(t) for t in tokens]
    length = len(ids)
    ids += [vocab.pad_id] * (prop_length - length)
    positions += [zero] * (prop_length - length)
    return EncodedProperty(tuple(ids), tuple(positions), length, is_assumption)


def encode_spec(s: Specification, vocab: Vocabulary, max_depth: int,
                prop_length: int) -> EncodedSpec:
    props = [encode_property(f, vocab, max_depth, prop_length, True)
             for f in s.assumptions]
    props += [encode_property(f, vocab, max_depth, prop_length, False)
              for f in s.guarantees]
    return EncodedSpec(tuple(props), max_depth, prop_length)


# ---------------------------------------------------------------------------
# Circuits

def encode_circuit(c: AigerCircuit, status: RealizabilityStatus,
                   vocab: Vocabulary) -> list[int]:
    """[REAL|UNREAL] then the definition lines (integer tokens, lines
    separated by NL), EOS-terminated; header and symbols are omitted."""
    if status is RealizabilityStatus.REALIZABLE:
        head = REAL
    elif status is RealizabilityStatus.UNREALIZABLE:
        head = UNREAL
    else:
        raise TokenizeError("cannot encode an unknown-status circuit")
    lines: list[list[int]] = [[lit] for lit in c.inputs]
    lines += [[cur, nxt] for cur, nxt in c.latches]
    lines += [[lit] for lit in c.outputs]
    lines += [list(g) for g in c.and_gates]
    ids = [vocab.id(head)]
    for k, line in enumerate(lines):
        if k:
            ids.append(vocab.id(NL))
        ids.extend(vocab.id(str(v)) for v in line)
    ids.append(vocab.id(EOS))
    return ids


def decode_circuit(token_ids: Sequence[int], vocab: Vocabulary,
                   n_inputs: int = 5, n_outputs: int = 5,
                   ) -> tuple[RealizabilityStatus, AigerCircuit]:
    """Rebuild (status, circuit) from a token sequence.

    The header is recomputed: input/output counts come from the dataset
    convention, the leading two-integer lines are latches, and after the
    block of exactly n_outputs one-integer lines only three-integer AND
    lines may follow."""
    tokens = [vocab.token(i) for i in token_ids]
    if EOS in tokens:
        tokens = tokens[:tokens.index(EOS)]
    if not tokens or tokens[0] not in (REAL, UNREAL):
        raise TokenizeError("sequence must begin with a realizability token")
    status = (RealizabilityStatus.REALIZABLE if tokens[0] == REAL
              else RealizabilityStatus.UNREALIZABLE)

    lines: list[list[int]] = [[]]
    for t in tokens[1:]:
        if t == NL:
            lines.append([])
            continue
        try:
            lines[-1].append(int(t))
        except ValueError:
            raise TokenizeError(
                f"expected an integer token, got {t!r}") from None
    if lines and not lines[-1]:
        lines.pop()

    if len(lines) < n_inputs + n_outputs:
        raise TokenizeError(
            f"{len(lines)} definition lines cannot hold {n_inputs} inputs "
            f"and {n_outputs} outputs")
    for line in lines[:n_inputs]:
        if len(line) != 1:
            raise TokenizeError(f"input line {line} must be a single literal")
    inputs = tuple(line[0] for line in lines[:n_inputs])

    rest = lines[n_inputs:]
    n_latches = 0
    while n_latches < len(rest) and len(rest[n_latches]) == 2:
        n_latches += 1
    latches = tuple(tuple(line) for line in rest[:n_latches])
    out_lines = rest[n_latches:n_latches + n_outputs]
    if len(out_lines) != n_outputs or any(len(l) != 1 for l in out_lines):
        raise TokenizeError("output block must be exactly "
                            f"{n_outputs} single-literal lines")
    outputs = tuple(line[0] for line in out_lines)
    and_lines = rest[n_latches + n_outputs:]
    if any(len(l) != 3 for l in and_lines):
        raise TokenizeError("AND-gate lines must have three literals")
    and_gates = tuple(tuple(line) for line in and_lines)

    all_lits = list(inputs) + [l for lat in latches for l in lat] \
        + list(outputs) + [l for g in and_gates for l in g]
    max_var = max((lit >> 1 for lit in all_lits), default=0)
    circuit = AigerCircuit(max_var, inputs, latches, outputs, and_gates)
    try:
        circuit.validate()
    except aiger.AigerError as e:
        raise TokenizeError(f"decoded circuit is invalid: {e}") from None
    return status, circuit
