"""Linear temporal logic: syntax trees, parsing, printing, tree positions,
and evaluation on ultimately periodic (lasso) words."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

IDENT_RE = re.compile(r"[a-zA-Z_][a-zA-Z0-9_]*")
INPUT_ATOM_RE = re.compile(r"i\d+\Z")
OUTPUT_ATOM_RE = re.compile(r"o\d+\Z")

DEFAULT_MAX_DEPTH = 32


class LtlError(Exception):
    pass


class LtlSyntaxError(LtlError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


def _cached_structural_hash(self):
    # deep structural hashes are hot (formula-set dicts in the automaton
    # construction), so each node caches its hash on first use
    try:
        return self._hash
    except AttributeError:
        value = hash((type(self).__name__,
                      getattr(self, "name", None), *self.children()))
        object.__setattr__(self, "_hash", value)
        return value


@dataclass(frozen=True)
class Ltl:
    """Base class for LTL syntax tree nodes."""

    # operator spelling, used by the printer and the token stream
    token = ""

    def children(self) -> tuple["Ltl", ...]:
        return ()


@dataclass(frozen=True)
class TrueConst(Ltl):
    token = "true"


@dataclass(frozen=True)
class FalseConst(Ltl):
    token = "false"


@dataclass(frozen=True)
class Atom(Ltl):
    name: str

    def __post_init__(self):
        if not IDENT_RE.fullmatch(self.name):
            raise LtlError(f"invalid proposition name: {self.name!r}")

    @property
    def token(self) -> str:  # type: ignore[override]
        return self.name


@dataclass(frozen=True)
class _Unary(Ltl):
    operand: Ltl

    def children(self) -> tuple[Ltl, ...]:
        return (self.operand,)


@dataclass(frozen=True)
class _Binary(Ltl):
    left: Ltl
    right: Ltl

    def children(self) -> tuple[Ltl, ...]:
        return (self.left, self.right)


@dataclass(frozen=True)
class Not(_Unary):
    token = "!"


@dataclass(frozen=True)
class Next(_Unary):
    token = "X"


@dataclass(frozen=True)
class Eventually(_Unary):
    token = "F"


@dataclass(frozen=True)
class Globally(_Unary):
    token = "G"


@dataclass(frozen=True)
class And(_Binary):
    token = "&"


@dataclass(frozen=True)
class Or(_Binary):
    token = "|"


@dataclass(frozen=True)
class Implies(_Binary):
    token = "->"


@dataclass(frozen=True)
class Equiv(_Binary):
    token = "<->"


@dataclass(frozen=True)
class Until(_Binary):
    token = "U"


@dataclass(frozen=True)
class Release(_Binary):
    token = "R"


# the dataclass decorator regenerates __hash__ per class; swap in the
# caching version everywhere (equality stays structural)
for _cls in (Ltl, TrueConst, FalseConst, Atom, _Unary, _Binary, Not, Next,
             Eventually, Globally, And, Or, Implies, Equiv, Until, Release):
    _cls.__hash__ = _cached_structural_hash  # type: ignore[assignment]

TRUE = TrueConst()
FALSE = FalseConst()


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<word>[a-zA-Z_][a-zA-Z0-9_]*)"
    r"|(?P<op><->|->|&&|\|\||[!&|()]))"
)

_UNARY_WORDS = {"X": Next, "F": Eventually, "G": Globally}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            raise LtlSyntaxError(f"unexpected character {stripped[0]!r}",
                                 len(text) - len(stripped))
        if m.lastgroup == "word":
            word = m.group("word")
            if word in ("true", "false"):
                kind = "const"
            elif word in ("X", "F", "G"):
                kind = "unary"
            elif word in ("U", "R"):
                kind = "temporal"
            else:
                kind = "ident"
            tokens.append((kind, word, m.start("word")))
        else:
            op = m.group("op")
            op = {"&&": "&", "||": "|"}.get(op, op)
            tokens.append((op, op, m.start("op")))
        pos = m.end()
    return tokens


class _Parser:
    """Recursive descent over the precedence levels
    (tightest first): !/X/F/G, U/R, &, |, ->/<->.

    U, R, ->, <->, & and | all associate to the right."""

    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> Optional[tuple[str, str, int]]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> tuple[str, str, int]:
        tok = self.peek()
        if tok is None:
            raise LtlSyntaxError("unexpected end of input", len(self.text))
        self.i += 1
        return tok

    def parse(self) -> Ltl:
        f = self.parse_implication()
        tok = self.peek()
        if tok is not None:
            raise LtlSyntaxError(f"unexpected token {tok[1]!r}", tok[2])
        return f

    def parse_implication(self) -> Ltl:
        left = self.parse_or()
        tok = self.peek()
        if tok and tok[0] in ("->", "<->"):
            self.next()
            right = self.parse_implication()
            return Implies(left, right) if tok[0] == "->" else Equiv(left, right)
        return left

    def parse_or(self) -> Ltl:
        left = self.parse_and()
        tok = self.peek()
        if tok and tok[0] == "|":
            self.next()
            return Or(left, self.parse_or())
        return left

    def parse_and(self) -> Ltl:
        left = self.parse_until()
        tok = self.peek()
        if tok and tok[0] == "&":
            self.next()
            return And(left, self.parse_and())
        return left

    def parse_until(self) -> Ltl:
        left = self.parse_unary()
        tok = self.peek()
        if tok and tok[0] == "temporal":
            self.next()
            right = self.parse_until()
            return Until(left, right) if tok[1] == "U" else Release(left, right)
        return left

    def parse_unary(self) -> Ltl:
        tok = self.peek()
        if tok is None:
            raise LtlSyntaxError("unexpected end of input", len(self.text))
        kind, value, pos = tok
        if kind == "!":
            self.next()
            return Not(self.parse_unary())
        if kind == "unary":
            self.next()
            return _UNARY_WORDS[value](self.parse_unary())
        if kind == "(":
            self.next()
            inner = self.parse_implication()
            closing = self.peek()
            if closing is None or closing[0] != ")":
                raise LtlSyntaxError("missing closing parenthesis",
                                     closing[2] if closing else len(self.text))
            self.next()
            return inner
        if kind == "const":
            self.next()
            return TRUE if value == "true" else FALSE
        if kind == "ident":
            self.next()
            return Atom(value)
        raise LtlSyntaxError(f"unexpected token {value!r}", pos)


def parse(text: str) -> Ltl:
    """Parse an LTL formula from its ASCII spelling."""
    return _Parser(text).parse()


def print_formula(f: Ltl) -> str:
    """Fully parenthesized canonical form; parse(print_formula(f)) == f."""
    if isinstance(f, (TrueConst, FalseConst, Atom)):
        return f"({f.token})"
    if isinstance(f, _Unary):
        return f"({f.token} {print_formula(f.operand)})"
    assert isinstance(f, _Binary)
    return f"({print_formula(f.left)} {f.token} {print_formula(f.right)})"


# ---------------------------------------------------------------------------
# Structural helpers

def subformulas(f: Ltl) -> Iterator[Ltl]:
    """Pre-order traversal of the syntax tree (with repetition)."""
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children()))


def ast_size(f: Ltl) -> int:
    return sum(1 for _ in subformulas(f))


def depth(f: Ltl) -> int:
    """Longest root-to-leaf path, counted in edges."""
    kids = f.children()
    if not kids:
        return 0
    return 1 + max(depth(c) for c in kids)


def atoms(f: Ltl) -> set[str]:
    return {node.name for node in subformulas(f) if isinstance(node, Atom)}


def atoms_in_order(f: Ltl) -> list[str]:
    """Atom names in order of first occurrence (pre-order)."""
    seen: list[str] = []
    for node in subformulas(f):
        if isinstance(node, Atom) and node.name not in seen:
            seen.append(node.name)
    return seen


def propositions(
    f: Ltl,
    classifier: Optional[Callable[[str], str]] = None,
) -> tuple[set[str], set[str]]:
    """Partition the atoms of f into (inputs, outputs).

    Without a classifier, names i<k> are inputs and o<k> outputs; a
    classifier must return "input" or "output" for each atom name."""
    inputs: set[str] = set()
    outputs: set[str] = set()
    for name in atoms(f):
        if classifier is not None:
            role = classifier(name)
            if role == "input":
                inputs.add(name)
            elif role == "output":
                outputs.add(name)
            else:
                raise LtlError(f"classifier returned {role!r} for atom {name!r}")
        elif INPUT_ATOM_RE.fullmatch(name):
            inputs.add(name)
        elif OUTPUT_ATOM_RE.fullmatch(name):
            outputs.add(name)
        else:
            raise LtlError(
                f"atom {name!r} matches neither the i<k> nor the o<k> "
                "convention and no classifier was given")
    return inputs, outputs


def rename(f: Ltl, mapping: dict[str, str]) -> Ltl:
    """Substitute atoms; mapping must cover every atom of f."""
    if isinstance(f, Atom):
        try:
            return Atom(mapping[f.name])
        except KeyError:
            raise LtlError(f"no mapping entry for atom {f.name!r}") from None
    kids = f.children()
    if not kids:
        return f
    return type(f)(*(rename(c, mapping) for c in kids))  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Tree positional encoding

@dataclass(frozen=True)
class TreePositions:
    """Per-token binary path vectors of length 2*max_depth.

    Tokens are listed in pre-order. The root vector is all zeros; a child
    vector is the parent vector with (1,0) (left/only child) or (0,1)
    (right child) placed in front, truncated back to length 2*max_depth."""

    tokens: tuple[str, ...]
    vectors: tuple[tuple[int, ...], ...]
    max_depth: int


def tree_positions(f: Ltl, max_depth: int = DEFAULT_MAX_DEPTH) -> TreePositions:
    d = depth(f)
    if d > max_depth:
        raise LtlError(
            f"formula depth {d} exceeds the maximum encodable depth {max_depth}")
    width = 2 * max_depth
    tokens: list[str] = []
    vectors: list[tuple[int, ...]] = []

    def walk(node: Ltl, vec: tuple[int, ...]) -> None:
        tokens.append(node.token)
        vectors.append(vec)
        kids = node.children()
        for idx, child in enumerate(kids):
            step = (0, 1) if idx == 1 else (1, 0)
            walk(child, (step + vec)[:width])

    walk(f, (0,) * width)
    return TreePositions(tuple(tokens), tuple(vectors), max_depth)


# ---------------------------------------------------------------------------
# Lasso words and evaluation

@dataclass(frozen=True)
class LassoWord:
    """Ultimately periodic word: prefix then infinitely repeated period.

    Each letter is the set of propositions that hold at that position."""

    prefix: tuple[frozenset[str], ...]
    period: tuple[frozenset[str], ...]

    def __post_init__(self):
        if len(self.period) < 1:
            raise LtlError("lasso period must be nonempty")

    @staticmethod
    def make(prefix, period) -> "LassoWord":
        return LassoWord(tuple(frozenset(a) for a in prefix),
                         tuple(frozenset(a) for a in period))

    def letter(self, t: int) -> frozenset[str]:
        if t < len(self.prefix):
            return self.prefix[t]
        return self.period[(t - len(self.prefix)) % len(self.period)]

    def shift(self, n: int = 1) -> "LassoWord":
        """The suffix word starting n positions later."""
        w = self
        for _ in range(n):
            if w.prefix:
                w = LassoWord(w.prefix[1:], w.period)
            else:
                w = LassoWord((), w.period[1:] + w.period[:1])
        return w

    def propositions(self) -> set[str]:
        out: set[str] = set()
        for a in self.prefix + self.period:
            out |= a
        return out


def eval_lasso(f: Ltl, w: LassoWord) -> bool:
    """Whether the infinite word w satisfies f.

    Subformula values are computed at every position of the prefix plus one
    copy of the period; until/release take their fixpoint on the loop by
    sweeping the period twice."""
    p, q = len(w.prefix), len(w.period)
    n = p + q
    letters = list(w.prefix + w.period)
    values: dict[Ltl, list[bool]] = {}

    def nxt(t: int) -> int:
        return t + 1 if t + 1 < n else p

    def ev(node: Ltl) -> list[bool]:
        cached = values.get(node)
        if cached is not None:
            return cached
        if isinstance(node, TrueConst):
            v = [True] * n
        elif isinstance(node, FalseConst):
            v = [False] * n
        elif isinstance(node, Atom):
            v = [node.name in letters[t] for t in range(n)]
        elif isinstance(node, Not):
            c = ev(node.operand)
            v = [not b for b in c]
        elif isinstance(node, And):
            l, r = ev(node.left), ev(node.right)
            v = [a and b for a, b in zip(l, r)]
        elif isinstance(node, Or):
            l, r = ev(node.left), ev(node.right)
            v = [a or b for a, b in zip(l, r)]
        elif isinstance(node, Implies):
            l, r = ev(node.left), ev(node.right)
            v = [(not a) or b for a, b in zip(l, r)]
        elif isinstance(node, Equiv):
            l, r = ev(node.left), ev(node.right)
            v = [a == b for a, b in zip(l, r)]
        elif isinstance(node, Next):
            c = ev(node.operand)
            v = [c[nxt(t)] for t in range(n)]
        elif isinstance(node, (Until, Eventually)):
            if isinstance(node, Until):
                l, r = ev(node.left), ev(node.right)
            else:
                l, r = [True] * n, ev(node.operand)
            v = [False] * n
            for _ in range(2):  # least fixpoint on the loop
                for t in range(n - 1, p - 1, -1):
                    v[t] = r[t] or (l[t] and v[nxt(t)])
            for t in range(p - 1, -1, -1):
                v[t] = r[t] or (l[t] and v[t + 1])
        elif isinstance(node, (Release, Globally)):
            if isinstance(node, Release):
                l, r = ev(node.left), ev(node.right)
            else:
                l, r = [False] * n, ev(node.operand)
            v = [True] * n
            for _ in range(2):  # greatest fixpoint on the loop
                for t in range(n - 1, p - 1, -1):
                    v[t] = r[t] and (l[t] or v[nxt(t)])
            for t in range(p - 1, -1, -1):
                v[t] = r[t] and (l[t] or v[t + 1])
        else:
            raise LtlError(f"unknown node type {type(node).__name__}")
        values[node] = v
        return v

    return ev(f)[0]
