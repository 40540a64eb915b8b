"""LTL to Büchi automata via the classic tableau construction.

States carry their entry constraint (a conjunction of literals); an
automaton run consumes one letter per transition, and a letter may enter a
state only if it satisfies that state's constraint. Generalized acceptance
from until-subformulas is reduced to plain Büchi acceptance с a counter."""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional

from . import ltl
from .ltl import (
    And, Atom, Equiv, Eventually, FALSE, FalseConst, Globally, Implies,
    LassoWord, Ltl, Next, Not, Or, Release, TRUE, TrueConst, Until,
)


def _and(l: Ltl, r: Ltl) -> Ltl:
    if isinstance(l, FalseConst) or isinstance(r, FalseConst):
        return FALSE
    if isinstance(l, TrueConst):
        return r
    if isinstance(r, TrueConst):
        return l
    return And(l, r)


def _or(l: Ltl, r: Ltl) -> Ltl:
    if isinstance(l, TrueConst) or isinstance(r, TrueConst):
        return TRUE
    if isinstance(l, FalseConst):
        return r
    if isinstance(r, FalseConst):
        return l
    return Or(l, r)


def _next(g: Ltl) -> Ltl:
    if isinstance(g, (TrueConst, FalseConst)):
        return g
    return Next(g)


def _until(l: Ltl, r: Ltl) -> Ltl:
    if isinstance(r, (TrueConst, FalseConst)):
        return r
    if isinstance(l, FalseConst):
        return r
    return Until(l, r)


def _release(l: Ltl, r: Ltl) -> Ltl:
    if isinstance(r, (TrueConst, FalseConst)):
        return r
    if isinstance(l, TrueConst):
        return r
    return Release(l, r)


def nnf(f: Ltl) -> Ltl:
    """Negation normal form over {literals, and, or, X, U, R}, with
    constant folding."""
    if isinstance(f, (TrueConst, FalseConst, Atom)):
        return f
    if isinstance(f, And):
        return _and(nnf(f.left), nnf(f.right))
    if isinstance(f, Or):
        return _or(nnf(f.left), nnf(f.right))
    if isinstance(f, Implies):
        return _or(nnf(Not(f.left)), nnf(f.right))
    if isinstance(f, Equiv):
        return _or(_and(nnf(f.left), nnf(f.right)),
                   _and(nnf(Not(f.left)), nnf(Not(f.right))))
    if isinstance(f, Next):
        return _next(nnf(f.operand))
    if isinstance(f, Until):
        return _until(nnf(f.left), nnf(f.right))
    if isinstance(f, Release):
        return _release(nnf(f.left), nnf(f.right))
    if isinstance(f, Eventually):
        return _until(TRUE, nnf(f.operand))
    if isinstance(f, Globally):
        return _release(FALSE, nnf(f.operand))
    assert isinstance(f, Not)
    g = f.operand
    if isinstance(g, TrueConst):
        return FALSE
    if isinstance(g, FalseConst):
        return TRUE
    if isinstance(g, Atom):
        return f
    if isinstance(g, Not):
        return nnf(g.operand)
    if isinstance(g, And):
        return _or(nnf(Not(g.left)), nnf(Not(g.right)))
    if isinstance(g, Or):
        return _and(nnf(Not(g.left)), nnf(Not(g.right)))
    if isinstance(g, Implies):
        return _and(nnf(g.left), nnf(Not(g.right)))
    if isinstance(g, Equiv):
        return _or(_and(nnf(g.left), nnf(Not(g.right))),
                   _and(nnf(Not(g.left)), nnf(g.right)))
    if isinstance(g, Next):
        return _next(nnf(Not(g.operand)))
    if isinstance(g, Until):
        return _release(nnf(Not(g.left)), nnf(Not(g.right)))
    if isinstance(g, Release):
        return _until(nnf(Not(g.left)), nnf(Not(g.right)))
    if isinstance(g, Eventually):
        return _release(FALSE, nnf(Not(g.operand)))
    if isinstance(g, Globally):
        return _until(TRUE, nnf(Not(g.operand)))
    raise ltl.LtlError(f"cannot normalize {type(g).__name__}")


@dataclass(frozen=True)
class Label:
    """Conjunction of literals a letter must satisfy to enter a state."""

    positive: frozenset[str]
    negative: frozenset[str]

    def admits(self, letter: frozenset[str]) -> bool:
        return self.positive <= letter and not (self.negative & letter)


@dataclass(frozen=True)
class BuchiAutomaton:
    """Nondeterministic Büchi automaton with state-entry labels.

    A run on letters a0 a1 ... is a state sequence q1 q2 ... with
    q1 initial-reachable, labels[q_{t+1}] admitting a_t, and successive
    states related by successors; it accepts iff it visits accepting
    states infinitely often."""

    propositions: tuple[str, ...]
    initial: tuple[int, ...]
    accepting: frozenset[int]
    labels: tuple[Label, ...]
    successors: tuple[tuple[int, ...], ...]

    @property
    def num_states(self) -> int:
        return len(self.labels)

    def transitions(self):
        """(source, label, target) triples; label constrains the letter read."""
        for src, targets in enumerate(self.successors):
            for dst in targets:
                yield src, self.labels[dst], dst


class _Node:
    __slots__ = ("incoming", "new", "old", "next")

    def __init__(self, incoming, new, old, nxt):
        self.incoming: set[int] = incoming
        self.new: set[Ltl] = new
        self.old: frozenset[Ltl] | set[Ltl] = old
        self.next: set[Ltl] = nxt


_INIT = -1


def _tableau(f: Ltl):
    """Expand f (in NNF) into nodes; returns (nodes, until_list).

    nodes: list of (incoming, old, next) with formulas frozen."""
    done: dict[tuple[frozenset, frozenset], int] = {}
    nodes: list[tuple[set[int], frozenset, frozenset]] = []
    work: list[_Node] = [_Node({_INIT}, {f}, set(), set())]

    while work:
        node = work.pop()
        if not node.new:
            key = (frozenset(node.old), frozenset(node.next))
            idx = done.get(key)
            if idx is not None:
                nodes[idx][0].update(node.incoming)
                continue
            idx = len(nodes)
            done[key] = idx
            nodes.append((set(node.incoming), key[0], key[1]))
            work.append(_Node({idx}, set(node.next), set(), set()))
            continue
        g = node.new.pop()
        if isinstance(g, FalseConst):
            continue  # contradiction: drop node
        if isinstance(g, TrueConst):
            work.append(node)  # trivially discharged
            continue
        if isinstance(g, Atom) or (
                isinstance(g, Not) and isinstance(g.operand, Atom)):
            if _negation(g) in node.old:
                continue
            node.old = set(node.old) | {g}
            work.append(node)
        elif isinstance(g, And):
            node.old = set(node.old) | {g}
            node.new |= {g.left, g.right} - node.old
            work.append(node)
        elif isinstance(g, Next):
            node.old = set(node.old) | {g}
            node.next.add(g.operand)
            work.append(node)
        elif isinstance(g, (Or, Until, Release)):
            old = set(node.old) | {g}
            if isinstance(g, Or):
                first_new, first_next = {g.left}, set()
                second_new = {g.right}
            elif isinstance(g, Until):
                first_new, first_next = {g.left}, {g}
                second_new = {g.right}
            else:  # Release
                first_new, first_next = {g.right}, {g}
                second_new = {g.left, g.right}
            work.append(_Node(set(node.incoming), node.new | (first_new - old),
                              set(old), node.next | first_next))
            work.append(_Node(set(node.incoming), node.new | (second_new - old),
                              set(old), set(node.next)))
        else:
            raise ltl.LtlError(f"unexpected node formula {type(g).__name__}")

    untils = sorted(
        {g for _, old, _ in nodes for g in old if isinstance(g, Until)},
        key=ltl.print_formula)
    return nodes, untils


def _negation(lit: Ltl) -> Ltl:
    if isinstance(lit, Not):
        return lit.operand
    if isinstance(lit, TrueConst):
        return FALSE
    if isinstance(lit, FalseConst):
        return TRUE
    return Not(lit)


@functools.lru_cache(maxsize=2048)
def ltl_to_buchi(f: Ltl) -> BuchiAutomaton:
    """Büchi automaton accepting exactly the words that satisfy f."""
    normalized = nnf(f)
    nodes, untils = _tableau(normalized)
    k = len(untils)

    labels = []
    for _, old, _ in nodes:
        pos = frozenset(g.name for g in old if isinstance(g, Atom))
        neg = frozenset(g.operand.name for g in old
                        if isinstance(g, Not) and isinstance(g.operand, Atom))
        labels.append(Label(pos, neg))

    base_succ: list[list[int]] = [[] for _ in nodes]
    base_init: list[int] = []
    for idx, (incoming, _, _) in enumerate(nodes):
        for src in incoming:
            if src == _INIT:
                base_init.append(idx)
            else:
                base_succ[src].append(idx)

    # acceptance set per until formula: nodes where the until is not pending
    acc_sets = []
    for u in untils:
        acc_sets.append(frozenset(
            idx for idx, (_, old, _) in enumerate(nodes)
            if u not in old or u.right in old))

    def advance(counter: int, node: int) -> int:
        c = 0 if counter == k else counter
        while c < k and node in acc_sets[c]:
            c += 1
        return c

    if k == 0:
        # no liveness obligations: every state accepting
        return BuchiAutomaton(
            propositions=tuple(sorted(ltl.atoms(f))),
            initial=tuple(sorted(base_init)),
            accepting=frozenset(range(len(nodes))),
            labels=tuple(labels),
            successors=tuple(tuple(sorted(set(s))) for s in base_succ),
        )

    # counter product: state (node, c); c == k marks "all sets seen"
    index: dict[tuple[int, int], int] = {}
    out_labels: list[Label] = []
    out_nodes: list[tuple[int, int]] = []

    def intern(node: int, c: int) -> int:
        key = (node, c)
        got = index.get(key)
        if got is None:
            got = len(out_nodes)
            index[key] = got
            out_nodes.append(key)
            out_labels.append(labels[node])
        return got

    initial = tuple(intern(n, advance(0, n)) for n in sorted(base_init))
    succ_out: list[tuple[int, ...]] = []
    i = 0
    while i < len(out_nodes):
        node, c = out_nodes[i]
        succ_out.append(tuple(
            intern(t, advance(c, t)) for t in sorted(set(base_succ[node]))))
        i += 1

    return BuchiAutomaton(
        propositions=tuple(sorted(ltl.atoms(f))),
        initial=initial,
        accepting=frozenset(i for i, (_, c) in enumerate(out_nodes) if c == k),
        labels=tuple(out_labels),
        successors=tuple(succ_out),
    )


def accepts_lasso(automaton: BuchiAutomaton, w: LassoWord) -> bool:
    """Membership of an ultimately periodic word in the automaton language."""
    p, q = len(w.prefix), len(w.period)
    n = p + q
    letters = list(w.prefix + w.period)

    def nxt(t: int) -> int:
        return t + 1 if t + 1 < n else p

    # pairs (t, state): automaton is at state having read letters 0..t-1
    reachable: set[tuple[int, Optional[int]]] = set()
    stack = [(0, None)]
    edges: dict[tuple[int, Optional[int]], list[tuple[int, int]]] = {}
    while stack:
        cur = stack.pop()
        if cur in reachable:
            continue
        reachable.add(cur)
        t, state = cur
        targets = automaton.initial if state is None else automaton.successors[state]
        letter = letters[t]
        succ = [(nxt(t), s) for s in targets if automaton.labels[s].admits(letter)]
        edges[cur] = succ
        stack.extend(succ)

    ring = [c for c in reachable
            if c[0] >= p and c[1] is not None and c[1] in automaton.accepting]
    for target in ring:
        # cycle through `target` within the ring
        seen = set()
        stack = list(edges.get(target, ()))
        while stack:
            cur = stack.pop()
            if cur == target:
                return True
            if cur in seen or cur[0] < p:
                continue
            seen.add(cur)
            stack.extend(edges.get(cur, ()))
    return False
