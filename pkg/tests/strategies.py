"""Shared hypothesis strategies for random formulas and lasso words."""

from hypothesis import strategies as st

from ltl2aig import ltl

UNARY_OPS = [ltl.Not, ltl.Next, ltl.Eventually, ltl.Globally]
BINARY_OPS = [ltl.And, ltl.Or, ltl.Implies, ltl.Equiv, ltl.Until, ltl.Release]


def formulas(props=("a", "b", "c"), max_depth=10, ops=None):
    unary, binary = UNARY_OPS, BINARY_OPS
    if ops is not None:
        unary = [op for op in ops if op in UNARY_OPS]
        binary = [op for op in ops if op in BINARY_OPS]
    leaves = st.one_of(
        st.sampled_from([ltl.TRUE, ltl.FALSE]),
        st.sampled_from(props).map(ltl.Atom),
    )

    def extend(children):
        branches = []
        if unary:
            branches.append(
                st.tuples(st.sampled_from(unary), children).map(lambda t: t[0](t[1])))
        if binary:
            branches.append(
                st.tuples(st.sampled_from(binary), children, children)
                .map(lambda t: t[0](t[1], t[2])))
        return st.one_of(branches)

    return st.recursive(leaves, extend, max_leaves=max_depth)


def letters(props=("a", "b", "c")):
    return st.frozensets(st.sampled_from(props))


def lassos(props=("a", "b", "c"), max_prefix=4, max_period=4):
    return st.builds(
        ltl.LassoWord,
        st.lists(letters(props), max_size=max_prefix).map(tuple),
        st.lists(letters(props), min_size=1, max_size=max_period).map(tuple),
    )
