import pytest
from hypothesis import given, strategies as st

from poolres.formula import (
    CnfFormula,
    FormulaError,
    ParseError,
    TautologyError,
    clause_order_key,
    decode_order_var,
    emit_dimacs,
    encode_order_var,
    make_clause,
    order_lit,
    pair_index,
    parse_dimacs,
    sorted_lits,
)


def test_make_clause_dedupes_and_rejects_tautologies():
    assert make_clause([3, 3, -1]) == frozenset({3, -1})
    with pytest.raises(TautologyError):
        make_clause([2, -2])
    with pytest.raises(FormulaError):
        make_clause([0])


@given(st.integers(2, 30).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n - 1),
                                                      st.integers(0, n - 1))))
def test_order_literals_are_antisymmetric(t):
    n, i, j = t
    if i == j:
        with pytest.raises(FormulaError):
            encode_order_var(i, j, n)
        return
    assert order_lit(i, j, n) == -order_lit(j, i, n)
    idx, sign = encode_order_var(i, j, n)
    assert sign == (1 if i < j else -1)
    assert decode_order_var(idx, n) == (min(i, j), max(i, j))


@pytest.mark.parametrize("n", [2, 3, 5, 9])
def test_pair_index_is_a_bijection_onto_the_variables(n):
    idxs = [pair_index(i, j, n) for i in range(n) for j in range(i + 1, n)]
    assert sorted(idxs) == list(range(1, n * (n - 1) // 2 + 1))


def test_sorted_lits_and_clause_order():
    assert sorted_lits([-2, 3, 1]) == [1, -2, 3]
    assert clause_order_key({5}) < clause_order_key({1, 2})
    assert clause_order_key({1}) < clause_order_key({-1})


def test_formula_rejects_out_of_range_literals():
    with pytest.raises(FormulaError):
        CnfFormula(2, ([1, 3],))


clauses_st = st.lists(
    st.sets(st.integers(1, 6), min_size=0, max_size=4).flatmap(
        lambda vs: st.tuples(*[st.sampled_from((v, -v)) for v in sorted(vs)])),
    max_size=8)


@given(clauses_st)
def test_dimacs_round_trip(cls):
    f = CnfFormula(6, tuple(make_clause(c) for c in cls), {1: "a", 6: "z z"})
    g = parse_dimacs(emit_dimacs(f))
    assert g.clauses == f.clauses and g.num_vars == 6
    assert dict(g.var_names) == {1: "a", 6: "z z"}
    assert emit_dimacs(g) == emit_dimacs(f)


@pytest.mark.parametrize("text,line", [
    ("1 0\n", 1),
    ("p cnf 2 1\n1 x 0\n", 2),
    ("p cnf 2 1\n\n3 0\n", 3),
    ("p cnf 2 1\n1 -1 0\n", 2),
    ("p cnf 2 2\n1 0\n", 2),
    ("p cnf 2 1\n1\n", 2),
    ("p cnf 2\n", 1),
])
def test_dimacs_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as exc:
        parse_dimacs(text)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_multiline_clause():
    f = parse_dimacs("c hi\np cnf 3 1\n1 -2\n 3 0\n")
    assert f.clauses == (frozenset({1, -2, 3}),)
