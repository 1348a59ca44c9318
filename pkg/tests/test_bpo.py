import random

import pytest
from hypothesis import given, settings, strategies as st

from poolres.bpo import (
    BipartitePartialOrder,
    InconsistentSpecError,
    associated_bpo,
    build_gt_refutation,
    build_p_pi,
    gt_pi_clauses,
    lemma2_allowed_vars,
    neg_pi_clause,
    tau_from_literals,
    transitive_closure,
)
from poolres.families import brute_force_unsat, gen_gt
from poolres.formula import FormulaError, order_lit
from poolres.proof import check_dag, dag_to_proof, check_regular

import oracles

FIG1_TAU = {(3, 6), (6, 10), (7, 10), (4, 7), (4, 8), (5, 8), (5, 9), (9, 11)}


def test_closure_examples():
    assert transitive_closure(set(), 3) == set()
    assert transitive_closure({(0, 1), (1, 2)}, 3) == {(0, 1), (1, 2), (0, 2)}
    assert (4, 10) in transitive_closure(FIG1_TAU, 12)
    with pytest.raises(InconsistentSpecError):
        transitive_closure({(0, 1), (1, 0)}, 2)


def test_figure_one_associated_order():
    pi = associated_bpo(FIG1_TAU, 12)
    assert pi.minimal & set(range(1, 12)) == {1, 2, 3, 4, 5}
    assert pi.pairs == {(3, 6), (3, 10), (4, 7), (4, 10), (4, 8), (5, 8), (5, 9), (5, 11)}


def test_empty_spec():
    pi = associated_bpo(set(), 5)
    assert pi.pairs == frozenset() and pi.minimal == frozenset(range(5))
    assert neg_pi_clause(pi) == frozenset()
    assert set(gt_pi_clauses(pi, 5).clauses) == set(gen_gt(5).clauses)


def test_neg_pi_clause_example():
    pi = BipartitePartialOrder(3, {(0, 2)})
    assert neg_pi_clause(pi) == {-order_lit(0, 2, 3)}


def test_domain_range_must_be_disjoint():
    with pytest.raises(FormulaError):
        BipartitePartialOrder(3, {(0, 1), (1, 2)})


@st.composite
def bipartite(draw, max_n=12):
    n = draw(st.integers(2, max_n))
    side = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    low = [i for i in range(n) if side[i]]
    high = [i for i in range(n) if not side[i]]
    pairs = set()
    for k in high:
        below = draw(st.sets(st.sampled_from(low), max_size=3)) if low else set()
        pairs |= {(j, k) for j in below}
    return BipartitePartialOrder(n, frozenset(pairs))


@settings(max_examples=60, deadline=None)
@given(bipartite())
def test_bpo_invariants_and_idempotence(pi):
    n = pi.n
    dom = {a for a, _ in pi.pairs}
    rng = {b for _, b in pi.pairs}
    assert not dom & rng
    by_definition = {i for i in range(n) if not any(b == i for _, b in pi.pairs)}
    assert pi.minimal == by_definition
    assert associated_bpo(pi.pairs, n) == pi
    assert len(neg_pi_clause(pi)) == len(pi.pairs)
    assert associated_bpo(tau_from_literals(neg_pi_clause(pi), n), n) == pi


@settings(max_examples=60, deadline=None)
@given(bipartite(), st.sampled_from(["min", "max"]))
def test_p_pi_conclusion_and_pivots(pi, rule):
    n = pi.n
    d = build_p_pi(pi, n, rule)
    assert d.conclusion == neg_pi_clause(pi)
    assert d.pivot_vars() <= lemma2_allowed_vars(pi, n)
    assert check_dag(d, derivation=True)
    touched = {abs(order_lit(a, b, n)) for a, b in pi.pairs}
    assert not d.pivot_vars() & touched
    f = gt_pi_clauses(pi, n)
    assert set(d.axioms_used()) <= set(f.clauses)


def test_p_pi_of_empty_order_is_p_n():
    pi = BipartitePartialOrder(5, frozenset())
    a, b = build_p_pi(pi, 5), build_gt_refutation(5)
    assert [(x.kind, x.clause, x.pivot) for x in a.nodes] == [(x.kind, x.clause, x.pivot) for x in b.nodes]


def test_p_pi_entailment_small():
    pi = BipartitePartialOrder(4, {(0, 2), (1, 2)})
    f = gt_pi_clauses(pi, 4)
    d = build_p_pi(pi, 4)
    table = oracles.assignments(f.num_vars)
    for nd in d.nodes:
        assert oracles.entails(f.num_vars, f.clauses, nd.clause, table)


def test_gt_pi_satisfiable_and_restriction_unsat():
    rng = random.Random(3)
    seen = 0
    for _ in range(40):
        n = rng.randint(3, 5)
        low = rng.sample(range(n), rng.randint(1, n - 1))
        high = [i for i in range(n) if i not in low]
        pairs = {(rng.choice(low), k) for k in high if rng.random() < 0.8}
        if not pairs:
            continue
        pi = BipartitePartialOrder(n, frozenset(pairs))
        f = gt_pi_clauses(pi, n)
        assert brute_force_unsat(f).sat
        restricted = list(f.clauses) + [frozenset([-x]) for x in neg_pi_clause(pi)]
        assert oracles.is_unsat(f.num_vars, restricted)
        seen += 1
    assert seen > 10


def test_figure_two_configuration():
    # i, j minimal, j below k, i not below k: the (gamma) axiom is present
    n = 4
    pi = BipartitePartialOrder(n, {(1, 2)})
    cls = set(gt_pi_clauses(pi, n).clauses)
    from poolres.families import transitivity_clause

    assert transitivity_clause(0, 1, 2, n) in cls
    assert transitivity_clause(0, 1, 3, n) in cls


def test_p2_and_p3():
    d = build_gt_refutation(2)
    assert len(d) == 3 and d.conclusion == frozenset()
    p3 = dag_to_proof(gen_gt(3), build_gt_refutation(3))
    assert check_regular(p3) and p3.is_refutation() and len(p3) < 40
    assert oracles.support_entailment(p3)


def test_p_n_growth_is_cubic():
    # doubling ratios decrease towards 8
    sizes = {n: build_gt_refutation(n).size() for n in (10, 20, 40, 80)}
    ratios = [sizes[2 * n] / sizes[n] for n in (10, 20, 40)]
    assert ratios == sorted(ratios, reverse=True)
    assert 8 < ratios[-1] < 8.3
