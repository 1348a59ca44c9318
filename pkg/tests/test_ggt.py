from math import comb

import pytest

from poolres.bpo import InconsistentSpecError, transitive_closure
from poolres.families import ParameterError, make_guards, transitivity_clause, triangle_orbits
from poolres.formula import order_lit
from poolres.ggt_prover import (
    CASE_BLOCKED,
    CASE_DERIVE,
    CASE_GUARDED,
    CASE_LEARNED,
    LRState,
    naive_ggt_refutation,
    naive_is_irregular_expected,
    refute_ggt,
    refute_ggt_regrti,
    run_ggt,
)
from poolres.lrtree import ConstructionError, TNode, inference, propagate_literal
from poolres.proof import (
    check_regrti,
    check_regrtl,
    check_regular,
    check_soundness,
    emit_proof,
    stats,
)

import oracles


@pytest.mark.parametrize("seed", range(20))
def test_n4_all_seeds_pass_and_are_entailed(seed):
    p = refute_ggt(4, make_guards(4, seed))
    assert p.is_refutation()
    assert check_soundness(p) and check_regular(p) and check_regrtl(p)
    assert oracles.support_entailment(p)
    assert oracles.ref_regrtl(p)


@pytest.mark.parametrize("n", [5, 6, 7, 8])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_pool_and_regrti_outputs(n, seed):
    g = make_guards(n, seed)
    pool = run_ggt(n, g, "pool")
    rti = run_ggt(n, g, "regrti")
    assert check_regrtl(pool.proof) and pool.proof.is_refutation()
    assert check_regrti(rti.proof) and rti.proof.is_refutation()
    assert pool.log.case_iv <= 2 * comb(n, 3)
    assert pool.log.unfinished_added <= 6 * comb(n, 3)
    assert len(rti.proof) >= len(pool.proof)


def test_regrti_lemmas_target_input_derivations():
    p = refute_ggt_regrti(6, make_guards(6, 4))
    assert oracles.ref_regrti(p)
    assert stats(p).lemma_count == stats(p).input_lemma_count > 0


def test_runs_are_deterministic():
    a = emit_proof(refute_ggt(7, make_guards(7, 9)))
    b = emit_proof(refute_ggt(7, make_guards(7, 9)))
    assert a == b


def test_validated_run_matches_fast_run():
    g = make_guards(6, 3)
    assert emit_proof(refute_ggt(6, g, check_every=1)) == emit_proof(refute_ggt(6, g))


def test_small_n_rejected():
    with pytest.raises(ParameterError):
        make_guards(3, 0)
    with pytest.raises(ParameterError):
        LRState(3, make_guards(4, 0))


def test_root_has_empty_branch_literals():
    st = LRState(5, make_guards(5, 0))
    assert st.c_plus(st.root) == frozenset() and st.tau_of(st.root) == set()


def test_branch_literals_below_one_resolution():
    n = 4
    st = LRState(n, make_guards(n, 0))
    x = order_lit(0, 1, n)
    left, right = TNode("U", frozenset([x])), TNode("U", frozenset([-x]))
    inference(left, right, x)
    # the branch holding "not x_{0,1}" records that 0 precedes 1
    assert st.tau_of(right) == {(0, 1)}
    assert st.tau_of(left) == {(1, 0)}


def test_tau_at_a_transitivity_leaf_has_a_three_cycle():
    n = 4
    st = LRState(n, make_guards(n, 0))
    leaf = TNode("A", transitivity_clause(0, 1, 2, n))
    tau = st.tau_of(leaf)
    assert len(tau) == 3
    with pytest.raises(InconsistentSpecError):
        transitive_closure(tau, n)


def test_classification_cases():
    n = 5
    g = make_guards(n, 0)
    st = LRState(n, g)
    tri = triangle_orbits(n)[0]
    t = transitivity_clause(*tri, n)
    lit = g.guard_lit(*tri)
    assert st.classify_transitivity(frozenset(), t, tri)[0] == CASE_DERIVE
    assert st.classify_transitivity(frozenset([-lit]), t, tri) == (CASE_GUARDED, -lit)
    assert st.classify_transitivity(frozenset(), t, tri, 1 << abs(lit)) == (CASE_BLOCKED, lit)
    st._learn(t, TNode("A", t))
    assert st.classify_transitivity(frozenset(), t, tri)[0] == CASE_LEARNED


def test_first_expansion_sees_no_learned_clause():
    st = LRState(5, make_guards(5, 1))
    cls = st.classify_p_pi(st.root)
    assert all(tag != CASE_LEARNED for tag, _ in cls.tags.values())


def test_blocked_axioms_exist_at_n5():
    found = 0
    for seed in range(10):
        st = LRState(5, make_guards(5, seed))
        cls = st.classify_p_pi(st.root)
        found += cls.blocked is not None
    assert found > 0


def test_blocked_patch_leaves_state_unchanged():
    st = LRState(5, make_guards(5, 0))
    root = st.root
    res = st.patch_p_pi(root)
    assert res is not None and st.root is root and not st.learned


def test_every_step_keeps_condition_e():
    st = LRState(6, make_guards(6, 2), check_every=1)
    while st.step():
        st.validate()
    assert st.log.case_iv <= 2 * comb(6, 3)
    for step in st.log.steps:
        if step["kind"] in ("beta", "gamma"):
            assert step["new_unfinished"] <= 3


def test_propagate_literal_threads_to_introducing_inference():
    a = TNode("A", frozenset([1, 2]))
    b = TNode("A", frozenset([-2]))
    mid = inference(a, b, 2)                          # {1}
    x = inference(mid, TNode("A", frozenset([-1, 3])), 1)   # {3}
    root = inference(x, TNode("A", frozenset([-3])), 3)    # {}
    # 3 sits on the branch of a through x; adding it at a stops at x
    a.clause = a.clause | {3}
    propagate_literal(a.parent, 3)
    assert mid.clause == {1, 3} and x.clause == {3} and root.clause == frozenset()
    propagate_literal(mid, 1)
    assert mid.clause == {1, 3}
    with pytest.raises(ConstructionError):
        propagate_literal(mid, -1)
    with pytest.raises(ConstructionError):
        propagate_literal(b.parent, 4)


@pytest.mark.parametrize("seed", range(3))
def test_naive_refutation_is_sound_but_irregular(seed):
    g = make_guards(5, seed)
    p = naive_ggt_refutation(5, g)
    assert check_soundness(p) and p.is_refutation()
    assert naive_is_irregular_expected(5, g)
    assert not check_regular(p)
    assert not oracles.ref_regular(p)
