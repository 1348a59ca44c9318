import random

import pytest
from hypothesis import given, settings, strategies as st

from poolres.bpo import build_gt_refutation
from poolres.families import gen_ggt, gen_gt, make_guards
from poolres.formula import CnfFormula, ParseError, make_clause
from poolres.ggt_prover import naive_ggt_refutation, refute_ggt
from poolres.proof import (
    CHECKS,
    Dag,
    NotApplicableError,
    Proof,
    ProofNode,
    ResolventTautologyError,
    check_dag,
    check_greedy_up,
    check_regrti,
    check_regrtl,
    check_regular,
    check_soundness,
    dag_to_proof,
    dag_to_tree_input_lemmas,
    degenerate_resolve,
    emit_proof,
    fragment_to_proof,
    mutate,
    parse_proof,
    resolve,
    stats,
    w_resolve,
)

import oracles

C = make_clause


# ---------------------------------------------------------------------------
# rules


def test_resolve_examples():
    assert resolve(C([1, 2]), C([-1, 3]), 1) == C([2, 3])
    assert resolve(C([1]), C([-1]), 1) == frozenset()
    # a guarded pair collapses to its transitivity part
    t = C([-1, -2, 3])
    assert resolve(t | {4}, t | {-4}, 4) == t


def test_resolve_errors():
    with pytest.raises(NotApplicableError):
        resolve(C([2]), C([-1]), 1)
    with pytest.raises(ResolventTautologyError):
        resolve(C([1, 2]), C([-1, -2]), 1)


def test_degenerate_resolve():
    assert degenerate_resolve(C([1, 2]), C([-1, 3]), 1) == C([2, 3])
    assert degenerate_resolve(C([1, 2]), C([3]), 1) == C([3])
    assert degenerate_resolve(C([2]), C([-1, 3]), 1) == C([2])
    assert degenerate_resolve(C([2, 4]), C([3]), 1) == C([3])
    assert degenerate_resolve(C([2]), C([3]), 1) == C([2])


def test_w_resolve():
    assert w_resolve(C([1, 2]), C([-1, 3]), 1) == C([2, 3])
    assert w_resolve(C([2]), C([3]), 1) == C([2, 3])
    assert w_resolve(C([1]), C([3]), 1) == C([3])
    with pytest.raises(NotApplicableError):
        w_resolve(C([-1]), C([3]), 1)


lits = st.integers(-5, 5).filter(bool)


@settings(max_examples=150)
@given(st.sets(lits, max_size=4), st.sets(lits, max_size=4), st.integers(1, 5))
def test_w_resolution_is_semantically_sound(a, b, x):
    if any(-y in a for y in a) or any(-y in b for y in b) or -x in a or x in b:
        return
    try:
        c = w_resolve(frozenset(a), frozenset(b), x)
    except ResolventTautologyError:
        return
    # w-resolution is sound relative to the weakened premises a+x, b-x
    assert oracles.entails(5, [a | {x}, b | {-x}], c)


# ---------------------------------------------------------------------------
# small hand-made proofs

UNIT = CnfFormula(1, (C([1]), C([-1])))


def unit_refutation():
    return Proof(UNIT, [ProofNode("A", C([1]), 0), ProofNode("A", C([-1]), 1),
                        ProofNode("R", frozenset(), left=0, right=1, pivot=1)])


def test_unit_refutation_passes_everything_and_has_trivial_stats():
    p = unit_refutation()
    for name, chk in CHECKS.items():
        assert chk(p), name
    s = stats(p)
    assert (s.node_count, s.inference_count, s.height, s.max_clause_width) == (3, 1, 1, 1)


def test_corrupted_resolvent_fails_soundness_at_that_node():
    p = unit_refutation()
    p.nodes[2].clause = C([1])
    v = check_soundness(p)
    assert not v and v.node == 2


def test_lemma_pointing_right_fails():
    p = unit_refutation()
    p.nodes[0] = ProofNode("L", C([1]), ref=2)
    assert not check_regrtl(p)


def test_single_axiom_refutation_of_the_empty_clause():
    f = CnfFormula(0, (frozenset(),))
    p = Proof(f, [ProofNode("A", frozenset(), 0)])
    assert check_greedy_up(p) and check_regrti(p)


def _diamond():
    f = CnfFormula(3, (C([1, 2]), C([1, -2]), C([-1, 3]), C([-1, -3])))
    d = Dag()
    a, b, c, e = (d.axiom(cl) for cl in f.clauses)
    one = d.resolve(a, b, 2)
    three = d.resolve(c, one, -1)
    nthree = d.resolve(e, one, -1)
    d.resolve(three, nthree, 3)
    return f, d


def test_diamond_dag_becomes_tree_with_one_input_lemma():
    f, d = _diamond()
    assert check_dag(d)
    p = fragment_to_proof(f, dag_to_tree_input_lemmas(d))
    assert check_regrti(p) and p.is_refutation()
    assert sum(nd.kind == "L" for nd in p.nodes) == 1
    assert len(p) <= 2 * d.size() * d.height()


def test_tree_dag_converts_to_isomorphic_tree():
    d = Dag()
    a, b = d.axiom(C([1])), d.axiom(C([-1]))
    d.resolve(a, b, 1)
    p = dag_to_proof(UNIT, d, "regrti")
    assert [nd.kind for nd in p.nodes] == ["A", "A", "R"]


def _two_deep_lemma():
    """A lemma aimed at {5}, which resolves two inference-derived clauses."""
    f = CnfFormula(6, (C([1, 2, 5]), C([1, -2, 5]), C([-1, 3, 5]), C([-1, -3, 5]),
                       C([-5, 6]), C([-5, -6])))
    nodes = [
        ProofNode("A", C([1, 2, 5]), 0), ProofNode("A", C([1, -2, 5]), 1),
        ProofNode("R", C([1, 5]), left=0, right=1, pivot=2),          # 2
        ProofNode("A", C([-1, 3, 5]), 2), ProofNode("A", C([-1, -3, 5]), 3),
        ProofNode("R", C([-1, 5]), left=3, right=4, pivot=3),         # 5
        ProofNode("R", C([5]), left=2, right=5, pivot=1),             # 6
        ProofNode("A", C([-5, 6]), 4),                                # 7
        ProofNode("R", C([6]), left=6, right=7, pivot=5),             # 8
        ProofNode("L", C([5]), ref=6),                                # 9
        ProofNode("A", C([-5, -6]), 5),                               # 10
        ProofNode("R", C([-6]), left=9, right=10, pivot=5),           # 11
        ProofNode("R", frozenset(), left=8, right=11, pivot=6),       # 12
    ]
    return Proof(f, nodes)


def test_lemma_on_non_input_derivation_fails_regrti_only():
    p = _two_deep_lemma()
    assert check_regrtl(p) and p.is_refutation()
    v = check_regrti(p)
    assert not v and v.node == 9


def test_lemma_on_guarded_pair_resolvent_passes_regrti():
    assert check_regrti(_guarded_pair_lemma())


def _guarded_pair_lemma():
    n = 5
    p = refute_ggt(n, make_guards(n, 0), "regrti")
    def pair(t):
        nd = p.nodes[t]
        return nd.kind == "R" and p.nodes[nd.left].kind == p.nodes[nd.right].kind == "A"

    assert any(nd.kind == "L" and pair(nd.ref) for nd in p.nodes)
    return p


def test_greedy_flags_branching_past_a_conflict():
    f = CnfFormula(2, (C([1]), C([-1]), C([1, 2]), C([1, -2])))
    nodes = [
        ProofNode("A", C([1, 2]), 2), ProofNode("A", C([-1]), 1),
        ProofNode("R", C([2]), left=0, right=1, pivot=1),
        ProofNode("A", C([1, -2]), 3), ProofNode("A", C([-1]), 1),
        ProofNode("R", C([-2]), left=3, right=4, pivot=1),
        ProofNode("R", frozenset(), left=2, right=5, pivot=2),
    ]
    p = Proof(f, nodes)
    assert check_regrti(p)
    v = check_greedy_up(p)
    assert not v and v.node == 6


# ---------------------------------------------------------------------------
# text format


def test_emit_parse_round_trip():
    p = refute_ggt(5, make_guards(5, 1))
    text = emit_proof(p, "f.cnf")
    q = parse_proof(text, p.formula)
    assert emit_proof(q, "f.cnf") == text
    assert all(a.clause == b.clause for a, b in zip(p.nodes, q.nodes))


@pytest.mark.parametrize("text,line", [
    ("", 1),
    ("proof 3\n", 1),
    ("rproof 2 over f\n1 A 1\n3 A 2\n", 3),
    ("rproof 3 over f\n1 A 1\n2 A 2\n3 R 1 2 1 0\n", 4),
    ("rproof 3 over f\n1 A 1\n2 A 9\n3 R 1 2 1 : 0\n", 3),
    ("rproof 3 over f\n1 A 1\n2 A 2\n3 Q 1 2 1 : 0\n", 4),
    ("rproof 3 over f\n1 A 1\n2 A 2\n3 R 1 2 1 : 5 0\n", 4),
])
def test_parse_errors_have_line_numbers(text, line):
    with pytest.raises(ParseError) as exc:
        parse_proof(text, UNIT)
    assert exc.value.line == line


# ---------------------------------------------------------------------------
# corpus properties


def _corpus():
    out = [unit_refutation()]
    out.append(fragment_to_proof(gen_gt(5), dag_to_tree_input_lemmas(build_gt_refutation(5))))
    for n, s in ((4, 0), (5, 1)):
        g = make_guards(n, s)
        out.append(refute_ggt(n, g))
        out.append(refute_ggt(n, g, "regrti"))
        out.append(naive_ggt_refutation(n, g))
    return out


CORPUS = _corpus()


@pytest.mark.parametrize("idx", range(len(CORPUS)))
def test_checker_implication_chain(idx):
    p = CORPUS[idx]
    if check_regrti(p):
        assert check_regrtl(p)
    if check_regrtl(p):
        assert check_regular(p) and check_soundness(p)


@pytest.mark.parametrize("idx", range(len(CORPUS)))
def test_checkers_agree_with_reference_on_corpus(idx):
    p = CORPUS[idx]
    for name, ref in oracles.REFERENCE.items():
        assert bool(CHECKS[name](p)) == ref(p), name


@pytest.mark.parametrize("idx", range(len(CORPUS)))
def test_sound_corpus_proofs_are_semantically_valid(idx):
    p = CORPUS[idx]
    assert check_soundness(p)
    assert oracles.support_entailment(p)


@pytest.mark.parametrize("name", list(oracles.REFERENCE))
def test_mutations_detected(name):
    rng = random.Random(sorted(oracles.REFERENCE).index(name))
    base = refute_ggt(5, make_guards(5, 2), "regrti")
    assert CHECKS[name](base)
    violating = 0
    for _ in range(150):
        q, _kind = mutate(base, rng)
        ref = oracles.REFERENCE[name](q)
        got = bool(CHECKS[name](q))
        assert got == ref
        violating += not ref
    assert violating > 0


def test_p5_is_regular_and_within_dag_bound():
    d = build_gt_refutation(5)
    p = dag_to_proof(gen_gt(5), d, "regrti")
    assert check_regrti(p) and p.is_refutation()
    assert len(p) <= 2 * d.size() * d.height()
