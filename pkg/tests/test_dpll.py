import pytest

from poolres.dpll import GgtSolver, Trace, TraceError, solve_ggt, trace_to_proof
from poolres.families import ParameterError, gen_ggt, make_guards, transitivity_clause, triangle_orbits
from poolres.formula import CnfFormula
from poolres.proof import check_greedy_up, check_regrtl, check_soundness

import oracles


def test_empty_assignment_on_ggt4_is_stable():
    s = GgtSolver(4, make_guards(4, 0))
    assert s.unit_propagate() is None
    assert s.trail == []


def test_guarded_pair_conflict():
    n = 4
    g = make_guards(n, 0)
    s = GgtSolver(n, g)
    tri = triangle_orbits(n)[0]
    t = transitivity_clause(*tri, n)
    s.level_start.append(len(s.trail))
    for x in sorted(t, key=abs):
        s._assign(-x, None)
    g_lit = g.guard_lit(*tri)
    s._assign(-g_lit, None)
    cid = s.unit_propagate()
    assert cid is not None


def test_propagation_bounded_by_variables():
    s = GgtSolver(6, make_guards(6, 1))
    s.level_start.append(0)
    s._assign(1, None)
    before = s.stats.propagations
    s.unit_propagate()
    assert s.stats.propagations - before <= s.nv


@pytest.mark.parametrize("seed", range(20))
def test_n4_unsat_learning_transitivity_only(seed):
    n = 4
    status, trace, st = solve_ggt(n, make_guards(n, seed))
    assert status == "UNSAT" and st.restarts == 0
    tcl = {transitivity_clause(*t, n) for t in triangle_orbits(n)}
    learned = [ev[1] for ev in trace.events if ev[0] == "L"]
    assert all(c in tcl for c in learned)


@pytest.mark.parametrize("n,seed", [(4, 0), (4, 3), (5, 1), (6, 2), (7, 0)])
def test_exported_proofs(n, seed):
    g = make_guards(n, seed)
    _, trace, _ = solve_ggt(n, g)
    f = gen_ggt(n, g)
    p = trace_to_proof(trace, f)
    assert p.is_refutation()
    assert check_soundness(p) and check_regrtl(p)
    v = check_greedy_up(p)
    assert v.ok
    assert len(p) <= 4 * len(trace.events) + 4
    if n <= 5:
        assert oracles.support_entailment(p)


def test_trace_determinism_and_text_round_trip():
    g = make_guards(7, 5)
    t1 = solve_ggt(7, g)[1]
    t2 = solve_ggt(7, g)[1]
    assert t1.digest() == t2.digest()
    back = Trace.from_text(t1.to_text())
    assert back.events == t1.events and back.complete


def test_trivial_trace_export():
    f = CnfFormula(1, (frozenset([1]), frozenset([-1])))
    t = Trace([("P", 1, 0), ("C", 1)], True)
    p = trace_to_proof(t, f)
    assert len(p) == 3 and p.is_refutation() and check_soundness(p)


def test_incomplete_trace_rejected():
    f = CnfFormula(1, (frozenset([1]), frozenset([-1])))
    with pytest.raises(TraceError):
        trace_to_proof(Trace([("P", 1, 0)], False), f)
    with pytest.raises(TraceError):
        Trace.from_text("Z 1\n")


def test_parameters_validated():
    with pytest.raises(ParameterError):
        GgtSolver(4, make_guards(4, 0), learning="bogus")


@pytest.mark.parametrize("learning", ["input", "none"])
def test_other_learning_modes_still_refute(learning):
    status, trace, st = solve_ggt(5, make_guards(5, 0), learning)
    assert status == "UNSAT"
    p = trace_to_proof(trace, gen_ggt(5, make_guards(5, 0)))
    assert check_soundness(p) and p.is_refutation()
