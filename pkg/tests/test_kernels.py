import os
import subprocess
import sys

import numpy as np
from hypothesis import given, settings, strategies as st

from poolres import _kernels

clauses_st = st.lists(st.sets(st.integers(-8, 8).filter(bool), min_size=1, max_size=3), max_size=12)


def _clean(cls):
    return [frozenset(c) for c in cls if not any(-x in c for x in c)]


@settings(max_examples=60, deadline=None)
@given(clauses_st)
def test_model_enumeration_backends_agree(cls):
    cls = _clean(cls)
    pos, neg = _kernels.clause_masks(cls, 8)
    a = _kernels._enumerate_models_np(pos, neg, 8, 1 << 8)
    b = _kernels.enumerate_models(pos, neg, 8, 1 << 8)
    assert np.array_equal(a, b)
    # direct definition
    want = [m for m in range(256)
            if all(any(((m >> (abs(x) - 1)) & 1) == (x > 0) for x in c) for c in cls)]
    assert a.tolist() == want


SCRIPT = r"""
import json
from poolres import _kernels
from poolres.families import make_guards
from poolres.ggt_prover import refute_ggt
from poolres.dpll import solve_ggt, trace_to_proof
from poolres.families import gen_ggt
from poolres.proof import check_greedy_up
g = make_guards(6, 2)
t = solve_ggt(6, g)[1]
v = check_greedy_up(trace_to_proof(t, gen_ggt(6, g)))
w = check_greedy_up(refute_ggt(6, g, "regrti"))
print(json.dumps([_kernels.USE_NUMBA, v.ok, v.notes, w.ok, w.node]))
"""


def test_fallback_matches_numba_on_greedy_checker():
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, POOLRES_NO_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True,
                             text=True, check=True)
        outs.append(res.stdout.strip().splitlines()[-1])
    assert outs[0].startswith("[true") and outs[1].startswith("[false")
    assert outs[0][len("[true"):] == outs[1][len("[false"):]
