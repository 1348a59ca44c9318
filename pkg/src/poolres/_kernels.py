"""Hot loops: exhaustive model enumeration and counter-based unit propagation.

The numba versions are used by default.  Setting POOLRES_NO_NUMBA=1 selects
a pure numpy/Python fallback with identical results.
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("POOLRES_NO_NUMBA", "") in ("", "0")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

if not USE_NUMBA:

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def clause_masks(clauses, num_vars: int) -> tuple[np.ndarray, np.ndarray]:
    """Positive and negative literal bitmasks per clause (bit v-1 for variable v)."""
    pos = np.zeros(len(clauses), dtype=np.int64)
    neg = np.zeros(len(clauses), dtype=np.int64)
    for idx, c in enumerate(clauses):
        for x in c:
            if x > 0:
                pos[idx] |= 1 << (x - 1)
            else:
                neg[idx] |= 1 << (-x - 1)
    return pos, neg


@njit(cache=True)
def _enumerate_models_nb(pos, neg, low, num_vars, limit):
    # A falsified clause is falsified by every assignment that agrees on the
    # bits from its lowest variable upwards, so the scan can jump past them.
    full = np.int64((1 << num_vars) - 1)
    end = np.int64(1) << num_vars
    out = np.empty(limit, dtype=np.int64)
    count = 0
    a = np.int64(0)
    while a < end:
        na = full & ~a
        jump = -1
        for c in range(pos.shape[0]):
            if (a & pos[c]) == 0 and (na & neg[c]) == 0:
                jump = low[c]
                break
        if jump < 0:
            out[count] = a
            count += 1
            if count == limit:
                break
            a += 1
        else:
            a = ((a >> jump) + 1) << jump
    return out[:count]


def _enumerate_models_np(pos, neg, num_vars, limit):
    full = (1 << num_vars) - 1
    found = []
    chunk = 1 << 16
    total = 0
    for start in range(0, 1 << num_vars, chunk):
        a = np.arange(start, min(start + chunk, 1 << num_vars), dtype=np.int64)
        alive = np.ones(a.shape[0], dtype=bool)
        na = full & ~a
        for c in range(pos.shape[0]):
            alive &= ((a & pos[c]) != 0) | ((na & neg[c]) != 0)
        hits = a[alive]
        if hits.size:
            take = hits[: limit - total]
            found.append(take)
            total += take.size
            if total >= limit:
                break
    if not found:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(found)


def _lowest_bit(mask: int) -> int:
    return (mask & -mask).bit_length() - 1 if mask else 0


def enumerate_models(pos, neg, num_vars: int, limit: int) -> np.ndarray:
    """Up to `limit` satisfying assignments, as bitmasks in increasing order."""
    if USE_NUMBA:
        # clauses over high variables first: their violations skip the most
        low = np.array([_lowest_bit(int(p | n)) for p, n in zip(pos, neg)], dtype=np.int64)
        order = np.argsort(-low, kind="stable")
        return _enumerate_models_nb(pos[order], neg[order], low[order], num_vars, limit)
    return _enumerate_models_np(pos, neg, num_vars, limit)


@njit(cache=True)
def _satisfied_by_all_nb(models, pos, neg, full):
    res = np.ones(pos.shape[0], dtype=np.bool_)
    for c in range(pos.shape[0]):
        for m in range(models.shape[0]):
            a = models[m]
            if (a & pos[c]) == 0 and ((full & ~a) & neg[c]) == 0:
                res[c] = False
                break
    return res


def satisfied_by_all(models, pos, neg, num_vars: int) -> np.ndarray:
    """For each clause, whether every listed model satisfies it."""
    full = np.int64((1 << num_vars) - 1)
    if USE_NUMBA:
        return _satisfied_by_all_nb(models, pos, neg, full)
    if models.size == 0:
        return np.ones(pos.shape[0], dtype=bool)
    na = full & ~models
    sat = ((models[None, :] & pos[:, None]) != 0) | ((na[None, :] & neg[:, None]) != 0)
    return sat.all(axis=1)


@njit(cache=True)
def _unit_conflict(flat, offs, occ, occ_offs, active, falsified, num_vars):
    # value[v]: 0 unassigned, 1 true, -1 false
    value = np.zeros(num_vars + 1, dtype=np.int8)
    nclauses = offs.shape[0] - 1
    count = np.zeros(nclauses, dtype=np.int64)
    queue = np.empty(num_vars + 1, dtype=np.int64)
    head = 0
    tail = 0
    for t in range(falsified.shape[0]):
        lit = -falsified[t]
        v = abs(lit)
        s = 1 if lit > 0 else -1
        if value[v] == -s:
            return True
        if value[v] == 0:
            value[v] = s
            queue[tail] = lit
            tail += 1
    for c in range(nclauses):
        if not active[c]:
            continue
        size = offs[c + 1] - offs[c]
        if size == 0:
            return True
        if size == 1:
            lit = flat[offs[c]]
            v = abs(lit)
            s = 1 if lit > 0 else -1
            if value[v] == -s:
                return True
            if value[v] == 0:
                value[v] = s
                queue[tail] = lit
                tail += 1
    while head < tail:
        t = queue[head]
        head += 1
        # clauses containing the complement of t lose one literal
        key = -t + num_vars
        for p in range(occ_offs[key], occ_offs[key + 1]):
            c = occ[p]
            if not active[c]:
                continue
            count[c] += 1
            size = offs[c + 1] - offs[c]
            if count[c] == size:
                return True
            if count[c] == size - 1:
                unit = 0
                sat = False
                for q in range(offs[c], offs[c + 1]):
                    lit = flat[q]
                    v = abs(lit)
                    s = 1 if lit > 0 else -1
                    if value[v] == s:
                        sat = True
                        break
                    if value[v] == 0:
                        unit = lit
                if sat or unit == 0:
                    continue
                v = abs(unit)
                value[v] = 1 if unit > 0 else -1
                queue[tail] = unit
                tail += 1
    return False


class ClauseDb:
    """Flat clause storage with literal occurrence lists for unit propagation."""

    def __init__(self, clauses, num_vars: int):
        self.num_vars = num_vars
        self.size = len(clauses)
        lens = [len(c) for c in clauses]
        self.offs = np.zeros(len(clauses) + 1, dtype=np.int64)
        self.offs[1:] = np.cumsum(lens) if lens else []
        self.flat = np.fromiter((x for c in clauses for x in sorted(c)), dtype=np.int64,
                                count=int(self.offs[-1]))
        buckets: list[list[int]] = [[] for _ in range(2 * num_vars + 1)]
        for idx, c in enumerate(clauses):
            for x in c:
                buckets[x + num_vars].append(idx)
        self.occ_offs = np.zeros(2 * num_vars + 2, dtype=np.int64)
        self.occ_offs[1:] = np.cumsum([len(b) for b in buckets])
        self.occ = np.fromiter((c for b in buckets for c in b), dtype=np.int64,
                               count=int(self.occ_offs[-1]))

    def conflict(self, active: np.ndarray, falsified) -> bool:
        """Does unit propagation over the active clauses, with every literal of
        `falsified` set false, derive a conflict?"""
        fals = np.asarray(sorted(falsified), dtype=np.int64)
        return bool(_unit_conflict(self.flat, self.offs, self.occ, self.occ_offs,
                                   active, fals, self.num_vars))
