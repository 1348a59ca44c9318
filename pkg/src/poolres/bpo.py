"""Partial specifications, bipartite partial orders, and the regular
derivations P_n (refuting GT_n) and P_pi (deriving the clause of a bipartite order)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from poolres.families import alpha_clause, rotation_rep, transitivity_clause
from poolres.formula import Clause, CnfFormula, FormulaError, order_lit, order_var_names, pair_index
from poolres.proof import Dag

Pair = tuple[int, int]


class InconsistentSpecError(FormulaError):
    """The pairs contain a cycle, so no partial order extends them."""


def transitive_closure(pairs: Iterable[Pair], n: int) -> set[Pair]:
    succ: dict[int, set] = {v: set() for v in range(n)}
    for a, b in pairs:
        succ[a].add(b)
    closure: set[Pair] = set()
    for a in range(n):
        seen: set = set()
        stack = list(succ[a])
        while stack:
            b = stack.pop()
            if b in seen:
                continue
            seen.add(b)
            stack.extend(succ[b])
        if a in seen:
            raise InconsistentSpecError(f"vertex {a} lies on a cycle")
        closure.update((a, b) for b in seen)
    return closure


@dataclass(frozen=True)
class BipartitePartialOrder:
    n: int
    pairs: frozenset

    def __post_init__(self):
        object.__setattr__(self, "pairs", frozenset(self.pairs))
        dom = {a for a, _ in self.pairs}
        rng = {b for _, b in self.pairs}
        if dom & rng:
            raise FormulaError(f"domain and range intersect at {sorted(dom & rng)}")
        for a, b in self.pairs:
            if not (0 <= a < self.n and 0 <= b < self.n) or a == b:
                raise FormulaError(f"bad pair ({a},{b})")

    @property
    def minimal(self) -> frozenset:
        return frozenset(range(self.n)) - {b for _, b in self.pairs}

    def precedes(self, a: int, b: int) -> bool:
        return (a, b) in self.pairs

    def above(self, a: int) -> set:
        """The elements b with a < b."""
        return {y for x, y in self.pairs if x == a}

    def below(self, b: int) -> set:
        return {x for x, y in self.pairs if y == b}

    def sorted_pairs(self) -> list[Pair]:
        return sorted(self.pairs)


def associated_bpo(tau: Iterable[Pair], n: int) -> BipartitePartialOrder:
    """Keep only the closure pairs that start at a tau-minimal element."""
    tau = set(tau)
    closure = transitive_closure(tau, n)
    nonmin = {b for _, b in tau}
    return BipartitePartialOrder(n, frozenset((a, b) for a, b in closure if a not in nonmin))


def neg_pi_clause(pi: BipartitePartialOrder) -> Clause:
    n = pi.n
    return frozenset(-order_lit(a, b, n) for a, b in pi.pairs)


def tau_from_literals(lits: Iterable[int], n: int) -> set[Pair]:
    """Pairs (i, j) whose literal "not x_{i,j}" is among `lits`.

    Every ordering literal has this form for exactly one ordered pair.
    """
    out = set()
    for x in lits:
        i, j = decode_pair(abs(x), n)
        # x_{i,j} positive literal: its negation names the pair (j, i)
        out.add((j, i) if x > 0 else (i, j))
    return out


_DECODE_CACHE: dict[int, dict[int, Pair]] = {}


def decode_pair(index: int, n: int) -> Pair:
    table = _DECODE_CACHE.get(n)
    if table is None:
        table = {pair_index(i, j, n): (i, j) for i in range(n) for j in range(i + 1, n)}
        _DECODE_CACHE[n] = table
    return table[index]


def gamma_type(pi: BipartitePartialOrder, i: int, j: int, k: int) -> bool:
    m = pi.minimal
    return i in m and j in m and (i, k) not in pi.pairs and (j, k) in pi.pairs


def gt_pi_clauses(pi: BipartitePartialOrder, n: int) -> CnfFormula:
    m = sorted(pi.minimal)
    ms = set(m)
    clauses = [alpha_clause(i, n) for i in m]
    seen = set()
    for i in m:
        for j in m:
            for k in range(n):
                if len({i, j, k}) < 3:
                    continue
                beta = k in ms
                gamma = (not beta) and (i, k) not in pi.pairs and (j, k) in pi.pairs
                if beta or gamma:
                    rep = rotation_rep(i, j, k)
                    if rep not in seen:
                        seen.add(rep)
                        clauses.append(transitivity_clause(i, j, k, n))
    return CnfFormula(n * (n - 1) // 2, tuple(clauses), order_var_names(n))


def _t_axiom(dag: Dag, i: int, j: int, k: int, n: int) -> int:
    return dag.axiom(transitivity_clause(i, j, k, n), payload=("T", rotation_rep(i, j, k)))


def _eliminate(dag: Dag, verts: list[int], alpha: dict[int, int], n: int) -> int:
    """Refute the ordering principle on `verts` from the given alpha-like nodes.

    alpha[v] must contain x_{u,v} for every u in verts other than v (plus any
    side literals).  The last vertex is eliminated at each level: its alpha
    clause is resolved against T_{j,last,i} on x_{j,last} for all j != i, and
    the result against alpha[i] on x_{i,last}.  Each level only pivots on
    variables that mention the eliminated vertex, so the dag is regular.
    """
    verts = list(verts)
    alpha = dict(alpha)
    while len(verts) > 2:
        last = verts[-1]
        rest = verts[:-1]
        new = {}
        for i in rest:
            cur = alpha[last]
            for j in rest:
                if j == i:
                    continue
                t = _t_axiom(dag, j, last, i, n)
                cur = dag.resolve(cur, t, order_lit(j, last, n))
            new[i] = dag.resolve(cur, alpha[i], order_lit(i, last, n))
        verts = rest
        alpha = new
    if len(verts) == 2:
        a, b = verts
        return dag.resolve(alpha[a], alpha[b], order_lit(b, a, n))
    return alpha[verts[0]]


def build_gt_refutation(n: int) -> Dag:
    """The regular refutation P_n of GT_n as a dag."""
    if n < 2:
        raise FormulaError("P_n needs n >= 2")
    dag = Dag()
    alpha = {i: dag.axiom(alpha_clause(i, n), payload=("alpha", i)) for i in range(n)}
    _eliminate(dag, list(range(n)), alpha, n)
    return dag


def choose_j(pi: BipartitePartialOrder, k: int, rule: str = "min") -> int:
    cands = pi.below(k)
    return min(cands) if rule == "min" else max(cands)


def build_p_pi(pi: BipartitePartialOrder, n: int, j_rule: str = "min") -> Dag:
    """The regular derivation P_pi of the clause of pi from GT_{pi,n}."""
    m = sorted(pi.minimal)
    upper = [k for k in range(n) if k not in pi.minimal]
    jk = {k: choose_j(pi, k, j_rule) for k in upper}
    dag = Dag()
    alpha = {}
    for i in m:
        cur = dag.axiom(alpha_clause(i, n), payload=("alpha", i))
        for k in upper:
            if (i, k) in pi.pairs:
                continue
            t = _t_axiom(dag, i, jk[k], k, n)
            cur = dag.resolve(cur, t, order_lit(k, i, n))
        alpha[i] = cur
    _eliminate(dag, m, alpha, n)
    return dag


def lemma2_allowed_vars(pi: BipartitePartialOrder, n: int) -> set[int]:
    """Variables P_pi may resolve on: pairs inside M_pi, and x_{i,k} with
    i in M_pi, k outside, and i not below k."""
    m = pi.minimal
    out = set()
    for i in m:
        for j in range(n):
            if j == i:
                continue
            if j in m or (i, j) not in pi.pairs:
                out.add(abs(order_lit(i, j, n)))
    return out
