"""Generators for ordering and pebbling formula families, plus a brute-force oracle."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from poolres import _kernels
from poolres.formula import (
    Clause,
    CnfFormula,
    FormulaError,
    make_clause,
    order_lit,
    order_var_names,
)

ORACLE_MAX_VARS = 26


class ParameterError(FormulaError):
    pass


class GuardError(FormulaError):
    pass


# ---------------------------------------------------------------------------
# ordering principles


def alpha_clause(i: int, n: int, others: Iterable[int] | None = None) -> Clause:
    """Clause saying some j precedes i (over `others`, default all of [n])."""
    js = range(n) if others is None else others
    return make_clause(order_lit(j, i, n) for j in js if j != i)


def transitivity_clause(i: int, j: int, k: int, n: int) -> Clause:
    """Clause ruling out the cycle i < j < k < i."""
    return make_clause((-order_lit(i, j, n), -order_lit(j, k, n), -order_lit(k, i, n)))


def rotation_rep(i: int, j: int, k: int) -> tuple[int, int, int]:
    """Canonical rotation of a triple: the one starting at its smallest element."""
    m = min(i, j, k)
    if m == i:
        return (i, j, k)
    if m == j:
        return (j, k, i)
    return (k, i, j)


def triangle_orbits(n: int) -> list[tuple[int, int, int]]:
    """One representative per rotation orbit of distinct triples, in lex order."""
    out = []
    for a, b, c in itertools.combinations(range(n), 3):
        out.append((a, b, c))
        out.append((a, c, b))
    return out


@dataclass(frozen=True)
class GuardFunctions:
    """Guard choice r, s per rotation orbit; keys are canonical rotations."""

    n: int
    table: Mapping[tuple[int, int, int], tuple[int, int]]

    def __post_init__(self):
        for tri in triangle_orbits(self.n):
            if tri not in self.table:
                raise GuardError(f"no guard for triple {tri}")
            r, s = self.table[tri]
            if r == s or not (0 <= r < self.n and 0 <= s < self.n):
                raise GuardError(f"guard ({r},{s}) for triple {tri} is not a valid pair")
            if {r, s} <= set(tri):
                raise GuardError(f"guard ({r},{s}) for triple {tri} lies inside the triple")

    def r(self, i: int, j: int, k: int) -> int:
        return self.table[rotation_rep(i, j, k)][0]

    def s(self, i: int, j: int, k: int) -> int:
        return self.table[rotation_rep(i, j, k)][1]

    def guard_lit(self, i: int, j: int, k: int) -> int:
        r, s = self.table[rotation_rep(i, j, k)]
        return order_lit(r, s, self.n)

    def guard_var(self, i: int, j: int, k: int) -> int:
        return abs(self.guard_lit(i, j, k))


def make_guards(n: int, seed: int) -> GuardFunctions:
    if n < 4:
        raise ParameterError("guard functions need n >= 4")
    rng = random.Random(seed)
    table = {}
    for tri in triangle_orbits(n):
        inside = set(tri)
        choices = [(r, s) for r in range(n) for s in range(n)
                   if r != s and not (r in inside and s in inside)]
        table[tri] = rng.choice(choices)
    return GuardFunctions(n, table)


def gen_gt(n: int) -> CnfFormula:
    if n < 2:
        raise ParameterError("GT_n needs n >= 2")
    clauses = [alpha_clause(i, n) for i in range(n)]
    clauses += [transitivity_clause(*t, n) for t in triangle_orbits(n)]
    return CnfFormula(n * (n - 1) // 2, tuple(clauses), order_var_names(n))


def gen_ggt(n: int, guards: GuardFunctions) -> CnfFormula:
    if n < 4:
        raise ParameterError("GGT_n needs n >= 4")
    if guards.n != n:
        raise GuardError(f"guard functions are for n={guards.n}, not {n}")
    clauses = [alpha_clause(i, n) for i in range(n)]
    for t in triangle_orbits(n):
        tc = transitivity_clause(*t, n)
        g = guards.guard_lit(*t)
        clauses.append(tc | {g})
        clauses.append(tc | {-g})
    return CnfFormula(n * (n - 1) // 2, tuple(clauses), order_var_names(n))


# ---------------------------------------------------------------------------
# pointed dags


@dataclass(frozen=True)
class PointedDag:
    """DAG with a unique sink in which each vertex has in-degree 0 or 2.

    Vertex labels are preserved by the subgraph operations, so a subgraph of a
    graph on [N] still names its variables by the original labels.
    """

    vertices: frozenset
    edges: frozenset
    sink: int
    preds: Mapping[int, tuple] = field(init=False, repr=False, compare=False)
    succs: Mapping[int, tuple] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vs = frozenset(self.vertices)
        es = frozenset(self.edges)
        object.__setattr__(self, "vertices", vs)
        object.__setattr__(self, "edges", es)
        if self.sink not in vs:
            raise FormulaError(f"sink {self.sink} is not a vertex")
        preds: dict[int, list] = {v: [] for v in vs}
        succs: dict[int, list] = {v: [] for v in vs}
        for u, v in es:
            if u not in vs or v not in vs or u == v:
                raise FormulaError(f"bad edge ({u},{v})")
            preds[v].append(u)
            succs[u].append(v)
        for v in vs:
            if len(preds[v]) not in (0, 2):
                raise FormulaError(f"vertex {v} has in-degree {len(preds[v])}")
            if v != self.sink and not succs[v]:
                raise FormulaError(f"vertex {v} does not reach the sink")
        if succs[self.sink]:
            raise FormulaError("the sink has outgoing edges")
        object.__setattr__(self, "preds", {v: tuple(sorted(p)) for v, p in preds.items()})
        object.__setattr__(self, "succs", {v: tuple(sorted(p)) for v, p in succs.items()})
        # every vertex reaches the sink, which also rules out cycles
        order = self.topo_order()
        if len(order) != len(vs):
            raise FormulaError("graph has a cycle")
        reach = self.ancestors(self.sink) | {self.sink}
        if reach != vs:
            raise FormulaError(f"vertices {sorted(vs - reach)} do not reach the sink")

    @property
    def n(self) -> int:
        return len(self.vertices)

    def sources(self) -> list[int]:
        return sorted(v for v in self.vertices if not self.preds[v])

    def topo_order(self) -> list[int]:
        """Vertices with predecessors first (Kahn, smallest label first)."""
        import heapq

        indeg = {v: len(self.preds[v]) for v in self.vertices}
        heap = [v for v, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        out = []
        while heap:
            v = heapq.heappop(heap)
            out.append(v)
            for w in self.succs[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    heapq.heappush(heap, w)
        return out

    def ancestors(self, w: int) -> set:
        seen: set = set()
        stack = [w]
        while stack:
            for u in self.preds[stack.pop()]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return seen

    def is_ancestor(self, u: int, w: int) -> bool:
        """u is a proper ancestor of w (there is a nonempty path u -> w)."""
        return u != w and u in self.ancestors(w)


def pyramid(h: int) -> PointedDag:
    """Pyramid of height h; row r (0 = apex) holds vertices r(r+1)/2 .. r(r+1)/2 + r."""
    if h < 0:
        raise ParameterError("pyramid height must be >= 0")

    def vid(r, c):
        return r * (r + 1) // 2 + c

    vs = [vid(r, c) for r in range(h + 1) for c in range(r + 1)]
    es = []
    for r in range(h):
        for c in range(r + 1):
            es.append((vid(r + 1, c), vid(r, c)))
            es.append((vid(r + 1, c + 1), vid(r, c)))
    return PointedDag(frozenset(vs), frozenset(es), 0)


def parse_dag(text: str) -> PointedDag:
    """Edge-list format: 'n m sink' then m lines 'u v' (edge u -> v)."""
    lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or len(lines[0]) != 3:
        raise FormulaError("dag header must be 'n m sink'")
    n, m, sink = (int(x) for x in lines[0])
    if len(lines) - 1 != m:
        raise FormulaError(f"header declares {m} edges, found {len(lines) - 1}")
    edges = [(int(a), int(b)) for a, b in lines[1:]]
    return PointedDag(frozenset(range(n)), frozenset(edges), sink)


def emit_dag(g: PointedDag) -> str:
    lines = [f"{g.n} {len(g.edges)} {g.sink}"]
    lines += [f"{u} {v}" for u, v in sorted(g.edges)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# pebbling formulas and xor-ification

def num_graph_vertices(g: PointedDag) -> int:
    return max(g.vertices) + 1


def peb_var(u: int, m: int, k: int) -> int:
    """Index of x_{u,m}, m in 1..k."""
    return u * k + m


def peb_var_names(nv: int, k: int) -> dict[int, str]:
    return {peb_var(u, m, k): f"x_{{{u},{m}}}" for u in range(nv) for m in range(1, k + 1)}


def vlit(u: int, positive: bool = True) -> int:
    """Vertex-level literal x_u (or its negation); coincides with the k=1 encoding."""
    return (u + 1) if positive else -(u + 1)


def peb_clauses(g: PointedDag) -> list[Clause]:
    """Vertex-level pebbling clauses: sources, implications, negated sink."""
    out = [make_clause([vlit(s)]) for s in g.sources()]
    for w in sorted(g.vertices):
        p = g.preds[w]
        if p:
            out.append(make_clause([vlit(p[0], False), vlit(p[1], False), vlit(w)]))
    out.append(make_clause([vlit(g.sink, False)]))
    return out


def gen_peb(g: PointedDag) -> CnfFormula:
    nv = num_graph_vertices(g)
    return CnfFormula(nv, tuple(peb_clauses(g)), {u + 1: f"x_{u}" for u in range(nv)})


def _sign_vectors(k: int, parity: int) -> list[tuple[int, ...]]:
    return [sv for sv in itertools.product((1, -1), repeat=k) if sv.count(-1) % 2 == parity]


def xorify_pos(u: int, k: int) -> list[Clause]:
    """Clauses of x_u^{k+}: an even number of the x_{u,m} appear negated."""
    if k < 1:
        raise ParameterError("xor width must be >= 1")
    return [make_clause(s * peb_var(u, m + 1, k) for m, s in enumerate(sv))
            for sv in _sign_vectors(k, 0)]


def xorify_neg(u: int, k: int) -> list[Clause]:
    """Clauses of the translation of the negated vertex literal: odd parity."""
    if k < 1:
        raise ParameterError("xor width must be >= 1")
    return [make_clause(s * peb_var(u, m + 1, k) for m, s in enumerate(sv))
            for sv in _sign_vectors(k, 1)]


def xorify_lit(lit: int, k: int) -> list[Clause]:
    u = abs(lit) - 1
    return xorify_pos(u, k) if lit > 0 else xorify_neg(u, k)


def xorify_clause(c: Iterable[int], k: int) -> list[Clause]:
    """All unions of one block clause per vertex literal, literals in increasing vertex order."""
    lits = sorted(c, key=abs)
    if not lits:
        raise ParameterError("cannot xor-ify the empty clause")
    blocks = [xorify_lit(x, k) for x in lits]
    return [frozenset().union(*combo) for combo in itertools.product(*blocks)]


def parity_collapse(assign: Mapping[int, bool], nv: int, k: int) -> dict[int, bool]:
    """Vertex value = xor of its k variables (odd parity means true)."""
    return {u: sum(bool(assign[peb_var(u, m, k)]) for m in range(1, k + 1)) % 2 == 1
            for u in range(nv)}


def gen_peb_xor(g: PointedDag, k: int) -> CnfFormula:
    nv = num_graph_vertices(g)
    clauses = [d for c in peb_clauses(g) for d in xorify_clause(c, k)]
    return CnfFormula(nv * k, tuple(clauses), peb_var_names(nv, k))


GuardMap = Mapping  # clause of Peb^{k+}(G) -> guard variable index


def make_guard_map(g: PointedDag, k: int, seed: int, fresh_fallback: bool = False) -> dict:
    """Seeded guard variable per Peb^{k+}(G) clause, never a variable of the clause.

    When a clause mentions every variable (as the implication clause of a
    one-step pyramid does) there is no legal choice.  With `fresh_fallback`
    such clauses are guarded by one extra variable past the graph variables.
    """
    f = gen_peb_xor(g, k)
    rng = random.Random(seed)
    out = {}
    for c in f.clauses:
        used = {abs(x) for x in c}
        choices = [v for v in range(1, f.num_vars + 1) if v not in used]
        if not choices:
            if not fresh_fallback:
                raise GuardError(f"no variable available to guard clause {sorted(c)}")
            choices = [f.num_vars + 1]
        out[c] = rng.choice(choices)
    return out


def gen_gpeb(g: PointedDag, k: int, rho: Mapping) -> CnfFormula:
    base = gen_peb_xor(g, k)
    clauses = []
    top = base.num_vars
    for c in base.clauses:
        if c not in rho:
            raise GuardError(f"guard map undefined on clause {sorted(c)}")
        v = abs(rho[c])
        if v in {abs(x) for x in c}:
            raise GuardError(f"guard variable {v} occurs in clause {sorted(c)}")
        top = max(top, v)
        clauses.append(c | {v})
        clauses.append(c | {-v})
    names = dict(base.var_names)
    for v in range(base.num_vars + 1, top + 1):
        names[v] = f"y_{v - base.num_vars}"
    return CnfFormula(top, tuple(clauses), names)


# ---------------------------------------------------------------------------
# brute-force oracle


@dataclass(frozen=True)
class OracleResult:
    sat: bool
    witness: dict | None = None

    def __bool__(self):
        return self.sat


def _check_cap(f: CnfFormula):
    if f.num_vars > ORACLE_MAX_VARS:
        raise ParameterError(f"oracle refuses {f.num_vars} variables (cap {ORACLE_MAX_VARS})")


def brute_force_unsat(f: CnfFormula) -> OracleResult:
    """Exhaustive satisfiability check; returns a witness on SAT."""
    _check_cap(f)
    pos, neg = _kernels.clause_masks(f.clauses, f.num_vars)
    models = _kernels.enumerate_models(pos, neg, f.num_vars, 1)
    if models.size == 0:
        return OracleResult(False)
    a = int(models[0])
    return OracleResult(True, {v: bool(a >> (v - 1) & 1) for v in range(1, f.num_vars + 1)})


MODEL_LIMIT = 1 << 22


def all_models(f: CnfFormula) -> np.ndarray:
    _check_cap(f)
    pos, neg = _kernels.clause_masks(f.clauses, f.num_vars)
    limit = min(MODEL_LIMIT, 1 << f.num_vars)
    models = _kernels.enumerate_models(pos, neg, f.num_vars, limit)
    if models.size == MODEL_LIMIT:
        raise ParameterError("formula has too many models to enumerate")
    return models


def entailed(f: CnfFormula, clauses: Iterable[Clause]) -> list[bool]:
    """Whether each clause holds in every model of f."""
    cls = list(clauses)
    models = all_models(f)
    pos, neg = _kernels.clause_masks(cls, f.num_vars)
    return [bool(x) for x in _kernels.satisfied_by_all(models, pos, neg, f.num_vars)]


def satisfies(assign: Mapping[int, bool], clause: Iterable[int]) -> bool:
    return any(assign[abs(x)] == (x > 0) for x in clause)
