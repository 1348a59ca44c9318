"""Resolution proofs: tree-shaped refutations with lemma leaves, stored in postorder.

A proof is an array of nodes.  Inference nodes have their right child at
id - 1 and their left child immediately before the right subtree, so a node's
subtree occupies a contiguous id range ending at the node itself.  Lemma leaves
point back to an earlier node whose clause they reuse.

Dag-shaped derivations (used while building proofs) live in `Dag` and are
unfolded into trees by `dag_to_tree_pool` or `dag_to_tree_input_lemmas`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from poolres import _kernels
from poolres.formula import (
    Clause,
    CnfFormula,
    FormulaError,
    ParseError,
    clause_order_key,
    make_clause,
    sorted_lits,
)


class ProofError(Exception):
    """Base class for proof construction and parsing problems."""


class NotApplicableError(ProofError):
    """A rule was applied to premises lacking the required pivot occurrences."""


class ResolventTautologyError(ProofError):
    """A resolvent would contain complementary literals (a construction bug)."""


RULES = ("R", "D", "W")


def resolve(a: Clause, b: Clause, x: int) -> Clause:
    """Resolve a (containing x) with b (containing -x) on x."""
    if x not in a or -x not in b:
        raise NotApplicableError(f"pivot {x} not present with opposite signs")
    if -x in a or x in b:
        raise NotApplicableError(f"premise contains both polarities of {abs(x)}")
    out = (a - {x}) | (b - {-x})
    for lit in out:
        if -lit in out:
            raise ResolventTautologyError(f"resolvent on {x} contains {lit} and {-lit}")
    return out


def degenerate_resolve(a: Clause, b: Clause, x: int) -> Clause:
    """Total resolution rule: falls back to a premise when a pivot occurrence is missing."""
    has_a, has_b = x in a, -x in b
    if has_a and has_b:
        return resolve(a, b, x)
    if has_a:
        return b
    if has_b:
        return a
    return min(a, b, key=clause_order_key)


def w_resolve(a: Clause, b: Clause, x: int) -> Clause:
    """Resolution allowing phantom pivot occurrences."""
    if -x in a or x in b:
        raise NotApplicableError(f"pivot {x} occurs with the wrong sign")
    out = (a - {x}) | (b - {-x})
    for lit in out:
        if -lit in out:
            raise ResolventTautologyError(f"resolvent on {x} contains {lit} and {-lit}")
    return out


def apply_rule(rule: str, left: Clause, right: Clause, pivot: int) -> Clause:
    """Apply a rule; for plain resolution the pivot may sit on either side."""
    if rule == "R":
        if pivot in left:
            return resolve(left, right, pivot)
        return resolve(left, right, -pivot)
    if rule == "D":
        return degenerate_resolve(left, right, pivot)
    if rule == "W":
        return w_resolve(left, right, pivot)
    raise ProofError(f"unknown rule {rule!r}")


# ---------------------------------------------------------------------------
# tree proofs


class ProofNode:
    """kind: 'A' axiom (ref = clause index), 'L' lemma (ref = target id),
    or an inference rule 'R'/'D'/'W' with children and pivot literal."""

    __slots__ = ("kind", "clause", "ref", "left", "right", "pivot")

    def __init__(self, kind, clause, ref=-1, left=-1, right=-1, pivot=0):
        self.kind = kind
        self.clause = clause
        self.ref = ref
        self.left = left
        self.right = right
        self.pivot = pivot

    @property
    def is_leaf(self) -> bool:
        return self.kind in ("A", "L")

    def __repr__(self):
        if self.kind == "A":
            return f"Axiom({self.ref}, {sorted_lits(self.clause)})"
        if self.kind == "L":
            return f"Lemma({self.ref}, {sorted_lits(self.clause)})"
        return (f"{self.kind}({self.left}, {self.right}, pivot={self.pivot}, "
                f"{sorted_lits(self.clause)})")


class Proof:
    """Postorder node array over a formula; the root is the last node."""

    def __init__(self, formula: CnfFormula, nodes: Sequence[ProofNode]):
        self.formula = formula
        self.nodes = list(nodes)
        if not self.nodes:
            raise ProofError("a proof needs at least one node")

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> int:
        return len(self.nodes) - 1

    @property
    def conclusion(self) -> Clause:
        return self.nodes[-1].clause

    def is_refutation(self) -> bool:
        return not self.nodes[-1].clause

    def preorder(self) -> Iterator[int]:
        stack = [self.root]
        nodes = self.nodes
        while stack:
            v = stack.pop()
            yield v
            nd = nodes[v]
            if not nd.is_leaf:
                stack.append(nd.right)
                stack.append(nd.left)


@dataclass
class Verdict:
    ok: bool
    check: str
    node: int | None = None
    message: str = ""
    notes: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok

    def to_json(self) -> dict:
        d = {"check": self.check, "ok": self.ok}
        if self.node is not None:
            d["node"] = self.node + 1
        if self.message:
            d["message"] = self.message
        if self.notes:
            d["flagged"] = [n + 1 for n in self.notes]
        return d


def _fail(check, node, msg) -> Verdict:
    return Verdict(False, check, node, msg)


def check_structure(p: Proof) -> Verdict:
    """Postorder layout: children precede parents and subtrees are contiguous."""
    nodes = p.nodes
    size = [0] * len(nodes)
    for v, nd in enumerate(nodes):
        if nd.kind == "A":
            if not 0 <= nd.ref < len(p.formula.clauses):
                return _fail("structure", v, f"axiom index {nd.ref} out of range")
            size[v] = 1
        elif nd.kind == "L":
            if not 0 <= nd.ref < v:
                return _fail("structure", v, f"lemma target {nd.ref} is not an earlier node")
            size[v] = 1
        elif nd.kind in RULES:
            if nd.right != v - 1 or v == 0:
                return _fail("structure", v, "right child is not the preceding node")
            expect_left = nd.right - size[nd.right]
            if nd.left != expect_left or nd.left < 0:
                return _fail("structure", v, "left child does not close the left subtree")
            size[v] = size[nd.left] + size[nd.right] + 1
        else:
            return _fail("structure", v, f"unknown node kind {nd.kind!r}")
    if size[-1] != len(nodes):
        return _fail("structure", p.root, "root does not cover every node")
    return Verdict(True, "structure")


def subtree_sizes(p: Proof) -> list[int]:
    size = [1] * len(p.nodes)
    for v, nd in enumerate(p.nodes):
        if not nd.is_leaf:
            size[v] = size[nd.left] + size[nd.right] + 1
    return size


def check_soundness(p: Proof) -> Verdict:
    st = check_structure(p)
    if not st:
        return Verdict(False, "soundness", st.node, st.message)
    fcl = p.formula.clauses
    nodes = p.nodes
    for v, nd in enumerate(nodes):
        if nd.kind == "A":
            if nd.clause != fcl[nd.ref]:
                return _fail("soundness", v, "axiom clause differs from the formula clause")
        elif nd.kind == "L":
            if nd.clause != nodes[nd.ref].clause:
                return _fail("soundness", v, "lemma clause differs from its target")
        else:
            try:
                got = apply_rule(nd.kind, nodes[nd.left].clause, nodes[nd.right].clause, nd.pivot)
            except ProofError as exc:
                return _fail("soundness", v, str(exc))
            if got != nd.clause:
                return _fail("soundness", v, "listed clause differs from the rule's result")
    return Verdict(True, "soundness")


def check_regular(p: Proof, derivation: bool = False) -> Verdict:
    """No pivot variable repeats on a root-to-leaf path (lemma leaves end paths).

    In derivation mode pivots must also avoid the variables of the conclusion.
    """
    st = check_structure(p)
    if not st:
        return Verdict(False, "regular", st.node, st.message)
    nodes = p.nodes
    nv = p.formula.num_vars
    on_path = np.zeros(nv + 1, dtype=bool)
    if derivation:
        for x in p.conclusion:
            on_path[abs(x)] = True
    stack = [(p.root, False)]
    while stack:
        v, leaving = stack.pop()
        nd = nodes[v]
        if nd.is_leaf:
            continue
        var = abs(nd.pivot)
        if leaving:
            on_path[var] = False
            continue
        if on_path[var]:
            return _fail("regular", v, f"variable {var} is resolved on twice along a path")
        on_path[var] = True
        stack.append((v, True))
        stack.append((nd.right, False))
        stack.append((nd.left, False))
    return Verdict(True, "regular")


def check_regrtl(p: Proof) -> Verdict:
    """Pool resolution: sound, regular, lemmas refer to earlier nodes."""
    for chk in (check_soundness, check_regular):
        res = chk(p)
        if not res:
            return Verdict(False, "regrtl", res.node, f"{res.check}: {res.message}")
    return Verdict(True, "regrtl")


def input_flags(p: Proof) -> list[bool]:
    """Whether each node's subtree is an input derivation: every inference in
    it has a leaf (axiom or lemma) among its two premises."""
    nodes = p.nodes
    flags = [True] * len(nodes)
    for v, nd in enumerate(nodes):
        if not nd.is_leaf:
            l, r = nodes[nd.left], nodes[nd.right]
            flags[v] = (l.is_leaf or r.is_leaf) and flags[nd.left] and flags[nd.right]
    return flags


def check_regrti(p: Proof) -> Verdict:
    """Pool proof whose lemmas all target roots of input subderivations."""
    res = check_regrtl(p)
    if not res:
        return Verdict(False, "regrti", res.node, res.message)
    flags = input_flags(p)
    for v, nd in enumerate(p.nodes):
        if nd.kind == "L" and not flags[nd.ref]:
            return _fail("regrti", v, f"lemma target {nd.ref + 1} is not input-derived")
    return Verdict(True, "regrti")


def check_greedy_up(p: Proof) -> Verdict:
    """Greedy, unit-propagating discipline.

    For each node C in preorder, if unit propagation from the axioms plus the
    input-derived clauses to the left of C refutes the assignment falsifying
    C+, then C must itself be derived by an input derivation that does not
    resolve on a variable of C+.  Subtrees that satisfy this are not entered.

    A violating node is only *flagged* (not failed) when the conflict needs
    an input-derived clause that no lemma ever reuses, or one derived inside
    the node's own subtree.  A DPLL search that learns clauses selectively,
    or several at once, produces such nodes while still never branching past
    a conflict among the clauses it had learned when it reached the node.
    """
    st = check_soundness(p)
    if not st:
        return Verdict(False, "greedy_up", st.node, st.message)
    nodes = p.nodes
    f = p.formula
    flags = input_flags(p)
    targets = {nd.ref for nd in nodes if nd.kind == "L"}
    derived = [v for v, nd in enumerate(nodes) if not nd.is_leaf and flags[v]]
    clauses = list(f.clauses) + [nodes[v].clause for v in derived]
    avail = np.array([-1] * len(f.clauses) + derived, dtype=np.int64)
    is_lemma = np.array([True] * len(f.clauses) + [v in targets for v in derived], dtype=bool)
    db = _kernels.ClauseDb(clauses, f.num_vars)

    # pivot variables inside each subtree, for the "does not resolve on C+" test
    pivots_below = [0] * len(nodes)
    for v, nd in enumerate(nodes):
        if not nd.is_leaf:
            pivots_below[v] = pivots_below[nd.left] | pivots_below[nd.right] | (1 << abs(nd.pivot))

    sizes = subtree_sizes(p)
    flagged = []
    counts: dict[int, int] = {}
    stack = [(p.root, False)]
    while stack:
        v, leaving = stack.pop()
        nd = nodes[v]
        if leaving:
            for x in nd.clause:
                c = counts[x] - 1
                if c:
                    counts[x] = c
                else:
                    del counts[x]
            continue
        for x in nd.clause:
            counts[x] = counts.get(x, 0) + 1
        stack.append((v, True))
        cplus = counts.keys()
        active = avail < v
        if db.conflict(active, cplus):
            plus_vars = 0
            for x in cplus:
                plus_vars |= 1 << abs(x)
            if flags[v] and not (pivots_below[v] & plus_vars):
                continue
            entered = avail < v - sizes[v] + 1
            if db.conflict(entered & is_lemma, cplus):
                return _fail("greedy_up", v,
                             "unit propagation refutes C+ but C is not derived by a trivial input proof")
            flagged.append(v)
            continue
        if not nd.is_leaf:
            stack.append((nd.right, False))
            stack.append((nd.left, False))
    return Verdict(True, "greedy_up", notes=flagged)


CHECKS = {
    "soundness": check_soundness,
    "regular": check_regular,
    "regrtl": check_regrtl,
    "regrti": check_regrti,
    "greedy_up": check_greedy_up,
}


@dataclass(frozen=True)
class ProofStats:
    node_count: int
    inference_count: int
    height: int
    max_clause_width: int
    lemma_count: int
    input_lemma_count: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


def stats(p: Proof) -> ProofStats:
    nodes = p.nodes
    h = [0] * len(nodes)
    inf = lem = 0
    for v, nd in enumerate(nodes):
        if nd.kind == "L":
            lem += 1
        elif not nd.is_leaf:
            inf += 1
            h[v] = 1 + max(h[nd.left], h[nd.right])
    flags = input_flags(p)
    inp = sum(1 for nd in nodes if nd.kind == "L" and flags[nd.ref])
    width = max(len(nd.clause) for nd in nodes)
    return ProofStats(len(nodes), inf, h[-1], width, lem, inp)


# ---------------------------------------------------------------------------
# text format


def emit_proof(p: Proof, dimacs_name: str = "formula.cnf") -> str:
    out = [f"rproof {len(p.nodes)} over {dimacs_name}\n"]
    for v, nd in enumerate(p.nodes):
        if nd.kind == "A":
            out.append(f"{v + 1} A {nd.ref + 1}\n")
        elif nd.kind == "L":
            out.append(f"{v + 1} L {nd.ref + 1}\n")
        else:
            lits = " ".join(str(x) for x in sorted_lits(nd.clause))
            sep = " " if lits else ""
            out.append(f"{v + 1} {nd.kind} {nd.left + 1} {nd.right + 1} {nd.pivot} :{sep}{lits} 0\n")
    return "".join(out)


def parse_proof(text: str, formula: CnfFormula) -> Proof:
    lines = text.splitlines()
    header_line = 0
    while header_line < len(lines) and not lines[header_line].strip():
        header_line += 1
    if header_line == len(lines):
        raise ParseError("empty proof file", 1)
    head = lines[header_line].split()
    if len(head) < 4 or head[0] != "rproof" or head[2] != "over":
        raise ParseError("header must be 'rproof <num_nodes> over <file>'", header_line + 1)
    try:
        count = int(head[1])
    except ValueError:
        raise ParseError("node count is not an integer", header_line + 1) from None
    nodes: list[ProofNode] = []
    for lineno in range(header_line + 1, len(lines)):
        raw = lines[lineno].strip()
        if not raw or raw.startswith("c"):
            continue
        ln = lineno + 1
        toks = raw.split()
        try:
            vid = int(toks[0])
        except ValueError:
            raise ParseError(f"bad node id {toks[0]!r}", ln) from None
        if vid != len(nodes) + 1:
            raise ParseError(f"expected node id {len(nodes) + 1}, got {vid}", ln)
        kind = toks[1] if len(toks) > 1 else ""
        try:
            if kind == "A":
                idx = int(toks[2]) - 1
                if len(toks) != 3 or not 0 <= idx < len(formula.clauses):
                    raise ParseError(f"bad axiom line {raw!r}", ln)
                nodes.append(ProofNode("A", formula.clauses[idx], ref=idx))
            elif kind == "L":
                tgt = int(toks[2]) - 1
                if len(toks) != 3 or not 0 <= tgt < count:
                    raise ParseError(f"bad lemma line {raw!r}", ln)
                nodes.append(ProofNode("L", None, ref=tgt))
            elif kind in RULES:
                if len(toks) < 7 or toks[5] != ":" or toks[-1] != "0":
                    raise ParseError(f"bad inference line {raw!r}", ln)
                left, right, piv = int(toks[2]) - 1, int(toks[3]) - 1, int(toks[4])
                lits = [int(t) for t in toks[6:-1]]
                if any(abs(x) > formula.num_vars or x == 0 for x in lits) or piv == 0:
                    raise ParseError("literal out of range", ln)
                nodes.append(ProofNode(kind, make_clause(lits), left=left, right=right, pivot=piv))
            else:
                raise ParseError(f"unknown node kind {kind!r}", ln)
        except (ValueError, IndexError):
            raise ParseError(f"malformed line {raw!r}", ln) from None
        except FormulaError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), ln) from None
    if len(nodes) != count:
        raise ParseError(f"header declares {count} nodes, found {len(nodes)}", len(lines))
    for nd in nodes:
        if nd.kind == "L":
            nd.clause = nodes[nd.ref].clause if nodes[nd.ref].clause is not None else frozenset()
    # lemma chains pointing forward are resolved best-effort; the checkers flag them
    return Proof(formula, nodes)


# ---------------------------------------------------------------------------
# mutations, for exercising the checkers

MUTATIONS = ("pivot_swap", "clause_corruption", "lemma_retarget")


def copy_proof(p: Proof) -> Proof:
    return Proof(p.formula, [ProofNode(nd.kind, nd.clause, nd.ref, nd.left, nd.right, nd.pivot)
                             for nd in p.nodes])


def mutate(p: Proof, rng, kind: str | None = None) -> tuple[Proof, str]:
    """One random single-node edit of a copy of p.

    pivot_swap replaces an inference's pivot, half the time by a pivot of one
    of its ancestors.  clause_corruption adds, drops or flips one literal of a
    node's clause.  lemma_retarget points a lemma at another node (any node
    if the proof has no lemmas, turning an axiom into a lemma).
    """
    q = copy_proof(p)
    nodes = q.nodes
    kind = kind or rng.choice(MUTATIONS)
    inner = [v for v, nd in enumerate(nodes) if not nd.is_leaf]
    nv = p.formula.num_vars
    if kind == "pivot_swap" and inner:
        v = rng.choice(inner)
        parent = {}
        for u in inner:
            parent[nodes[u].left] = u
            parent[nodes[u].right] = u
        anc = []
        u = parent.get(v)
        while u is not None:
            anc.append(abs(nodes[u].pivot))
            u = parent.get(u)
        old = abs(nodes[v].pivot)
        pool = [x for x in anc if x != old] if rng.random() < 0.5 else []
        if not pool:
            pool = [x for x in range(1, nv + 1) if x != old] or [old]
        nodes[v].pivot = rng.choice(pool) * rng.choice((1, -1))
        return q, kind
    if kind == "lemma_retarget":
        lemmas = [v for v, nd in enumerate(nodes) if nd.kind == "L"]
        if lemmas:
            v = rng.choice(lemmas)
        else:
            v = rng.choice([u for u, nd in enumerate(nodes) if nd.kind == "A"])
            nodes[v].kind = "L"
        others = [u for u in range(len(nodes)) if u != nodes[v].ref] or [0]
        t = rng.choice(others)
        nodes[v].ref = t
        nodes[v].clause = nodes[t].clause
        return q, kind
    v = rng.randrange(len(nodes))
    c = set(nodes[v].clause)
    op = rng.choice(("add", "drop", "flip")) if c else "add"
    if op == "add":
        free = [x for x in range(1, nv + 1) if x not in c and -x not in c]
        if free:
            c.add(rng.choice(free) * rng.choice((1, -1)))
        else:
            op = "flip"
    if op == "drop":
        c.discard(rng.choice(sorted(c)))
    elif op == "flip":
        x = rng.choice(sorted(c))
        c.discard(x)
        c.add(-x)
    nodes[v].clause = frozenset(c)
    return q, "clause_corruption"


# ---------------------------------------------------------------------------
# dag-shaped derivations


class DagNode:
    """kind: 'A' axiom leaf, 'X' external leaf (payload identifies an outside
    lemma), or 'I' inference with children left/right and pivot literal."""

    __slots__ = ("kind", "clause", "left", "right", "pivot", "payload")

    def __init__(self, kind, clause, left=-1, right=-1, pivot=0, payload=None):
        self.kind = kind
        self.clause = clause
        self.left = left
        self.right = right
        self.pivot = pivot
        self.payload = payload


class Dag:
    """Topologically ordered derivation dag; the last node is the conclusion.

    Axiom leaves are deduplicated by clause.
    """

    def __init__(self):
        self.nodes: list[DagNode] = []
        self._axioms: dict = {}

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> int:
        return len(self.nodes) - 1

    @property
    def conclusion(self) -> Clause:
        return self.nodes[-1].clause

    def axiom(self, clause: Iterable[int], payload=None) -> int:
        c = frozenset(clause)
        if c in self._axioms:
            return self._axioms[c]
        self.nodes.append(DagNode("A", c, payload=payload))
        self._axioms[c] = len(self.nodes) - 1
        return self._axioms[c]

    def external(self, clause: Iterable[int], payload) -> int:
        self.nodes.append(DagNode("X", frozenset(clause), payload=payload))
        return len(self.nodes) - 1

    def resolve(self, left: int, right: int, pivot: int | None = None) -> int:
        """Add resolvent of two nodes; the pivot literal must occur in `left`.
        Without an explicit pivot the unique clashing variable is used."""
        a, b = self.nodes[left].clause, self.nodes[right].clause
        if pivot is None:
            clash = [x for x in a if -x in b]
            if len(clash) != 1:
                raise NotApplicableError(f"premises clash on {len(clash)} literals")
            pivot = clash[0]
        self.nodes.append(DagNode("I", resolve(a, b, pivot), left, right, pivot))
        return len(self.nodes) - 1

    def reachable(self, v: int | None = None) -> set:
        v = self.root if v is None else v
        seen = {v}
        stack = [v]
        while stack:
            nd = self.nodes[stack.pop()]
            if nd.kind == "I":
                for c in (nd.left, nd.right):
                    if c not in seen:
                        seen.add(c)
                        stack.append(c)
        return seen

    def height(self) -> int:
        h = [0] * len(self.nodes)
        for v, nd in enumerate(self.nodes):
            if nd.kind == "I":
                h[v] = 1 + max(h[nd.left], h[nd.right])
        return h[-1] if h else 0

    def size(self) -> int:
        return len(self.reachable())

    def pivot_vars(self) -> set:
        return {abs(self.nodes[v].pivot) for v in self.reachable() if self.nodes[v].kind == "I"}

    def axioms_used(self) -> list[Clause]:
        return [self.nodes[v].clause for v in sorted(self.reachable())
                if self.nodes[v].kind == "A"]

    def pivots_below(self) -> list[int]:
        """Bitset (int) per node of pivot variables on paths from it to the root,
        excluding the node's own pivot."""
        below = [0] * len(self.nodes)
        live = self.reachable()
        for v in range(len(self.nodes) - 1, -1, -1):
            if v not in live:
                continue
            nd = self.nodes[v]
            if nd.kind == "I":
                bits = below[v] | (1 << abs(nd.pivot))
                below[nd.left] |= bits
                below[nd.right] |= bits
        return below

    def recompute(self) -> None:
        """Recompute inference clauses bottom-up after leaf clauses changed."""
        for nd in self.nodes:
            if nd.kind == "I":
                nd.clause = resolve(self.nodes[nd.left].clause, self.nodes[nd.right].clause, nd.pivot)


def check_dag(d: Dag, derivation: bool = False) -> Verdict:
    """Soundness of every inference and regularity along every path."""
    for v in sorted(d.reachable()):
        nd = d.nodes[v]
        if nd.kind == "I":
            try:
                got = resolve(d.nodes[nd.left].clause, d.nodes[nd.right].clause, nd.pivot)
            except ProofError as exc:
                return _fail("dag", v, str(exc))
            if got != nd.clause:
                return _fail("dag", v, "clause differs from the resolvent")
    below = d.pivots_below()
    if derivation:
        forbidden = 0
        for x in d.conclusion:
            forbidden |= 1 << abs(x)
        below = [b | forbidden for b in below]
    for v in d.reachable():
        nd = d.nodes[v]
        if nd.kind == "I" and below[v] >> abs(nd.pivot) & 1:
            return _fail("dag", v, f"variable {abs(nd.pivot)} is resolved on twice along a path")
    return Verdict(True, "dag")


# tree fragments: postorder lists of tuples
#   ('A', clause, payload) | ('X', clause, payload) | ('L', clause, target)
#   | ('I', clause, left, right, pivot)


def _unfold(d: Dag, learn_all: bool) -> list[tuple]:
    out: list[tuple] = []
    leafish: list[bool] = []
    is_input: list[bool] = []
    learned: dict[int, int] = {}
    results: list[int] = []
    stack = [(d.root, False)]
    nodes = d.nodes
    while stack:
        v, done = stack.pop()
        nd = nodes[v]
        if not done:
            if nd.kind in ("A", "X"):
                out.append((nd.kind, nd.clause, nd.payload))
                leafish.append(True)
                is_input.append(True)
                results.append(len(out) - 1)
            elif v in learned:
                out.append(("L", nd.clause, learned[v]))
                leafish.append(True)
                is_input.append(True)
                results.append(len(out) - 1)
            else:
                stack.append((v, True))
                stack.append((nd.right, False))
                stack.append((nd.left, False))
            continue
        r = results.pop()
        l = results.pop()
        out.append(("I", nd.clause, l, r, nd.pivot))
        idx = len(out) - 1
        inp = (leafish[l] or leafish[r]) and is_input[l] and is_input[r]
        leafish.append(False)
        is_input.append(inp)
        if learn_all or inp:
            learned[v] = idx
        results.append(idx)
    return out


def dag_to_tree_pool(d: Dag) -> list[tuple]:
    """Depth-first unfolding: the first occurrence of a shared node is derived,
    later occurrences become lemma leaves pointing at it."""
    return _unfold(d, learn_all=True)


def dag_to_tree_input_lemmas(d: Dag, check: bool = True) -> list[tuple]:
    """Depth-first unfolding that only reuses input-derived nodes as lemmas.

    A node is re-derived until one of its derivations is an input derivation;
    each node then occurs at most (depth + 1) times, which gives the size bound
    2 * size * height asserted here.
    """
    if check:
        res = check_dag(d)
        if not res:
            raise ProofError(f"refusing irregular or unsound dag: {res.message}")
    out = _unfold(d, learn_all=False)
    size, height = d.size(), d.height()
    if len(out) > max(2 * size * height, 1):
        raise ProofError(f"unfolding has {len(out)} nodes, above 2*{size}*{height}")
    return out


def fragment_to_proof(formula: CnfFormula, frag: Sequence[tuple]) -> Proof:
    """Turn a tree fragment whose leaves are formula clauses into a Proof."""
    index = formula.index_of()
    nodes = []
    for item in frag:
        kind = item[0]
        if kind in ("A", "X"):
            c = item[1]
            if c not in index:
                raise ProofError(f"leaf clause {sorted_lits(c)} is not in the formula")
            nodes.append(ProofNode("A", c, ref=index[c]))
        elif kind == "L":
            nodes.append(ProofNode("L", item[1], ref=item[2]))
        else:
            _, c, l, r, piv = item
            nodes.append(ProofNode("R", c, left=l, right=r, pivot=piv))
    return Proof(formula, nodes)


def dag_to_proof(formula: CnfFormula, d: Dag, mode: str = "pool") -> Proof:
    frag = dag_to_tree_pool(d) if mode == "pool" else dag_to_tree_input_lemmas(d)
    return fragment_to_proof(formula, frag)


def tree_to_dag(p: Proof) -> Dag:
    """Inverse view: a lemma-free tree proof as a dag (lemmas resolve to their targets)."""
    d = Dag()
    m: list[int] = []
    for nd in p.nodes:
        if nd.kind == "A":
            d.nodes.append(DagNode("A", nd.clause))
            m.append(len(d.nodes) - 1)
        elif nd.kind == "L":
            m.append(m[nd.ref])
        else:
            piv = nd.pivot if nd.pivot in p.nodes[nd.left].clause else -nd.pivot
            d.nodes.append(DagNode("I", nd.clause, m[nd.left], m[nd.right], piv))
            m.append(len(d.nodes) - 1)
    return d
