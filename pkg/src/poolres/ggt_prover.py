"""Left-to-right construction of pool and regRTI refutations of guarded ordering formulas.

The refutation is grown as a tree.  Unfinished leaves carry the clause of a
bipartite partial order; the leftmost one is replaced either by a patched copy
of P_pi (when every transitivity axiom in it can be learned, reused or guarded
in place) or by a short template that learns a blocking transitivity clause and
leaves two or three new unfinished leaves behind.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from poolres.bpo import (
    BipartitePartialOrder,
    associated_bpo,
    build_gt_refutation,
    build_p_pi,
    neg_pi_clause,
    tau_from_literals,
)
from poolres.families import (
    GuardFunctions,
    ParameterError,
    gen_ggt,
    rotation_rep,
    transitivity_clause,
)
from poolres.formula import Clause, CnfFormula, order_lit, sorted_lits
from poolres.lrtree import (
    ConstructionError,
    TNode,
    branch_literals,
    fragment_to_tnodes,
    inference,
    propagate_literal,
    replace_node,
    tree_to_proof,
    validate_tree,
)
from poolres.proof import Dag, Proof, dag_to_tree_input_lemmas, dag_to_tree_pool, resolve

log = logging.getLogger(__name__)


CASE_LEARNED, CASE_GUARDED, CASE_DERIVE, CASE_BLOCKED = "i", "ii", "iii", "iv"


@dataclass
class RunLog:
    steps: list = field(default_factory=list)  # per processed unfinished leaf
    learned_timeline: list = field(default_factory=list)
    case_iv: int = 0
    unfinished_added: int = 0
    pending_processed: int = 0
    max_unfinished: int = 0

    def to_json(self) -> dict:
        return {
            "case_iv": self.case_iv,
            "unfinished_added": self.unfinished_added,
            "pending_processed": self.pending_processed,
            "max_unfinished": self.max_unfinished,
            "learned": len(self.learned_timeline),
            "steps": self.steps,
        }


@dataclass
class Classified:
    dag: Dag
    tags: dict  # dag node -> (case, extra)
    blocked: int | None  # first blocked dag node


class LRState:
    """Partial refutation under construction, with its learned-clause registry."""

    def __init__(self, n: int, guards: GuardFunctions, mode: str = "pool", check_every: int = 0):
        if n < 4:
            raise ParameterError("GGT_n needs n >= 4")
        if mode not in ("pool", "regrti"):
            raise ParameterError(f"unknown mode {mode!r}")
        self.n = n
        self.guards = guards
        self.mode = mode
        self.formula = gen_ggt(n, guards)
        self.learned: dict[Clause, TNode] = {}
        self.root = TNode("U", frozenset(), meta=frozenset())
        self.stack: list[TNode] = [self.root]  # unfinished work, leftmost on top
        self.log = RunLog()
        self.check_every = check_every
        self._cplus_check = check_every > 0

    # -- queries --------------------------------------------------------------

    def c_plus(self, node: TNode) -> frozenset:
        return branch_literals(node)

    def tau_of(self, node: TNode) -> set:
        return tau_from_literals(self.c_plus(node), self.n)

    def order_of(self, cplus) -> BipartitePartialOrder:
        return associated_bpo(tau_from_literals(cplus, self.n), self.n)

    def guard_lit(self, tri) -> int:
        return self.guards.guard_lit(*tri)

    def classify_transitivity(self, cplus, tclause: Clause, tri, pivots_below: int = 0) -> tuple:
        """Case tag of a transitivity clause used at a leaf with branch literals cplus."""
        if tclause in self.learned:
            return (CASE_LEARNED, None)
        g = self.guard_lit(tri)
        if g in cplus:
            return (CASE_GUARDED, g)
        if -g in cplus:
            return (CASE_GUARDED, -g)
        if not (pivots_below >> abs(g)) & 1:
            return (CASE_DERIVE, g)
        return (CASE_BLOCKED, g)

    # -- P_pi patching -------------------------------------------------------

    def classify_p_pi(self, leaf: TNode) -> Classified:
        cplus = leaf.meta
        pi = self.order_of(cplus)
        dag = build_p_pi(pi, self.n)
        below = dag.pivots_below()
        tags = {}
        blocked = None
        for v in sorted(dag.reachable()):
            nd = dag.nodes[v]
            if nd.kind == "A" and nd.payload[0] == "T":
                tag = self.classify_transitivity(cplus, nd.clause, nd.payload[1], below[v])
                tags[v] = tag
                if tag[0] == CASE_BLOCKED and blocked is None:
                    blocked = v
        return Classified(dag, tags, blocked)

    def patched_dag(self, cls: Classified) -> Dag:
        """Copy of P_pi with transitivity leaves reused, guarded, or derived."""
        src = cls.dag
        out = Dag()
        remap = {}
        for v in sorted(src.reachable()):
            nd = src.nodes[v]
            if nd.kind == "I":
                remap[v] = out.resolve(remap[nd.left], remap[nd.right], nd.pivot)
                continue
            tag = cls.tags.get(v)
            if tag is None:
                remap[v] = out.axiom(nd.clause)
            elif tag[0] == CASE_LEARNED:
                remap[v] = out.external(nd.clause, self.learned[nd.clause])
            elif tag[0] == CASE_GUARDED:
                remap[v] = out.axiom(nd.clause | {tag[1]})
            elif tag[0] == CASE_DERIVE:
                g = tag[1]
                a = out.axiom(nd.clause | {g})
                b = out.axiom(nd.clause | {-g})
                remap[v] = out.resolve(a, b, g)
            else:
                raise ConstructionError("patching a blocked transitivity axiom")
        return out

    def fragment_to_tnodes(self, frag) -> TNode:
        tset = self._tclause_set()

        def learn(c, node):
            if c in tset and c not in self.learned:
                self._learn(c, node)

        return fragment_to_tnodes(frag, learn)

    def _tclause_set(self):
        ts = getattr(self, "_tset", None)
        if ts is None:
            ts = self._tset = {c for c in self._all_tclauses()}
        return ts

    def _all_tclauses(self):
        from poolres.families import triangle_orbits

        for tri in triangle_orbits(self.n):
            yield transitivity_clause(*tri, self.n)

    def _learn(self, tclause: Clause, node: TNode) -> None:
        self.learned[tclause] = node
        self.log.learned_timeline.append(sorted_lits(tclause))

    def patch_p_pi(self, leaf: TNode):
        """Try to replace the leaf by a patched P_pi.  Returns None on success,
        or the Classified result whose `blocked` names the blocking axiom."""
        cls = self.classify_p_pi(leaf)
        if cls.blocked is not None:
            return cls
        dag = self.patched_dag(cls)
        if self.mode == "pool":
            frag = dag_to_tree_pool(dag)
        else:
            frag = dag_to_tree_input_lemmas(dag, check=self.check_every > 0)
        sub = self.fragment_to_tnodes(frag)
        extra = sub.clause - leaf.clause
        if not sub.clause >= leaf.clause or not extra <= leaf.meta:
            raise ConstructionError("patched conclusion is not between C and C+")
        replace_node(leaf, sub)
        if leaf is self.root:
            self.root = sub
        for lit in sorted_lits(extra):
            self.propagate_literal(sub.parent, lit)
        counts = {}
        for tag, _ in cls.tags.values():
            counts[tag] = counts.get(tag, 0) + 1
        self.log.steps.append({"kind": "patch", "order": len(neg_pi_clause_of(leaf)),
                               "size": len(frag), "cases": counts})
        return None

    def propagate_literal(self, node: TNode | None, lit: int) -> None:
        propagate_literal(node, lit)

    # -- case (iv) -----------------------------------------------------------

    def _lit(self, a: int, b: int) -> int:
        """The literal "not x_{a,b}" (it is false exactly when a precedes b)."""
        return -order_lit(a, b, self.n)

    def _guarded_learn(self, tri) -> TNode:
        t = transitivity_clause(*tri, self.n)
        g = self.guard_lit(tri)
        node = inference(TNode("A", t | {g}), TNode("A", t | {-g}), g)
        self._learn(t, node)
        return node

    def _chain(self, bottom: Clause, steps) -> tuple[TNode, TNode]:
        """Left-branching chain replacing literals step by step.

        Each step (tri, pivot_in_t, removed) resolves the pending transitivity
        leaf for tri (left) against the clause above it (right), which equals
        the current clause with `removed` dropped and the complement of the
        pivot added.  Returns (bottom node, top unfinished leaf).
        """
        cur = bottom
        made = []
        for tri, p, removed in steps:
            t = transitivity_clause(*tri, self.n)
            above = (cur - removed) | {-p}
            if resolve(t, above, p) != cur:
                raise ConstructionError("chain step does not reproduce the clause below")
            made.append((TNode("P", t, meta=tri), above, p))
            cur = above
        top = TNode("U", cur)
        node = top
        for tleaf, above, p in reversed(made):
            node = inference(tleaf, node, p)
        return node, top

    def expand_case_iv(self, leaf: TNode, tri) -> list[TNode]:
        """Replace the leaf by the template learning T for tri.  Returns the new
        unfinished/pending leaves in left-to-right order."""
        n = self.n
        cplus = leaf.meta
        pi = self.order_of(cplus)
        m = pi.minimal
        a, b, c = tri
        rots = [(a, b, c), (b, c, a), (c, a, b)]
        outside = [t for t in (a, b, c) if t not in m]
        if not outside:
            root = self._beta_template(pi, rots[0])
            kind = "beta"
        else:
            if len(outside) != 1:
                raise ConstructionError(f"blocked axiom {tri} is neither type beta nor gamma")
            i, j, k = next(r for r in rots if r[2] == outside[0])
            if not ((j, k) in pi.pairs and (i, k) not in pi.pairs):
                raise ConstructionError(f"blocked axiom {tri} is not of type gamma")
            root = self._gamma_template(pi, (i, j, k))
            kind = "gamma"
        if root.clause != leaf.clause:
            raise ConstructionError("template conclusion differs from the leaf clause")
        replace_node(leaf, root)
        if leaf is self.root:
            self.root = root
        leaves = []
        self._collect_leaves(root, leaves)
        fresh = []
        for lf in leaves:
            if lf.kind not in ("U", "P"):
                continue
            path = self._path_literals(lf, root) | cplus
            lf.meta = (lf.meta, path) if lf.kind == "P" else path
            if lf.kind == "U":
                self._check_condition_e(lf)
                self.log.unfinished_added += 1
            fresh.append(lf)
        self.log.case_iv += 1
        self.log.steps.append({"kind": kind, "triple": list(tri), "new_unfinished":
                               sum(1 for lf in fresh if lf.kind == "U")})
        return fresh

    def _collect_leaves(self, root: TNode, out: list) -> None:
        stack = [root]
        while stack:
            v = stack.pop()
            if v.kind == "I":
                stack.append(v.right)
                stack.append(v.left)
            else:
                out.append(v)

    def _path_literals(self, node: TNode, stop: TNode) -> frozenset:
        out = set(node.clause)
        v = node
        while v is not stop:
            v = v.parent
            out |= v.clause
        return frozenset(out)

    def _check_condition_e(self, leaf: TNode) -> None:
        cplus = leaf.meta
        try:
            pi = self.order_of(cplus)
        except Exception as exc:
            raise ConstructionError(f"new leaf has an inconsistent order: {exc}") from None
        if neg_pi_clause(pi) != leaf.clause:
            raise ConstructionError("new unfinished leaf is not the clause of its order")

    def _gamma_template(self, pi: BipartitePartialOrder, ijk) -> TNode:
        i, j, k = ijk
        L = self._lit
        pib = neg_pi_clause(pi)
        above = {ell for _, ell in pi.pairs}
        t_node = self._guarded_learn((i, j, k))
        # S1: x_{i,j} side, j's successors not above i move over to i
        c1 = (pib - {L(j, k)} - {L(j, ell) for ell in above if (i, ell) in pi.pairs}) | {L(i, j), L(i, k)}
        steps1 = [((i, j, ell), L(ell, i), frozenset({L(j, ell)}))
                  for ell in sorted(above)
                  if ell != k and (j, ell) in pi.pairs and (i, ell) not in pi.pairs]
        s1, _ = self._chain(frozenset(c1), steps1)
        left = inference(t_node, s1, L(k, i))
        # S2: x_{j,i} side, i's successors not above j move over to j
        c2 = (pib - {L(j, k)} - {L(i, ell) for ell in above if (j, ell) in pi.pairs}) | {L(j, i), L(j, k)}
        steps2 = [((j, i, ell), L(ell, j), frozenset({L(i, ell)}))
                  for ell in sorted(above)
                  if (i, ell) in pi.pairs and (j, ell) not in pi.pairs]
        s2, _ = self._chain(frozenset(c2), steps2)
        return inference(left, s2, L(i, j))

    def _beta_template(self, pi: BipartitePartialOrder, ijk) -> TNode:
        i, j, k = ijk
        L = self._lit
        P = pi.pairs
        pib = neg_pi_clause(pi)
        above = sorted({ell for _, ell in P})
        t_node = self._guarded_learn((i, j, k))
        # S3
        c3 = (pib - {L(j, ell) for ell in above if (i, ell) in P}
              - {L(k, ell) for ell in above if (i, ell) in P or (j, ell) in P}) | {L(i, j), L(i, k)}
        steps3 = []
        for ell in above:
            if (j, ell) in P and (i, ell) not in P:
                steps3.append(((i, j, ell), L(ell, i), frozenset({L(j, ell)})))
            elif (k, ell) in P and (i, ell) not in P and (j, ell) not in P:
                steps3.append(((i, k, ell), L(ell, i), frozenset({L(k, ell)})))
        s3, _ = self._chain(frozenset(c3), steps3)
        y = inference(t_node, s3, L(k, i))
        # S4
        c4 = (pib - {L(j, ell) for ell in above if (i, ell) in P and (k, ell) in P}) | {L(i, j), L(k, j)}
        steps4 = []
        for ell in above:
            if (j, ell) not in P or ((i, ell) in P and (k, ell) in P):
                continue
            if (i, ell) not in P and (k, ell) in P:
                steps4.append(((i, j, ell), L(ell, i), frozenset({L(j, ell)})))
            elif (i, ell) in P:
                steps4.append(((k, j, ell), L(ell, k), frozenset({L(j, ell)})))
            else:
                steps4.append(((i, j, ell), L(ell, i), frozenset()))
                steps4.append(((k, j, ell), L(ell, k), frozenset({L(j, ell)})))
        s4, _ = self._chain(frozenset(c4), steps4)
        x = inference(y, s4, L(j, k))
        # S5: as S2 without the x_{j,k} literal
        c5 = (pib - {L(i, ell) for ell in above if (j, ell) in P}) | {L(j, i)}
        steps5 = [((j, i, ell), L(ell, j), frozenset({L(i, ell)}))
                  for ell in above if (i, ell) in P and (j, ell) not in P]
        s5, _ = self._chain(frozenset(c5), steps5)
        return inference(x, s5, L(i, j))

    # -- pending transitivity leaves ------------------------------------------

    def process_pending(self, leaf: TNode) -> None:
        tri, cplus = leaf.meta
        t = leaf.clause
        tag, g = self.classify_transitivity(cplus, t, tri)
        if tag == CASE_LEARNED:
            replace_node(leaf, TNode("L", t, target=self.learned[t]))
        elif tag == CASE_GUARDED:
            new = TNode("A", t | {g})
            replace_node(leaf, new)
            self.propagate_literal(new.parent, g)
        elif tag == CASE_DERIVE:
            new = inference(TNode("A", t | {g}), TNode("A", t | {-g}), g)
            replace_node(leaf, new)
            self._learn(t, new)
        else:
            raise ConstructionError("interior transitivity axiom is blocked")
        self.log.pending_processed += 1

    # -- driver ----------------------------------------------------------------

    def step(self) -> bool:
        """Handle the leftmost unfinished leaf; False when none remain."""
        if not self.stack:
            return False
        leaf = self.stack.pop()
        if leaf.kind == "P":
            self.process_pending(leaf)
            return True
        if self._cplus_check and self.c_plus(leaf) != leaf.meta:
            raise ConstructionError("cached branch literals went stale")
        res = self.patch_p_pi(leaf)
        if res is not None:
            tri = res.dag.nodes[res.blocked].payload[1]
            fresh = self.expand_case_iv(leaf, tri)
            self.stack.extend(reversed(fresh))
        self.log.max_unfinished = max(self.log.max_unfinished,
                                      sum(1 for x in self.stack if x.kind == "U"))
        return True

    def run(self) -> Proof:
        steps = 0
        while self.step():
            steps += 1
            if self.check_every and steps % self.check_every == 0:
                self.validate()
        return self.to_proof()

    def to_proof(self) -> Proof:
        if self.stack:
            raise ConstructionError("unfinished leaves remain")
        return tree_to_proof(self.root, self.formula)

    def validate(self) -> None:
        """Full check of the partial refutation: sound inferences, regular
        branches, lemmas to the left, unfinished leaves satisfy condition e."""

        def check(v, cp):
            if v.kind != "U":
                return
            if cp != v.meta:
                raise ConstructionError("stale branch literals at unfinished leaf")
            if neg_pi_clause(self.order_of(cp)) != v.clause:
                raise ConstructionError("condition e fails")

        validate_tree(self.root, check)


def neg_pi_clause_of(leaf: TNode) -> Clause:
    return leaf.clause


@dataclass
class GgtResult:
    proof: Proof
    log: RunLog
    learned: int


def refute_ggt(n: int, guards: GuardFunctions, mode: str = "pool", check_every: int = 0) -> Proof:
    return run_ggt(n, guards, mode, check_every).proof


def refute_ggt_regrti(n: int, guards: GuardFunctions, check_every: int = 0) -> Proof:
    return run_ggt(n, guards, "regrti", check_every).proof


def run_ggt(n: int, guards: GuardFunctions, mode: str = "pool", check_every: int = 0) -> GgtResult:
    st = LRState(n, guards, mode, check_every)
    proof = st.run()
    return GgtResult(proof, st.log, len(st.learned))


def naive_ggt_refutation(n: int, guards: GuardFunctions) -> Proof:
    """P_n with every transitivity leaf derived from its guarded pair right at
    the leaf.  Sound, but irregular whenever a guard is resolved on below."""
    src = build_gt_refutation(n)
    out = Dag()
    remap = {}
    for v, nd in enumerate(src.nodes):
        if nd.kind == "I":
            remap[v] = out.resolve(remap[nd.left], remap[nd.right], nd.pivot)
        elif nd.payload[0] == "T":
            g = guards.guard_lit(*nd.payload[1])
            a = out.axiom(nd.clause | {g})
            b = out.axiom(nd.clause | {-g})
            remap[v] = out.resolve(a, b, g)
        else:
            remap[v] = out.axiom(nd.clause)
    from poolres.proof import fragment_to_proof

    return fragment_to_proof(gen_ggt(n, guards), dag_to_tree_pool(out))


def naive_is_irregular_expected(n: int, guards: GuardFunctions) -> bool:
    """Whether some guard variable is a pivot of P_n below the axiom it guards."""
    d = build_gt_refutation(n)
    below = d.pivots_below()
    for v, nd in enumerate(d.nodes):
        if nd.kind == "A" and nd.payload[0] == "T":
            if below[v] >> guards.guard_var(*nd.payload[1]) & 1:
                return True
    return False
