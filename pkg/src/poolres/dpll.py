"""Greedy, unit-propagating DPLL search with clause learning for GGT_n.

Decisions follow four rules, tried in order at every search node once unit
propagation is stable:

1. a propagation conflict is analysed into a clause over decision literals;
   every transitivity clause met on the way is learned;
2. an unassigned pair in the closure of the current bipartite order is
   branched on, reversed polarity first (which closes a 3-cycle at once);
3. if no transitivity axiom of P_pi is blocked, the pivots of P_pi are
   branched on from the root upward;
4. otherwise the variables of the first blocked axiom are branched on in the
   order the left-to-right construction resolves them.

The search never restarts.  It emits a line-oriented trace which
`trace_to_proof` replays into a tree proof with lemmas.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from poolres.bpo import InconsistentSpecError, associated_bpo, build_p_pi, decode_pair
from poolres.families import GuardFunctions, ParameterError, gen_ggt, transitivity_clause, triangle_orbits
from poolres.formula import Clause, CnfFormula, order_lit, sorted_lits
from poolres.proof import Proof, ProofError, ProofNode, degenerate_resolve, resolve

LEARNING_MODES = ("transitivity", "input", "none")


class SolverError(ProofError):
    """The search reached a state the decision rules do not cover."""


class TraceError(ProofError):
    """A trace is incomplete or does not replay."""


@dataclass
class SolverStats:
    decisions: int = 0
    propagations: int = 0
    conflicts: int = 0
    learned: int = 0
    backtracks: int = 0
    restarts: int = 0
    rule_counts: dict = field(default_factory=lambda: {"2": 0, "2c": 0, "3": 0, "4": 0})

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["rule_counts"] = dict(self.rule_counts)
        return d


@dataclass
class Trace:
    """Events: ('D', lit) decide, ('P', lit, cid) propagate with reason,
    ('C', cid) conflict, ('L', clause) learn, ('B', level) backtrack."""

    events: list = field(default_factory=list)
    complete: bool = False

    def to_text(self) -> str:
        out = []
        for ev in self.events:
            tag = ev[0]
            if tag == "D":
                out.append(f"D {ev[1]}")
            elif tag == "P":
                out.append(f"P {ev[1]} {ev[2] + 1}")
            elif tag == "C":
                out.append(f"C {ev[1] + 1}")
            elif tag == "L":
                out.append("L " + " ".join(map(str, sorted_lits(ev[1]))) + " 0")
            else:
                out.append(f"B {ev[1]}")
        if self.complete:
            out.append("c UNSAT")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Trace":
        t = cls()
        for ln, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts:
                continue
            tag = parts[0]
            try:
                if tag == "c":
                    t.complete = t.complete or parts[1:] == ["UNSAT"]
                elif tag == "D":
                    t.events.append(("D", int(parts[1])))
                elif tag == "P":
                    t.events.append(("P", int(parts[1]), int(parts[2]) - 1))
                elif tag == "C":
                    t.events.append(("C", int(parts[1]) - 1))
                elif tag == "L":
                    if parts[-1] != "0":
                        raise ValueError("unterminated clause")
                    t.events.append(("L", frozenset(int(x) for x in parts[1:-1])))
                elif tag == "B":
                    t.events.append(("B", int(parts[1])))
                else:
                    raise ValueError(f"unknown event {tag!r}")
            except (ValueError, IndexError) as exc:
                raise TraceError(f"line {ln}: {exc}") from None
        return t

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def analyze_conflict(conflict: Clause, trail: list, reasons: dict, clause_of):
    """Resolve the conflict clause against the reasons of propagated literals,
    latest first, until only decision literals remain.

    Yields nothing; returns the list of (pivot_literal_in_cur, reason_cid,
    resolvent) steps.  Every step is an input inference.
    """
    cur = conflict
    steps = []
    for lit in reversed(trail):
        if -lit in cur:
            cid = reasons.get(abs(lit))
            if cid is None:
                continue
            cur = resolve(cur, clause_of(cid), -lit)
            steps.append((-lit, cid, cur))
    return steps


class GgtSolver:
    """DPLL search over GGT_n with selectable learning."""

    def __init__(self, n: int, guards: GuardFunctions, learning: str = "transitivity",
                 max_decisions: int | None = None):
        if n < 4:
            raise ParameterError("GGT_n needs n >= 4")
        if learning not in LEARNING_MODES:
            raise ParameterError(f"unknown learning mode {learning!r}")
        self.n = n
        self.guards = guards
        self.learning = learning
        self.formula = gen_ggt(n, guards)
        self.nv = self.formula.num_vars
        self.clauses: list[Clause] = list(self.formula.clauses)
        self.num_axioms = len(self.clauses)
        self.learned_index: dict[Clause, int] = {}
        self.tclauses = {transitivity_clause(*t, n): t for t in triangle_orbits(n)}
        self.value = [0] * (self.nv + 1)
        self.trail: list[int] = []
        self.reasons: dict[int, int] = {}
        self.level_start: list[int] = []
        self.watches: dict[int, list[int]] = {}
        self.watched: list[list[int]] = []
        self.fresh: list[int] = []
        for cid, c in enumerate(self.clauses):
            self._attach(cid, c)
        self.trace = Trace()
        self.stats = SolverStats()
        self.max_decisions = max_decisions
        self._p_pi_cache: dict = {}
        self._qhead = 0

    # -- clause database -------------------------------------------------------

    def _attach(self, cid: int, c: Clause) -> None:
        self.watched.append(sorted_lits(c)[:2])
        self.fresh.append(cid)

    def _val(self, lit: int) -> int:
        v = self.value[abs(lit)]
        return v if lit > 0 else -v

    def clause_of(self, cid: int) -> Clause:
        return self.clauses[cid]

    def _learn(self, c: Clause) -> None:
        if c in self.learned_index:
            return
        cid = len(self.clauses)
        self.clauses.append(c)
        self.learned_index[c] = cid
        self._attach(cid, c)
        self.stats.learned += 1
        self.trace.events.append(("L", c))

    # -- assignment ------------------------------------------------------------

    def _assign(self, lit: int, reason: int | None) -> None:
        self.value[abs(lit)] = 1 if lit > 0 else -1
        self.trail.append(lit)
        if reason is not None:
            self.reasons[abs(lit)] = reason
            self.stats.propagations += 1
            self.trace.events.append(("P", lit, reason))

    def _undo_to(self, level: int) -> None:
        pos = self.level_start[level]
        for lit in self.trail[pos:]:
            self.value[abs(lit)] = 0
            self.reasons.pop(abs(lit), None)
        del self.trail[pos:]
        del self.level_start[level:]
        self._qhead = min(self._qhead, len(self.trail))

    def unit_propagate(self) -> int | None:
        """Run the unit rule to a fixpoint; return a falsified clause id or None.

        Clauses enter the two-watched-literal scheme only once both watches
        can be placed on non-false literals; until then ("fresh" clauses,
        typically just learned and fully falsified) they are rescanned on
        every call.
        """
        while True:
            if self.fresh:
                still = []
                conflict = None
                for cid in self.fresh:
                    if conflict is not None:
                        still.append(cid)
                        continue
                    state = self._visit(cid)
                    if state == "settled":
                        continue
                    still.append(cid)
                    if state == "conflict":
                        conflict = cid
                self.fresh = still
                if conflict is not None:
                    return conflict
            if self._qhead == len(self.trail):
                return None
            while self._qhead < len(self.trail):
                lit = self.trail[self._qhead]
                self._qhead += 1
                res = self._propagate_false(-lit)
                if res is not None:
                    return res

    def _visit(self, cid: int) -> str:
        nonfalse = [x for x in sorted_lits(self.clauses[cid]) if self._val(x) != -1]
        if len(nonfalse) >= 2:
            w = nonfalse[:2]
            self.watched[cid] = w
            for x in w:
                self.watches.setdefault(x, []).append(cid)
            return "settled"
        if not nonfalse:
            return "conflict"
        if self._val(nonfalse[0]) == 0:
            self._assign(nonfalse[0], cid)
        return "open"

    def _propagate_false(self, flit: int) -> int | None:
        """The literal flit just became false; revisit clauses watching it."""
        lst = self.watches.get(flit)
        if not lst:
            return None
        keep = []
        seen = set()
        conflict = None
        for idx, cid in enumerate(lst):
            w = self.watched[cid]
            if flit not in w or cid in seen:
                continue  # stale or duplicate entry
            seen.add(cid)
            other = w[1] if w[0] == flit else w[0]
            if self._val(other) == 1:
                keep.append(cid)
                continue
            moved = False
            for x in self.clauses[cid]:
                if x != flit and x != other and self._val(x) != -1:
                    w[0], w[1] = other, x
                    self.watches.setdefault(x, []).append(cid)
                    moved = True
                    break
            if moved:
                continue
            keep.append(cid)
            if self._val(other) == -1:
                conflict = cid
                keep.extend(lst[idx + 1:])
                break
            self._assign(other, cid)
        self.watches[flit] = keep
        return conflict

    # -- orders ------------------------------------------------------------------

    def current_tau(self) -> set:
        """Pairs (i, j) with i placed before j by the assignment."""
        out = set()
        n = self.n
        for lit in self.trail:
            i, j = decode_pair(abs(lit), n)
            out.add((i, j) if lit > 0 else (j, i))
        return out

    def _cplus(self) -> frozenset:
        return frozenset(-x for x in self.trail)

    def _p_pi(self, pi):
        hit = self._p_pi_cache.get(pi.pairs)
        if hit is None:
            dag = build_p_pi(pi, self.n)
            below = dag.pivots_below()
            taxioms = [(v, dag.nodes[v].clause, dag.nodes[v].payload[1])
                       for v in sorted(dag.reachable())
                       if dag.nodes[v].kind == "A" and dag.nodes[v].payload[0] == "T"]
            hit = (dag, below, taxioms)
            self._p_pi_cache[pi.pairs] = hit
        return hit

    def choose_decision(self) -> tuple[int, str]:
        """The next decision literal and the rule that produced it."""
        n = self.n
        tau = self.current_tau()
        try:
            pi = associated_bpo(tau, n)
        except InconsistentSpecError:
            return self._chord_decision(tau), "2c"
        succ = {}
        for a, b in tau:
            succ.setdefault(a, set()).add(b)
        # rule 2: closure pairs with a two-step witness, reversed first
        for a, b in pi.sorted_pairs():
            var = abs(order_lit(a, b, n))
            if self.value[var] != 0:
                continue
            if any(b in succ.get(c, ()) for c in succ.get(a, ())):
                return order_lit(b, a, n), "2"
        for a, b in pi.sorted_pairs():
            if self.value[abs(order_lit(a, b, n))] == 0:
                raise SolverError(f"closure pair {(a, b)} has no two-step witness")
        dag, below, taxioms = self._p_pi(pi)
        cplus = self._cplus()
        m = pi.minimal
        for v, t, tri in taxioms:
            if t in self.learned_index:
                continue
            gvar = self.guards.guard_var(*tri)
            if self.value[gvar] != 0:
                continue
            if below[v] >> gvar & 1:
                return self._blocked_decision(pi, tri), "4"
        # rule 3: walk P_pi from the root along falsified clauses
        v = dag.root
        while dag.nodes[v].kind == "I":
            nd = dag.nodes[v]
            p = nd.pivot
            val = self._val(p)
            if val == 0:
                return -p, "3"
            v = nd.left if val == -1 else nd.right
        raise SolverError(f"P_pi leaf {sorted_lits(dag.nodes[v].clause)} reached without a conflict "
                          f"(cplus has {len(cplus)} literals, |M| = {len(m)})")

    def _blocked_decision(self, pi, tri) -> int:
        n = self.n
        m = pi.minimal
        a, b, c = tri
        rots = [(a, b, c), (b, c, a), (c, a, b)]
        outside = [t for t in tri if t not in m]
        if outside:
            i, j, k = next(r for r in rots if r[2] == outside[0])
            order = [(i, j)]
        else:
            i, j, k = rots[0]
            order = [(i, j), (j, k)]
        for x, y in order:
            lit = order_lit(x, y, n)
            if self.value[abs(lit)] == 0:
                return lit
        raise SolverError(f"blocked axiom {tri} has no unassigned branching variable")

    def _chord_decision(self, tau) -> int:
        """tau has a cycle of length at least four: branch on a chord of a
        shortest cycle, which shortens it whichever way it is set."""
        n = self.n
        succ = {}
        for a, b in tau:
            succ.setdefault(a, []).append(b)
        best = None
        for s in range(n):
            prev = {s: None}
            frontier = [s]
            found = False
            while frontier and not found:
                nxt = []
                for u in frontier:
                    for w in sorted(succ.get(u, ())):
                        if w == s:
                            cyc = [u]
                            while prev[cyc[-1]] is not None:
                                cyc.append(prev[cyc[-1]])
                            cyc.reverse()
                            if best is None or len(cyc) < len(best):
                                best = cyc
                            found = True
                            break
                        if w not in prev:
                            prev[w] = u
                            nxt.append(w)
                    if found:
                        break
                frontier = nxt
        if best is None or len(best) < 4:
            raise SolverError("tau is inconsistent but no long cycle was found")
        return order_lit(best[0], best[2], n)

    # -- search ------------------------------------------------------------------

    def _handle_conflict(self, cid: int) -> Clause:
        self.stats.conflicts += 1
        self.trace.events.append(("C", cid))
        steps = analyze_conflict(self.clauses[cid], self.trail, self.reasons, self.clause_of)
        if self.learning != "none":
            for _, _, res in steps:
                if res in self.tclauses:
                    self._learn(res)
            if self.learning == "input" and steps:
                self._learn(steps[-1][2])
        return steps[-1][2] if steps else self.clauses[cid]

    def _decide(self, lit: int) -> None:
        self.stats.decisions += 1
        if self.max_decisions is not None and self.stats.decisions > self.max_decisions:
            raise SolverError(f"decision budget {self.max_decisions} exhausted")
        self.level_start.append(len(self.trail))
        self.trace.events.append(("D", lit))
        self._assign(lit, None)

    def _backtrack(self, level: int) -> None:
        self._undo_to(level)
        self.stats.backtracks += 1
        self.trace.events.append(("B", level))

    def solve(self) -> Trace:
        """Run the search to completion.  Raises if it finds a model."""
        # explicit stack of frames: [decision literal, stage, first result]
        frames: list[list] = []
        result: Clause | None = None
        while True:
            if result is None:
                cid = self.unit_propagate()
                if cid is not None:
                    result = self._handle_conflict(cid)
                else:
                    if all(self.value[v] != 0 for v in range(1, self.nv + 1)):
                        raise SolverError("the search found a satisfying assignment")
                    lit, rule = self.choose_decision()
                    self.stats.rule_counts[rule] += 1
                    frames.append([lit, 1, None])
                    self._decide(lit)
                    continue
            # a branch finished with `result`; unwind
            if not frames:
                break
            frame = frames[-1]
            lit = frame[0]
            level = len(frames) - 1
            self._backtrack(level)
            if frame[1] == 1:
                if -lit in result:
                    frame[1] = 2
                    frame[2] = result
                    self._decide(-lit)
                    result = None
                    continue
                frames.pop()
            else:
                frames.pop()
                if lit in result:
                    result = resolve(frame[2], result, -lit)
        if result:
            raise SolverError(f"search ended with a non-empty clause {sorted_lits(result)}")
        self.trace.complete = True
        return self.trace


def solve_ggt(n: int, guards: GuardFunctions, learning: str = "transitivity",
              max_decisions: int | None = None) -> tuple[str, Trace, SolverStats]:
    s = GgtSolver(n, guards, learning, max_decisions)
    trace = s.solve()
    return "UNSAT", trace, s.stats


def trace_to_proof(trace: Trace, f: CnfFormula) -> Proof:
    """Replay a complete trace into a tree proof with lemma leaves.

    Conflicts become input chains over the reasons of propagated literals,
    decisions become resolutions on the decision variable.  When the second
    branch of a decision does not use the flipped literal, the decision node
    is a degenerate inference that passes that branch through, which keeps the
    lemmas learned in the first branch inside the tree.
    """
    if not trace.complete:
        raise TraceError("trace does not end in UNSAT")
    clauses = list(f.clauses)
    m = len(clauses)
    nodes: list[ProofNode] = []
    learned_node: dict[int, int] = {}  # clause id -> proof node
    chain_clauses: dict[Clause, int] = {}
    index: dict[Clause, int] = {}
    trail: list[int] = []
    reasons: dict[int, int] = {}
    level_start: list[int] = []
    frames: list[list] = []  # [lit, stage, first-branch node]
    result: int | None = None
    pending_learn: list[Clause] = []

    def leaf(cid: int) -> int:
        if cid < m:
            nodes.append(ProofNode("A", clauses[cid], ref=cid))
        else:
            if cid not in learned_node:
                raise TraceError(f"reason {cid + 1} is used before it is learned")
            nodes.append(ProofNode("L", clauses[cid], ref=learned_node[cid]))
        return len(nodes) - 1

    for pos, ev in enumerate(trace.events):
        tag = ev[0]
        if tag == "P":
            _, lit, cid = ev
            if cid >= len(clauses):
                raise TraceError(f"event {pos + 1}: unknown reason clause {cid + 1}")
            if lit not in clauses[cid]:
                raise TraceError(f"event {pos + 1}: reason does not contain {lit}")
            trail.append(lit)
            reasons[abs(lit)] = cid
        elif tag == "D":
            lit = ev[1]
            if frames and frames[-1][1] == "await" and frames[-1][0] == -lit:
                frames[-1][1] = "second"
            else:
                frames.append([lit, "first", None])
            level_start.append(len(trail))
            trail.append(lit)
        elif tag == "C":
            cid = ev[1]
            steps = analyze_conflict(clauses[cid], trail, reasons, clauses.__getitem__)
            cur = leaf(cid)
            chain_clauses.clear()
            chain_clauses[clauses[cid]] = cur
            for piv, rcid, res in steps:
                r = leaf(rcid)
                nodes.append(ProofNode("R", res, left=cur, right=r, pivot=piv))
                cur = len(nodes) - 1
                chain_clauses.setdefault(res, cur)
            result = cur
        elif tag == "L":
            c = ev[1]
            if c not in chain_clauses:
                raise TraceError(f"event {pos + 1}: learned clause was not derived by the last conflict")
            clauses.append(c)
            learned_node[len(clauses) - 1] = chain_clauses[c]
        elif tag == "B":
            level = ev[1]
            if result is None or not frames or level != len(frames) - 1:
                raise TraceError(f"event {pos + 1}: backtrack does not close a branch")
            pos_ = level_start[level]
            for lit in trail[pos_:]:
                reasons.pop(abs(lit), None)
            del trail[pos_:]
            del level_start[level:]
            frame = frames[-1]
            lit = frame[0]
            rc = nodes[result].clause
            if frame[1] == "first":
                if -lit in rc:
                    frame[1] = "await"
                    frame[2] = result
                    result = None
                else:
                    frames.pop()
            elif frame[1] == "second":
                frames.pop()
                left = frame[2]
                lc = nodes[left].clause
                if lit in rc:
                    nodes.append(ProofNode("R", resolve(lc, rc, -lit), left=left, right=result, pivot=-lit))
                else:
                    nodes.append(ProofNode("D", degenerate_resolve(lc, rc, -lit), left=left,
                                           right=result, pivot=-lit))
                result = len(nodes) - 1
            else:
                raise TraceError(f"event {pos + 1}: backtrack while awaiting the second branch")
        else:
            raise TraceError(f"event {pos + 1}: unknown event {tag!r}")
    if frames or result is None:
        raise TraceError("trace ends inside an open branch")
    return _compact(Proof(f, nodes))


def _compact(p: Proof) -> Proof:
    """Drop nodes outside the root's tree, re-deriving lemma targets that fell
    outside it by copying their subtrees in place."""
    nodes = p.nodes
    out: list[ProofNode] = []
    where: dict[int, int] = {}

    def emit(root: int) -> int:
        stack = [(root, False)]
        res: list[int] = []
        while stack:
            v, done = stack.pop()
            nd = nodes[v]
            if nd.kind == "A":
                out.append(ProofNode("A", nd.clause, ref=nd.ref))
            elif nd.kind == "L":
                tgt = nd.ref
                if tgt in where:
                    out.append(ProofNode("L", nd.clause, ref=where[tgt]))
                else:
                    # target lies outside the kept tree; derive it here
                    res.append(emit(tgt))
                    continue
            elif not done:
                stack.append((v, True))
                stack.append((nd.right, False))
                stack.append((nd.left, False))
                continue
            else:
                r = res.pop()
                l = res.pop()
                out.append(ProofNode(nd.kind, nd.clause, left=l, right=r, pivot=nd.pivot))
            where.setdefault(v, len(out) - 1)
            res.append(len(out) - 1)
        return res[-1]

    emit(len(nodes) - 1)
    return Proof(p.formula, out)
