"""Regular refutations of guarded xor-ified pebbling formulas.

Vertex-level derivations (clauses over one literal per graph vertex) are
translated block by block into derivations over the xor-ified variables: each
resolution on a vertex u becomes a tree of 2^k - 1 resolutions on
x_{u,1}, ..., x_{u,k}.  The left-to-right engine starts from the translation of
the sink contradiction and repeatedly replaces the leftmost unfinished leaf by
a translated depth-first elimination derivation, patched against the guards,
or by a short template that learns one blocking pebbling clause.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field

from poolres.families import (
    ParameterError,
    PointedDag,
    gen_gpeb,
    gen_peb_xor,
    num_graph_vertices,
    peb_var,
)
from poolres.formula import Clause, sorted_lits
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


# ---------------------------------------------------------------------------
# graph regions


def region(g: PointedDag, w: int, cut=()) -> frozenset:
    """Vertices of G restricted to w, with the in-edges of `cut` removed."""
    cut = set(cut)
    seen = {w}
    stack = [w]
    while stack:
        x = stack.pop()
        if x in cut:
            continue
        for p in g.preds[x]:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return frozenset(seen)


def _induced(g: PointedDag, vs: frozenset, sink: int, cut=()) -> PointedDag:
    cut = set(cut)
    es = frozenset((a, b) for a, b in g.edges if a in vs and b in vs and b not in cut)
    return PointedDag(vs, es, sink)


def restrict_to(g: PointedDag, w: int) -> PointedDag:
    """The subgraph of vertices from which w is reachable, with sink w."""
    if w not in g.vertices:
        raise ParameterError(f"{w} is not a vertex")
    return _induced(g, region(g, w), w)


def cut_vertex(g: PointedDag, w: int) -> PointedDag:
    """Make w a source; vertices that then miss the sink are dropped."""
    if w not in g.vertices:
        raise ParameterError(f"{w} is not a vertex")
    return _induced(g, region(g, g.sink, (w,)), g.sink, (w,))


def independent_ancestors(g: PointedDag, u: int, v: int, w: int) -> bool:
    """Each of u, v reaches w along a path avoiding the other."""
    if len({u, v, w}) != 3:
        raise ParameterError("independent_ancestors needs three distinct vertices")
    return u in region(g, w, (v,)) and v in region(g, w, (u,))


def avoiding_path(g: PointedDag, w: int, target: int, avoid) -> list[int] | None:
    """Shortest path from w back to target through predecessors, never entering
    `avoid`; ties go to the smallest vertex."""
    avoid = set(avoid)
    parent = {w: None}
    queue = deque([w])
    while queue:
        x = queue.popleft()
        if x == target:
            path = []
            while x is not None:
                path.append(x)
                x = parent[x]
            return path[::-1]
        for p in g.preds[x]:
            if p not in parent and p not in avoid:
                parent[p] = x
                queue.append(p)
    return None


def divergence_vertex(g: PointedDag, w: int, targets) -> tuple[int, tuple[int, int]]:
    """A vertex f on exactly two of the three avoiding paths from w.

    Returns f and the two targets whose paths contain it, such that those two
    targets are independent ancestors of f and f and the third target are
    independent ancestors of w.
    """
    targets = tuple(targets)
    if len(set(targets)) != 3 or w in targets:
        raise ParameterError("divergence_vertex needs three distinct targets other than w")
    paths = []
    for i, t in enumerate(targets):
        p = avoiding_path(g, w, t, [x for j, x in enumerate(targets) if j != i])
        if p is None:
            raise ConstructionError(f"no path from {w} to {t} avoiding the other targets")
        paths.append(p)
    d = 0
    while all(d < len(p) for p in paths) and len({p[d] for p in paths}) == 1:
        d += 1
    groups: dict[int, list[int]] = {}
    for i, p in enumerate(paths):
        groups.setdefault(p[d], []).append(i)
    candidates = []
    for idx in groups.values():
        if len(idx) == 2:
            i, j = idx
            e = d
            while e + 1 < min(len(paths[i]), len(paths[j])) and paths[i][e + 1] == paths[j][e + 1]:
                e += 1
            candidates.append((paths[i][e], (i, j)))
    # fall back to any vertex on exactly two paths, nearest to w first
    for i in range(3):
        for x in paths[i][1:]:
            on = tuple(j for j in range(3) if x in paths[j])
            if len(on) == 2:
                candidates.append((x, on))
    for f, (i, j) in candidates:
        third = 3 - i - j
        x, y, z = targets[i], targets[j], targets[third]
        if f in targets:
            continue
        if independent_ancestors(g, x, y, f) and independent_ancestors(g, f, z, w):
            return f, (x, y)
    raise ConstructionError(f"no divergence vertex for {w} and {targets}")


# ---------------------------------------------------------------------------
# vertex-level derivations and their xor translation


def _pos(u: int) -> int:
    return u + 1


def _neg(u: int) -> int:
    return -(u + 1)


class VertexDerivation:
    """Derivation over vertex literals (u+1 / -(u+1)); nodes are list entries."""

    def __init__(self):
        self.nodes: list[tuple] = []  # ('leaf', clause, tag) | ('res', l, r, vertex)
        self.clauses: list[frozenset] = []

    def leaf(self, lits, tag=None) -> int:
        self.nodes.append(("leaf", frozenset(lits), tag))
        self.clauses.append(frozenset(lits))
        return len(self.nodes) - 1

    def res(self, a: int, b: int, u: int) -> int:
        """Resolve on vertex u; either argument order is accepted."""
        ca, cb = self.clauses[a], self.clauses[b]
        if _pos(u) in cb and _neg(u) in ca:
            a, b, ca, cb = b, a, cb, ca
        if _pos(u) not in ca or _neg(u) not in cb:
            raise ConstructionError(f"vertex {u} does not clash")
        c = (ca - {_pos(u)}) | (cb - {_neg(u)})
        if any(-x in c for x in c):
            raise ConstructionError("tautological vertex resolvent")
        self.nodes.append(("res", a, b, u))
        self.clauses.append(c)
        return len(self.nodes) - 1


def vertex_of(var: int, k: int) -> int:
    return (abs(var) - 1) // k


def split_blocks(c: Clause, k: int, graph_vars: int | None = None) -> dict[int, frozenset]:
    """Group the literals of an xor-ified clause by vertex."""
    out: dict[int, set] = {}
    for x in c:
        if graph_vars is not None and abs(x) > graph_vars:
            raise ParameterError(f"literal {x} is not a graph variable")
        out.setdefault(vertex_of(x, k), set()).add(x)
    return {u: frozenset(s) for u, s in out.items()}


def block_sign(block: frozenset, u: int, k: int) -> int:
    """+1 for a clause of x_u^{k+} (even negations), -1 for the odd parity."""
    if {abs(x) for x in block} != {peb_var(u, m, k) for m in range(1, k + 1)}:
        raise ParameterError(f"not a full block of vertex {u}")
    return 1 if sum(1 for x in block if x < 0) % 2 == 0 else -1


def in_translation(target: Clause, vclause: frozenset, k: int) -> bool:
    """Whether target is one of the clauses of the xor translation of vclause."""
    try:
        blocks = split_blocks(target, k)
        if set(blocks) != {abs(x) - 1 for x in vclause}:
            return False
        return all(block_sign(blocks[abs(x) - 1], abs(x) - 1, k) == (1 if x > 0 else -1)
                   for x in vclause)
    except ParameterError:
        return False


def _xor_tree(out, u: int, k: int, even_side, odd_side):
    """Resolve on x_{u,1}, ..., x_{u,k} in turn; leaves with an even number of
    negations come from even_side(X), the others from odd_side(X)."""

    def sub(d, prefix):
        if d == k:
            x = frozenset(s * peb_var(u, m + 1, k) for m, s in enumerate(prefix))
            return even_side(x) if prefix.count(-1) % 2 == 0 else odd_side(x)
        a = sub(d + 1, prefix + (1,))
        b = sub(d + 1, prefix + (-1,))
        return out.resolve(a, b, peb_var(u, d + 1, k))

    return sub(0, ())


def translate(vd: VertexDerivation, root: int, target: Clause, k: int, out, make_leaf,
              share: bool = True) -> int:
    """Xor translation of a vertex derivation, deriving `target` in `out`.

    `make_leaf(vleaf_index, clause)` supplies the leaves.  With `share`, nodes
    are memoised on (vertex node, clause), so a vertex dag becomes a dag;
    without it the output is a tree.
    """
    memo: dict = {}

    def go(v: int, tgt: Clause) -> int:
        key = (v, tgt)
        if share and key in memo:
            return memo[key]
        nd = vd.nodes[v]
        if nd[0] == "leaf":
            res = make_leaf(v, tgt)
        else:
            _, a, b, u = nd
            blocks = split_blocks(tgt, k)
            ca, cb = vd.clauses[a], vd.clauses[b]
            base_a = frozenset().union(*(blocks[abs(x) - 1] for x in ca if abs(x) - 1 != u))
            base_b = frozenset().union(*(blocks[abs(x) - 1] for x in cb if abs(x) - 1 != u))
            res = _xor_tree(out, u, k, lambda x: go(a, base_a | x), lambda x: go(b, base_b | x))
        memo[key] = res
        return res

    if not in_translation(target, vd.clauses[root], k):
        raise ParameterError(f"{sorted_lits(target)} is not in the translation of the conclusion")
    return go(root, frozenset(target))


class _TreeOut:
    """Builder with the Dag interface that produces a TNode tree."""

    def __init__(self):
        self.nodes: list[TNode] = []

    def resolve(self, a: int, b: int, pivot: int) -> int:
        self.nodes.append(inference(self.nodes[a], self.nodes[b], pivot))
        return len(self.nodes) - 1

    def add(self, node: TNode) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1


def _vertex_literal_derivation(lits_left, lits_right, u):
    vd = VertexDerivation()
    a = vd.leaf(lits_left)
    b = vd.leaf(lits_right)
    return vd, vd.res(a, b, u)


def xor_contra(u: int, k: int) -> Dag:
    """Tree refutation of the two translations of x_u and its negation."""
    if k < 1:
        raise ParameterError("xor width must be >= 1")
    vd, root = _vertex_literal_derivation([_pos(u)], [_neg(u)], u)
    d = Dag()
    translate(vd, root, frozenset(), k, d, lambda v, c: d.axiom(c))
    return d


def xor_step(c, d, u: int, k: int, target: Clause) -> Dag:
    """Derive target (a clause of the translation of c | d) from clauses of the
    translations of c | x_u and d | not x_u."""
    c, d = frozenset(c), frozenset(d)
    if {abs(x) for x in c | d} & {u + 1}:
        raise ParameterError("side clauses must not mention the pivot vertex")
    vd, root = _vertex_literal_derivation(c | {_pos(u)}, d | {_neg(u)}, u)
    out = Dag()
    translate(vd, root, frozenset(target), k, out, lambda v, cl: out.axiom(cl))
    return out


def xor_uv_implies_w(w: int, u: int, v: int, k: int, target: Clause) -> Dag:
    """Derive a clause of the translation of x_w from those of x_u, x_v and the
    implication clause; x_v-leaves are reached through x_{v,i} pivots only."""
    vd = VertexDerivation()
    step = vd.res(vd.leaf([_neg(u), _neg(v), _pos(w)]), vd.leaf([_pos(u)]), u)
    root = vd.res(vd.leaf([_pos(v)]), step, v)
    out = Dag()
    translate(vd, root, frozenset(target), k, out, lambda i, cl: out.axiom(cl))
    return out


def elimination_derivation(g: PointedDag, w: int, free=()) -> tuple[VertexDerivation, int]:
    """Depth-first vertex elimination deriving x_w, keeping the negated free
    vertices as side literals.  Leaves are tagged ('alpha', s) / ('beta', x)."""
    free = set(free)
    vd = VertexDerivation()
    memo: dict[int, int] = {}

    def derive(x: int) -> int:
        if x in memo:
            return memo[x]
        p = g.preds[x]
        if not p:
            node = vd.leaf([_pos(x)], ("alpha", x))
        else:
            a, b = p
            node = vd.leaf([_neg(a), _neg(b), _pos(x)], ("beta", x))
            for q in (a, b):
                if q not in free:
                    node = vd.res(derive(q), node, q)
        memo[x] = node
        return node

    # iterative warm-up keeps the recursion shallow on deep graphs
    reach = region(g, w, free)
    for x in g.topo_order():
        if x in reach and x not in free:
            derive(x)
    return vd, derive(w)


FORM_KINDS = {0: "I", 1: "II", 2: "III"}
EXTENDED = "X"


def make_form(free, w: int) -> tuple:
    """('I', w), ('II', u, w), ('III', u, v, w), or ('X', *free, w) beyond two."""
    free = tuple(sorted(free))
    return (FORM_KINDS.get(len(free), EXTENDED), *free, w)


def form_clause(form: tuple) -> frozenset:
    """Vertex clause of a form: the negated free vertices and the head."""
    return frozenset([_neg(x) for x in form[1:-1]] + [_pos(form[-1])])


def check_form(g: PointedDag, form: tuple) -> None:
    kind = form[0]
    w = form[-1]
    if w not in g.vertices:
        raise ParameterError(f"{w} is not a vertex")
    if kind == "I" and len(form) == 2:
        return
    if kind == "II" and len(form) == 3:
        if not g.is_ancestor(form[1], w):
            raise ParameterError(f"{form[1]} is not an ancestor of {w}")
        return
    if kind == "III" and len(form) == 4:
        if len(set(form[1:])) != 3 or not independent_ancestors(g, form[1], form[2], w):
            raise ParameterError(f"{form[1]}, {form[2]} are not independent ancestors of {w}")
        return
    if kind == EXTENDED and len(form) >= 5:
        free = set(form[1:-1])
        if len(free) != len(form) - 2 or w in free:
            raise ParameterError(f"repeated vertex in {form!r}")
        for x in free:
            if x not in region(g, w, free - {x}):
                raise ParameterError(f"{x} reaches {w} only through the other free vertices")
        return
    raise ParameterError(f"bad form {form!r}")


def protected_vertices(g: PointedDag, form: tuple) -> frozenset:
    """Vertices whose variables must stay off the branch of an unfinished leaf."""
    free = form[1:-1]
    return region(g, form[-1], free) - set(form[1:])


def reg_xor_peb_derivation(g: PointedDag, k: int, form: tuple, target: Clause) -> Dag:
    """Regular dag deriving target from the translated source and implication
    clauses of the form's subgraph; pivots lie on protected vertices only."""
    check_form(g, form)
    vd, root = elimination_derivation(g, form[-1], form[1:-1])
    if vd.clauses[root] != form_clause(form):
        raise ConstructionError("elimination lost a free vertex")
    d = Dag()
    translate(vd, root, frozenset(target), k, d,
              lambda v, c: d.axiom(c, payload=vd.nodes[v][2]))
    return d


# ---------------------------------------------------------------------------
# the left-to-right engine

CASE_LEARNED, CASE_GUARDED, CASE_DERIVE, CASE_BLOCKED = "i", "ii", "iii", "iv"


@dataclass
class GpebLog:
    steps: list = field(default_factory=list)
    learned_timeline: list = field(default_factory=list)
    templates: int = 0
    unfinished_added: int = 0
    max_new_leaves: int = 0
    guard_collisions: int = 0
    extended: int = 0
    max_unfinished: int = 0

    def to_json(self) -> dict:
        return {
            "templates": self.templates,
            "unfinished_added": self.unfinished_added,
            "max_new_leaves": self.max_new_leaves,
            "guard_collisions": self.guard_collisions,
            "extended": self.extended,
            "max_unfinished": self.max_unfinished,
            "learned": len(self.learned_timeline),
            "steps": self.steps,
        }


class GpebState:
    """Partial refutation with unfinished leaves of forms I, II and III."""

    def __init__(self, g: PointedDag, k: int, rho, mode: str = "regrti", check_every: int = 0):
        if k < 1:
            raise ParameterError("xor width must be >= 1")
        if mode not in ("pool", "regrti"):
            raise ParameterError(f"unknown mode {mode!r}")
        self.g = g
        self.k = k
        self.rho = rho
        self.mode = mode
        self.check_every = check_every
        self.formula = gen_gpeb(g, k, rho)
        self.graph_vars = num_graph_vertices(g) * k
        self.peb = frozenset(gen_peb_xor(g, k).clauses)
        self.learned: dict[Clause, TNode] = {}
        self.log = GpebLog()
        self.stack: list[TNode] = []
        self._protected: dict = {}
        self._forms: dict = {}
        self._regions: dict = {}
        self._anc = {x: frozenset(g.ancestors(x)) for x in g.vertices}
        self.root = self._initial()

    # -- helpers ---------------------------------------------------------------

    def is_anc(self, x: int, y: int) -> bool:
        return x in self._anc[y]

    def protected(self, form: tuple) -> frozenset:
        p = self._protected.get(form)
        if p is None:
            p = self._protected[form] = self.reg(form[-1], form[1:-1]) - set(form[1:])
        return p

    def guard(self, c: Clause) -> int:
        return abs(self.rho[c])

    def _learn(self, c: Clause, node: TNode) -> None:
        if c not in self.learned:
            self.learned[c] = node
            self.log.learned_timeline.append(sorted_lits(c))

    def guarded_derivation(self, c: Clause) -> TNode:
        y = self.guard(c)
        node = inference(TNode("A", c | {y}), TNode("A", c | {-y}), y)
        self._learn(c, node)
        return node

    def check_condition_d(self, form: tuple, cplus: frozenset) -> None:
        bad = {vertex_of(x, self.k) for x in cplus if abs(x) <= self.graph_vars}
        bad &= self.protected(form)
        if bad:
            raise ConstructionError(f"condition d fails for {form}: vertices {sorted(bad)} on branch")

    def form_of(self, vclause: frozenset) -> tuple | None:
        """The form a template leaf clause stands for, or None if it has none."""
        if vclause in self._forms:
            return self._forms[vclause]
        pos = [abs(x) - 1 for x in vclause if x > 0]
        neg = sorted(abs(x) - 1 for x in vclause if x < 0)
        form = None
        if len(pos) == 1 and pos[0] not in neg:
            form = make_form(neg, pos[0])
            try:
                check_form(self.g, form)
            except ParameterError:
                form = None
        self._forms[vclause] = form
        return form

    def leaf_form(self, vclause: frozenset) -> tuple:
        form = self.form_of(vclause)
        if form is None:
            raise ConstructionError(f"template leaf {sorted(vclause)} has no valid form")
        return form

    def _unfinished(self, form: tuple, clause: Clause) -> TNode:
        return TNode("U", clause, meta=(form, None))

    # -- initial refutation ------------------------------------------------------

    def _initial(self) -> TNode:
        t = self.g.sink
        vd = VertexDerivation()
        root = vd.res(vd.leaf([_pos(t)], "U"), vd.leaf([_neg(t)], "sink"), t)
        out = _TreeOut()

        def make_leaf(v, c):
            if vd.nodes[v][2] == "sink":
                return out.add(self.guarded_derivation(c))
            return out.add(self._unfinished(("I", t), c))

        top = out.nodes[translate(vd, root, frozenset(), self.k, out, make_leaf, share=False)]
        leaves = self._leaves(top)
        for leaf in leaves:
            form = leaf.meta[0]
            cp = branch_literals(leaf)
            self.check_condition_d(form, cp)
            leaf.meta = (form, cp)
        self.stack = [x for x in reversed(leaves)]
        self.log.unfinished_added += len(leaves)
        return top

    @staticmethod
    def _leaves(root: TNode) -> list[TNode]:
        out = []
        stack = [root]
        while stack:
            v = stack.pop()
            if v.kind == "I":
                stack.append(v.right)
                stack.append(v.left)
            elif v.kind == "U":
                out.append(v)
        return out

    # -- patching the elimination derivation ---------------------------------------

    def classify(self, dag: Dag, cplus: frozenset) -> tuple[dict, list]:
        below = dag.pivots_below()
        cvars = {abs(x) for x in cplus}
        tags = {}
        blocked = []
        for v in sorted(dag.reachable()):
            nd = dag.nodes[v]
            if nd.kind != "A":
                continue
            c = nd.clause
            if c in self.learned:
                tags[v] = (CASE_LEARNED, None)
                continue
            y = self.guard(c)
            if y in cvars:
                tags[v] = (CASE_GUARDED, y if y in cplus else -y)
            elif not (below[v] >> y) & 1:
                tags[v] = (CASE_DERIVE, y)
            else:
                tags[v] = (CASE_BLOCKED, y)
                blocked.append(v)
        return tags, blocked

    def patched(self, dag: Dag, tags: dict) -> Dag:
        out = Dag()
        remap = {}
        for v in sorted(dag.reachable()):
            nd = dag.nodes[v]
            if nd.kind == "I":
                remap[v] = out.resolve(remap[nd.left], remap[nd.right], nd.pivot)
                continue
            tag, y = tags[v]
            if tag == CASE_LEARNED:
                remap[v] = out.external(nd.clause, self.learned[nd.clause])
            elif tag == CASE_GUARDED:
                remap[v] = out.axiom(nd.clause | {y})
            elif tag == CASE_DERIVE:
                remap[v] = out.resolve(out.axiom(nd.clause | {y}), out.axiom(nd.clause | {-y}), y)
            else:
                raise ConstructionError("patching a blocked axiom")
        return out

    def _on_input(self, c: Clause, node: TNode) -> None:
        if c in self.peb:
            self._learn(c, node)

    def expand(self, leaf: TNode) -> None:
        form, cplus = leaf.meta
        if self.check_every and branch_literals(leaf) != cplus:
            raise ConstructionError("cached branch literals went stale")
        self.check_condition_d(form, cplus)
        dag = reg_xor_peb_derivation(self.g, self.k, form, leaf.clause)
        tags, blocked = self.classify(dag, cplus)
        if not blocked:
            self._splice_patch(leaf, dag, tags)
            return
        for v in blocked:
            nd = dag.nodes[v]
            if self._splice_template(leaf, nd.clause, nd.payload):
                return
        raise ConstructionError(f"every blocked leaf collides with its template at {form}")

    def _splice_patch(self, leaf: TNode, dag: Dag, tags: dict) -> None:
        pd = self.patched(dag, tags)
        if self.mode == "pool":
            frag = dag_to_tree_pool(pd)
        else:
            frag = dag_to_tree_input_lemmas(pd, check=self.check_every > 0)
        sub = fragment_to_tnodes(frag, self._on_input)
        extra = sub.clause - leaf.clause
        if not sub.clause >= leaf.clause or not extra <= leaf.meta[1]:
            raise ConstructionError("patched conclusion is not between C and C+")
        replace_node(leaf, sub)
        if leaf is self.root:
            self.root = sub
        for lit in sorted_lits(extra):
            propagate_literal(sub.parent, lit)
        counts: dict = {}
        for tag, _ in tags.values():
            counts[tag] = counts.get(tag, 0) + 1
        self.log.steps.append({"kind": "patch", "form": leaf.meta[0][0], "size": len(frag),
                               "cases": counts})

    # -- templates -------------------------------------------------------------

    def template(self, form: tuple, payload) -> tuple[VertexDerivation, int, str]:
        """Vertex-level template deriving the form's clause with the blocked
        clause as a tagged leaf.  Returns (derivation, root, case label)."""
        g = self.g
        vd = VertexDerivation()
        kind, w = form[0], form[-1]

        def L(*lits):
            return vd.leaf(lits)

        if payload[0] == "alpha":
            e = payload[1]
            dl = vd.leaf([_pos(e)], "D")
            if kind == "I":
                return vd, vd.res(dl, L(_neg(e), _pos(w)), e), "I.alpha"
            if kind == "II":
                u = form[1]
                return vd, vd.res(dl, L(_neg(e), _neg(u), _pos(w)), e), "II.alpha"
            u, v = self._order_uv(form)
            return vd, self._diverge(vd, dl, u, v, e, w), "III.alpha"

        e = payload[1]
        a, b = g.preds[e]
        if self.is_anc(b, a):
            a, b = b, a
        if self.is_anc(b, a):
            raise ConstructionError("predecessors are mutual ancestors")
        dl = vd.leaf([_neg(a), _neg(b), _pos(e)], "D")

        def from_d(q1=(), q2=()):
            r = vd.res(L(_pos(a), *q1), dl, a)
            return vd.res(L(_pos(b), *q2), r, b)

        def finish(r, q3=()):
            if e == w:
                if q3:
                    raise ConstructionError("side literal needs a final step that e = w omits")
                return r
            return vd.res(r, L(_neg(e), _pos(w), *q3), e)

        if kind == "I":
            return vd, finish(from_d()), "I.beta"
        if kind == "II":
            u = form[1]
            if u in (a, b):
                o = b if u == a else a
                return vd, finish(vd.res(L(_pos(o)), dl, o)), "II.beta.u_pred"
            nu = (_neg(u),)
            if self.is_anc(u, a):
                return vd, finish(from_d(q1=nu)), "II.beta.a"
            if self.is_anc(u, b):
                return vd, finish(from_d(q2=nu)), "II.beta.b"
            return vd, finish(from_d(), nu), "II.beta.e"

        u, v = self._order_uv(form)
        if {u, v} == {a, b}:
            return vd, finish(dl), "III.beta.both_pred"
        if u in (a, b) or v in (a, b):
            s, r_ = (u, v) if u in (a, b) else (v, u)
            o = b if s == a else a
            nr = (_neg(r_),)
            if self.is_anc(r_, o):
                return vd, finish(vd.res(L(_pos(o), *nr), dl, o)), "III.beta.one_pred.o"
            return vd, finish(vd.res(L(_pos(o)), dl, o), nr), "III.beta.one_pred.e"
        in_cut = region(g, w, (e,))
        nu, nv = (_neg(u),), (_neg(v),)
        if self.is_anc(u, e) and v in in_cut:
            q = {"q1": nu} if self.is_anc(u, a) else {"q2": nu}
            return vd, finish(from_d(**q), nv), "III.beta.u_above_e"
        if self.is_anc(v, e) and u in in_cut:
            q = {"q1": nv} if self.is_anc(v, a) else {"q2": nv}
            return vd, finish(from_d(**q), nu), "III.beta.v_above_e"
        if u not in in_cut and v not in in_cut:
            if self.is_anc(u, a) and self.is_anc(v, b):
                return vd, finish(from_d(nu, nv)), "III.beta.split"
            if self.is_anc(u, b) and self.is_anc(v, a):
                return vd, finish(from_d(nv, nu)), "III.beta.split"
            if independent_ancestors(g, u, v, a):
                return vd, finish(from_d(q1=nu + nv)), "III.beta.both_a"
            if independent_ancestors(g, u, v, b):
                return vd, finish(from_d(q2=nu + nv)), "III.beta.both_b"
            raise ConstructionError(f"no side-literal placement for {form} at {e}")
        if not self.is_anc(u, e) and not self.is_anc(v, e):
            if e == w:
                raise ConstructionError("divergence case with e = w")
            return vd, self._diverge(vd, from_d(), u, v, e, w), "III.beta.diverge"
        raise ConstructionError(f"no template case for {form} at {e}")

    def _order_uv(self, form: tuple) -> tuple[int, int]:
        u, v = form[1], form[2]
        if self.is_anc(v, u):
            u, v = v, u
        return u, v

    def _diverge(self, vd: VertexDerivation, xe: int, u: int, v: int, e: int, w: int) -> int:
        """Turn a derivation of x_e into one of (not u, not v, w) through the
        divergence vertex of the paths from w to u, v and e."""
        f, pair = divergence_vertex(self.g, w, (u, v, e))
        L = vd.leaf
        if set(pair) == {u, v}:
            r = vd.res(xe, L([_neg(e), _neg(f), _pos(w)]), e)
            return vd.res(L([_neg(u), _neg(v), _pos(f)]), r, f)
        x = pair[0] if pair[1] == e else pair[1]
        z = v if x == u else u
        r = vd.res(xe, L([_neg(x), _neg(e), _pos(f)]), e)
        return vd.res(r, L([_neg(z), _neg(f), _pos(w)]), f)

    def searched_templates(self, form: tuple, payload):
        """Small derivations of the form's clause that start from the blocked
        clause: x_e from it and side leaves, then W from x_e directly or through
        one bridge vertex f.  Negated free vertices may ride on any leaf."""
        g = self.g
        free = tuple(form[1:-1])
        w = form[-1]
        e = payload[1]
        subsets = [()] + [(p,) for p in free] + ([free] if len(free) == 2 else [])

        def neg(ps):
            return [_neg(p) for p in ps]

        xe_opts = []
        if payload[0] == "alpha":
            xe_opts.append(lambda vd: vd.leaf([_pos(e)], "D"))
        else:
            dl = [_neg(p) for p in g.preds[e]] + [_pos(e)]
            side = [p for p in g.preds[e] if p not in free]
            orders = [side] if len(side) < 2 else [side, side[::-1]]
            for order in orders:
                for combo in itertools.product(subsets, repeat=len(order)):
                    def xe(vd, order=order, combo=combo):
                        r = vd.leaf(dl, "D")
                        for p, ns in zip(order, combo):
                            r = vd.res(vd.leaf([_pos(p)] + neg(ns)), r, p)
                        return r
                    xe_opts.append(xe)
        bridges = []
        if e == w:
            bridges.append(("direct", lambda vd, x: x))
        else:
            for ns in subsets:
                bridges.append(("edge", lambda vd, x, ns=ns:
                                vd.res(x, vd.leaf([_neg(e), _pos(w)] + neg(ns)), e)))
            fs = sorted(self.reg(w, free) - {e, w} - set(free))
            for f in fs:
                for n1, n2 in itertools.product(subsets, subsets):
                    def chain(vd, x, f=f, n1=n1, n2=n2):
                        r = vd.res(x, vd.leaf([_neg(e), _pos(f)] + neg(n1)), e)
                        return vd.res(r, vd.leaf([_neg(f), _pos(w)] + neg(n2)), f)

                    def fork(vd, x, f=f, n1=n1, n2=n2):
                        r = vd.res(x, vd.leaf([_neg(e), _neg(f), _pos(w)] + neg(n2)), e)
                        return vd.res(vd.leaf([_pos(f)] + neg(n1)), r, f)

                    bridges.append(("chain", chain))
                    bridges.append(("fork", fork))
        for name, br in bridges:
            for xe in xe_opts:
                vd = VertexDerivation()
                try:
                    root = br(vd, xe(vd))
                except ConstructionError:
                    continue
                yield vd, root, f"search.{payload[0]}.{name}"

    def reg(self, x: int, cut) -> frozenset:
        key = (x, frozenset(cut))
        r = self._regions.get(key)
        if r is None:
            r = self._regions[key] = region(self.g, x, cut)
        return r

    def vertex_check(self, vd: VertexDerivation, root: int, form: tuple, old: frozenset,
                     guard_vertex: int | None, max_free: int | None = 2) -> str | None:
        """Why a vertex template is unusable at a leaf, or None if it is fine:
        its conclusion, its leaf forms, condition d, and the learned clause's
        guard never being a pivot on the learned clause's branch."""
        if vd.clauses[root] != form_clause(form):
            return "conclusion"
        stack = [(root, old, frozenset())]
        while stack:
            v, seen, pivots = stack.pop()
            nd = vd.nodes[v]
            here = seen | {abs(x) - 1 for x in vd.clauses[v]}
            if nd[0] == "res":
                stack.append((nd[1], here, pivots | {nd[3]}))
                stack.append((nd[2], here, pivots | {nd[3]}))
                continue
            if nd[2] == "D" and guard_vertex is not None and guard_vertex in pivots:
                return "guard"
            lf = self.form_of(vd.clauses[v])
            if lf is None:
                return "form"
            if max_free is not None and len(lf) - 2 > max_free:
                return "width"
            if self.protected(lf) & here:
                return "condition d"
        return None

    def exposed(self, free, x: int, cut) -> list[int]:
        """Free vertices reaching x while avoiding `cut` and the other free ones."""
        free = set(free)
        return sorted(s for s in free if s != x and s in self.reg(x, (free - {s}) | set(cut)))

    def canonical_template(self, form: tuple, payload):
        """x_e from the blocked clause, then one bridge leaf to W.  Each leaf
        carries exactly the free vertices that can reach its head, which keeps
        it clean; the learned clause's branch only pivots on its own vertices."""
        g = self.g
        free = set(form[1:-1])
        w = form[-1]
        e = payload[1]
        vd = VertexDerivation()
        if payload[0] == "alpha":
            r = vd.leaf([_pos(e)], "D")
        else:
            a, b = g.preds[e]
            if self.is_anc(b, a):
                a, b = b, a
            r = vd.leaf([_neg(a), _neg(b), _pos(e)], "D")
            for p in (a, b):
                if p not in free:
                    ns = self.exposed(free, p, ())
                    r = vd.res(vd.leaf([_pos(p)] + [_neg(x) for x in ns]), r, p)
        if e != w:
            ns = self.exposed(free, w, (e,))
            r = vd.res(r, vd.leaf([_neg(e), _pos(w)] + [_neg(x) for x in ns]), e)
        return vd, r, f"canonical.{payload[0]}"

    def choose_template(self, form: tuple, payload, dclause: Clause, old: frozenset):
        """Standard template if it keeps condition d, else the canonical one, else
        a bounded search, all within forms I-III; last the canonical template
        with wider forms."""
        y = self.guard(dclause)
        gv = vertex_of(y, self.k) if y <= self.graph_vars else None
        try:
            standard = [self.template(form, payload)]
        except ConstructionError as exc:
            standard = []
            log.debug("standard template unavailable: %s", exc)
        canon = self.canonical_template(form, payload)
        reasons: dict = {}
        pool = itertools.chain(standard, [canon], self.searched_templates(form, payload))
        for vd, root, label in pool:
            why = self.vertex_check(vd, root, form, old, gv)
            if why is None:
                return vd, root, label
            reasons[why] = reasons.get(why, 0) + 1
        why = self.vertex_check(*canon[:2], form, old, gv, max_free=None)
        if why is None:
            self.log.extended += 1
            return canon[0], canon[1], canon[2] + ".extended"
        log.debug("no template for %s at %s: %s", form, payload, reasons)
        raise ConstructionError(f"canonical template fails ({why}) at {form}")

    def _splice_template(self, leaf: TNode, dclause: Clause, payload) -> bool:
        form, cplus = leaf.meta
        old = frozenset(vertex_of(x, self.k) for x in cplus if abs(x) <= self.graph_vars)
        found = self.choose_template(form, payload, dclause, old)
        if found is None:
            return False
        vd, root, label = found
        out = _TreeOut()
        dnode = []

        copies = []

        def make_leaf(v, c):
            tag = vd.nodes[v][2]
            if tag == "D" and c == dclause:
                node = TNode("D", c) if not dnode else TNode("L", c)
                (copies if dnode else dnode).append(node)
                return out.add(node)
            return out.add(TNode("U", c, meta=(self.leaf_form(vd.clauses[v]), None)))

        top = out.nodes[translate(vd, root, leaf.clause, self.k, out, make_leaf, share=False)]
        if not dnode:
            raise ConstructionError("blocked clause is not a template leaf")
        d = dnode[0]
        # make the learned leaf leftmost; its guard is off its path by the check
        y = self.guard(dclause)
        x = d
        while x.parent is not None:
            p = x.parent
            if abs(p.pivot) == y:
                raise ConstructionError("guard of the learned clause is a pivot on its branch")
            if p.right is x:
                p.left, p.right = p.right, p.left
                p.pivot = -p.pivot
            x = p
        if top.clause != leaf.clause:
            raise ConstructionError("template conclusion differs from the leaf")
        learned = self.guarded_derivation(dclause)
        replace_node(d, learned)
        for c in copies:
            c.target = learned
        replace_node(leaf, top)
        if leaf is self.root:
            self.root = top
        fresh = self._leaves(top)
        for u in fresh:
            ufrom = u.meta[0]
            cp = branch_literals(u)
            self.check_condition_d(ufrom, cp)
            u.meta = (ufrom, cp)
        if len(fresh) >= 2 ** (4 * self.k):
            raise ConstructionError(f"template left {len(fresh)} unfinished leaves")
        self.stack.extend(reversed(fresh))
        self.log.templates += 1
        self.log.unfinished_added += len(fresh)
        self.log.max_new_leaves = max(self.log.max_new_leaves, len(fresh))
        self.log.steps.append({"kind": "template", "case": label, "form": form[0],
                               "new_leaves": len(fresh)})
        return True

    # -- driver ------------------------------------------------------------------

    def step(self) -> bool:
        if not self.stack:
            return False
        self.expand(self.stack.pop())
        self.log.max_unfinished = max(self.log.max_unfinished, len(self.stack))
        return True

    def run(self) -> Proof:
        steps = 0
        while self.step():
            steps += 1
            if self.check_every and steps % self.check_every == 0:
                self.validate()
        cap = self.g.n * 2 ** (3 * (self.k - 1))
        if self.log.templates >= cap:
            raise ConstructionError(f"{self.log.templates} templates, not below {cap}")
        return self.to_proof()

    def to_proof(self) -> Proof:
        if self.stack:
            raise ConstructionError("unfinished leaves remain")
        return tree_to_proof(self.root, self.formula)

    def validate(self) -> None:
        def check(v, cp):
            form, cached = v.meta
            if cp != cached:
                raise ConstructionError("stale branch literals at unfinished leaf")
            if not in_translation(v.clause, form_clause(form), self.k):
                raise ConstructionError(f"leaf clause does not match its form {form}")
            self.check_condition_d(form, cp)

        validate_tree(self.root, check)


@dataclass
class GpebResult:
    proof: Proof
    log: GpebLog
    learned: int


def run_gpeb(g: PointedDag, k: int, rho, mode: str = "regrti", check_every: int = 0) -> GpebResult:
    st = GpebState(g, k, rho, mode, check_every)
    proof = st.run()
    return GpebResult(proof, st.log, len(st.learned))


def refute_gpeb(g: PointedDag, k: int, rho, mode: str = "regrti", check_every: int = 0) -> Proof:
    return run_gpeb(g, k, rho, mode, check_every).proof


def xor_identity_holds(k: int) -> bool:
    """Count identity bounding the leaves a template leaves behind."""
    return 2 * 2 ** (3 * (k - 1)) + 2 ** (2 * (k - 1)) + 2 ** (k - 1) < 2 ** (3 * k)
