"""Mutable proof trees grown left to right, shared by the guarded-formula provers.

A tree starts as a single unfinished leaf.  Provers repeatedly take the
leftmost unfinished leaf and replace it by a finished subtree or by a template
with further unfinished leaves.  Lemma leaves point at earlier tree nodes.
"""

from __future__ import annotations

from poolres.formula import Clause, CnfFormula, sorted_lits
from poolres.proof import Proof, ProofError, ProofNode, resolve


class ConstructionError(ProofError):
    """An internal invariant of the construction was violated."""


class TNode:
    """Mutable tree node.

    kind: 'A' axiom, 'L' lemma (target is another TNode), 'I' inference,
    anything else is an unfinished leaf whose meaning lives in `meta`.
    """

    __slots__ = ("kind", "clause", "left", "right", "parent", "pivot", "target", "meta")

    def __init__(self, kind, clause, left=None, right=None, pivot=0, target=None, meta=None):
        self.kind = kind
        self.clause = clause
        self.left = left
        self.right = right
        self.parent = None
        self.pivot = pivot
        self.target = target
        self.meta = meta
        if left is not None:
            left.parent = self
            right.parent = self

    def __repr__(self):
        return f"TNode({self.kind}, {sorted_lits(self.clause)})"


def inference(left: TNode, right: TNode, pivot: int) -> TNode:
    return TNode("I", resolve(left.clause, right.clause, pivot), left, right, pivot)


def replace_node(old: TNode, new: TNode) -> None:
    par = old.parent
    new.parent = par
    if par is not None:
        if par.left is old:
            par.left = new
        else:
            par.right = new


def branch_literals(node: TNode) -> frozenset:
    """Literals on the branch from the root up to and including the node."""
    out = set()
    v = node
    while v is not None:
        out |= v.clause
        v = v.parent
    return frozenset(out)


def propagate_literal(node: TNode | None, lit: int) -> None:
    """Add lit to clauses from `node` downward until one already holds it."""
    v = node
    while v is not None:
        if lit in v.clause:
            return
        if -lit in v.clause:
            raise ConstructionError(f"propagating {lit} meets its complement")
        if abs(v.pivot) == abs(lit):
            raise ConstructionError(f"propagating {lit} crosses its own pivot")
        v.clause = v.clause | {lit}
        v = v.parent
    raise ConstructionError(f"literal {lit} reached the root unabsorbed")


def fragment_to_tnodes(frag, on_input=None) -> TNode:
    """Build TNodes from a fragment list; `on_input(clause, node)` is called for
    every inference whose two premises are axioms."""
    built: list[TNode] = []
    for item in frag:
        kind = item[0]
        if kind == "A":
            built.append(TNode("A", item[1]))
        elif kind == "X":
            built.append(TNode("L", item[1], target=item[2]))
        elif kind == "L":
            built.append(TNode("L", item[1], target=built[item[2]]))
        else:
            _, c, l, r, piv = item
            node = TNode("I", c, built[l], built[r], piv)
            built.append(node)
            if on_input is not None and built[l].kind == "A" and built[r].kind == "A":
                on_input(c, node)
    return built[-1]


def tree_to_proof(root: TNode, formula: CnfFormula) -> Proof:
    """Postorder flattening; lemma targets must already be emitted."""
    index = formula.index_of()
    nodes: list[ProofNode] = []
    ids: dict[int, int] = {}
    stack = [(root, False)]
    while stack:
        v, done = stack.pop()
        if v.kind == "I" and not done:
            stack.append((v, True))
            stack.append((v.right, False))
            stack.append((v.left, False))
            continue
        if v.kind == "A":
            if v.clause not in index:
                raise ConstructionError(f"leaf {sorted_lits(v.clause)} is not an input clause")
            nodes.append(ProofNode("A", v.clause, ref=index[v.clause]))
        elif v.kind == "L":
            tid = ids.get(id(v.target))
            if tid is None:
                raise ConstructionError("lemma refers to a node to its right")
            nodes.append(ProofNode("L", v.clause, ref=tid))
        elif v.kind == "I":
            r = len(nodes) - 1
            nodes.append(ProofNode("R", v.clause, left=ids[id(v.left)], right=r, pivot=v.pivot))
        else:
            raise ConstructionError("unfinished leaf in final proof")
        ids[id(v)] = len(nodes) - 1
    return Proof(formula, nodes)


def validate_tree(root: TNode, check_leaf=None) -> None:
    """Sound inferences, regular branches, lemmas pointing left.  `check_leaf`
    is called on unfinished leaves with their branch literals."""
    order: dict[int, int] = {}
    counter = 0
    stack = [(root, False, frozenset(), frozenset())]
    lemmas = []
    while stack:
        v, done, pivots, plus = stack.pop()
        if v.kind == "I" and not done:
            var = abs(v.pivot)
            if var in pivots:
                raise ConstructionError(f"irregular branch at pivot {var}")
            if resolve(v.left.clause, v.right.clause, v.pivot) != v.clause:
                raise ConstructionError("unsound inference")
            np_ = pivots | {var}
            pl = plus | v.clause
            stack.append((v, True, pivots, plus))
            stack.append((v.right, False, np_, pl))
            stack.append((v.left, False, np_, pl))
            continue
        order[id(v)] = counter
        counter += 1
        if v.kind == "L":
            lemmas.append((v, counter - 1))
        elif v.kind not in ("A", "I") and check_leaf is not None:
            check_leaf(v, plus | v.clause)
    for v, pos in lemmas:
        if order.get(id(v.target), pos) >= pos:
            raise ConstructionError("lemma does not point to the left")
    if root.clause:
        raise ConstructionError("root clause is not empty")
