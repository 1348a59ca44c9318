"""Variables, literals, clauses and CNF formulas with DIMACS I/O.

Literals are signed integers in the DIMACS convention.  Ordering variables
x_{i,j} exist only for i < j; the literal written x_{j,i} with j > i is the
negation of x_{i,j}.  Pairs of [n] are ranked lexicographically, 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

Clause = frozenset  # frozenset[int]


class FormulaError(ValueError):
    """Raised on invalid variables, vertices or formula contents."""


class TautologyError(FormulaError):
    """Raised when a clause would contain a literal and its complement."""


class ParseError(FormulaError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def complement(lit: int) -> int:
    return -lit


def lit_key(lit: int) -> tuple[int, int]:
    """Sort key placing x before its negation, variables in index order."""
    return (abs(lit), 0 if lit > 0 else 1)


def sorted_lits(clause: Iterable[int]) -> list[int]:
    return sorted(clause, key=lit_key)


def clause_order_key(clause: Iterable[int]) -> tuple:
    """Length-lexicographic total order on clauses (sorted literal lists)."""
    lits = sorted_lits(clause)
    return (len(lits), tuple(lit_key(x) for x in lits))


def make_clause(lits: Iterable[int]) -> Clause:
    """Build a clause, deduplicating and rejecting complementary pairs."""
    c = frozenset(lits)
    if 0 in c:
        raise FormulaError("literal 0 is not a valid literal")
    for x in c:
        if -x in c:
            raise TautologyError(f"clause contains both {x} and {-x}")
    return c


def pair_index(i: int, j: int, n: int) -> int:
    """1-based lexicographic rank of the pair (i, j), i < j, among pairs of [n]."""
    return i * n - i * (i + 1) // 2 + (j - i)


def encode_order_var(i: int, j: int, n: int) -> tuple[int, int]:
    """Return (index, sign) for the ordering literal x_{i,j}; sign is +1 iff i < j."""
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise FormulaError(f"invalid vertex pair ({i},{j}) for n={n}")
    if i < j:
        return pair_index(i, j, n), 1
    return pair_index(j, i, n), -1


def order_lit(i: int, j: int, n: int) -> int:
    """Signed literal for x_{i,j} (which is the negative literal of x_{j,i} when i > j)."""
    idx, sign = encode_order_var(i, j, n)
    return idx * sign


def decode_order_var(index: int, n: int) -> tuple[int, int]:
    """Inverse of the pair ranking: the pair (i, j), i < j, with the given index."""
    if index < 1 or index > n * (n - 1) // 2:
        raise FormulaError(f"ordering variable {index} out of range for n={n}")
    i = 0
    while pair_index(i, n - 1, n) < index:
        i += 1
    return i, i + index - pair_index(i, i + 1, n) + 1


def order_var_names(n: int) -> dict[int, str]:
    return {pair_index(i, j, n): f"x_{{{i},{j}}}" for i in range(n) for j in range(i + 1, n)}


@dataclass(frozen=True)
class CnfFormula:
    num_vars: int
    clauses: tuple
    var_names: Mapping[int, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        cls = tuple(c if isinstance(c, frozenset) else make_clause(c) for c in self.clauses)
        object.__setattr__(self, "clauses", cls)
        for c in cls:
            for x in c:
                if abs(x) > self.num_vars:
                    raise FormulaError(f"literal {x} exceeds num_vars={self.num_vars}")

    def __len__(self) -> int:
        return len(self.clauses)

    def index_of(self) -> dict:
        """Map each clause to its first index in the clause list."""
        idx: dict = {}
        for k, c in enumerate(self.clauses):
            idx.setdefault(c, k)
        return idx

    def name(self, var: int) -> str:
        return self.var_names.get(var, f"v{var}")

    def format_lit(self, lit: int) -> str:
        base = self.name(abs(lit))
        return base if lit > 0 else "~" + base

    def format_clause(self, clause: Iterable[int]) -> str:
        lits = sorted_lits(clause)
        return "{" + ", ".join(self.format_lit(x) for x in lits) + "}" if lits else "[]"


def emit_dimacs(f: CnfFormula) -> str:
    """Serialize a formula; variable names are carried as 'c var N = name' comments."""
    out = [f"c var {v} = {f.var_names[v]}\n" for v in sorted(f.var_names)]
    out.append(f"p cnf {f.num_vars} {len(f.clauses)}\n")
    for c in f.clauses:
        out.append(" ".join(str(x) for x in sorted_lits(c) + [0]) + "\n")
    return "".join(out)


def parse_dimacs(text: str) -> CnfFormula:
    num_vars = num_clauses = None
    names: dict[int, str] = {}
    clauses: list[Clause] = []
    current: list[int] = []
    start_line = 0
    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("c"):
            parts = line.split(None, 4)
            if len(parts) == 5 and parts[1] == "var" and parts[3] == "=":
                try:
                    names[int(parts[2])] = parts[4]
                except ValueError:
                    pass
            continue
        if line.startswith("p"):
            parts = line.split()
            if num_vars is not None:
                raise ParseError("duplicate header", lineno)
            if len(parts) != 4 or parts[1] != "cnf":
                raise ParseError(f"malformed header {line!r}", lineno)
            try:
                num_vars, num_clauses = int(parts[2]), int(parts[3])
            except ValueError:
                raise ParseError(f"malformed header {line!r}", lineno) from None
            if num_vars < 0 or num_clauses < 0:
                raise ParseError("negative header counts", lineno)
            continue
        if num_vars is None:
            raise ParseError("clause before header", lineno)
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise ParseError(f"bad literal {tok!r}", lineno) from None
            if lit == 0:
                try:
                    clauses.append(make_clause(current))
                except TautologyError as exc:
                    raise ParseError(str(exc), start_line) from None
                current = []
                continue
            if abs(lit) > num_vars:
                raise ParseError(f"literal {lit} exceeds {num_vars} variables", lineno)
            if not current:
                start_line = lineno
            current.append(lit)
    if num_vars is None:
        raise ParseError("missing header", lineno)
    if current:
        raise ParseError("unterminated clause", start_line)
    if len(clauses) != num_clauses:
        raise ParseError(f"header declares {num_clauses} clauses, found {len(clauses)}", lineno)
    return CnfFormula(num_vars, tuple(clauses), names)
