"""Pool resolution and regRTI refutations of guarded ordering and pebbling formulas."""

from poolres.formula import (
    Clause,
    CnfFormula,
    FormulaError,
    ParseError,
    TautologyError,
    complement,
    emit_dimacs,
    encode_order_var,
    make_clause,
    order_lit,
    parse_dimacs,
)

__all__ = [
    "Clause",
    "CnfFormula",
    "FormulaError",
    "ParseError",
    "TautologyError",
    "complement",
    "emit_dimacs",
    "encode_order_var",
    "make_clause",
    "order_lit",
    "parse_dimacs",
]

__version__ = "0.1.0"
