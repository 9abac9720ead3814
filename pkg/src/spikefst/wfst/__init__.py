"""Minimal weighted finite-state transducer core (tropical semiring)."""

from .fst import (
    EPSILON,
    EPSILON_SYM,
    ONE,
    ZERO,
    Arc,
    Fst,
    SymbolTable,
    arcsort,
    read_fst_text,
    trim,
    wplus,
    write_fst_text,
    wtimes,
)
from .ops import (
    BestPath,
    compose,
    determinize,
    minimize,
    push_weights,
    rm_epsilon,
    shortest_distance,
    shortest_path,
)

__all__ = [
    "EPSILON",
    "EPSILON_SYM",
    "ONE",
    "ZERO",
    "Arc",
    "BestPath",
    "Fst",
    "SymbolTable",
    "arcsort",
    "compose",
    "determinize",
    "minimize",
    "push_weights",
    "read_fst_text",
    "rm_epsilon",
    "shortest_distance",
    "shortest_path",
    "trim",
    "wplus",
    "write_fst_text",
    "wtimes",
]
