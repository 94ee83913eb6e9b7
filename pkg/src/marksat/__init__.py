"""Near-uniform sampling and approximate counting of bounded-degree k-CNF solutions."""

from .formula import Clause, CnfFormula, PartialAssignment, emit_dimacs, generate_random, parse_dimacs
from .rng import RandomSource

__version__ = "0.1.0"

__all__ = [
    "Clause",
    "CnfFormula",
    "PartialAssignment",
    "RandomSource",
    "emit_dimacs",
    "generate_random",
    "parse_dimacs",
]
