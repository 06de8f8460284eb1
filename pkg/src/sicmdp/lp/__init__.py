"""Self-contained LP engine with warm restarts after appending a row."""
from .backends import HighsBackend, LpBackend, SimplexBackend, get_backend
from .model import LinearProgram, LpSolution, Status
from .simplex import resolve_with_row, solve
from .text import dump_lp

__all__ = [
    "LinearProgram", "LpSolution", "Status", "solve", "resolve_with_row",
    "LpBackend", "SimplexBackend", "HighsBackend", "get_backend", "dump_lp",
]
