"""Linear program and solution containers."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

RELATIONS = ("<=", ">=", "=")


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _readonly(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``maximize objective @ x`` subject to ``matrix @ x (rel) rhs`` and bounds.

    ``relations`` holds one of ``"<="``, ``">="``, ``"="`` per row.  Bounds
    default to ``0 <= x < inf``; ``lower`` may be ``-inf``.
    """

    objective: np.ndarray
    matrix: np.ndarray
    relations: tuple
    rhs: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        c = _readonly(self.objective).ravel()
        n = c.size
        if n == 0:
            raise ValueError("a linear program needs at least one variable")
        A = _readonly(np.asarray(self.matrix, float).reshape(-1, n))
        b = _readonly(np.asarray(self.rhs, float).ravel())
        rel = tuple(self.relations)
        if len(rel) != A.shape[0] or b.size != A.shape[0]:
            raise ValueError("matrix, relations and rhs disagree on the row count")
        if any(r not in RELATIONS for r in rel):
            raise ValueError(f"relations must be drawn from {RELATIONS}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("coefficients must be finite")
        lo = _readonly(np.zeros(n) if self.lower is None else np.broadcast_to(self.lower, n))
        hi = _readonly(np.full(n, np.inf) if self.upper is None else np.broadcast_to(self.upper, n))
        if np.any(lo > hi) or np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise ValueError("inconsistent variable bounds")
        for name, value in (("objective", c), ("matrix", A), ("relations", rel),
                            ("rhs", b), ("lower", lo), ("upper", hi)):
            object.__setattr__(self, name, value)

    @classmethod
    def from_rows(cls, objective, rows, bounds=None) -> "LinearProgram":
        """Build from ``[(coefficients, relation, rhs), ...]`` and optional
        ``[(low, high), ...]`` bounds (``None`` means unbounded)."""
        n = len(objective)
        matrix = np.array([r[0] for r in rows], dtype=float).reshape(-1, n)
        lower = upper = None
        if bounds is not None:
            lower = [-np.inf if lo is None else lo for lo, _ in bounds]
            upper = [np.inf if hi is None else hi for _, hi in bounds]
        return cls(objective, matrix, tuple(r[1] for r in rows),
                   [r[2] for r in rows], lower, upper)

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def rows(self) -> list:
        return [(self.matrix[i], self.relations[i], float(self.rhs[i]))
                for i in range(self.num_rows)]

    def with_row(self, coefficients, relation, rhs) -> "LinearProgram":
        return self.with_rows(np.reshape(coefficients, (1, -1)), (relation,), [rhs])

    def with_rows(self, matrix, relations, rhs) -> "LinearProgram":
        return LinearProgram(
            self.objective,
            np.vstack([self.matrix, np.reshape(matrix, (-1, self.num_vars))]),
            self.relations + tuple(relations),
            np.concatenate([self.rhs, np.ravel(rhs)]),
            self.lower, self.upper)

    def same_as(self, other: "LinearProgram") -> bool:
        return (self is other) or (
            self.relations == other.relations
            and self.matrix.shape == other.matrix.shape
            and np.array_equal(self.matrix, other.matrix)
            and np.array_equal(self.rhs, other.rhs)
            and np.array_equal(self.objective, other.objective)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper))

    def violation(self, x) -> float:
        """Largest row or bound violation of ``x``, relative to ``1 + |rhs|``."""
        x = np.asarray(x, float)
        ax = self.matrix @ x
        scale = 1.0 + np.abs(self.rhs)
        worst = 0.0
        for rel, sign in (("<=", 1.0), (">=", -1.0)):
            mask = np.array([r == rel for r in self.relations], dtype=bool)
            if mask.any():
                worst = max(worst, float(np.max(sign * (ax - self.rhs)[mask] / scale[mask])))
        eq = np.array([r == "=" for r in self.relations], dtype=bool)
        if eq.any():
            worst = max(worst, float(np.max(np.abs(ax - self.rhs)[eq] / scale[eq])))
        worst = max(worst, float(np.max(self.lower - x, initial=0.0)),
                    float(np.max(x - self.upper, initial=0.0)))
        return max(worst, 0.0)


@dataclass
class LpSolution:
    """Result of a solve.

    ``basis`` is an opaque warm-start token (``None`` for backends without
    one); ``duals`` are row multipliers of the maximization problem.
    """

    status: Status
    x: np.ndarray
    objective_value: float
    basis: Any = None
    pivots: int = 0
    duals: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL
