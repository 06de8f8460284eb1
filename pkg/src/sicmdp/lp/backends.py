"""Interchangeable LP engines behind one small interface.

The built-in simplex is the default.  ``HighsBackend`` routes through
``scipy.optimize.linprog``; it has no warm start, so appending a row is a
cold re-solve.  Integrators can pass any object with the same two methods.
"""
from __future__ import annotations

from typing import Protocol

import numpy as np

from . import simplex
from .model import LinearProgram, LpSolution, Status


class LpBackend(Protocol):
    name: str

    def solve(self, lp: LinearProgram) -> LpSolution: ...

    def resolve_with_row(self, lp: LinearProgram, solution: LpSolution, row) -> LpSolution: ...


class SimplexBackend:
    name = "simplex"

    def __init__(self, rule="bland"):
        self.rule = rule

    def solve(self, lp):
        return simplex.solve(lp, rule=self.rule)

    def resolve_with_row(self, lp, solution, row):
        return simplex.resolve_with_row(lp, solution, row, rule=self.rule)


class HighsBackend:
    name = "highs"

    def solve(self, lp):
        from scipy.optimize import linprog

        rel = np.array(lp.relations)
        le, ge, eq = rel == "<=", rel == ">=", rel == "="
        A_ub = np.vstack([lp.matrix[le], -lp.matrix[ge]])
        b_ub = np.concatenate([lp.rhs[le], -lp.rhs[ge]])
        bounds = [(None if np.isinf(lo) else lo, None if np.isinf(hi) else hi)
                  for lo, hi in zip(lp.lower, lp.upper)]
        res = linprog(-lp.objective,
                      A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                      A_eq=lp.matrix[eq] if eq.any() else None, b_eq=lp.rhs[eq] if eq.any() else None,
                      bounds=bounds, method="highs")
        if res.status == 2:
            return LpSolution(Status.INFEASIBLE, np.full(lp.num_vars, np.nan), np.nan, pivots=res.nit)
        if res.status == 3:
            return LpSolution(Status.UNBOUNDED, np.full(lp.num_vars, np.nan), np.inf, pivots=res.nit)
        if res.status != 0:
            raise RuntimeError(f"HiGHS failed: {res.message}")
        duals = np.zeros(lp.num_rows)
        n_le = int(le.sum())
        ub_marg = res.ineqlin.marginals if len(b_ub) else np.zeros(0)
        duals[le] = -ub_marg[:n_le]
        duals[ge] = ub_marg[n_le:]
        if eq.any():
            duals[eq] = -res.eqlin.marginals
        return LpSolution(Status.OPTIMAL, res.x, float(lp.objective @ res.x),
                          pivots=int(res.nit), duals=duals)

    def resolve_with_row(self, lp, solution, row):
        return self.solve(lp.with_row(*row))


def get_backend(backend="simplex", **options) -> LpBackend:
    if not isinstance(backend, str):
        return backend
    if backend == "simplex":
        return SimplexBackend(**options)
    if backend == "highs":
        return HighsBackend()
    raise ValueError(f"unknown LP backend {backend!r}")
