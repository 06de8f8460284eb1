"""Gridded occupancy LPs: the fine-grid reference and the naive-discretization baseline."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..constraint import AuditGrid, ConstraintFamily, grid_points
from ..core import Policy, TabularSICMDP, occupancy_to_policy, policy_value
from ..errors import InfeasibleOptimisticSet
from ..lp import LinearProgram, Status, get_backend


@dataclass
class ReferenceSolution:
    """Optimal policy of the CMDP whose constraint set is a finite grid of ``y``."""

    policy: Policy
    value: float
    grid: np.ndarray
    occupancy: np.ndarray
    lp_stats: dict = field(default_factory=dict)


def occupancy_lp(model: TabularSICMDP, family: ConstraintFamily, points) -> LinearProgram:
    """``max sum nu r`` over normalized occupancies with one cost row per grid point."""
    S, A, gamma = model.num_states, model.num_actions, model.discount
    n = S * A
    points = np.asarray(points, float).reshape(-1, family.dim)
    cost = family.cost(points).reshape(len(points), n) / (1 - gamma)
    thresholds = family.threshold(points)
    finite = np.isfinite(thresholds)
    flow = np.zeros((S, S, A))
    for s in range(S):
        flow[s, s, :] += 1.0
    flow -= gamma * np.transpose(model.transition, (2, 0, 1))
    matrix = np.vstack([cost[finite], flow.reshape(S, n)])
    relations = ("<=",) * int(finite.sum()) + ("=",) * S
    rhs = np.concatenate([thresholds[finite], (1 - gamma) * model.initial_dist])
    return LinearProgram(model.reward.ravel(), matrix, relations, rhs)


def _solve(model, family, points, backend):
    lp = occupancy_lp(model, family, points)
    sol = get_backend(backend).solve(lp)
    if sol.status is not Status.OPTIMAL:
        raise InfeasibleOptimisticSet(f"gridded occupancy LP is {sol.status.value}")
    return lp, sol


def solve_gridded_lp(model: TabularSICMDP, family: Optional[ConstraintFamily], points,
                     backend="highs", active_set=None, tol=1e-10,
                     batch=64) -> ReferenceSolution:
    """Solve the CMDP whose constraints are the rows indexed by ``points``.

    With ``active_set=None`` large grids (over 2000 points) go through
    constraint generation: solve on a subset, add the ``batch`` most
    violated grid rows, repeat until every row holds within ``tol``
    (relative to ``1 + |u_y|``).  The final relaxation is then feasible for
    the whole grid, hence optimal for it.
    """
    family = family or model.constraints
    points = np.asarray(points, float).reshape(-1, family.dim)
    if active_set is None:
        active_set = len(points) > 2000
    scale = 1.0 / (1 - model.discount)
    rounds = 0
    if not active_set:
        lp, sol = _solve(model, family, points, backend)
    else:
        grid = AuditGrid(family, points)
        rel = 1.0 + np.abs(np.where(np.isfinite(grid.thresholds), grid.thresholds, 0.0))
        active = np.zeros(len(points), dtype=bool)
        active[np.argmin(grid.thresholds)] = True
        while True:
            rounds += 1
            lp, sol = _solve(model, family, points[active], backend)
            nu = sol.x.reshape(model.num_states, model.num_actions)
            excess = grid.violations(nu, scale) / rel
            excess[active] = -np.inf
            worst = np.argsort(-excess)[:batch]
            worst = worst[excess[worst] > tol]
            if len(worst) == 0:
                break
            active[worst] = True
    nu = np.clip(sol.x, 0.0, None).reshape(model.num_states, model.num_actions)
    policy = occupancy_to_policy(nu)
    stats = {"rows": lp.num_rows, "vars": lp.num_vars, "pivots": sol.pivots,
             "objective": sol.objective_value / (1 - model.discount),
             "max_row_violation": lp.violation(sol.x), "grid_size": len(points),
             "rounds": rounds}
    return ReferenceSolution(policy, policy_value(model, policy, model.reward), points, nu, stats)


def solve_reference(model: TabularSICMDP, family: Optional[ConstraintFamily] = None,
                    grid_size: int = 100_000, backend="highs") -> ReferenceSolution:
    """Reference optimum with the true transitions on a ``grid_size`` cell-center lattice."""
    if grid_size < 1:
        raise ValueError("grid_size must be at least 1")
    family = family or model.constraints
    return solve_gridded_lp(model, family, grid_points(family.box, grid_size), backend)


def solve_naive_discretization(model: TabularSICMDP, family: Optional[ConstraintFamily] = None,
                               n_points: int = 9, backend="simplex") -> ReferenceSolution:
    """Baseline that replaces ``Y`` by a predetermined lattice of ``n_points``."""
    family = family or model.constraints
    return solve_gridded_lp(model, family, grid_points(family.box, n_points), backend)
