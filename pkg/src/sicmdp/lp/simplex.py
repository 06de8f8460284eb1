"""Dense revised simplex with an explicitly maintained basis inverse.

The program is brought to ``max c.x  s.t.  A x = b, x >= 0`` by shifting
and splitting variables, turning finite upper bounds into rows, and adding
one slack (or surplus) column per inequality.  Rows that cannot start with
a slack in the basis get an artificial column, and phase one drives the
artificials to zero.

Warm restarts append one inequality to a solved program: the new slack
joins the basis, the old basis stays dual feasible, and dual simplex pivots
restore primal feasibility.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalBreakdown
from .model import LinearProgram, LpSolution, Status

DUAL_TOL = 1e-9
PRIMAL_TOL = 1e-9
PIVOT_TOL = 1e-9
BREAKDOWN_TOL = 1e-11
TIE_TOL = 1e-12
REFACTOR_EVERY = 100
MAX_PIVOTS = 200_000

STRUCT, SLACK, ARTIFICIAL = 0, 1, 2


@dataclass
class _Form:
    A: np.ndarray          # (m, N)
    b: np.ndarray          # (m,)
    c: np.ndarray          # (N,)
    kind: np.ndarray       # (N,) column kind
    recover: np.ndarray    # (n, n_struct): x = offset + recover @ x_struct
    offset: np.ndarray     # (n,)
    row_sign: np.ndarray   # (m,) internal row = sign * original row
    user_rows: list        # internal index of each program row, in order

    @property
    def n_struct(self):
        return self.recover.shape[1]


@dataclass
class SimplexBasis:
    """Warm-start token: the internal form, basic columns and basis inverse."""

    lp: LinearProgram
    form: _Form
    basis: np.ndarray
    binv: np.ndarray
    xb: np.ndarray


def _standardize(lp: LinearProgram) -> tuple[_Form, list]:
    n = lp.num_vars
    cols, offset, upper_rows = [], np.zeros(n), []
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                upper_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ns = len(cols)
    recover = np.zeros((n, ns))
    for k, (j, coef) in enumerate(cols):
        recover[j, k] = coef

    m_user = lp.num_rows
    rows = np.zeros((m_user + len(upper_rows), ns))
    rows[:m_user] = lp.matrix @ recover
    rhs = np.concatenate([lp.rhs - lp.matrix @ offset, [u for _, u in upper_rows]])
    rel = list(lp.relations) + ["<="] * len(upper_rows)
    for i, (k, _) in enumerate(upper_rows):
        rows[m_user + i, k] = 1.0

    m = rows.shape[0]
    sign = np.ones(m)
    slack_coef = np.zeros(m)
    needs_art = np.zeros(m, dtype=bool)
    for i in range(m):
        if rel[i] == "<=":
            if rhs[i] < 0:
                sign[i], slack_coef[i], needs_art[i] = -1.0, -1.0, True
            else:
                slack_coef[i] = 1.0
        elif rel[i] == ">=":
            if rhs[i] <= 0:
                sign[i], slack_coef[i] = -1.0, 1.0
            else:
                slack_coef[i], needs_art[i] = -1.0, True
        else:
            sign[i] = -1.0 if rhs[i] < 0 else 1.0
            needs_art[i] = True
    slack_rows = np.flatnonzero(slack_coef != 0)
    art_rows = np.flatnonzero(needs_art)
    N = ns + len(slack_rows) + len(art_rows)
    A = np.zeros((m, N))
    A[:, :ns] = rows * sign[:, None]
    A[slack_rows, ns + np.arange(len(slack_rows))] = slack_coef[slack_rows]
    A[art_rows, ns + len(slack_rows) + np.arange(len(art_rows))] = 1.0
    kind = np.array([STRUCT] * ns + [SLACK] * len(slack_rows) + [ARTIFICIAL] * len(art_rows))
    c = np.zeros(N)
    c[:ns] = lp.objective @ recover

    basis = np.empty(m, dtype=int)
    slack_col = dict(zip(slack_rows, ns + np.arange(len(slack_rows))))
    art_col = dict(zip(art_rows, ns + len(slack_rows) + np.arange(len(art_rows))))
    for i in range(m):
        basis[i] = art_col[i] if needs_art[i] else slack_col[i]
    form = _Form(A, rhs * sign, c, kind, recover, offset, sign, list(range(m_user)))
    return form, list(basis)


class _Engine:
    def __init__(self, form: _Form, basis, rule="bland", binv=None, xb=None):
        self.form = form
        self.A = form.A
        self.b = form.b
        self.basis = np.array(basis, dtype=int)
        self.rule = rule
        self.allowed = form.kind != ARTIFICIAL
        self.pivots = 0
        self._since = 0
        if binv is None:
            self.refactor()
        else:
            self.binv, self.xb = binv, xb

    def refactor(self):
        try:
            self.binv = np.linalg.inv(self.A[:, self.basis])
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("singular basis") from exc
        self.xb = self.binv @ self.b
        self._since = 0

    def reduced_costs(self, c):
        d = c - (c[self.basis] @ self.binv) @ self.A
        d[self.basis] = 0.0
        return d

    def _pivot(self, r, q, col, theta):
        piv = col[r]
        if abs(piv) < BREAKDOWN_TOL:
            self.refactor()
            col = self.binv @ self.A[:, q]
            piv = col[r]
            if abs(piv) < BREAKDOWN_TOL:
                raise NumericalBreakdown(f"pivot {piv:.3e} below {BREAKDOWN_TOL:g}")
        self.xb -= theta * col
        self.xb[r] = theta
        row = self.binv[r] / piv
        self.binv -= np.outer(col, row)
        self.binv[r] = row
        self.basis[r] = q
        self.pivots += 1
        self._since += 1
        if self.pivots > MAX_PIVOTS:
            raise NumericalBreakdown("pivot limit reached")
        if self._since >= REFACTOR_EVERY:
            self.refactor()

    def primal(self, c) -> Status:
        while True:
            d = self.reduced_costs(c)
            eligible = np.flatnonzero((d > DUAL_TOL) & self.allowed)
            if eligible.size == 0:
                return Status.OPTIMAL
            q = eligible[0] if self.rule == "bland" else eligible[np.argmax(d[eligible])]
            col = self.binv @ self.A[:, q]
            rows = np.flatnonzero(col > PIVOT_TOL)
            if rows.size == 0:
                return Status.UNBOUNDED
            ratios = np.maximum(self.xb[rows], 0.0) / col[rows]
            tmin = ratios.min()
            ties = rows[ratios <= tmin + TIE_TOL * (1.0 + tmin)]
            if self.rule == "bland":
                r = ties[np.argmin(self.basis[ties])]
            else:
                r = ties[np.argmax(col[ties])]
            self._pivot(r, q, col, max(self.xb[r], 0.0) / col[r])

    def dual(self, c) -> Status:
        while True:
            bad = np.flatnonzero(self.xb < -PRIMAL_TOL)
            if bad.size == 0:
                return Status.OPTIMAL
            if self.rule == "bland":
                r = bad[np.argmin(self.basis[bad])]
            else:
                r = bad[np.argmin(self.xb[bad])]
            alpha = self.binv[r] @ self.A
            d = np.minimum(self.reduced_costs(c), 0.0)
            alpha[self.basis] = 0.0
            cand = np.flatnonzero((alpha < -PIVOT_TOL) & self.allowed)
            if cand.size == 0:
                return Status.INFEASIBLE
            ratios = d[cand] / alpha[cand]
            tmin = ratios.min()
            ties = cand[ratios <= tmin + TIE_TOL * (1.0 + tmin)]
            q = ties[0] if self.rule == "bland" else ties[np.argmin(alpha[ties])]
            col = self.binv @ self.A[:, q]
            self._pivot(r, q, col, self.xb[r] / col[r])

    def drive_out_artificials(self):
        for r in np.flatnonzero(self.form.kind[self.basis] == ARTIFICIAL):
            alpha = self.binv[r] @ self.A
            alpha[self.basis] = 0.0
            alpha[~self.allowed] = 0.0
            q = int(np.argmax(np.abs(alpha)))
            if abs(alpha[q]) > PIVOT_TOL:
                col = self.binv @ self.A[:, q]
                self._pivot(r, q, col, 0.0)
        # artificials left in the basis sit on redundant rows and never move

    def token(self, lp) -> SimplexBasis:
        return SimplexBasis(lp, self.form, self.basis.copy(), self.binv.copy(), self.xb.copy())


def _solution(lp, engine: _Engine, status, pivots) -> LpSolution:
    form = engine.form
    if status is not Status.OPTIMAL:
        value = np.inf if status is Status.UNBOUNDED else np.nan
        return LpSolution(status, np.full(lp.num_vars, np.nan), value, None, pivots)
    x_int = np.zeros(form.A.shape[1])
    x_int[engine.basis] = np.maximum(engine.xb, 0.0)
    x = form.offset + form.recover @ x_int[:form.n_struct]
    y = form.c[engine.basis] @ engine.binv
    duals = (form.row_sign * y)[form.user_rows]
    return LpSolution(status, x, float(lp.objective @ x), engine.token(lp), pivots, duals)


def _cold(lp: LinearProgram, rule: str) -> LpSolution:
    form, basis = _standardize(lp)
    engine = _Engine(form, basis, rule)
    art = form.kind == ARTIFICIAL
    phase1 = 0
    if art.any():
        engine.allowed = np.ones_like(art)
        status = engine.primal(np.where(art, -1.0, 0.0))
        phase1 = engine.pivots
        infeasibility = float(np.sum(np.maximum(engine.xb[art[engine.basis]], 0.0)))
        if infeasibility > PRIMAL_TOL:
            sol = _solution(lp, engine, Status.INFEASIBLE, engine.pivots)
            sol.info["phase1_objective"] = infeasibility
            return sol
        engine.allowed = ~art
        engine.drive_out_artificials()
        engine.xb[art[engine.basis]] = 0.0
    status = engine.primal(form.c)
    sol = _solution(lp, engine, status, engine.pivots)
    sol.info["phase1_pivots"] = phase1
    return sol


def solve(lp: LinearProgram, basis: SimplexBasis | None = None, rule: str = "bland") -> LpSolution:
    """Solve ``lp``; a token from an earlier solve of the same program
    restarts phase two from that basis."""
    if rule not in ("bland", "dantzig"):
        raise ValueError("rule must be 'bland' or 'dantzig'")
    if basis is not None and basis.lp.same_as(lp):
        try:
            engine = _Engine(basis.form, basis.basis, rule)
            if np.all(engine.xb >= -PRIMAL_TOL):
                status = engine.primal(basis.form.c)
                sol = _solution(lp, engine, status, engine.pivots)
                sol.info["warm"] = True
                return sol
        except NumericalBreakdown:
            pass
    return _cold(lp, rule)


def resolve_with_row(lp: LinearProgram, solution: LpSolution, row, rule: str = "bland") -> LpSolution:
    """Optimum of ``lp`` plus one ``(coefficients, relation, rhs)`` row,
    warm-started by dual simplex from ``solution``'s basis.

    Equality rows and unusable tokens fall back to a cold solve, as does a
    numerical breakdown during the warm pivots.
    """
    coeffs, rel, rhs = row
    coeffs = np.asarray(coeffs, float).ravel()
    augmented = lp.with_row(coeffs, rel, rhs)
    token = solution.basis if solution is not None else None
    if (not isinstance(token, SimplexBasis) or rel == "=" or not solution.optimal
            or not token.lp.same_as(lp)):
        sol = _cold(augmented, rule)
        sol.info["warm"] = False
        return sol

    form = token.form
    a = coeffs @ form.recover
    b = float(rhs - coeffs @ form.offset)
    sign = 1.0
    if rel == ">=":
        a, b, sign = -a, -b, -1.0
    m, N = form.A.shape
    A = np.zeros((m + 1, N + 1))
    A[:m, :N] = form.A
    A[m, :form.n_struct] = a
    A[m, N] = 1.0
    new_form = _Form(A, np.append(form.b, b), np.append(form.c, 0.0),
                     np.append(form.kind, SLACK), form.recover, form.offset,
                     np.append(form.row_sign, sign), form.user_rows + [m])
    a_basic = A[m, token.basis]
    binv = np.zeros((m + 1, m + 1))
    binv[:m, :m] = token.binv
    binv[m, :m] = -a_basic @ token.binv
    binv[m, m] = 1.0
    xb = np.append(token.xb, b - a_basic @ token.xb)
    engine = _Engine(new_form, np.append(token.basis, N), rule, binv, xb)
    try:
        status = engine.dual(new_form.c)
        if status is Status.OPTIMAL:
            status = engine.primal(new_form.c)
    except NumericalBreakdown:
        sol = _cold(augmented, rule)
        sol.info["warm"] = False
        sol.info["fallback"] = "breakdown"
        return sol
    sol = _solution(augmented, engine, status, engine.pivots)
    sol.info["warm"] = True
    return sol
