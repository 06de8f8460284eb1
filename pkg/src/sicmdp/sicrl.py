"""Model-based SI-CRL: empirical model, optimistic extended LP, exchange loop.

The optimistic planning problem over all transition models within the
confidence box around ``P_hat`` is linear in the state-action-state
occupancy ``z[s, a, s']``.  Its semi-infinite family of cost rows is
handled by the dual exchange method: solve the finite LP on the active
set, find the most violated ``y``, append that cut, warm-restart.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constraint import ConstraintFamily, InnerSolverConfig, inner_max
from .core import Policy, TabularSICMDP, extract_policy
from .errors import InfeasibleOptimisticSet
from .lp import LinearProgram, Status, get_backend


@dataclass(frozen=True)
class TransitionDataset:
    """Offline ``(s, a, s')`` triples, shape ``(n, 3)``."""

    triples: np.ndarray
    provenance: str = "generative"

    def __post_init__(self):
        t = np.array(self.triples, dtype=np.int64).reshape(-1, 3)
        if np.any(t < 0):
            raise ValueError("indices must be non-negative")
        t.setflags(write=False)
        object.__setattr__(self, "triples", t)

    def __len__(self):
        return len(self.triples)

    def check_range(self, num_states, num_actions):
        t = self.triples
        if len(t) and (t[:, [0, 2]].max() >= num_states or t[:, 1].max() >= num_actions):
            raise ValueError("dataset indices out of range for the model")


def confidence_widths(p_hat, counts2, counts3, delta, literal=False) -> np.ndarray:
    """Entrywise half-widths ``min(empirical Bernstein, Hoeffding)``, clipped to 1.

    The sample count is ``n(s, a)``, the number of draws from row
    ``P(.|s, a)``; ``literal=True`` uses ``n(s, a, s')`` instead.  Entries
    with no samples get the vacuous width 1.
    """
    n = np.asarray(counts3 if literal else np.broadcast_to(counts2[:, :, None], p_hat.shape), float)
    safe = np.where(n > 0, n, 1.0)
    log4, log2 = math.log(4 / delta), math.log(2 / delta)
    bernstein = np.sqrt(2 * p_hat * (1 - p_hat) * log4 / safe) + 4 * log4 / safe
    hoeffding = np.sqrt(log2 / (2 * safe))
    width = np.minimum(np.minimum(bernstein, hoeffding), 1.0)
    return np.where(n > 0, width, 1.0)


@dataclass(frozen=True)
class EmpiricalModel:
    """Counts, ``P_hat`` and the confidence half-widths ``d_delta``."""

    counts3: np.ndarray
    counts2: np.ndarray
    p_hat: np.ndarray
    widths: np.ndarray
    delta: Optional[float]

    @classmethod
    def exact(cls, transition) -> "EmpiricalModel":
        """Known transitions: zero widths, so optimism collapses to ``P``."""
        P = np.array(transition, float)
        zeros = np.zeros(P.shape, dtype=np.int64)
        return cls(zeros, zeros.sum(axis=2), P, np.zeros_like(P), None)

    def upper(self) -> np.ndarray:
        return np.clip(self.p_hat + self.widths, 0.0, 1.0)

    def lower(self) -> np.ndarray:
        return np.clip(self.p_hat - self.widths, 0.0, 1.0)

    def covers(self, transition) -> bool:
        return bool(np.all(np.abs(np.asarray(transition) - self.p_hat) <= self.widths))


def estimate_model(dataset: TransitionDataset, num_states, num_actions, delta,
                   literal_widths=False) -> EmpiricalModel:
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    dataset.check_range(num_states, num_actions)
    S, A = num_states, num_actions
    t = dataset.triples
    flat = (t[:, 0] * A + t[:, 1]) * S + t[:, 2]
    counts3 = np.bincount(flat, minlength=S * A * S).reshape(S, A, S)
    counts2 = counts3.sum(axis=2)
    p_hat = counts3 / np.maximum(1, counts2)[:, :, None]
    widths = confidence_widths(p_hat, counts2, counts3, delta, literal_widths)
    return EmpiricalModel(counts3, counts2, p_hat, widths, delta)


def cut_row(family: ConstraintFamily, y, num_states, num_actions, gamma):
    """``(1/(1-gamma)) sum z c_y <= u_y`` as an LP row over ``z``."""
    c = family.cost(np.reshape(y, (1, -1)))[0]
    coeffs = np.repeat(c[:, :, None] / (1 - gamma), num_states, axis=2).ravel()
    return coeffs, "<=", float(family.threshold(np.reshape(y, (1, -1)))[0])


def build_extended_lsip(model_estimate: EmpiricalModel, reward, mu, gamma, active_set,
                        family: ConstraintFamily) -> LinearProgram:
    """Finite optimistic LP over ``z[s, a, s']`` (row-major variables).

    Row blocks, in order: one cut per active ``y``; upper envelope
    ``z <= (P_hat + d) sum_x z``; lower envelope ``z >= (P_hat - d) sum_x z``;
    flow ``sum_{b,x} z(s,b,x) = (1-gamma) mu(s) + gamma sum_{x,b} z(x,b,s)``.
    """
    S, A, _ = model_estimate.p_hat.shape
    n = S * A * S
    reward = np.asarray(reward, float)
    objective = np.repeat(reward[:, :, None], S, axis=2).ravel()

    cuts = [cut_row(family, y, S, A, gamma) for y in active_set]
    cut_matrix = np.array([c[0] for c in cuts]).reshape(-1, n)
    cut_rhs = [c[2] for c in cuts]

    def envelope(bound):
        # row (s, a, s'): z(s,a,s') - bound(s,a,s') * sum_x z(s,a,x)
        blocks = np.zeros((S * A, S, S * A, S))
        pairs = np.arange(S * A)
        blocks[pairs, :, pairs, :] -= bound.reshape(S * A, S)[:, :, None]
        eye = np.broadcast_to(np.eye(S), (S * A, S, S))
        blocks[pairs, :, pairs, :] += eye
        return blocks.reshape(n, n)

    upper = envelope(model_estimate.upper())
    lower = envelope(model_estimate.lower())

    flow = np.zeros((S, S, A, S))
    for s in range(S):
        flow[s, s, :, :] += 1.0
        flow[s, :, :, s] -= gamma
    flow = flow.reshape(S, n)

    matrix = np.vstack([cut_matrix, upper, lower, flow])
    relations = ("<=",) * len(cuts) + ("<=",) * n + (">=",) * n + ("=",) * S
    rhs = np.concatenate([cut_rhs, np.zeros(2 * n), (1 - gamma) * np.asarray(mu, float)])
    return LinearProgram(objective, matrix, relations, rhs)


@dataclass
class ExchangeRecord:
    iter: int
    y: np.ndarray
    violation: float
    lp_objective: float
    active_constraints: int
    pivots: int
    elapsed_ms: float
    policy: Optional[Policy] = None


@dataclass
class ExchangeState:
    """Active set, current iterate and per-iteration trace of the exchange loop."""

    active_set: list
    z: Optional[np.ndarray] = None
    history: list = field(default_factory=list)
    eta: float = 0.0
    max_iter: int = 0
    converged: bool = False
    lp: Optional[LinearProgram] = None
    solution: object = None

    @property
    def iterations(self) -> int:
        return len(self.history)

    def to_csv(self, timing=False) -> str:
        """Trace CSV; ``elapsed_ms`` is left blank unless ``timing`` is set
        so that reruns are byte-identical."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "elapsed_ms", "active_constraints", "lp_objective",
                    "violation", "y_coords", "warm_pivots"])
        for h in self.history:
            w.writerow([h.iter, repr(h.elapsed_ms) if timing else "", h.active_constraints,
                        repr(h.lp_objective), repr(h.violation),
                        ";".join(repr(float(v)) for v in h.y), h.pivots])
        return buf.getvalue()


@dataclass
class SICRLConfig:
    delta: float = 0.1
    eta: float = 1e-4
    max_iter: int = 64
    inner: InnerSolverConfig = field(default_factory=InnerSolverConfig)
    seed_point: Optional[np.ndarray] = None
    backend: object = "simplex"
    pivot_rule: str = "bland"
    literal_widths: bool = False


def packing_bound(family: ConstraintFamily, num_states, num_actions, gamma, eta,
                  beta=None, form="box") -> int:
    """Cap on exchange iterations from the sup-norm packing argument.

    Cut points (seed included) are pairwise more than ``eta / beta`` apart,
    where ``beta`` bounds the Lipschitz constant of the violation in ``y``;
    the default is ``2 |S|^2 |A| L_y / (1 - gamma)``.

    ``form="box"`` counts the per-axis packing of the box exactly;
    ``form="diam"`` is the looser ``(ceil(2 beta diam / eta) + 1)^m`` that
    only uses the diameter and dominates the box count.
    """
    if beta is None:
        beta = 2 * num_states ** 2 * num_actions * family.lipschitz / (1 - gamma)
    if form == "diam":
        return int((math.ceil(2 * beta * family.diam / eta) + 1) ** family.dim)
    if form != "box":
        raise ValueError(f"unknown packing form {form!r}")
    sep = eta / beta
    return int(np.prod([math.floor(w / sep) + 1 for w in family.hi - family.lo]))


def run_sicrl(data, model: TabularSICMDP, family: Optional[ConstraintFamily] = None,
              config: Optional[SICRLConfig] = None) -> tuple[Policy, ExchangeState]:
    """Dual exchange method on the optimistic extended LP.

    ``data`` is a ``TransitionDataset`` or a ready ``EmpiricalModel``;
    ``model`` supplies rewards, the initial distribution and the discount
    (its transitions are not used).  Stops once the worst violation found
    by the inner solver is at most ``eta`` or after ``max_iter`` LP solves.
    """
    config = config or SICRLConfig()
    family = family or model.constraints
    S, A, gamma = model.num_states, model.num_actions, model.discount
    if isinstance(data, EmpiricalModel):
        estimate = data
    else:
        estimate = estimate_model(data, S, A, config.delta, config.literal_widths)
    backend = get_backend(config.backend, rule=config.pivot_rule) \
        if config.backend == "simplex" else get_backend(config.backend)
    rng = np.random.default_rng(config.inner.seed)
    scale = 1.0 / (1 - gamma)

    y0 = family.center if config.seed_point is None else np.asarray(config.seed_point, float)
    state = ExchangeState(active_set=[np.array(y0, float)], eta=config.eta, max_iter=config.max_iter)
    lp = build_extended_lsip(estimate, model.reward, model.initial_dist, gamma,
                             state.active_set, family)
    gradient = None
    if config.inner.kind == "pga" and family.has_gradients:
        gradient = lambda ys: family.violation_grad(nu, ys, scale)  # noqa: E731

    start = time.perf_counter()
    sol = None
    pending = None
    for t in range(1, config.max_iter + 1):
        if sol is None:
            sol = backend.solve(lp)
        else:
            sol = backend.resolve_with_row(lp, sol, pending)
            lp = lp.with_row(*pending)
        if sol.status is Status.INFEASIBLE:
            raise InfeasibleOptimisticSet(
                f"optimistic LP infeasible at iteration {t} (delta too small or instance infeasible)")
        if sol.status is not Status.OPTIMAL:
            raise InfeasibleOptimisticSet(f"optimistic LP returned {sol.status.value}")
        z = np.clip(sol.x, 0.0, None).reshape(S, A, S)
        nu = z.sum(axis=2)
        y, violation = inner_max(family, lambda ys: family.violation(nu, ys, scale),
                                 config.inner, gradient=gradient, rng=rng)
        state.z = z
        state.history.append(ExchangeRecord(
            t, np.asarray(y, float), float(violation), float(sol.objective_value),
            len(state.active_set), int(sol.pivots), 1e3 * (time.perf_counter() - start),
            extract_policy(z)))
        if violation <= config.eta:
            state.converged = True
            break
        if any(np.max(np.abs(y - prev)) <= 1e-12 for prev in state.active_set):
            # the LP already enforces this cut; further iterations would repeat it
            break
        state.active_set.append(np.asarray(y, float))
        pending = cut_row(family, y, S, A, gamma)
    state.lp, state.solution = lp, sol
    return extract_policy(state.z), state
