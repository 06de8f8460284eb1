"""Model-free SI-CPO: softmax policies, Monte-Carlo evaluation, sample-based NPG.

Each iteration estimates the discounted state-action visitation of the
current policy from ``K_eval`` fixed-horizon episodes.  Every candidate
``y`` is then scored on the same episodes, since the return of ``c_y`` is
linear in the visitation counts.  If the worst estimated violation is at
most ``eta`` the policy takes an NPG step on the reward, otherwise it
takes a descent step on the offending cost.

Rollouts run in numba kernels fed with uniforms from the caller's numpy
``Generator``, so runs are reproducible from ``(seed, config)``.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numba
import numpy as np

from .constraint import ConstraintFamily, InnerSolverConfig, grid_points, inner_max
from .core import Policy, TabularSICMDP, policy_value
from .errors import EmptyGoodSet

# -- numba kernels ----------------------------------------------------------
#
# Chains run on joint indices x = s * A + a.  Categorical draws use Walker
# alias tables (one uniform per draw); uniforms come pre-drawn from a numpy
# Generator, so the kernels hold no RNG state of their own.


@numba.njit(cache=True)
def _alias_tables(p):
    """Vose alias tables for each row of ``p`` (rows need not be normalized)."""
    m, n = p.shape
    prob = np.ones((m, n))
    alias = np.empty((m, n), dtype=np.int64)
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    for r in range(m):
        q = p[r] * n / p[r].sum()
        ns = 0
        nl = 0
        for i in range(n):
            alias[r, i] = i
            if q[i] < 1.0:
                small[ns] = i
                ns += 1
            else:
                large[nl] = i
                nl += 1
        while ns > 0 and nl > 0:
            ns -= 1
            lo = small[ns]
            hi = large[nl - 1]
            prob[r, lo] = q[lo]
            alias[r, lo] = hi
            q[hi] = q[hi] + q[lo] - 1.0
            if q[hi] < 1.0:
                nl -= 1
                small[ns] = hi
                ns += 1
        # leftovers are 1 up to rounding
    return prob, alias


@numba.njit(cache=True)
def _draw(prob, alias, row, u):
    n = prob.shape[1]
    v = u * n
    i = min(int(v), n - 1)
    return i if v - i < prob[row, i] else alias[row, i]


@numba.njit(cache=True)
def _visitation_kernel(prob, alias, iprob, ialias, gamma, horizon, episodes, u):
    visits = np.zeros(prob.shape[0])
    j = 0
    for _ in range(episodes):
        x = _draw(iprob, ialias, 0, u[j])
        j += 1
        disc = 1.0
        for _k in range(horizon):
            visits[x] += disc
            disc *= gamma
            x = _draw(prob, alias, x, u[j])
            j += 1
    return visits / episodes


@numba.njit(cache=True)
def _occupancy_draw(prob, alias, iprob, ialias, gamma, horizon, u, j):
    # geometric stopping time with P(tau = k) = (1 - gamma) gamma^k, capped at horizon - 1
    x = _draw(iprob, ialias, 0, u[j])
    j += 1
    for _k in range(horizon - 1):
        stop = u[j] < 1.0 - gamma
        j += 1
        if stop:
            break
        x = _draw(prob, alias, x, u[j])
        j += 1
    return x, j


@numba.njit(cache=True)
def _occupancy_kernel(prob, alias, iprob, ialias, gamma, horizon, n, u):
    out = np.empty(n, dtype=np.int64)
    j = 0
    for i in range(n):
        out[i], j = _occupancy_draw(prob, alias, iprob, ialias, gamma, horizon, u, j)
    return out


@numba.njit(cache=True)
def _rollout(prob, alias, signal, gamma, horizon, x, u, j):
    total = 0.0
    disc = 1.0
    for k in range(horizon):
        total += disc * signal[x]
        disc *= gamma
        if k < horizon - 1:
            x = _draw(prob, alias, x, u[j])
            j += 1
    return total, j


@numba.njit(cache=True)
def _npg_kernel(prob, alias, iprob, ialias, pprob, palias, probs, signal, gamma, horizon,
                paths, radius, steps, weights, exact_adv, use_exact, u):
    S, A = probs.shape
    w = np.zeros(S * A)
    out = np.zeros(S * A)
    phi = np.zeros(A)
    j = 0
    for k in range(paths):
        x, j = _occupancy_draw(prob, alias, iprob, ialias, gamma, horizon, u, j)
        s = x // A
        a = x - s * A
        if use_exact:
            adv = exact_adv[x]
        else:
            q, j = _rollout(prob, alias, signal, gamma, horizon, x, u, j)
            b0 = _draw(pprob, palias, s, u[j])
            j += 1
            v, j = _rollout(prob, alias, signal, gamma, horizon, s * A + b0, u, j)
            adv = q - v
        # score of the softmax lives in block s: e_a - pi(.|s)
        pred = 0.0
        for b in range(A):
            phi[b] = -probs[s, b]
        phi[a] += 1.0
        for b in range(A):
            pred += w[s * A + b] * phi[b]
        g = 2.0 * (pred - adv)
        for b in range(A):
            w[s * A + b] -= steps[k] * g * phi[b]
        norm = np.sqrt(np.sum(w * w))
        if norm > radius:
            w *= radius / norm
        out += weights[k] * w
    return out


# -- policies and sampling ----------------------------------------------------


def softmax(theta) -> np.ndarray:
    z = theta - theta.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class SoftmaxPolicy:
    """``pi(a|s) = exp(theta[s, a]) / sum_b exp(theta[s, b])``."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 2:
            raise ValueError("theta must have shape (S, A)")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def zeros(cls, num_states, num_actions) -> "SoftmaxPolicy":
        return cls(np.zeros((num_states, num_actions)))

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.theta)

    def grad_log_prob(self, s: int, a: int) -> np.ndarray:
        """``d log pi(a|s) / d theta``, shape ``(S, A)``."""
        g = np.zeros_like(self.theta)
        g[s] = -self.probs[s]
        g[s, a] += 1.0
        return g

    def to_policy(self) -> Policy:
        return Policy(self.probs)


class TabularSampler:
    """Simulator access to a tabular model: ``mu`` draws and ``P`` transitions."""

    def __init__(self, model: TabularSICMDP):
        self.model = model
        self.num_states = model.num_states
        self.num_actions = model.num_actions
        self.gamma = model.discount

    def chain(self, policy):
        """Alias tables of the state-action chain under ``policy``:
        transitions ``(s, a) -> (s', a')``, the initial pair and ``pi(.|s)``."""
        probs = np.ascontiguousarray(_policy_probs(policy))
        S, A = probs.shape
        joint = (self.model.transition[:, :, :, None] * probs[None, None]).reshape(S * A, S * A)
        init = (self.model.initial_dist[:, None] * probs).reshape(1, S * A)
        return _alias_tables(joint) + _alias_tables(init) + _alias_tables(probs)

    def visitation(self, policy, episodes, horizon, seed) -> np.ndarray:
        """Mean over episodes of ``sum_{k<H} gamma^k 1{(s_k, a_k) = (s, a)}``."""
        tables = self.chain(policy)[:4]
        u = _generator(seed).random(int(episodes) * (int(horizon) + 1))
        visits = _visitation_kernel(*tables, self.gamma, int(horizon), int(episodes), u)
        return visits.reshape(self.num_states, self.num_actions)

    def occupancy_samples(self, policy, n, horizon, seed) -> np.ndarray:
        """``(n, 2)`` draws of ``(s, a)`` from the normalized occupancy (horizon-capped)."""
        tables = self.chain(policy)[:4]
        rng = _generator(seed)
        batches = []
        for lo in range(0, int(n), 1024):
            k = min(1024, int(n) - lo)
            u = rng.random(k * 2 * int(horizon))
            batches.append(_occupancy_kernel(*tables, self.gamma, int(horizon), k, u))
        x = np.concatenate(batches) if batches else np.zeros(0, dtype=np.int64)
        return np.stack([x // self.num_actions, x % self.num_actions], axis=1)


def _policy_probs(policy) -> np.ndarray:
    if isinstance(policy, (SoftmaxPolicy, Policy)):
        return np.asarray(policy.probs, float)
    return np.asarray(policy, float)


def _generator(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# -- evaluation ----------------------------------------------------------------


@dataclass(frozen=True)
class EvalConfig:
    """Monte-Carlo evaluation budget: ``K_eval`` episodes of ``H`` steps."""

    K_eval: int = 10_000
    H: int = 100

    def __post_init__(self):
        if self.K_eval < 1 or self.H < 1:
            raise ValueError("K_eval and H must be positive")


def mc_evaluate(sampler: TabularSampler, policy, cost, cfg: EvalConfig = EvalConfig(),
                seed=0) -> float:
    """Mean of ``G = sum_{k<H} gamma^k cost(s_k, a_k)`` over ``K_eval`` episodes from ``mu``.

    The truncation bias against the infinite-horizon value is at most
    ``gamma^H / (1 - gamma)`` for costs in [0, 1].
    """
    visits = sampler.visitation(policy, cfg.K_eval, cfg.H, seed)
    return float(np.sum(visits * np.asarray(cost, float)))


# -- sample-based NPG ------------------------------------------------------------


def averaging_weights(K: int) -> np.ndarray:
    """``gamma_k = 2k / (K (K + 1))`` for ``k = 1..K``."""
    k = np.arange(1, K + 1, dtype=float)
    return 2 * k / (K * (K + 1))


@dataclass(frozen=True)
class NPGConfig:
    """Sample-based NPG settings.

    ``step`` is a constant SGD step or a callable ``k -> eta_k``
    (``k = 0..K_sgd-1``).  ``weights`` defaults to ``averaging_weights``.
    """

    K_sgd: int = 1000
    H: int = 100
    W: float = 1000.0
    step: Union[float, Callable[[int], float]] = 1.0
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.K_sgd < 1 or self.H < 1 or self.W <= 0:
            raise ValueError("K_sgd, H and W must be positive")
        if self.weights is not None:
            w = np.asarray(self.weights, float)
            if w.shape != (self.K_sgd,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
                raise ValueError("weights must be K_sgd non-negative numbers summing to 1")
        steps = self.steps()
        if np.any(steps <= 0) or not np.all(np.isfinite(steps)):
            raise ValueError("SGD steps must be positive")

    def steps(self) -> np.ndarray:
        if callable(self.step):
            return np.array([float(self.step(k)) for k in range(self.K_sgd)])
        return np.full(self.K_sgd, float(self.step))

    def averaging(self) -> np.ndarray:
        if self.weights is None:
            return averaging_weights(self.K_sgd)
        return np.asarray(self.weights, float)


def theory_step_schedule(gamma, mu_f):
    """``eta_k = 2 / ((1 - gamma)^2 mu_F (k + 1))``; needs the Fisher curvature ``mu_F``."""
    return lambda k: 2.0 / ((1 - gamma) ** 2 * mu_f * (k + 1))


def sample_npg_direction(sampler: TabularSampler, policy, signal, cfg: NPGConfig = NPGConfig(),
                         seed=0, advantage_fn=None) -> np.ndarray:
    """NPG direction ``w_hat`` of shape ``(S, A)`` by projected SGD on the
    compatible-function-approximation loss.

    ``advantage_fn(probs) -> (S, A)`` replaces the rollout estimates of
    ``Q - V`` with given advantages (used to check the regression itself).
    """
    probs = _policy_probs(policy)
    S, A = probs.shape
    exact = np.zeros((S, A))
    if advantage_fn is not None:
        exact = np.asarray(advantage_fn(probs), float).reshape(S, A)
    u = _generator(seed).random(cfg.K_sgd * 4 * cfg.H)
    w = _npg_kernel(*sampler.chain(probs), np.ascontiguousarray(probs),
                    np.asarray(signal, dtype=float).ravel(), sampler.gamma, cfg.H, cfg.K_sgd,
                    float(cfg.W), cfg.steps(), cfg.averaging(), exact.ravel(),
                    advantage_fn is not None, u)
    return w.reshape(S, A)


# -- SI-CPO ----------------------------------------------------------------------


@dataclass
class SICPOConfig:
    alpha: float = 1.0
    eta: float = 0.013
    T: int = 1000
    npg: NPGConfig = field(default_factory=NPGConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    inner: InnerSolverConfig = field(default_factory=lambda: InnerSolverConfig("random", samples=100))
    seed: int = 0
    return_last_good: bool = False
    audit_model: Optional[TabularSICMDP] = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.alpha <= 0 or self.eta < 0:
            raise ValueError("alpha must be positive and eta non-negative")


@dataclass
class IterationRecord:
    iter: int
    branch: str
    est_violation: float
    y: np.ndarray
    reward_value_exact: Optional[float]
    elapsed_ms: float


@dataclass
class SICPOState:
    """Parameter history ``thetas[t]`` (the iterate evaluated at step ``t``),
    the good/bad index sets and one record per iteration."""

    thetas: np.ndarray
    good: list
    bad: list
    records: list
    chosen: Optional[int] = None

    def to_csv(self, timing=False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "branch", "est_violation", "y_coords", "reward_value_exact", "elapsed_ms"])
        for r in self.records:
            w.writerow([r.iter, r.branch, repr(r.est_violation), ";".join(repr(float(v)) for v in r.y),
                        "" if r.reward_value_exact is None else repr(r.reward_value_exact),
                        repr(r.elapsed_ms) if timing else ""])
        return buf.getvalue()

    def policy_at(self, t) -> SoftmaxPolicy:
        return SoftmaxPolicy(self.thetas[t])


def run_sicpo(sampler: TabularSampler, family: Optional[ConstraintFamily] = None,
              config: Optional[SICPOConfig] = None) -> tuple[Policy, SICPOState]:
    """Alternate reward ascent and cost descent steps for ``T`` iterations.

    Returns the policy of an iterate drawn uniformly (seeded) from the good
    set, or the last good iterate with ``return_last_good``.  Raises
    ``EmptyGoodSet`` if no iterate ever passed the violation test.
    """
    config = config or SICPOConfig()
    family = family or sampler.model.constraints
    rng = np.random.default_rng(config.seed)
    S, A = sampler.num_states, sampler.num_actions
    reward = np.asarray(sampler.model.reward, float)
    theta = np.zeros((S, A))
    thetas = np.empty((config.T, S, A))
    good, bad, records = [], [], []
    gradient = None
    start = time.perf_counter()
    for t in range(config.T):
        thetas[t] = theta
        policy = SoftmaxPolicy(theta)
        visits = sampler.visitation(policy, config.eval.K_eval, config.eval.H, rng)
        if config.inner.kind == "pga" and family.has_gradients:
            gradient = lambda ys: family.violation_grad(visits, ys)  # noqa: E731
        y, est = inner_max(family, lambda ys: family.violation(visits, ys), config.inner,
                           gradient=gradient, rng=rng)
        if est <= config.eta:
            good.append(t)
            branch = "B"
            theta = theta + config.alpha * sample_npg_direction(sampler, policy, reward,
                                                                config.npg, rng)
        else:
            bad.append(t)
            branch = "N"
            cost = family.cost(np.reshape(y, (1, -1)))[0]
            theta = theta - config.alpha * sample_npg_direction(sampler, policy, cost,
                                                                config.npg, rng)
        exact = None
        if config.audit_model is not None:
            exact = policy_value(config.audit_model, policy.probs, config.audit_model.reward)
        records.append(IterationRecord(t, branch, float(est), np.asarray(y, float), exact,
                                       1e3 * (time.perf_counter() - start)))
    state = SICPOState(thetas, good, bad, records)
    if not good:
        raise EmptyGoodSet(f"no iterate met the violation tolerance {config.eta} in {config.T} steps")
    state.chosen = good[-1] if config.return_last_good else int(good[rng.integers(len(good))])
    return SoftmaxPolicy(thetas[state.chosen]).to_policy(), state


def run_fixed_grid_baseline(sampler: TabularSampler, family: Optional[ConstraintFamily] = None,
                            n_baseline: int = 100, config: Optional[SICPOConfig] = None,
                            grid=None) -> tuple[Policy, SICPOState]:
    """SI-CPO with the violation search restricted to a predetermined grid.

    ``grid`` defaults to the ``n_baseline``-point cell-center lattice.
    """
    config = config or SICPOConfig()
    family = family or sampler.model.constraints
    if grid is None:
        grid = grid_points(family.box, n_baseline)
    inner = InnerSolverConfig("grid", grid=np.asarray(grid, float), seed=config.inner.seed)
    fixed = SICPOConfig(config.alpha, config.eta, config.T, config.npg, config.eval, inner,
                        config.seed, config.return_last_good, config.audit_model)
    return run_sicpo(sampler, family, fixed)
