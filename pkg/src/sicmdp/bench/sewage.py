"""Discharge-of-sewage benchmark.

States are outfalls at random positions in the unit square.  The pollution
cost at location ``y`` of the active outfall ``s`` is ``1 / (1 + |y - s|^2)``,
and the threshold at ``y`` is ``(1 + margin)`` times what the uniform policy
incurs there, so the uniform policy is feasible by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..constraint import AuditGrid, ConstraintFamily, register_family
from ..core import Policy, TabularSICMDP, policy_to_occupancy

# sup over the unit square of |grad_y 1/(1+|y-x|^2)|_1, reached at |dx| = |dy| = 1/sqrt(6)
KERNEL_LIPSCHITZ = 9.0 / (4.0 * math.sqrt(6.0))


class SewageFamily(ConstraintFamily):
    """``c_y(s, a) = 1 / (1 + |y - x_s|^2)`` and
    ``u_y = (1 + margin) / (1 - gamma) * sum_s d(s) c_y(s)``.

    ``target_occupancy`` ``d`` is a probability vector over states, so the
    threshold is ``(1 + margin)`` times the discounted cost value of any
    policy whose normalized state occupancy is ``d``.
    """

    kind = "sewage"

    def __init__(self, outfalls, target_occupancy, delta_margin, gamma, num_actions):
        self.outfalls = np.array(outfalls, dtype=float).reshape(-1, 2)
        self.target_occupancy = np.array(target_occupancy, dtype=float)
        self.delta_margin = float(delta_margin)
        self.gamma = float(gamma)
        self.num_actions = int(num_actions)
        if self.delta_margin <= 0:
            raise ValueError("delta_margin must be positive")
        if abs(self.target_occupancy.sum() - 1) > 1e-9 or np.any(self.target_occupancy < 0):
            raise ValueError("target_occupancy must be a probability vector")
        if np.any(self.outfalls < 0) or np.any(self.outfalls > 1):
            raise ValueError("outfalls must lie in the unit square")
        self._scale = (1 + self.delta_margin) / (1 - self.gamma)
        super().__init__(
            [[0.0, 1.0], [0.0, 1.0]], self._cost, self._threshold,
            lipschitz=max(1.0, self._scale) * KERNEL_LIPSCHITZ,
            cost_grad=self._cost_grad, threshold_grad=self._threshold_grad)

    def state_cost(self, ys) -> np.ndarray:
        """``(k, S)`` matrix of ``c_y(s)``."""
        diff = np.asarray(ys, float)[:, None, :] - self.outfalls[None, :, :]
        return 1.0 / (1.0 + np.sum(diff * diff, axis=2))

    def _cost(self, ys):
        c = self.state_cost(ys)
        return np.repeat(c[:, :, None], self.num_actions, axis=2)

    def _threshold(self, ys):
        return self._scale * (self.state_cost(ys) @ self.target_occupancy)

    def _state_cost_grad(self, ys):
        diff = np.asarray(ys, float)[:, None, :] - self.outfalls[None, :, :]
        c = 1.0 / (1.0 + np.sum(diff * diff, axis=2))
        return -2.0 * diff * (c * c)[:, :, None]

    def _cost_grad(self, ys):
        g = self._state_cost_grad(ys)
        return np.repeat(g[:, :, None, :], self.num_actions, axis=2)

    def _threshold_grad(self, ys):
        return self._scale * np.einsum("ksm,s->km", self._state_cost_grad(ys), self.target_occupancy)

    def weighted_cost(self, weights, ys, chunk=8192):
        w = np.asarray(weights, float).sum(axis=1)
        ys = np.asarray(ys, float).reshape(-1, 2)
        return np.concatenate([self.state_cost(ys[i:i + chunk]) @ w
                               for i in range(0, len(ys), chunk)]) if len(ys) else np.zeros(0)

    def descriptor(self) -> dict:
        return {
            "kind": "sewage",
            "dim": 2,
            "box": self.box.tolist(),
            "outfalls": self.outfalls.tolist(),
            "delta_margin": self.delta_margin,
            "target_occupancy": self.target_occupancy.tolist(),
            "num_actions": self.num_actions,
        }


def _load_sewage(doc, gamma):
    outfalls = doc["outfalls"]
    return SewageFamily(outfalls, doc["target_occupancy"], doc["delta_margin"], gamma,
                        doc.get("num_actions", 1))


register_family("sewage", _load_sewage)


@dataclass(frozen=True)
class SewageSpec:
    """Instance parameters; outfalls and transitions are drawn from ``seed``."""

    num_states: int = 8
    num_actions: int = 4
    gamma: float = 0.9
    delta_margin: float = 1e-6
    seed: int = 0
    outfalls: Optional[tuple] = None
    audit_grid: int = 10_000

    def __post_init__(self):
        if self.num_states < 1 or self.num_actions < 1:
            raise ValueError("need at least one state and one action")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.delta_margin <= 0:
            raise ValueError("delta_margin must be positive")


def generate_sewage_env(spec: SewageSpec = SewageSpec()) -> TabularSICMDP:
    """Random sewage instance; identical for identical specs.

    Draw order from ``default_rng(seed)``: outfall positions (uniform on the
    square), transition rows (uniform on the simplex), rewards (uniform on
    [0, 1]).  The initial distribution is uniform and the target occupancy
    is the uniform policy's state occupancy.
    """
    S, A = spec.num_states, spec.num_actions
    rng = np.random.default_rng(spec.seed)
    outfalls = rng.random((S, 2)) if spec.outfalls is None else np.asarray(spec.outfalls, float)
    transition = rng.dirichlet(np.ones(S), size=(S, A))
    reward = rng.random((S, A))
    mu = np.full(S, 1.0 / S)
    base = TabularSICMDP(transition, reward, mu, spec.gamma)
    uniform = Policy.uniform(S, A)
    d = policy_to_occupancy(base, uniform).sum(axis=1)
    d = d / d.sum()
    family = SewageFamily(outfalls, d, spec.delta_margin, spec.gamma, A)
    model = TabularSICMDP(transition, reward, mu, spec.gamma, family)
    if spec.audit_grid:
        grid = AuditGrid.of_size(family, spec.audit_grid)
        _, worst = grid.sup_violation(policy_to_occupancy(model, uniform), 1 / (1 - spec.gamma))
        if worst > 1e-12:
            raise RuntimeError(f"uniform policy violates the generated constraints by {worst:.3e}")
    return model
