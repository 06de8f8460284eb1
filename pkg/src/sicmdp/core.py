"""Tabular SICMDP model, exact policy evaluation and occupancy conversions.

Shapes used throughout: transitions ``P[s, a, s']``, rewards and costs
``r[s, a]``, occupancy measures ``nu[s, a]`` and extended occupancies
``z[s, a, s']``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .constraint import AuditGrid, ConstraintFamily, family_from_descriptor
from .errors import SingularSystem

INPUT_ATOL = 1e-12
COMPUTED_ATOL = 1e-9


def _frozen(arr, dtype=float) -> np.ndarray:
    arr = np.array(arr, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_rows(arr, name, atol=INPUT_ATOL):
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has negative or non-finite entries")
    if np.max(np.abs(arr.sum(axis=-1) - 1.0)) > atol:
        raise ValueError(f"{name} rows must sum to 1")


@dataclass(frozen=True)
class TabularSICMDP:
    """Finite SICMDP ``<S, A, Y, P, r, c, u, mu, gamma>``.

    ``constraints`` may be ``None`` for a plain MDP.
    """

    transition: np.ndarray
    reward: np.ndarray
    initial_dist: np.ndarray
    discount: float
    constraints: Optional[ConstraintFamily] = None

    def __post_init__(self):
        P = _frozen(self.transition)
        r = _frozen(self.reward)
        mu = _frozen(self.initial_dist)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError("transition must have shape (S, A, S)")
        S, A, _ = P.shape
        if r.shape != (S, A) or mu.shape != (S,):
            raise ValueError("reward must be (S, A) and initial_dist (S,)")
        _check_rows(P, "transition")
        _check_rows(mu, "initial_dist")
        if np.any(r < 0) or np.any(r > 1):
            raise ValueError("reward entries must lie in [0, 1]")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie strictly inside (0, 1)")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "initial_dist", mu)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    def with_transition(self, transition) -> "TabularSICMDP":
        return TabularSICMDP(transition, self.reward, self.initial_dist,
                             self.discount, self.constraints)

    # -- JSON -------------------------------------------------------------
    def to_dict(self) -> dict:
        doc = {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "gamma": self.discount,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
            "mu": self.initial_dist.tolist(),
        }
        if self.constraints is not None:
            doc["constraints"] = self.constraints.descriptor()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularSICMDP":
        gamma = float(doc["gamma"])
        family = None
        if doc.get("constraints") is not None:
            family = family_from_descriptor(doc["constraints"], gamma)
        model = cls(doc["transition"], doc["reward"], doc["mu"], gamma, family)
        if model.num_states != doc["num_states"] or model.num_actions != doc["num_actions"]:
            raise ValueError("num_states/num_actions disagree with the arrays")
        return model

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TabularSICMDP":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Policy:
    """Stationary stochastic policy ``probs[s, a] = pi(a | s)``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.ndim != 2:
            raise ValueError("policy probabilities must be a matrix")
        _check_rows(probs, "policy")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, num_states, num_actions) -> "Policy":
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    def to_dict(self) -> dict:
        return {"probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, doc) -> "Policy":
        return cls(doc["probs"])


def _probs(policy) -> np.ndarray:
    return policy.probs if hasattr(policy, "probs") else np.asarray(policy, float)


def state_transition(model: TabularSICMDP, policy) -> np.ndarray:
    """``P_pi[s, s'] = sum_a pi(a|s) P(s'|s, a)``."""
    return np.einsum("sa,sat->st", _probs(policy), model.transition)


def exact_value(model: TabularSICMDP, policy, signal) -> np.ndarray:
    """Discounted value ``V(s)`` of a per-(s, a) signal, by a direct LU solve."""
    pi = _probs(policy)
    signal = np.asarray(signal, dtype=float)
    if not np.all(np.isfinite(signal)):
        raise SingularSystem("signal has non-finite entries")
    lhs = np.eye(model.num_states) - model.discount * state_transition(model, pi)
    rhs = np.sum(pi * signal, axis=1)
    try:
        V = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if np.max(np.abs(lhs @ V - rhs), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(rhs))):
        raise SingularSystem("policy evaluation residual too large")
    return V


def policy_value(model: TabularSICMDP, policy, signal) -> float:
    """``V(mu) = mu . V``."""
    return float(model.initial_dist @ exact_value(model, policy, signal))


def policy_to_occupancy(model: TabularSICMDP, policy) -> np.ndarray:
    """Normalized discounted occupancy ``nu[s, a]`` of a policy."""
    pi = _probs(policy)
    gamma = model.discount
    lhs = np.eye(model.num_states) - gamma * state_transition(model, pi).T
    try:
        d = np.linalg.solve(lhs, (1 - gamma) * model.initial_dist)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return np.clip(d, 0.0, None)[:, None] * pi


def flow_residual(model: TabularSICMDP, nu) -> float:
    """Max violation of the Bellman flow equations by ``nu``."""
    nu = np.asarray(nu, float)
    inflow = np.einsum("sa,sat->t", nu, model.transition)
    lhs = nu.sum(axis=1) - model.discount * inflow
    return float(np.max(np.abs(lhs - (1 - model.discount) * model.initial_dist)))


def occupancy_to_policy(nu) -> Policy:
    """Normalize occupancy rows; rows with zero state mass become uniform."""
    nu = np.clip(np.asarray(nu, dtype=float), 0.0, None)
    mass = nu.sum(axis=1, keepdims=True)
    A = nu.shape[1]
    probs = np.where(mass > 0, nu / np.where(mass > 0, mass, 1.0), 1.0 / A)
    return Policy(probs / probs.sum(axis=1, keepdims=True))


def extract_policy(z) -> Policy:
    """Policy of an extended occupancy ``z[s, a, s']`` (sum out ``s'``)."""
    return occupancy_to_policy(np.asarray(z, float).sum(axis=2))


def sup_violation(model: TabularSICMDP, policy, grid, family=None) -> tuple[np.ndarray, float]:
    """Worst ``V_{c_y}(mu) - u_y`` of a policy over a finite grid of ``y``."""
    family = family or model.constraints
    if not isinstance(grid, AuditGrid):
        grid = AuditGrid(family, grid)
    nu = policy_to_occupancy(model, policy)
    return grid.sup_violation(nu, scale=1.0 / (1 - model.discount))


def error_term(model: TabularSICMDP, candidate, reference_value, grid, family=None) -> float:
    """``max(reference_value - V_r(mu), max_grid V_{c_y}(mu) - u_y)``.

    The violation is a maximum over a finite grid, so it can undershoot the
    true supremum by up to about ``L_y`` times the grid spacing.
    """
    gap = reference_value - policy_value(model, candidate, model.reward)
    _, violation = sup_violation(model, candidate, grid, family)
    return max(gap, violation)
