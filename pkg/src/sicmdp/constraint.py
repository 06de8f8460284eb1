"""Box-indexed constraint families and the maximizers over the index set.

A family holds the continuum of costs ``c_y(s, a)`` and thresholds ``u_y``
for ``y`` in an axis-aligned box ``Y``.  Every evaluator is vectorized over
``y``: ``cost(ys)`` maps an ``(k, m)`` array to ``(k, S, A)`` and
``threshold(ys)`` maps it to ``(k,)``.

Three interchangeable inner solvers search ``Y`` for the most violated
index: uniform random search, projected subgradient ascent with iterate
averaging, and an exhaustive fixed grid.
"""
from __future__ import annotations

import importlib
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import GradientUnavailable

FD_STEP = 1e-5

_FAMILY_KINDS: dict[str, Callable] = {}


def register_family(kind: str, loader: Callable) -> None:
    """Register ``loader(descriptor, gamma)`` for a descriptor ``kind``."""
    _FAMILY_KINDS[kind] = loader


def family_from_descriptor(descriptor: dict, gamma: float) -> "ConstraintFamily":
    kind = descriptor.get("kind")
    if kind not in _FAMILY_KINDS:
        # built-in benchmark families register themselves on import
        importlib.import_module("sicmdp.bench")
    if kind not in _FAMILY_KINDS:
        raise ValueError(f"unknown constraint family kind {kind!r}")
    return _FAMILY_KINDS[kind](descriptor, gamma)


def _as_points(ys, dim: int) -> np.ndarray:
    ys = np.asarray(ys, dtype=float)
    if ys.ndim == 2 and ys.shape[1] == dim:
        return ys
    return ys.reshape(-1, dim)


class ConstraintFamily:
    """Costs ``c_y(s, a)`` in [0, 1] and thresholds ``u_y`` over a box.

    Parameters
    ----------
    box : array_like, shape (m, 2)
        Rows of ``[lo, hi]`` bounds.
    cost : callable
        ``cost(ys) -> (k, S, A)`` for ``ys`` of shape ``(k, m)``.
    threshold : callable
        ``threshold(ys) -> (k,)``.
    lipschitz : float
        Common Lipschitz constant of ``c_y`` and ``u_y`` in ``y`` w.r.t. the
        sup-norm.
    cost_grad, threshold_grad : callable, optional
        ``(k, m) -> (k, S, A, m)`` and ``(k, m) -> (k, m)``.
    validate : bool
        Check cost range (and gradients when given) on a few points.
    """

    kind = "custom"

    def __init__(self, box, cost, threshold, lipschitz, cost_grad=None,
                 threshold_grad=None, validate=True):
        box = np.array(box, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(box)) or np.any(box[:, 0] >= box[:, 1]):
            raise ValueError("box needs finite bounds with lo < hi on every axis")
        if not lipschitz > 0:
            raise ValueError("lipschitz constant must be positive")
        box.setflags(write=False)
        self.box = box
        self._cost = cost
        self._threshold = threshold
        self.lipschitz = float(lipschitz)
        self._cost_grad = cost_grad
        self._threshold_grad = threshold_grad
        if validate:
            self.validate()

    # -- geometry ---------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.box.shape[0]

    @property
    def lo(self) -> np.ndarray:
        return self.box[:, 0]

    @property
    def hi(self) -> np.ndarray:
        return self.box[:, 1]

    @property
    def diam(self) -> float:
        """Sup-norm diameter of the box."""
        return float(np.max(self.hi - self.lo))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def clamp(self, ys) -> np.ndarray:
        """Euclidean projection onto the box (per-coordinate clamp)."""
        return np.clip(ys, self.lo, self.hi)

    def contains(self, ys, atol=0.0) -> np.ndarray:
        ys = _as_points(ys, self.dim)
        return np.all((ys >= self.lo - atol) & (ys <= self.hi + atol), axis=1)

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))

    # -- evaluators -------------------------------------------------------
    @property
    def has_gradients(self) -> bool:
        return self._cost_grad is not None and self._threshold_grad is not None

    def cost(self, ys) -> np.ndarray:
        return np.asarray(self._cost(_as_points(ys, self.dim)), dtype=float)

    def threshold(self, ys) -> np.ndarray:
        return np.asarray(self._threshold(_as_points(ys, self.dim)), dtype=float)

    def cost_grad(self, ys) -> np.ndarray:
        if self._cost_grad is None:
            raise GradientUnavailable("family has no analytic cost gradient")
        return np.asarray(self._cost_grad(_as_points(ys, self.dim)), dtype=float)

    def threshold_grad(self, ys) -> np.ndarray:
        if self._threshold_grad is None:
            raise GradientUnavailable("family has no analytic threshold gradient")
        return np.asarray(self._threshold_grad(_as_points(ys, self.dim)), dtype=float)

    def weighted_cost(self, weights, ys, chunk=8192) -> np.ndarray:
        """``sum_{s,a} weights[s, a] * c_y(s, a)`` for every row of ``ys``."""
        ys = _as_points(ys, self.dim)
        weights = np.asarray(weights, dtype=float)
        out = np.empty(len(ys))
        for start in range(0, len(ys), chunk):
            block = self.cost(ys[start:start + chunk])
            out[start:start + chunk] = np.einsum("ksa,sa->k", block, weights)
        return out

    def violation(self, weights, ys, scale=1.0) -> np.ndarray:
        """``scale * <weights, c_y> - u_y``; with ``weights = nu`` and
        ``scale = 1/(1-gamma)`` this is ``V_{c_y}(mu) - u_y``."""
        return scale * self.weighted_cost(weights, ys) - self.threshold(ys)

    def violation_grad(self, weights, ys, scale=1.0) -> np.ndarray:
        ys = _as_points(ys, self.dim)
        g = np.einsum("ksam,sa->km", self.cost_grad(ys), np.asarray(weights, float))
        return scale * g - self.threshold_grad(ys)

    def validate(self, n=8, seed=0, grad_atol=1e-4) -> None:
        """Check cost range and supplied gradients on corner and random points."""
        rng = np.random.default_rng(seed)
        corners = np.array(np.meshgrid(*self.box)).reshape(self.dim, -1).T
        pts = np.vstack([corners[:16], self.sample_uniform(rng, n)])
        c = self.cost(pts)
        if c.ndim != 3:
            raise ValueError("cost(ys) must return shape (k, S, A)")
        if np.any(c < 0) or np.any(c > 1) or not np.all(np.isfinite(c)):
            raise ValueError("cost values must lie in [0, 1]")
        if np.any(np.isnan(self.threshold(pts))):
            raise ValueError("threshold values must not be NaN")
        if self._cost_grad is not None or self._threshold_grad is not None:
            err = self.gradient_error(self.sample_uniform(rng, n))
            if err > grad_atol:
                raise ValueError(f"supplied gradients disagree with finite differences ({err:.2e})")

    def gradient_error(self, ys) -> float:
        """Largest gap between supplied gradients and central differences."""
        ys = _as_points(ys, self.dim)
        worst = 0.0
        for i in range(self.dim):
            step = np.zeros(self.dim)
            step[i] = FD_STEP
            if self._cost_grad is not None:
                fd = (self.cost(ys + step) - self.cost(ys - step)) / (2 * FD_STEP)
                worst = max(worst, float(np.max(np.abs(fd - self.cost_grad(ys)[..., i]))))
            if self._threshold_grad is not None:
                fd = (self.threshold(ys + step) - self.threshold(ys - step)) / (2 * FD_STEP)
                worst = max(worst, float(np.max(np.abs(fd - self.threshold_grad(ys)[:, i]))))
        return worst

    def descriptor(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "box": self.box.tolist()}

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, box={self.box.tolist()}, L={self.lipschitz:g})"


def balanced_factors(n: int, dim: int) -> list[int]:
    """Per-axis counts with product ``n``, as equal as divisibility allows."""
    if n < 1:
        raise ValueError("grid size must be positive")
    if dim == 1:
        return [n]
    target = n ** (1.0 / dim)
    best = max(k for k in range(1, int(target + 1e-9) + 1) if n % k == 0)
    return [best] + balanced_factors(n // best, dim - 1)


def grid_points(box, n: int) -> np.ndarray:
    """Deterministic cell-center lattice of exactly ``n`` points in ``box``.

    Perfect powers give the square lattice (``n = 9`` is 3x3); other sizes
    use the most balanced factorization of ``n`` across axes.
    """
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    counts = balanced_factors(int(n), box.shape[0])
    axes = [lo + (hi - lo) * (np.arange(k) + 0.5) / k
            for (lo, hi), k in zip(box, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


class AuditGrid:
    """A fixed set of ``y`` points with cached costs and thresholds.

    Used wherever the same grid is evaluated against many occupancy
    measures (error metrics, reference solves, audits).
    """

    def __init__(self, family: ConstraintFamily, points, chunk=8192):
        self.family = family
        self.points = _as_points(points, family.dim)
        blocks = [family.cost(self.points[i:i + chunk]) for i in range(0, len(self.points), chunk)]
        cost = np.concatenate(blocks, axis=0)
        self.shape = cost.shape[1:]
        self.cost_matrix = cost.reshape(len(self.points), -1)
        self.thresholds = family.threshold(self.points)

    @classmethod
    def of_size(cls, family: ConstraintFamily, n: int) -> "AuditGrid":
        return cls(family, grid_points(family.box, n))

    def __len__(self):
        return len(self.points)

    def violations(self, weights, scale=1.0) -> np.ndarray:
        return scale * (self.cost_matrix @ np.ravel(weights)) - self.thresholds

    def sup_violation(self, weights, scale=1.0) -> tuple[np.ndarray, float]:
        v = self.violations(weights, scale)
        i = int(np.argmax(v))
        return self.points[i], float(v[i])


# -- inner solvers -----------------------------------------------------------

@dataclass
class InnerSolverConfig:
    """Which maximizer to run over ``Y`` and its budget.

    ``kind`` is ``"random"`` (``samples`` uniform draws), ``"pga"``
    (``iterations`` projected subgradient steps) or ``"grid"``.
    """

    kind: str = "random"
    samples: int = 10_000
    iterations: int = 1_000
    grid: Optional[np.ndarray] = None
    seed: int = 0
    finite_difference: bool = False
    start: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("random", "pga", "grid"):
            raise ValueError(f"unknown inner solver kind {self.kind!r}")
        if self.samples < 1:
            raise ValueError("random search needs at least one sample")
        if self.iterations < 1:
            raise ValueError("projected ascent needs at least one iteration")
        if self.kind == "grid" and (self.grid is None or len(self.grid) == 0):
            raise ValueError("fixed-grid search needs a nonempty grid")


def random_search(family, objective, samples, seed=0):
    """Best of ``samples`` i.i.d. uniform draws from the box.

    ``seed`` may be an int or a ``numpy.random.Generator`` (consumed).
    Ties go to the first draw.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    ys = family.sample_uniform(rng, int(samples))
    values = np.asarray(objective(ys), dtype=float)
    i = int(np.argmax(values))
    return ys[i].copy(), float(values[i])


def fixed_grid_search(family, objective, grid):
    grid = _as_points(grid, family.dim)
    values = np.asarray(objective(grid), dtype=float)
    i = int(np.argmax(values))
    return grid[i].copy(), float(values[i])


def finite_difference_gradient(objective, dim, step=FD_STEP):
    """Central-difference gradient of a vectorized objective."""
    eye = np.eye(dim) * step

    def gradient(ys):
        ys = _as_points(ys, dim)
        k = len(ys)
        pts = np.concatenate([ys[:, None, :] + eye, ys[:, None, :] - eye], axis=1)
        vals = np.asarray(objective(pts.reshape(-1, dim)), float).reshape(k, 2 * dim)
        return (vals[:, :dim] - vals[:, dim:]) / (2 * step)

    return gradient


def projected_subgradient_ascent(family, objective, gradient, iterations, start=None):
    """Projected subgradient ascent with step ``diam / (L sqrt(T))``.

    Returns the average of the ``T`` post-step iterates and its objective
    value.  The guarantee needs a concave objective; that is not checked.
    """
    if gradient is None:
        raise GradientUnavailable("projected ascent needs a gradient")
    T = int(iterations)
    step = family.diam / (family.lipschitz * math.sqrt(T))
    y = family.clamp(family.center if start is None else np.asarray(start, float))
    total = np.zeros(family.dim)
    for _ in range(T):
        g = np.asarray(gradient(y[None, :]), float).reshape(family.dim)
        y = family.clamp(y + step * g)
        total += y
    y_bar = family.clamp(total / T)
    return y_bar, float(np.asarray(objective(y_bar[None, :]), float)[0])


def inner_max(family, objective, config: InnerSolverConfig, gradient=None, rng=None):
    """Approximate ``argmax_y objective(y)`` with the configured solver.

    ``objective`` (and ``gradient``) are vectorized over rows of ``y``.
    ``rng`` overrides ``config.seed`` so callers can consume one stream
    across repeated searches.
    """
    if config.kind == "grid":
        return fixed_grid_search(family, objective, config.grid)
    if config.kind == "random":
        return random_search(family, objective, config.samples,
                             rng if rng is not None else config.seed)
    if gradient is None:
        if not config.finite_difference:
            raise GradientUnavailable(
                "projected ascent needs analytic gradients or finite_difference=True")
        gradient = finite_difference_gradient(objective, family.dim)
    return projected_subgradient_ascent(family, objective, gradient,
                                        config.iterations, config.start)
