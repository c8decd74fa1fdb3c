"""Contract every nonsmooth problem exposes to the dynamics engine and certifiers.

An oracle bundles, for one problem instance:

* the objective and one deterministic Clarke subgradient selection,
* the geometry of the critical manifold near the reference point
  (distance, nearest-point projection, tangent projection, gradient along
  the manifold),
* a Chetaev function vanishing at the reference point, together with the
  declared exponent and per-step-size rate of its increments.

Oracles are immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np

__all__ = [
    "ProblemOracle",
    "AuditSkipped",
    "validate_subgradient",
    "membership_check",
]


class AuditSkipped(Exception):
    """A finite-difference audit was requested at a nonsmooth point.

    Not a failure: the derivative check is only meaningful where the
    objective is differentiable.
    """


class ProblemOracle(ABC):
    """Deterministic capabilities of one nonsmooth problem instance.

    The critical-manifold geometry (`dist_to_critical`, `project_critical`,
    `tangent_project`, `riemannian_gradient`) is supplied analytically per
    problem and is guaranteed only inside the certification ball of radius
    `neighborhood_radius` around `reference_point`. Objective and subgradient
    are valid wherever the instance's closed form holds, which for every
    built-in problem is at least the ball of radius `default_escape_radius`.
    """

    #: short identifier used by the CLI, reports, and trajectory files
    name: str = "problem"

    @property
    @abstractmethod
    def dim(self) -> int:
        """Ambient dimension."""

    @property
    @abstractmethod
    def reference_point(self) -> np.ndarray:
        """The candidate (spurious) local minimum. Treat as read-only."""

    @property
    @abstractmethod
    def neighborhood_radius(self) -> float:
        """Radius of the closed certification ball around the reference point."""

    @property
    def default_escape_radius(self) -> float:
        """Escape-ball radius used by the experiment harness when unset."""
        return self.neighborhood_radius

    @property
    @abstractmethod
    def chetaev_exponent(self) -> float:
        """Declared exponent in the Chetaev increment lower bound."""

    @abstractmethod
    def chetaev_rate(self, alpha: float) -> float:
        """Declared increment coefficient for step size `alpha`."""

    @abstractmethod
    def objective(self, x) -> float:
        """Objective value at `x`."""

    @abstractmethod
    def subgradient(self, x) -> np.ndarray:
        """One deterministic Clarke subgradient selection at `x`."""

    @abstractmethod
    def dist_to_critical(self, x) -> float:
        """Distance from `x` to the critical manifold (valid inside the ball)."""

    @abstractmethod
    def project_critical(self, x) -> np.ndarray:
        """Nearest point on the critical manifold (valid inside the ball)."""

    @abstractmethod
    def tangent_project(self, y, v) -> np.ndarray:
        """Project `v` onto the tangent space of the critical manifold at `y`.

        `y` must lie on the critical manifold inside the certification ball.
        """

    @abstractmethod
    def riemannian_gradient(self, y) -> np.ndarray:
        """Gradient of the objective along the critical manifold at `y`."""

    @abstractmethod
    def chetaev(self, x) -> float:
        """Chetaev function value at `x`; zero at the reference point."""

    @abstractmethod
    def is_differentiable_at(self, x, margin: float) -> bool:
        """True when `x` keeps clearance `margin` from the nonsmooth locus."""

    def spurious_witness(self):
        """Point with objective strictly below the reference value, or None.

        Returns a `(point, expected_value)` pair when the reference point is
        spurious, None when no lower point is known (e.g. a global minimum).
        """
        return None

    def observe(self, x):
        """Per-step evaluation bundle: (objective, chetaev, dist, ref_dist).

        `ref_dist` is the distance from `x` to the reference point. This is
        what the engine logs at every iterate; built-in problems override it
        with a fused implementation since it dominates the run loop.
        """
        d = np.asarray(x, dtype=np.float64) - self.reference_point
        return (
            self.objective(x),
            self.chetaev(x),
            self.dist_to_critical(x),
            float(np.sqrt(d @ d)),
        )


def validate_subgradient(problem: ProblemOracle, x, h: float, margin: float | None = None) -> float:
    """Audit the oracle's subgradient against central finite differences.

    Returns the max over coordinates of the absolute discrepancy between the
    central difference of the objective with step `h` and the oracle's
    selection. Raises :class:`AuditSkipped` when `x` is within `margin`
    (default ``4 * h``) of the problem's nonsmooth locus, where the check is
    meaningless.
    """
    if h <= 0.0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    if margin is None:
        margin = 4.0 * h
    x = np.asarray(x, dtype=np.float64)
    if not problem.is_differentiable_at(x, margin):
        raise AuditSkipped(f"{problem.name}: point is within {margin} of the nonsmooth locus")
    v = problem.subgradient(x)
    worst = 0.0
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        fd = (problem.objective(x + step) - problem.objective(x - step)) / (2.0 * h)
        worst = max(worst, abs(fd - float(v[i])))
    return worst


def membership_check(problem: ProblemOracle, x, v, tol: float) -> bool:
    """True when `v` matches the oracle's selection at `x` within `tol`.

    The engine records the selection it used at every step; this re-verifies
    a logged pair. With ``tol == 0`` the match must be exact, which holds for
    any faithfully logged trajectory because the selection is deterministic.
    """
    w = problem.subgradient(x)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != w.shape:
        return False
    err = float(np.max(np.abs(v - w))) if v.size else 0.0
    return err <= tol


def reference_distance(problem: ProblemOracle, x) -> float:
    """Distance from `x` to the problem's reference point."""
    d = np.asarray(x, dtype=np.float64) - problem.reference_point
    return math.sqrt(float(d @ d))
