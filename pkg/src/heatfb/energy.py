"""Discrete perturbed and sharp functionals, their first variation, and volume measurement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ScalarField, dirichlet_values, grad_sup_norm, laplacian_values
from .obstacle import solve_obstacle
from .penalty import PenaltyParams, penalty_A, regularizer_B, volume_penalty_f
from .scene import Scene


class BoundaryValueError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    penalty_A_total: float
    volume_measured: float
    f_value: float
    total: float
    f_zero: float = 0.0  # f at zero exterior volume, -epsilon * m

    @property
    def shifted_total(self) -> float:
        """total - f(0), which vanishes for the empty positive phase."""
        return self.total - self.f_zero

    def to_dict(self):
        return dict(self.__dict__, shifted_total=self.shifted_total)


def _values(u, scene: Scene) -> np.ndarray:
    v = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    if v.shape != scene.grid.shape:
        raise ValueError("field does not match the scene grid")
    return v


def _require_zero_boundary(v, scene):
    if np.any(v[scene.grid.boundary_mask] != 0.0):
        raise BoundaryValueError("u must vanish on the box boundary")


def smoothed_volume(v: np.ndarray, scene: Scene, kappa2: float) -> float:
    B, _ = regularizer_B(v, kappa2)
    return float(np.sum(B * scene.grid.weights * scene.exterior))


def energy_terms(v: np.ndarray, scene: Scene, p: PenaltyParams) -> EnergyBreakdown:
    """Unchecked core of :func:`perturbed_energy` on a raw array."""
    g = scene.grid
    w = g.weights
    dirichlet = dirichlet_values(v, g.h)
    A, _ = penalty_A(v - scene.phi.values, p.kappa1)
    a_total = float(np.sum(A * w))
    vol = smoothed_volume(v, scene, p.kappa2)
    f, _ = volume_penalty_f(vol, p.epsilon, scene.m)
    f0, _ = volume_penalty_f(0.0, p.epsilon, scene.m)
    return EnergyBreakdown(dirichlet, a_total, vol, f, dirichlet + a_total + f, float(f0))


def perturbed_energy(u, s: Scene, p: PenaltyParams) -> EnergyBreakdown:
    v = _values(u, s)
    _require_zero_boundary(v, s)
    return energy_terms(v, s, p)


def first_variation(u, s: Scene, p: PenaltyParams, volume_slope: float | None = None) -> ScalarField:
    """Nodal gradient of the perturbed energy divided by the quadrature weight.

    ``-lap u + alpha(u - phi) + f'(V) beta(u) chi_{D^c}`` at interior nodes, 0 on
    the boundary. ``volume_slope`` overrides f'(V), e.g. with a multiplier
    taken from the subdifferential of f at the kink.
    """
    v = _values(u, s)
    _require_zero_boundary(v, s)
    g = s.grid
    _, alpha = penalty_A(v - s.phi.values, p.kappa1)
    _, beta = regularizer_B(v, p.kappa2)
    if volume_slope is None:
        _, volume_slope = volume_penalty_f(smoothed_volume(v, s, p.kappa2), p.epsilon, s.m)
    out = -laplacian_values(v, g.h) + alpha + volume_slope * beta * s.exterior
    out[g.boundary_mask] = 0.0
    return ScalarField(g, out)


def exterior_positive_volume(u, s: Scene, threshold: float | None = None) -> float:
    v = _values(u, s)
    thr = s.default_threshold() if threshold is None else threshold
    if thr < 0:
        raise ValueError("threshold must be nonnegative")
    return float(np.sum((v > thr) * (1.0 - s.chi_D.values) * s.grid.weights))


def smoothed_exterior_volume(u, s: Scene) -> float:
    """Exterior volume through B with a ramp of 2h max|grad u|, a grid-aware soft count."""
    v = _values(u, s)
    slope = grad_sup_norm(ScalarField(s.grid, v))
    if slope == 0:
        return 0.0
    return smoothed_volume(v, s, 2.0 * s.h * slope)


def sharp_energy(u, s: Scene, epsilon: float, threshold: float | None = None) -> float:
    v = _values(u, s)
    vol = exterior_positive_volume(v, s, threshold)
    f, _ = volume_penalty_f(vol, epsilon, s.m)
    return dirichlet_values(v, s.grid.h) + f


def obstacle_free_mask(s: Scene) -> np.ndarray:
    return s.in_D & s.grid.interior_mask


def universal_competitor(s: Scene, tol: float = 1e-10, max_sweeps: int = 200_000):
    """Obstacle solution above phi vanishing outside D, and its Dirichlet energy M.

    Raises :class:`heatfb.obstacle.ConvergenceError` if PSOR stalls.
    """
    if s.max_phi <= 0:
        return ScalarField.zeros(s.grid), 0.0
    w, _, _ = solve_obstacle(s.phi.values, obstacle_free_mask(s), s.grid.h,
                             tol=tol, max_sweeps=max_sweeps)
    return ScalarField(s.grid, w), dirichlet_values(w, s.grid.h)
