"""Scalar penalty kernels of the perturbed functional.

All kernels accept scalars or numpy arrays and return ``(value, derivative)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PenaltyParams:
    kappa1: float
    kappa2: float
    epsilon: float

    def __post_init__(self):
        for name in ("kappa1", "kappa2", "epsilon"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    def replace(self, **kw) -> "PenaltyParams":
        d = {"kappa1": self.kappa1, "kappa2": self.kappa2, "epsilon": self.epsilon}
        d.update(kw)
        return PenaltyParams(**d)


def _out(x, *arrays):
    if np.ndim(x) == 0:
        return tuple(float(a) for a in arrays)
    return arrays


def penalty_A(t, kappa1: float):
    """Obstacle penalty: zero for t >= 0, quadratic on [-kappa1, 0), linear tail
    of slope -1/kappa1 below -kappa1. C^1, convex, non-increasing."""
    if not kappa1 > 0:
        raise ValueError("kappa1 must be positive")
    t = np.asarray(t, dtype=float)
    quad = (t < 0) & (t >= -kappa1)
    tail = t < -kappa1
    A = np.zeros_like(t)
    alpha = np.zeros_like(t)
    A = np.where(quad, t * t / (2.0 * kappa1**2), A)
    alpha = np.where(quad, t / kappa1**2, alpha)
    A = np.where(tail, -(t + 0.5 * kappa1) / kappa1, A)
    alpha = np.where(tail, -1.0 / kappa1, alpha)
    return _out(t, A, alpha)


def penalty_A_curvature(t, kappa1: float) -> np.ndarray:
    """Second derivative of ``penalty_A`` (piecewise constant)."""
    t = np.asarray(t, dtype=float)
    return np.where((t < 0) & (t >= -kappa1), 1.0 / kappa1**2, 0.0)


def regularizer_B(s, kappa2: float):
    """Linear ramp from 0 at s=0 to 1 at s=kappa2. The derivative takes 0 at both kinks."""
    if not kappa2 > 0:
        raise ValueError("kappa2 must be positive")
    s = np.asarray(s, dtype=float)
    B = np.clip(s / kappa2, 0.0, 1.0)
    beta = np.where((s > 0) & (s < kappa2), 1.0 / kappa2, 0.0)
    return _out(s, B, beta)


def volume_penalty_f(v, epsilon: float, m: float):
    """Piecewise-linear volume penalty: slope epsilon below m, 1/epsilon above, zero at m.

    At ``v == m`` the derivative reported is epsilon.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not m > 0:
        raise ValueError("m must be positive")
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("volume must be nonnegative")
    f = np.where(v <= m, epsilon * (v - m), (v - m) / epsilon)
    fp = np.where(v <= m, epsilon, 1.0 / epsilon)
    return _out(v, f, fp)
