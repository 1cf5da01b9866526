"""Safeguarded descent for the discrete perturbed functional at fixed parameters.

Two descent directions are available:

``"newton"`` (default)
    Projected descent in the metric of the smooth Hessian
    ``K + diag(w A'')`` restricted to the non-active nodes, with the volume
    term handled exactly by choosing its slope ``lam`` from the
    subdifferential of f so that the linearised volume lands on m when it can.
``"gradient"``
    Plain projected gradient descent along ``-first_variation``.

Both use Armijo backtracking on the total energy; every accepted step
decreases it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .energy import energy_terms, first_variation, universal_competitor
from .grid import ScalarField, stiffness_matrix
from .obstacle import solve_obstacle
from .penalty import PenaltyParams, penalty_A, penalty_A_curvature, regularizer_B, volume_penalty_f
from .scene import Disk, Interval, Rectangle, Scene

log = logging.getLogger(__name__)

METHODS = ("newton", "gradient")


class SolverError(RuntimeError):
    pass


@dataclass
class SolverOptions:
    max_iters: int = 300
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    step_init: float | None = None  # newton: 1, gradient: h^2/4
    step_shrink: float = 0.5
    clip_box: bool = True
    method: str = "newton"

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if self.step_init is not None and not self.step_init > 0:
            raise ValueError("step_init must be positive")
        if not 0 < self.step_shrink < 1:
            raise ValueError("step_shrink must lie in (0, 1)")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class SolveState:
    u: ScalarField
    iters: int
    energy_history: list[float]
    grad_norm: float
    converged: bool
    stalled: bool = False
    multiplier: float = math.nan
    message: str = ""
    lambda_history: list[float] = field(default_factory=list, repr=False)

    @property
    def energy(self) -> float:
        return self.energy_history[-1]


# --------------------------------------------------------------------------- internals


class _Problem:
    """Interior-node view of the discrete functional (boundary nodes are fixed at 0)."""

    def __init__(self, s: Scene, p: PenaltyParams, clip_box: bool):
        g = s.grid
        self.scene = s
        self.p = p
        self.shape = g.shape
        self.idx = np.flatnonzero(g.interior_mask.ravel())
        self.w = g.weights.ravel()[self.idx]
        self.ext = s.exterior.ravel()[self.idx].astype(float)
        self.phi = s.phi.values.ravel()[self.idx]
        K = stiffness_matrix(g)
        self.K = K[self.idx][:, self.idx].tocsc()
        self.lo = 0.0 if clip_box else -np.inf
        self.hi = s.max_phi if clip_box else np.inf
        self.h2 = min(g.h) ** 2

    def full(self, x) -> np.ndarray:
        out = np.zeros(int(np.prod(self.shape)))
        out[self.idx] = x
        return out.reshape(self.shape)

    def restrict(self, u: np.ndarray) -> np.ndarray:
        return u.ravel()[self.idx].copy()

    def volume(self, x) -> float:
        B, _ = regularizer_B(x, self.p.kappa2)
        return float(np.sum(B * self.w * self.ext))

    def f(self, V):
        return float(volume_penalty_f(max(V, 0.0), self.p.epsilon, self.scene.m)[0])

    def energy(self, x) -> float:
        return energy_terms(self.full(x), self.scene, self.p).total

    def smooth_grad(self, x) -> np.ndarray:
        """Raw gradient of Dirichlet + A (not divided by weights)."""
        _, alpha = penalty_A(x - self.phi, self.p.kappa1)
        return self.K @ x + self.w * alpha

    def volume_grad(self, x) -> np.ndarray:
        """Raw volume gradient using the right derivative of B at 0."""
        k2 = self.p.kappa2
        return np.where((x >= 0) & (x < k2), 1.0 / k2, 0.0) * self.w * self.ext

    def energy_change(self, x, dx, Kx, V) -> float:
        """E(x + dx) - E(x) accumulated from local differences (no cancellation of totals)."""
        p = self.p
        d_dir = float(Kx @ dx + 0.5 * dx @ (self.K @ dx))
        A0, _ = penalty_A(x - self.phi, p.kappa1)
        A1, _ = penalty_A(x + dx - self.phi, p.kappa1)
        d_A = float(np.sum(self.w * (A1 - A0)))
        B0, _ = regularizer_B(x, p.kappa2)
        B1, _ = regularizer_B(x + dx, p.kappa2)
        dV = float(np.sum(self.w * self.ext * (B1 - B0)))
        return d_dir + d_A + self.f(V + dV) - self.f(V)

    def stationarity(self, x, V=None):
        """Kink-aware projected residual (weight-scaled) and the volume multiplier.

        The multiplier ranges over the subdifferential of f at V: {eps} below m,
        {1/eps} above, [eps, 1/eps] when V equals m to within 1e-10 m.
        """
        p, m = self.p, self.scene.m
        V = self.volume(x) if V is None else V
        g0 = self.smooth_grad(x) / self.w
        b = self.volume_grad(x) / self.w
        at_lo = x <= self.lo
        at_hi = x >= self.hi
        free = ~(at_lo | at_hi)
        if abs(V - m) <= 1e-10 * max(m, 1.0):
            lam_lo, lam_hi = p.epsilon, 1.0 / p.epsilon
        elif V < m:
            lam_lo = lam_hi = p.epsilon
        else:
            lam_lo = lam_hi = 1.0 / p.epsilon
        bb = float(np.sum(self.w[free] * b[free] ** 2))
        lam = lam_lo if bb == 0 else -float(np.sum(self.w[free] * g0[free] * b[free])) / bb
        lam = min(max(lam, lam_lo), lam_hi)
        r = g0 + lam * b
        r = np.where(at_lo, np.minimum(r, 0.0), r)
        r = np.where(at_hi, np.maximum(r, 0.0), r)
        return float(np.abs(r).max()) if r.size else 0.0, lam

    def clip(self, x):
        return np.clip(x, self.lo, self.hi)


def _newton_direction(prob: _Problem, x, G0, bm, V, lam_prev):
    p, m = prob.p, prob.scene.m
    graw = G0 + lam_prev * bm
    active = ((x <= prob.lo) & (graw > 0)) | ((x >= prob.hi) & (graw < 0))
    free = ~active
    d = np.zeros_like(x)
    if not free.any():
        return d, lam_prev
    fi = np.flatnonzero(free)
    curv = prob.w * penalty_A_curvature(x - prob.phi, p.kappa1)
    H = prob.K[fi][:, fi] + sp.diags(curv[fi])
    lu = splu(H.tocsc())
    d0 = -lu.solve(G0[fi])
    b = bm[fi]
    if np.any(b):
        d1 = -lu.solve(b)
        c = float(b @ d1)
        v0 = V + float(b @ d0)
        lo_l, hi_l = p.epsilon, 1.0 / p.epsilon
        if c >= 0 or v0 + lo_l * c <= m:
            lam = lo_l
        elif v0 + hi_l * c >= m:
            lam = hi_l
        else:
            lam = (m - v0) / c
        d[fi] = d0 + lam * d1
    else:
        lam = p.epsilon if V <= m else 1.0 / p.epsilon
        d[fi] = d0
    return d, lam


# --------------------------------------------------------------------------- public API


def el_residual_norm(state_or_u, s: Scene, p: PenaltyParams, clip_box: bool = True) -> float:
    """Sup norm over interior nodes of the stationarity residual.

    This is the first variation with the volume slope taken from the
    subdifferential of f, projected onto the box constraints.
    """
    u = state_or_u.u if isinstance(state_or_u, SolveState) else state_or_u
    prob = _Problem(s, p, clip_box)
    res, _ = prob.stationarity(prob.restrict(u.values))
    return res


def solve_fixed_params(u0: ScalarField, s: Scene, p: PenaltyParams,
                       opts: SolverOptions | None = None) -> SolveState:
    opts = opts or SolverOptions()
    if u0.grid != s.grid:
        raise ValueError("initial guess lives on a different grid")
    if np.any(u0.values[s.grid.boundary_mask] != 0):
        raise ValueError("initial guess must vanish on the box boundary")
    prob = _Problem(s, p, opts.clip_box)
    x = prob.clip(prob.restrict(u0.values))
    E = prob.energy(x)
    if not math.isfinite(E):
        raise SolverError("initial energy is not finite")
    history = [E]
    lam_hist: list[float] = []
    step0 = opts.step_init
    if step0 is None:
        step0 = 1.0 if opts.method == "newton" else prob.h2 / 4.0
    V = prob.volume(x)
    lam = p.epsilon if V <= s.m else 1.0 / p.epsilon
    res = math.inf
    stalled = False
    message = "max_iters reached"
    it = 0
    for it in range(opts.max_iters + 1):
        V = prob.volume(x)
        res, lam_stat = prob.stationarity(x, V)
        if res <= opts.grad_tol:
            message = "converged"
            lam = lam_stat
            break
        if it == opts.max_iters:
            break
        Kx = prob.K @ x
        G0 = prob.smooth_grad(x)
        if opts.method == "newton":
            bm = prob.volume_grad(x)
            d, lam = _newton_direction(prob, x, G0, bm, V, lam)
            model_slope = None
        else:
            g = first_variation(prob.full(x), s, p).values.ravel()[prob.idx]
            d = -g
            bm = prob.volume_grad(x)
            model_slope = -float(np.sum(g * g * prob.w))
        lam_hist.append(lam)
        tau = step0
        accepted = False
        while tau >= 1e-16 * step0:
            x_new = prob.clip(x + tau * d)
            dx = x_new - x
            if not np.any(dx):
                break
            dE = prob.energy_change(x, dx, Kx, V)
            if math.isnan(dE):
                raise SolverError("energy became NaN")
            if model_slope is None:
                model = float(G0 @ dx) + prob.f(V + float(bm @ dx)) - prob.f(V)
                bound = opts.armijo_c * min(model, 0.0)
            else:
                bound = opts.armijo_c * tau * model_slope
            if dE < 0 and dE <= bound:
                accepted = True
                break
            tau *= opts.step_shrink
        if not accepted:
            stalled = True
            message = "line search stalled"
            break
        x = x_new
        history.append(history[-1] + dE)
    u = ScalarField(s.grid, prob.full(x))
    converged = res <= opts.grad_tol
    log.debug("solve %s after %d iterations: residual %.3e, lambda %.4g", message, it, res, lam)
    return SolveState(u, it, history, res, converged, stalled and not converged, lam, message, lam_hist)


# --------------------------------------------------------------------------- initial guess


def collar_width(domain, volume: float) -> float:
    """Offset distance whose exterior collar around D has the given measure."""
    if isinstance(domain, Interval):
        return volume / 2.0
    if isinstance(domain, Disk):
        return math.sqrt(domain.radius**2 + volume / math.pi) - domain.radius
    if isinstance(domain, Rectangle):
        P = domain.perimeter
        return (-P + math.sqrt(P * P + 4.0 * math.pi * volume)) / (2.0 * math.pi)
    raise TypeError(f"unsupported domain {domain!r}")


def initial_guess(s: Scene, seed_volume: float | None = None, tol: float = 1e-9) -> ScalarField:
    """max(w, seed): w is the universal competitor, the seed is the obstacle solution on D
    plus an exterior collar of measure ``seed_volume`` (default m), zero beyond it.

    The seed is harmonic in the collar and agrees with the interior solution
    across the boundary of D, so the initial exterior phase has the
    prescribed volume.
    """
    if s.max_phi <= 0:
        return ScalarField.zeros(s.grid)
    w, _ = universal_competitor(s)
    vol = s.m if seed_volume is None else float(seed_volume)
    if vol <= 0:
        return w
    ell = collar_width(s.domain, vol)
    region = (s.in_D | (s.distance_to_D() < ell)) & s.grid.interior_mask
    seed, _, _ = solve_obstacle(s.phi.values, region, s.grid.h, tol=tol)
    return ScalarField(s.grid, np.maximum(w.values, seed))
