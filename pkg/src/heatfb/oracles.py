"""Reference solutions for symmetric scenes, independent of the descent solver.

Under symmetry the optimal profile is, going outward from the centre of D:
the obstacle on a contact set ``r <= a``, then a single harmonic piece (linear
in x for 1D, linear in log r for radial 2D) running through the boundary of D
with value ``t`` there and reaching zero where the exterior volume equals m.
The oracle scans the boundary value ``t``: for each ``t`` the interior part is
the concave majorant in the harmonic coordinate (a tangent line from
``(xi_D, t)`` to the obstacle), and the exterior part is the harmonic ramp
from ``t`` to 0. The best ``t`` on the scan is then refined by golden-section
search with exact tangency.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .grid import ScalarField
from .scene import Disk, Interval, Scene, profile_terms


class OracleScopeError(ValueError):
    pass


@dataclass
class _RadialObstacle:
    bumps: list  # (radius, height, profile)

    def value(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for rho, hgt, prof in self.bumps:
            g, _, _ = profile_terms(r / rho, prof)
            out += hgt * g
        return out

    def slope(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for rho, hgt, prof in self.bumps:
            _, gp_over_s, _ = profile_terms(r / rho, prof)
            out += hgt * gp_over_s * r / rho**2
        return out

    @property
    def support(self):
        return max(rho for rho, _, _ in self.bumps)


@dataclass
class _Geometry:
    """Harmonic coordinate xi(r) with energy density weight."""
    radial: bool
    r_D: float
    r_fb: float
    sides: float  # 2 for 1D (two half-lines), 2*pi for radial

    def xi(self, r):
        return np.log(r) if self.radial else np.asarray(r, dtype=float)

    def jac(self, r):
        return r if self.radial else np.ones_like(r)

    def dxi_dr(self, r):
        return 1.0 / r if self.radial else np.ones_like(r)


def _scene_to_radial(s: Scene, radial: bool):
    dom = s.domain
    if radial:
        if s.dim != 2 or not isinstance(dom, Disk):
            raise OracleScopeError("radial oracle needs a 2D scene with a disk domain")
        center = np.array(dom.center)
    else:
        if s.dim != 1 or not isinstance(dom, Interval):
            raise OracleScopeError("1D oracle needs a 1D scene with an interval domain")
        center = np.array([dom.center])
    for b in s.spec.bumps:
        if not np.allclose(b.center, center, rtol=0, atol=1e-12):
            raise OracleScopeError("oracle needs every bump centred on D (symmetric obstacle)")
    obs = _RadialObstacle([(b.radius, b.height, b.profile) for b in s.spec.bumps if b.height > 0])
    r_D = dom.radius
    if radial:
        r_fb = math.sqrt(r_D**2 + s.m / math.pi)
        geo = _Geometry(True, r_D, r_fb, 2.0 * math.pi)
    else:
        r_fb = r_D + s.m / 2.0
        geo = _Geometry(False, r_D, r_fb, 2.0)
    return center, obs, geo


@dataclass
class TangentSolution:
    t_star: float
    a_star: float
    E_star: float
    geo: _Geometry = field(repr=False)
    obs: _RadialObstacle | None = field(repr=False)

    def profile(self, r):
        """Optimal radial profile u(r)."""
        r = np.asarray(r, dtype=float)
        geo = self.geo
        if self.obs is None:
            return np.zeros_like(r)
        xi_a = float(geo.xi(self.a_star)) if self.a_star > 0 else -np.inf
        xi_D, xi_F = float(geo.xi(geo.r_D)), float(geo.xi(geo.r_fb))
        phi_a = float(self.obs.value(self.a_star))
        safe = np.maximum(r, 1e-300)
        xi = geo.xi(safe)
        out = np.zeros_like(r)
        contact = r <= self.a_star
        out[contact] = self.obs.value(r[contact])
        inner = (~contact) & (r <= geo.r_D)
        if np.isfinite(xi_a):
            out[inner] = phi_a + (self.t_star - phi_a) * (xi[inner] - xi_a) / (xi_D - xi_a)
        else:
            out[inner] = self.t_star
        outer = (r > geo.r_D) & (r < geo.r_fb)
        out[outer] = self.t_star * (xi_F - xi[outer]) / (xi_F - xi_D)
        return out

    @property
    def q_star(self) -> float:
        """Gradient magnitude just inside the exterior free boundary."""
        geo = self.geo
        slope_xi = self.t_star / (float(geo.xi(geo.r_fb)) - float(geo.xi(geo.r_D)))
        return slope_xi * float(geo.dxi_dr(geo.r_fb))


def _contact_energy(obs, geo, a):
    """sides * 1/2 * int_0^a phi_r^2 J(r) dr."""
    if a <= 0:
        return 0.0
    val, _ = integrate.quad(lambda r: float(obs.slope(r)) ** 2 * float(geo.jac(r)), 0.0, a,
                            limit=200, epsabs=1e-14, epsrel=1e-12)
    return 0.5 * geo.sides * val


def _total_energy_exact(obs, geo, a):
    """Energy of the tangent configuration touching the obstacle at radius a."""
    xi_D, xi_F = float(geo.xi(geo.r_D)), float(geo.xi(geo.r_fb))
    phi_a = float(obs.value(a))
    slope_xi = float(obs.slope(a)) / float(geo.dxi_dr(a))
    xi_a = float(geo.xi(a))
    t = phi_a + slope_xi * (xi_D - xi_a)
    interior = _contact_energy(obs, geo, a) + 0.5 * geo.sides * (t - phi_a) ** 2 / (xi_D - xi_a)
    exterior = 0.5 * geo.sides * t * t / (xi_F - xi_D)
    return interior + exterior, t


def _scan(obs, geo, resolution: int, chunk: int = 256):
    """Brute-force scan over t on a uniform grid in [0, max phi]."""
    r_lo = geo.r_D * 1e-6 if geo.radial else 0.0
    r = np.linspace(r_lo, obs.support, resolution)
    phi = obs.value(r)
    xi = geo.xi(np.maximum(r, 1e-300))
    xi_D, xi_F = float(geo.xi(geo.r_D)), float(geo.xi(geo.r_fb))
    dens = obs.slope(r) ** 2 * geo.jac(r)
    cum = 0.5 * geo.sides * np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(r))])
    ts = np.linspace(0.0, float(phi.max()), resolution)
    energy = np.empty_like(ts)
    a_idx = np.empty(ts.size, dtype=int)
    for start in range(0, ts.size, chunk):
        tt = ts[start:start + chunk, None]
        slopes = (tt - phi[None, :]) / (xi_D - xi[None, :])
        k = np.argmin(slopes, axis=1)
        a_idx[start:start + chunk] = k
        t1 = tt[:, 0]
        interior = cum[k] + 0.5 * geo.sides * (t1 - phi[k]) ** 2 / (xi_D - xi[k])
        energy[start:start + chunk] = interior + 0.5 * geo.sides * t1 * t1 / (xi_F - xi_D)
    return ts, r, a_idx, energy


def _solve_tangent(obs, geo, resolution: int) -> TangentSolution:
    ts, r, a_idx, energy = _scan(obs, geo, resolution)
    k = int(np.argmin(energy))  # ties: smallest t wins
    near = [float(r[a_idx[j]]) for j in (max(k - 1, 0), k, min(k + 1, ts.size - 1))]
    span = max(max(near) - min(near), r[1] - r[0])
    a_lo = max(min(near) - span, r[0] + 1e-12)
    a_hi = min(max(near) + span, obs.support * (1 - 1e-12))
    fun = lambda a: _total_energy_exact(obs, geo, a)[0]
    a_star = _golden(fun, a_lo, a_hi, float(r[a_idx[k]]))
    E_ref, t_ref = _total_energy_exact(obs, geo, a_star)
    if not E_ref <= energy[k]:
        # optimum at an end of the scan range (e.g. t = 0); keep the scan value
        a_star, t_ref, E_ref = float(r[a_idx[k]]), float(ts[k]), float(energy[k])
    return TangentSolution(float(t_ref), a_star, float(E_ref), geo, obs)


def _golden(fun, lo, hi, guess, tol=1e-13, max_iter=200):
    """Golden-section search on [lo, hi]; returns the better of its optimum and ``guess``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if hi - lo < tol:
            break
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = fun(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = fun(d)
    best = 0.5 * (lo + hi)
    return best if fun(best) <= fun(guess) else guess


def _zero_solution(geo):
    return TangentSolution(0.0, 0.0, 0.0, geo, None)


@dataclass
class Oracle1D:
    u_star: ScalarField
    E_star: float
    fb_points: tuple[float, ...]
    t_star: float
    a_star: float
    q_star: float
    resolution: int
    solution: TangentSolution = field(repr=False)

    def __iter__(self):
        return iter((self.u_star, self.E_star, self.fb_points, self.t_star))


@dataclass
class OracleRadial:
    r: np.ndarray = field(repr=False)
    u_profile: np.ndarray = field(repr=False)
    R_star: float = 0.0
    E_star: float = 0.0
    t_star: float = 0.0
    a_star: float = 0.0
    q_star: float = 0.0
    solution: TangentSolution | None = field(default=None, repr=False)
    center: tuple[float, float] = (0.0, 0.0)
    assumption: str = "minimizer taken to be radial; symmetry is assumed, not proved"

    def sample(self, scene: Scene) -> ScalarField:
        rr = scene.grid.radius(self.center)
        return ScalarField(scene.grid, self.solution.profile(rr) if self.solution else np.zeros_like(rr))


def oracle_solve_1d(s: Scene, resolution: int = 10_000) -> Oracle1D:
    center, obs, geo = _scene_to_radial(s, radial=False)
    if not obs.bumps:
        sol = _zero_solution(geo)
        return Oracle1D(ScalarField.zeros(s.grid), 0.0, (), 0.0, 0.0, 0.0, resolution, sol)
    sol = _solve_tangent(obs, geo, resolution)
    x = s.grid.coords()[0]
    u = sol.profile(np.abs(x - center[0]))
    u[s.grid.boundary_mask] = 0.0
    fb = (center[0] - geo.r_fb, center[0] + geo.r_fb) if sol.t_star > 0 else ()
    return Oracle1D(ScalarField(s.grid, u), sol.E_star, fb, sol.t_star, sol.a_star,
                    sol.q_star, resolution, sol)


def oracle_radial_2d(s: Scene, n_r: int = 10_000) -> OracleRadial:
    center, obs, geo = _scene_to_radial(s, radial=True)
    if not obs.bumps:
        r = np.linspace(0.0, geo.r_fb, n_r)
        return OracleRadial(r, np.zeros_like(r), geo.r_fb, 0.0, 0.0, 0.0, 0.0,
                            _zero_solution(geo), tuple(center))
    sol = _solve_tangent(obs, geo, n_r)
    r = np.linspace(0.0, geo.r_fb, n_r)
    return OracleRadial(r, sol.profile(r), geo.r_fb, sol.E_star, sol.t_star, sol.a_star,
                        sol.q_star, sol, tuple(center))


# --------------------------------------------------------------------------- golden files


def golden_record(s: Scene, result: Oracle1D) -> dict:
    return {
        "scene_digest": s.spec.digest(),
        "scene": s.spec.to_dict(),
        "t_star": result.t_star,
        "E_star": result.E_star,
        "a_star": result.a_star,
        "q_star": result.q_star,
        "fb_points": [float(x) for x in result.fb_points],
        "resolution": result.resolution,
    }


def write_golden(path, s: Scene, result: Oracle1D):
    with open(path, "w") as fh:
        json.dump(golden_record(s, result), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_golden(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
