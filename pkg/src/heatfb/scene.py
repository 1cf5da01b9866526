"""Problem instances: the heated domain D, the obstacle phi, and the insulation volume m."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, ScalarField, grad_sup_norm
from .report import FAIL, NOT_APPLICABLE, PASS, REPORT, Record, Report

PROFILES = ("poly4", "mollifier")
EXP_FLOOR = -700.0


class SceneError(ValueError):
    pass


# --------------------------------------------------------------------------- domains


@dataclass(frozen=True)
class Interval:
    center: float
    radius: float
    shape = "interval"

    @property
    def dim(self):
        return 1

    def indicator(self, x):
        return np.abs(x - self.center) < self.radius

    def distance(self, x):
        return np.maximum(np.abs(x - self.center) - self.radius, 0.0)

    def contains_ball(self, c, r) -> bool:
        return abs(float(np.atleast_1d(c)[0]) - self.center) + r < self.radius

    def bbox(self):
        return (self.center - self.radius,), (self.center + self.radius,)

    @property
    def diameter(self):
        return 2.0 * self.radius

    @property
    def perimeter(self):
        return 2.0

    def to_dict(self):
        return {"shape": "interval", "center": self.center, "radius": self.radius}


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float
    shape = "disk"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def dim(self):
        return 2

    def _r(self, x, y):
        return np.hypot(x - self.center[0], y - self.center[1])

    def indicator(self, x, y):
        return self._r(x, y) < self.radius

    def distance(self, x, y):
        return np.maximum(self._r(x, y) - self.radius, 0.0)

    def contains_ball(self, c, r) -> bool:
        return math.dist(tuple(c), self.center) + r < self.radius

    def bbox(self):
        cx, cy = self.center
        return (cx - self.radius, cy - self.radius), (cx + self.radius, cy + self.radius)

    @property
    def diameter(self):
        return 2.0 * self.radius

    @property
    def perimeter(self):
        return 2.0 * math.pi * self.radius

    def to_dict(self):
        return {"shape": "disk", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Rectangle:
    lo: tuple[float, float]
    hi: tuple[float, float]
    shape = "rectangle"

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(c) for c in self.lo))
        object.__setattr__(self, "hi", tuple(float(c) for c in self.hi))
        if len(self.lo) != 2 or any(b <= a for a, b in zip(self.lo, self.hi)):
            raise SceneError("rectangle needs 2D corners with lo < hi")

    @property
    def dim(self):
        return 2

    def indicator(self, x, y):
        return (x > self.lo[0]) & (x < self.hi[0]) & (y > self.lo[1]) & (y < self.hi[1])

    def distance(self, x, y):
        dx = np.maximum(np.maximum(self.lo[0] - x, x - self.hi[0]), 0.0)
        dy = np.maximum(np.maximum(self.lo[1] - y, y - self.hi[1]), 0.0)
        return np.hypot(dx, dy)

    def contains_ball(self, c, r) -> bool:
        return all(a + r < ck < b - r for a, b, ck in zip(self.lo, self.hi, c))

    def bbox(self):
        return self.lo, self.hi

    @property
    def diameter(self):
        return math.dist(self.lo, self.hi)

    @property
    def perimeter(self):
        return 2.0 * sum(b - a for a, b in zip(self.lo, self.hi))

    def to_dict(self):
        return {"shape": "rectangle", "lo": list(self.lo), "hi": list(self.hi)}


def domain_from_dict(d: dict):
    d = dict(d)
    shape = d.pop("shape")
    if shape == "interval":
        return Interval(float(np.atleast_1d(d["center"])[0]), float(d["radius"]))
    if shape == "disk":
        return Disk(tuple(d["center"]), float(d["radius"]))
    if shape == "rectangle":
        return Rectangle(tuple(d["lo"]), tuple(d["hi"]))
    raise SceneError(f"unknown domain shape {shape!r}")


# --------------------------------------------------------------------------- obstacle bumps


@dataclass(frozen=True)
class Bump:
    center: tuple[float, ...]
    radius: float
    height: float
    profile: str = "poly4"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if self.profile not in PROFILES:
            raise SceneError(f"unknown profile {self.profile!r}; expected one of {PROFILES}")
        if not self.radius > 0:
            raise SceneError("bump radius must be positive")
        if not self.height >= 0:
            raise SceneError("bump height must be nonnegative")

    def to_dict(self):
        return {"center": list(self.center), "radius": self.radius,
                "height": self.height, "profile": self.profile}


def profile_terms(s: np.ndarray, profile: str):
    """Unit radial profile g(s) on |s| < 1 with g'(s)/s and g''(s); zero outside."""
    s = np.asarray(s, dtype=float)
    inside = s < 1.0
    z = np.where(inside, 1.0 - s * s, 1.0)
    if profile == "poly4":
        g = z**4
        gp_over_s = -8.0 * z**3
        gpp = z**2 * (56.0 * s * s - 8.0)
    elif profile == "mollifier":
        with np.errstate(divide="ignore", over="ignore"):
            arg = 1.0 - 1.0 / z
        live = inside & (arg > EXP_FLOOR)
        zl = np.where(live, z, 1.0)
        g = np.where(live, np.exp(np.where(live, arg, 0.0)), 0.0)
        gp_over_s = -2.0 * g / zl**2
        gpp = g * (-2.0 / zl**2 + 4.0 * s * s / zl**4 - 8.0 * s * s / zl**3)
    else:
        raise SceneError(f"unknown profile {profile!r}")
    zero = np.zeros_like(s)
    return (np.where(inside, g, zero), np.where(inside, gp_over_s, zero),
            np.where(inside, gpp, zero))


def bump_fields(bump: Bump, coords: tuple[np.ndarray, ...]):
    """Value, gradient (tuple), and Laplacian of one bump at the given points."""
    d = len(coords)
    rel = [x - c for x, c in zip(coords, bump.center)]
    r = np.sqrt(sum(x * x for x in rel))
    s = r / bump.radius
    g, gp_over_s, gpp = profile_terms(s, bump.profile)
    val = bump.height * g
    # d/dx_k g(r/rho) = g'(s)/s * x_k / rho^2
    grad = tuple(bump.height * gp_over_s * x / bump.radius**2 for x in rel)
    lap = bump.height / bump.radius**2 * (gpp + (d - 1) * gp_over_s)
    return val, grad, lap


# --------------------------------------------------------------------------- scene


@dataclass(frozen=True)
class SceneSpec:
    box_lo: tuple[float, ...]
    box_hi: tuple[float, ...]
    nodes: tuple[int, ...]
    domain: Interval | Disk | Rectangle
    bumps: tuple[Bump, ...]
    m: float

    def __post_init__(self):
        object.__setattr__(self, "box_lo", tuple(float(v) for v in np.atleast_1d(self.box_lo)))
        object.__setattr__(self, "box_hi", tuple(float(v) for v in np.atleast_1d(self.box_hi)))
        object.__setattr__(self, "nodes", tuple(int(v) for v in np.atleast_1d(self.nodes)))
        object.__setattr__(self, "bumps", tuple(self.bumps))

    @property
    def dim(self):
        return len(self.nodes)

    def with_nodes(self, nodes) -> "SceneSpec":
        return SceneSpec(self.box_lo, self.box_hi, nodes, self.domain, self.bumps, self.m)

    def with_box(self, lo, hi) -> "SceneSpec":
        return SceneSpec(lo, hi, self.nodes, self.domain, self.bumps, self.m)

    def to_dict(self) -> dict:
        return {
            "box": {"lo": list(self.box_lo), "hi": list(self.box_hi), "nodes": list(self.nodes)},
            "domain": self.domain.to_dict(),
            "obstacle": [b.to_dict() for b in self.bumps],
            "m": self.m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        box = d["box"]
        bumps = tuple(Bump(tuple(np.atleast_1d(b["center"])), b["radius"], b["height"],
                           b.get("profile", "poly4")) for b in d.get("obstacle", []))
        return cls(tuple(box["lo"]), tuple(box["hi"]), tuple(box["nodes"]),
                   domain_from_dict(d["domain"]), bumps, float(d["m"]))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class Scene:
    spec: SceneSpec
    grid: Grid
    chi_D: ScalarField = field(repr=False)
    phi: ScalarField = field(repr=False)
    lap_phi: ScalarField = field(repr=False)
    m: float
    max_phi: float
    c1_norm_phi: float
    c11_seminorm_phi: float

    @property
    def domain(self):
        return self.spec.domain

    @property
    def dim(self):
        return self.grid.dim

    @property
    def h(self) -> float:
        return max(self.grid.h)

    @property
    def in_D(self) -> np.ndarray:
        return self.chi_D.values > 0.5

    @property
    def exterior(self) -> np.ndarray:
        """Interior grid nodes outside D (where the volume term acts)."""
        return ~self.in_D & self.grid.interior_mask

    def distance_to_D(self) -> np.ndarray:
        return self.domain.distance(*self.grid.coords())

    def default_threshold(self) -> float:
        return 1e-8 * max(self.max_phi, 1.0)


def check_spec(spec: SceneSpec) -> list[str]:
    problems = []
    dom = spec.domain
    if dom.dim != spec.dim:
        problems.append(f"domain {dom.shape} is {dom.dim}D but the box is {spec.dim}D")
        return problems
    if not spec.m > 0:
        problems.append("m must be positive")
    lo, hi = dom.bbox()
    if not all(bl < a and b < bh for a, b, bl, bh in zip(lo, hi, spec.box_lo, spec.box_hi)):
        problems.append("domain D must lie strictly inside the box")
    for k, b in enumerate(spec.bumps):
        if len(b.center) != spec.dim:
            problems.append(f"bump {k}: center has wrong dimension")
        elif not dom.contains_ball(b.center, b.radius):
            problems.append(f"bump {k}: support not strictly inside D")
    return problems


def build_scene(spec: SceneSpec, check: bool = True) -> Scene:
    """Sample D, phi and the closed-form Laplacian of phi on the grid.

    ``check=False`` skips containment validation so that deliberately
    invalid scenes can be handed to :func:`validate_scene`.
    """
    if check:
        problems = check_spec(spec)
        if problems:
            raise SceneError("; ".join(problems))
    grid = Grid(spec.box_lo, spec.box_hi, spec.nodes)
    xs = grid.coords()
    chi = spec.domain.indicator(*xs).astype(float)
    phi = np.zeros(grid.shape)
    lap = np.zeros(grid.shape)
    for b in spec.bumps:
        v, _, lv = bump_fields(b, xs)
        phi += v
        lap += lv
    phi_f = ScalarField(grid, phi)
    max_phi = float(phi.max()) if spec.bumps else 0.0
    return Scene(
        spec=spec,
        grid=grid,
        chi_D=ScalarField(grid, chi),
        phi=phi_f,
        lap_phi=ScalarField(grid, lap),
        m=float(spec.m),
        max_phi=max_phi,
        c1_norm_phi=max(grad_sup_norm(phi_f), max_phi),
        c11_seminorm_phi=float(np.abs(lap).max()),
    )


def analytic_lipschitz(spec: SceneSpec, samples: int = 200001) -> float:
    """Largest |grad phi| for a single-bump scene (fine 1D radial scan)."""
    best = 0.0
    for b in spec.bumps:
        s = np.linspace(0.0, 1.0, samples)
        _, gp_over_s, _ = profile_terms(s, b.profile)
        best = max(best, float(np.max(np.abs(gp_over_s * s))) * b.height / b.radius)
    return best


def validate_scene(s: Scene, etas=(0.01, 0.1, 0.5)) -> Report:
    rep = Report()
    phi = s.phi.values
    outside = ~s.in_D
    leak = float(np.abs(phi[outside]).max()) if outside.any() else 0.0
    contained = all(s.domain.contains_ball(b.center, b.radius) for b in s.spec.bumps)
    rep.add(Record("phi_support_in_D", PASS if contained and leak == 0.0 else FAIL, leak, 0.0,
                   "obstacle compactly supported in D",
                   {"bumps_strictly_inside": contained}))
    rep.add(Record("phi_nonnegative", PASS if phi.min() >= 0 else FAIL, float(phi.min()), 0.0,
                   "obstacle nonnegative"))
    for eta in etas:
        name = f"lap_phi_negative_eta_{eta:g}"
        label = "Laplacian of phi negative on {phi > eta max phi}"
        if s.max_phi <= 0:
            rep.add(Record(name, NOT_APPLICABLE, None, 0.0, label, {"reason": "phi is identically zero"}))
            continue
        sel = phi > eta * s.max_phi
        lap = s.lap_phi.values[sel]
        sup = float(lap.max())
        rep.add(Record(name, PASS if sup < 0 else REPORT, sup, 0.0, label,
                       {"min": float(lap.min()), "nodes": int(sel.sum()), "eta": eta}))
    return rep
