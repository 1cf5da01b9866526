"""Checks of the explicit estimates on a computed state, plus free-boundary extraction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError
from skimage import measure

from .grid import ScalarField, laplacian_values
from .penalty import PenaltyParams, penalty_A
from .report import FAIL, NOT_APPLICABLE, PASS, REPORT, Record, Report
from .scene import Scene

ZERO, CONTACT, HEATED_INACTIVE, EXT_POSITIVE, BAND = 0, 1, 2, 3, 4
LABEL_NAMES = {ZERO: "ZERO", CONTACT: "CONTACT", HEATED_INACTIVE: "HEATED_INACTIVE",
               EXT_POSITIVE: "EXT_POSITIVE", BAND: "BAND"}
INTERIOR, EXTERIOR = "interior", "exterior"


@dataclass
class RegionLabels:
    labels: np.ndarray  # BAND overrides the base label
    base: np.ndarray
    t_c: float
    t_z: float

    def mask(self, label: int) -> np.ndarray:
        return self.labels == label

    def counts(self) -> dict[str, int]:
        return {LABEL_NAMES[k]: int(np.sum(self.labels == k)) for k in LABEL_NAMES}


@dataclass
class FreeBoundary:
    kind: str
    points: np.ndarray  # (N, d)
    normals: np.ndarray  # (N, d), outward from the positive side
    qu_samples: np.ndarray
    length: float
    contours: list[np.ndarray] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return len(self.points) == 0

    def radii(self, center=None) -> np.ndarray:
        c = np.zeros(self.points.shape[1]) if center is None else np.asarray(center, float)
        return np.linalg.norm(self.points - c, axis=1)


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)


def _thresholds(s: Scene, t_c, t_z):
    d = s.default_threshold()
    return (d if t_c is None else t_c), (d if t_z is None else t_z)


# --------------------------------------------------------------------------- regions


def classify_regions(u, s: Scene, t_c: float | None = None, t_z: float | None = None,
                     band_width: float | None = None) -> RegionLabels:
    """Label nodes; BAND marks nodes within ``band_width`` (default 2h) of a label change."""
    t_c, t_z = _thresholds(s, t_c, t_z)
    if t_c <= 0 or t_z <= 0:
        raise ValueError("thresholds must be positive")
    v = _values(u)
    inside = s.in_D
    base = np.full(v.shape, ZERO, dtype=np.int8)
    base[inside & (v - s.phi.values > t_c)] = HEATED_INACTIVE
    base[inside & (v - s.phi.values <= t_c)] = CONTACT
    base[~inside & (v > t_z)] = EXT_POSITIVE
    base[v <= t_z] = ZERO
    interface = np.zeros(v.shape, dtype=bool)
    for k in range(v.ndim):
        lo = [slice(None)] * v.ndim
        hi = [slice(None)] * v.ndim
        lo[k] = slice(None, -1)
        hi[k] = slice(1, None)
        jump = base[tuple(lo)] != base[tuple(hi)]
        interface[tuple(lo)] |= jump
        interface[tuple(hi)] |= jump
    labels = base.copy()
    if interface.any():
        width = 2.0 * s.h if band_width is None else band_width
        dist = ndimage.distance_transform_edt(~interface, sampling=s.grid.h)
        labels[dist <= width * (1 + 1e-12)] = BAND
    return RegionLabels(labels, base, t_c, t_z)


# --------------------------------------------------------------------------- sign conditions and bounds


def default_sign_tol(s: Scene, grad_tol: float) -> float:
    return 10.0 * grad_tol / s.h**2


def check_sign_conditions(u, s: Scene, labels: RegionLabels, tol: float) -> Report:
    v = _values(u)
    lap = laplacian_values(v, s.grid.h)
    ok_nodes = s.grid.interior_mask & (labels.labels != BAND)
    inside = s.in_D
    checks = [
        ("laplacian_nonpositive_in_D", inside, lambda x: x, "superharmonic inside D"),
        ("laplacian_zero_heated_inactive", labels.labels == HEATED_INACTIVE, np.abs,
         "harmonic where u is above the obstacle"),
        ("laplacian_nonnegative_outside_D", ~inside, lambda x: -x, "subharmonic outside D"),
        ("laplacian_zero_exterior_positive", labels.labels == EXT_POSITIVE, np.abs,
         "harmonic in the exterior positive phase"),
    ]
    rep = Report()
    for name, region, measure_fn, label in checks:
        sel = ok_nodes & region
        if not sel.any():
            rep.add(Record(name, PASS, 0.0, tol, label, {"nodes": 0}))
            continue
        vals = measure_fn(lap[sel])
        worst = float(vals.max())
        bad = int(np.sum(vals > tol))
        rep.add(Record(name, PASS if worst <= tol else FAIL, worst, tol, label,
                       {"nodes": int(sel.sum()), "violations": bad}))
    return rep


def positivity_slack(s: Scene, p: PenaltyParams) -> float:
    """Largest obstacle penetration compatible with the alpha bound inside the quadratic zone."""
    return p.kappa1**2 * alpha_bound(s, p)


def alpha_bound(s: Scene, p: PenaltyParams) -> float:
    return s.c11_seminorm_phi + 1.0 / (p.epsilon * p.kappa2)


def check_bounds(u, s: Scene, p: PenaltyParams, t_z: float | None = None) -> Report:
    v = _values(u)
    _, t_z = _thresholds(s, None, t_z)
    rep = Report()
    lo, hi = float(v.min()), float(v.max())
    upper = s.max_phi + t_z
    rep.add(Record("box_bounds", PASS if (lo >= -t_z and hi <= upper) else FAIL, hi, upper,
                   "0 <= u <= max phi", {"min_u": lo, "max_u": hi, "t_z": t_z}))
    delta = positivity_slack(s, p)
    gap = float(np.min(v - s.phi.values))
    rep.add(Record("obstacle_penetration", PASS if gap >= -delta else FAIL, gap, -delta,
                   "u >= phi up to the kappa1 slack", {"slack": delta}))
    _, alpha = penalty_A(v - s.phi.values, p.kappa1)
    amax = float(np.abs(alpha).max())
    bound = alpha_bound(s, p)
    rep.add(Record("alpha_sup_bound", PASS if amax <= bound else FAIL, amax, bound,
                   "sup |alpha| <= [phi]_{C11} + 1/(eps kappa2)",
                   {"ratio": amax / bound, "c11": s.c11_seminorm_phi}))
    return rep


# --------------------------------------------------------------------------- free boundaries


def _to_physical(s: Scene, idx: np.ndarray) -> np.ndarray:
    lo = np.asarray(s.grid.lo)
    return lo + idx * np.asarray(s.grid.h)


def _to_index(s: Scene, pts: np.ndarray) -> np.ndarray:
    return (pts - np.asarray(s.grid.lo)) / np.asarray(s.grid.h)


def _interp(field_: np.ndarray, s: Scene, pts: np.ndarray) -> np.ndarray:
    idx = _to_index(s, pts).T
    return ndimage.map_coordinates(field_, idx, order=1, mode="nearest")


def _gradients(v: np.ndarray, s: Scene) -> list[np.ndarray]:
    if v.ndim == 1:
        return [np.gradient(v, s.grid.h[0])]
    return list(np.gradient(v, *s.grid.h))


def _level(v, s, kind, t_c, t_z):
    if kind == INTERIOR:
        return v - s.phi.values - t_c, s.in_D
    if kind == EXTERIOR:
        return v - t_z, ~s.in_D
    raise ValueError(f"kind must be {INTERIOR!r} or {EXTERIOR!r}")


def _crossings(lev: np.ndarray, region: np.ndarray, s: Scene):
    """Sub-grid zero crossings of ``lev`` on ``region``: (points, contours)."""
    if s.dim == 1:
        x = s.grid.axis(0)
        pts = []
        for i in range(len(x) - 1):
            if not (region[i] and region[i + 1]):
                continue
            a, b = lev[i], lev[i + 1]
            if (a > 0) != (b > 0):
                pts.append(x[i] + (x[i + 1] - x[i]) * a / (a - b))
        points = np.array(pts, dtype=float).reshape(-1, 1)
        return points, ([points] if len(points) else [])
    raw = measure.find_contours(lev, 0.0, mask=region)
    contours = [_to_physical(s, c) for c in raw if len(c) > 1]
    points = np.concatenate(contours) if contours else np.zeros((0, 2))
    return points, contours


def _outward_normals(lev: np.ndarray, s: Scene, points: np.ndarray):
    gvec = np.stack([_interp(g, s, points) for g in _gradients(lev, s)], axis=1)
    norm = np.linalg.norm(gvec, axis=1)
    fallback = np.zeros(s.dim)
    fallback[0] = 1.0
    safe = np.where(norm > 0, norm, 1.0)[:, None]
    return np.where(norm[:, None] > 0, -gvec / safe, fallback), norm


def _first_layer_level(v: np.ndarray, s: Scene, t_z: float) -> float:
    """Largest u over exterior positive nodes that touch a zero node."""
    pos = v > t_z
    touch = np.zeros_like(pos)
    for k in range(v.ndim):
        lo = [slice(None)] * v.ndim
        hi = [slice(None)] * v.ndim
        lo[k] = slice(None, -1)
        hi[k] = slice(1, None)
        touch[tuple(lo)] |= ~pos[tuple(hi)]
        touch[tuple(hi)] |= ~pos[tuple(lo)]
    sel = pos & touch & ~s.in_D
    return float(v[sel].max()) if sel.any() else t_z


def qu_sample_depth(s: Scene) -> float:
    """Sampling depth for |grad u| near a free boundary: ``0.5 sqrt(h diam D)``, at least h.

    The smoothed layer is a fixed number of cells wide, so sampling a fixed
    number of cells inward never averages it out. This depth is many cells
    deep yet still shrinks with h.
    """
    return max(s.h, 0.5 * math.sqrt(s.h * s.domain.diameter))


def extract_free_boundary(u, s: Scene, kind: str = EXTERIOR, level_tol: float | None = None,
                          refine: bool = True) -> FreeBoundary:
    """Zero set of the level function on its region (marching squares in 2D, crossings in 1D).

    Normals point away from the positive side. ``qu_samples`` is |grad u|
    extrapolated to the boundary from depths ``delta`` and ``2 delta`` along
    the inward normal (see :func:`qu_sample_depth`).

    With ``refine`` the exterior boundary is located by linear extrapolation:
    the level set of u at twice the largest value on the first positive layer
    (clear of the cell-wide smoothing layer) is pushed outward by
    ``(level - t_z) / |grad u|``. Without it the raw contour hugs the last
    positive nodes and inherits their staircase.
    """
    v = _values(u)
    t = s.default_threshold() if level_tol is None else level_tol
    lev, region = _level(v, s, kind, t, t)
    d = s.dim
    points, contours = _crossings(lev, region, s)
    if len(points) == 0:
        return FreeBoundary(kind, np.zeros((0, d)), np.zeros((0, d)), np.zeros(0), 0.0, [])
    normals, _ = _outward_normals(lev, s, points)
    if kind == EXTERIOR and refine:
        level = 2.0 * _first_layer_level(v, s, t)
        pts_r, cont_r = _crossings(v - level, region, s)
        if len(pts_r):
            nrm_r, slope = _outward_normals(v, s, pts_r)
            shift = np.where(slope > 0, (level - t) / np.where(slope > 0, slope, 1.0), 0.0)
            sizes = np.cumsum([len(c) for c in cont_r])[:-1]
            points = pts_r + shift[:, None] * nrm_r
            normals = nrm_r
            contours = np.split(points, sizes) if d == 2 else [points]
    ugrad = np.sqrt(sum(g * g for g in _gradients(v, s)))
    depth = qu_sample_depth(s)
    q1 = _interp(ugrad, s, points - depth * normals)
    q2 = _interp(ugrad, s, points - 2.0 * depth * normals)
    qu = np.maximum(2.0 * q1 - q2, 0.0)
    if d == 1:
        length = float(len(points))
    else:
        length = float(sum(np.linalg.norm(np.diff(c, axis=0), axis=1).sum() for c in contours))
    return FreeBoundary(kind, points, normals, qu, length, contours)


def qu_statistics(fb: FreeBoundary) -> tuple[float, float, float]:
    if fb.kind != EXTERIOR:
        raise ValueError("q_u statistics are defined on the exterior free boundary")
    if fb.empty:
        raise ValueError("free boundary is empty")
    q = fb.qu_samples
    mean = float(q.mean())
    std = float(q.std())
    return mean, std, (std / mean if mean > 0 else math.inf)


# --------------------------------------------------------------------------- non-degeneracy, localization


def _ball_nodes(s: Scene, x0: np.ndarray, R: float):
    """Index window and in-ball mask around x0 (2D)."""
    idx = _to_index(s, x0)
    rad = [int(math.ceil(R / hk)) + 1 for hk in s.grid.h]
    win = tuple(slice(max(int(math.floor(c)) - r, 0), min(int(math.ceil(c)) + r + 1, n))
                for c, r, n in zip(idx, rad, s.grid.shape))
    coords = [s.grid.axis(k)[win[k]] for k in range(2)]
    X, Y = np.meshgrid(*coords, indexing="ij")
    return win, (X - x0[0]) ** 2 + (Y - x0[1]) ** 2


def sphere_average(v: np.ndarray, s: Scene, x0, R: float, samples: int = 64) -> float:
    th = np.linspace(0.0, 2 * math.pi, samples, endpoint=False)
    pts = np.stack([x0[0] + R * np.cos(th), x0[1] + R * np.sin(th)], axis=1)
    return float(_interp(v, s, pts).mean())


def check_nondegeneracy(u, s: Scene, p: PenaltyParams, labels: RegionLabels,
                        points: np.ndarray | None = None, qu_mean: float | None = None) -> Report:
    rep = Report()
    if s.dim != 2:
        rep.add(Record("nondegeneracy", NOT_APPLICABLE, label="sphere-average non-degeneracy (2D only)"))
        return rep
    v = _values(u)
    t_z = labels.t_z
    fb = None
    if points is None:
        fb = extract_free_boundary(v, s, EXTERIOR, t_z)
        points = fb.points
    if qu_mean is None:
        fb = fb or extract_free_boundary(v, s, EXTERIOR, t_z)
        qu_mean = float(fb.qu_samples.mean()) if not fb.empty else 0.0
    contact = (labels.base == CONTACT) & s.in_D
    stated_form = p.epsilon / (s.c1_norm_phi + 1.0 / p.epsilon)
    violations = 0
    tested = 0
    for mult in (4, 8):
        R = mult * s.h
        dens = []
        for x0 in points:
            win, r2 = _ball_nodes(s, x0, R)
            ball = r2 <= R * R
            if np.any(contact[win] & ball):
                continue
            dens.append(float(np.mean(v[win][ball] > t_z)))
            avg = sphere_average(v, s, x0, R)
            if avg < qu_mean * R * 0.01:
                tested += 1
                if np.any(v[win][r2 <= (R / 2) ** 2] > t_z):
                    violations += 1
        dens = np.array(dens)
        rep.add(Record(f"positive_density_R{mult}h", REPORT,
                       float(dens.mean()) if dens.size else None, stated_form,
                       "lower density of the positive phase (constant unknown, shown with c=1)",
                       {"min": float(dens.min()) if dens.size else None,
                        "max": float(dens.max()) if dens.size else None, "points": int(dens.size)}))
    rep.add(Record("nondegeneracy_implication", PASS if violations == 0 else FAIL, float(violations), 0.0,
                   "small sphere average forces u = 0 on the half ball",
                   {"triggered": tested, "qu_mean": qu_mean}))
    return rep


def _diameter(pts: np.ndarray) -> float:
    if len(pts) < 2:
        return 0.0
    if pts.shape[1] == 1:
        return float(np.ptp(pts[:, 0]))
    try:
        pts = pts[ConvexHull(pts).vertices]
    except QhullError:
        pass
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def check_localization(u, s: Scene, p: PenaltyParams | None = None, t_z: float | None = None) -> Report:
    v = _values(u)
    _, t_z = _thresholds(s, None, t_z)
    pos = v > t_z
    coords = np.stack([c[pos] for c in s.grid.coords()], axis=1)
    diam = _diameter(coords)
    rep = Report()
    if len(coords) == 0:
        dist = math.inf
    else:
        lo = np.asarray(s.grid.lo)
        hi = np.asarray(s.grid.hi)
        dist = float(np.min(np.minimum(coords - lo, hi - coords)))
    need = 4.0 * s.h
    detail = {"diam_positive": diam, "diam_D": s.domain.diameter}
    if dist < need:
        detail["advice"] = "positive phase reaches the box boundary layer; enlarge the box"
    rep.add(Record("positive_phase_inside_box", PASS if dist >= need else FAIL,
                   dist, need, "positive phase stays away from the box", detail))
    if p is not None:
        form = s.domain.diameter + 1.0 + s.m * (s.c1_norm_phi + 1.0 / p.epsilon) / p.epsilon
        rep.add(Record("diameter_bound_form", REPORT, diam, form,
                       "diameter bound shape with unknown constant set to 1"))
    return rep


def run_diagnostics(u, s: Scene, p: PenaltyParams, grad_tol: float = 1e-8) -> Report:
    labels = classify_regions(u, s)
    rep = Report()
    rep.extend(check_bounds(u, s, p))
    rep.extend(check_sign_conditions(u, s, labels, default_sign_tol(s, grad_tol)))
    fb = extract_free_boundary(u, s, EXTERIOR)
    if fb.empty:
        rep.add(Record("qu_relative_std", NOT_APPLICABLE, label="constancy of the gradient jump"))
    else:
        mean, std, rel = qu_statistics(fb)
        rep.add(Record("qu_relative_std", REPORT, rel, 0.1, "constancy of the gradient jump",
                       {"mean": mean, "std": std, "points": len(fb.points), "length": fb.length}))
    rep.extend(check_nondegeneracy(u, s, p, labels, fb.points if s.dim == 2 else None,
                                   qu_statistics(fb)[0] if not fb.empty else 0.0))
    rep.extend(check_localization(u, s, p))
    return rep
