"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line; the terminal summary repeats them."""
import math
import time

import numpy as np
import pytest

from conftest import GOLDEN_1D_E, golden_1d_spec, radial_spec, trivial_spec, _anneal
from heatfb.continuation import anneal, default_schedule, select_epsilon
from heatfb.diagnostics import (EXT_POSITIVE, HEATED_INACTIVE, EXTERIOR, check_bounds,
                                check_sign_conditions, classify_regions, default_sign_tol,
                                extract_free_boundary, qu_statistics)
from heatfb.energy import (exterior_positive_volume, first_variation, perturbed_energy,
                           sharp_energy, universal_competitor)
from heatfb.grid import ScalarField, grad_sup_norm, laplacian_values
from heatfb.oracles import oracle_solve_1d
from heatfb.penalty import PenaltyParams, penalty_A, regularizer_B, volume_penalty_f
from heatfb.scene import Bump, Disk, Interval, SceneSpec, build_scene
from heatfb.solver import SolverOptions, solve_fixed_params


def _verdict(record_property, number, ok, detail):
    record_property("detail", detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# ----------------------------------------------------------------------------- 1


@pytest.mark.criterion(1, "penalty kernel suite")
def test_criterion_01_penalty_kernels(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    k1, k2, eps, m = 0.1, 0.2, 0.05, 1.3
    problems = []

    t = rng.uniform(-1, 1, 10_000)
    A, alpha = penalty_A(t, k1)
    if np.any(A < 0) or np.any(A[t >= 0] != 0):
        problems.append("A sign/vanishing")
    ts = np.sort(t)
    if np.any(np.diff(penalty_A(ts, k1)[0]) > 0):
        problems.append("A monotone")
    a, b, lam = rng.uniform(-1, 1, 10_000), rng.uniform(-1, 1, 10_000), rng.uniform(0, 1, 10_000)
    mid = penalty_A(lam * a + (1 - lam) * b, k1)[0]
    if np.any(mid > lam * penalty_A(a, k1)[0] + (1 - lam) * penalty_A(b, k1)[0] + 1e-12):
        problems.append("A convex")

    s = rng.uniform(-1, 1, 10_000)
    B, beta = regularizer_B(s, k2)
    if np.any((B < 0) | (B > 1)) or np.any(B[s <= 0] != 0) or np.any(B[s >= k2] != 1):
        problems.append("B range")
    if np.any(np.diff(regularizer_B(np.sort(s), k2)[0]) < 0):
        problems.append("B monotone")

    v = rng.uniform(0, 3, 10_000)
    F, fp = volume_penalty_f(v, eps, m)
    if volume_penalty_f(m, eps, m)[0] != 0.0 or np.any(F < -eps * m - 1e-15):
        problems.append("f(m)=0 / lower bound")
    va, vb = rng.uniform(0, 3, 10_000), rng.uniform(0, 3, 10_000)
    fm = volume_penalty_f(lam * va + (1 - lam) * vb, eps, m)[0]
    if np.any(fm > lam * volume_penalty_f(va, eps, m)[0] + (1 - lam) * volume_penalty_f(vb, eps, m)[0] + 1e-12):
        problems.append("f convex")

    d = 1e-7
    worst = 0.0
    for fn, x, kinks, par in ((penalty_A, t, (-k1, 0.0), (k1,)), (regularizer_B, s, (0.0, k2), (k2,)),
                             (volume_penalty_f, v, (m,), (eps, m))):
        far = np.min(np.abs(x[:, None] - np.array(kinks)[None, :]), axis=1) >= 1e-3
        xs = x[far]
        val, der = fn(xs, *par)
        fd = (fn(xs + d, *par)[0] - fn(xs - d, *par)[0]) / (2 * d)
        rel = np.abs(fd - der) / np.maximum(np.abs(der), 1.0)
        worst = max(worst, float(rel.max()))
    if worst >= 1e-6:
        problems.append(f"derivative mismatch {worst:.2e}")
    dt = time.perf_counter() - t0
    if dt >= 1.0:
        problems.append(f"runtime {dt:.2f}s")
    _verdict(record_property, 1, not problems,
             f"fd rel err {worst:.1e}, {dt * 1e3:.0f} ms" + (f"; {problems}" if problems else ""))


# ----------------------------------------------------------------------------- 2


def _gradient_case(spec, p, rng, directions=20, tau=1e-6, margin=1e-3):
    s = build_scene(spec)
    g = s.grid
    u = np.where(g.interior_mask, rng.uniform(0.0, 1.2, g.shape), 0.0)
    # keep the exterior volume well away from m and every node away from the kinks
    t = u - s.phi.values
    near = (np.abs(t) < margin) | (np.abs(t + p.kappa1) < margin)
    near |= s.exterior & ((np.abs(u) < margin) | (np.abs(u - p.kappa2) < margin))
    free = g.interior_mask & ~near
    gfield = first_variation(u, s, p).values
    worst = 0.0
    for _ in range(directions):
        d = np.where(free, rng.standard_normal(g.shape), 0.0)
        d /= np.abs(d).max()
        ep = perturbed_energy(u + tau * d, s, p).total
        em = perturbed_energy(u - tau * d, s, p).total
        fd = (ep - em) / (2 * tau)
        an = float(np.sum(gfield * d * g.weights))
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-30))
    return worst


@pytest.mark.criterion(2, "gradient consistency")
def test_criterion_02_gradient_consistency(record_property, rng):
    t0 = time.perf_counter()
    p = PenaltyParams(0.1, 0.15, 0.2)
    worst = {}
    for n in (9, 17, 33):
        spec = SceneSpec((-2.0,), (2.0,), (n,), Interval(0.0, 1.0), (Bump((0.0,), 0.6, 1.0),), 20.0)
        worst[f"1d-{n}"] = _gradient_case(spec, p, rng)
    for n in (17, 33):
        spec = SceneSpec((-2.0, -2.0), (2.0, 2.0), (n, n), Disk((0.0, 0.0), 1.0),
                         (Bump((0.0, 0.0), 0.6, 1.0),), 0.5)
        worst[f"2d-{n}"] = _gradient_case(spec, p, rng)
    dt = time.perf_counter() - t0
    top = max(worst.values())
    _verdict(record_property, 2, top < 1e-5 and dt < 30,
             f"max rel err {top:.1e} over {len(worst)} grids x 20 directions, {dt:.1f}s")


# ----------------------------------------------------------------------------- 3


@pytest.mark.criterion(3, "trivial-scene exactness")
def test_criterion_03_trivial_scene(record_property):
    t0 = time.perf_counter()
    eps = 0.1
    worst = 0.0
    nonzero = 0
    for dim in (1, 2):
        s = build_scene(trivial_spec(dim))
        p = PenaltyParams(0.01, 0.05, eps)
        X = s.grid.radius()
        seeded = np.where(s.grid.interior_mask, np.clip(1.0 - np.abs(X - 1.2), 0.0, None) * 0.7, 0.0)
        starts = [ScalarField.zeros(s.grid), ScalarField(s.grid, seeded)]
        for u0 in starts:
            state = solve_fixed_params(u0, s, p, SolverOptions(max_iters=200))
            nonzero += int(np.count_nonzero(state.u.values))
            worst = max(worst, abs(perturbed_energy(state.u, s, p).total - (-eps * s.m)))
            res = anneal(s, default_schedule(s, eps), u0)
            nonzero += int(np.count_nonzero(res.u.values))
            worst = max(worst, abs(perturbed_energy(res.u, s, res.final_params).total + eps * s.m))
    dt = time.perf_counter() - t0
    _verdict(record_property, 3, nonzero == 0 and worst <= 1e-12 and dt < 10,
             f"nonzero nodes {nonzero}, |E - f(0)| = {worst:.1e}, {dt:.1f}s")


# ----------------------------------------------------------------------------- 4


@pytest.mark.criterion(4, "1D oracle equivalence")
def test_criterion_04_oracle_1d(record_property, golden_anneal):
    s, timed = golden_anneal
    t0 = time.perf_counter()
    res = timed.value
    o = oracle_solve_1d(s)
    h = s.h
    sup = float(np.abs(res.u.values - o.u_star.values).max())
    E = sharp_energy(res.u, s, res.schedule.epsilon)
    e_ok = abs(E - o.E_star) <= max(0.01 * abs(o.E_star), 10 * h)
    fb = extract_free_boundary(res.u, s, EXTERIOR)
    pts = np.sort(fb.points[:, 0])
    fb_err = float(np.max(np.abs(pts - np.array([-1.5, 1.5])))) if len(pts) == 2 else math.inf
    dt = timed.seconds + time.perf_counter() - t0
    ok = sup <= 3 * h and e_ok and fb_err <= 2 * h and abs(o.E_star - GOLDEN_1D_E) < 1e-8 and dt < 120
    _verdict(record_property, 4, ok,
             f"|u-u*|={sup:.2e} (3h={3 * h:.3f}), E={E:.6f} vs {o.E_star:.6f}, "
             f"fb err {fb_err:.4f} (2h={2 * h:.4f}), {dt:.1f}s")


# ----------------------------------------------------------------------------- 5


@pytest.mark.slow
@pytest.mark.criterion(5, "radial 2D free boundary")
def test_criterion_05_radial_free_boundary(record_property, radial_anneal):
    s, timed = radial_anneal
    t0 = time.perf_counter()
    fb = extract_free_boundary(timed.value.u, s, EXTERIOR)
    r = fb.radii()
    _, _, rel = qu_statistics(fb)
    h = s.h
    dt = timed.seconds + time.perf_counter() - t0
    ok = abs(r.mean() - 2.0) <= 2 * h and r.std() < h and rel < 0.10 and dt < 600
    _verdict(record_property, 5, ok,
             f"R mean {r.mean():.4f} (2h={2 * h:.4f}), R std {r.std():.4f} (h={h:.4f}), "
             f"q_u rel std {rel:.3f}, {dt:.1f}s")


# ----------------------------------------------------------------------------- 6


def _benchmark_states(golden_anneal, radial_anneal):
    out = []
    for s, timed in (golden_anneal, radial_anneal):
        out.append((s, timed.value.u, timed.value.final_params, timed.value.converged))
    for dim in (1, 2):
        s = build_scene(trivial_spec(dim))
        p = PenaltyParams(0.01, 0.05, 0.1)
        st = solve_fixed_params(ScalarField.zeros(s.grid), s, p)
        out.append((s, st.u, p, st.converged))
    return out


@pytest.mark.criterion(6, "explicit bounds on converged states")
def test_criterion_06_bounds(record_property, golden_anneal, radial_anneal):
    lines, ok = [], True
    for s, u, p, converged in _benchmark_states(golden_anneal, radial_anneal):
        t0 = time.perf_counter()
        rep = check_bounds(u, s, p)
        dt = time.perf_counter() - t0
        box, alpha = rep["box_bounds"], rep["alpha_sup_bound"]
        ok &= converged and box.status == "pass" and alpha.status == "pass" and dt < 1.0
        lines.append(f"{s.dim}D n={s.grid.size}: alpha {alpha.value:.3g}<= {alpha.bound:.3g}")
    _verdict(record_property, 6, ok, "; ".join(lines))


# ----------------------------------------------------------------------------- 7


@pytest.mark.criterion(7, "sign conditions")
def test_criterion_07_sign_conditions(record_property, golden_anneal, radial_anneal):
    t0 = time.perf_counter()
    grad_tol = SolverOptions().grad_tol
    ok, notes = True, []
    for s, u, p, _ in _benchmark_states(golden_anneal, radial_anneal):
        labels = classify_regions(u, s)
        tol = default_sign_tol(s, grad_tol)
        rep = check_sign_conditions(u, s, labels, tol)
        ok &= rep.passed
        notes.append(f"{s.dim}D:{'ok' if rep.passed else 'FAIL'}")
    # corruption: bump one node by 10 tol h^2 inside a harmonic region
    flipped = 0
    for (s, timed), region, name in ((golden_anneal, HEATED_INACTIVE, "laplacian_zero_heated_inactive"),
                                     (radial_anneal, EXT_POSITIVE, "laplacian_zero_exterior_positive")):
        u = timed.value.u
        labels = classify_regions(u, s)
        tol = default_sign_tol(s, grad_tol)
        idx = tuple(np.argwhere(labels.labels == region)[0])
        bad = u.values.copy()
        bad[idx] += 10 * tol * s.h**2
        rep = check_sign_conditions(bad, s, labels, tol)
        flipped += rep[name].status == "fail"
    dt = time.perf_counter() - t0
    _verdict(record_property, 7, ok and flipped == 2 and dt < 5,
             f"{', '.join(notes)}; corruption flips {flipped}/2; {dt:.2f}s")


# ----------------------------------------------------------------------------- 8


@pytest.mark.slow
@pytest.mark.criterion(8, "volume saturation and epsilon selection")
def test_criterion_08_volume_saturation(record_property):
    t0 = time.perf_counter()
    s = build_scene(radial_spec())
    eps_list = [0.4, 0.2, 0.1, 0.05, 0.025]
    vol_tol = 4 * s.h * s.domain.perimeter
    sel = select_epsilon(s, eps_list, default_schedule(s, eps_list[0]), vol_tol)
    vol = exterior_positive_volume(sel.state.u, s)
    dt = time.perf_counter() - t0
    ok = (sel.qualified and abs(vol - s.m) <= vol_tol and sel.epsilon_star != eps_list[-1]
          and sel.epsilon_star == max(r["epsilon"] for r in sel.sweep if r["qualifies"]) and dt < 900)
    _verdict(record_property, 8, ok,
             f"eps*={sel.epsilon_star}, |V-m|={abs(vol - s.m):.3f} <= {vol_tol:.3f}, "
             f"monotone={sel.volume_monotone}, {dt:.0f}s")


# ----------------------------------------------------------------------------- 9


@pytest.mark.criterion(9, "obstacle-problem consistency")
def test_criterion_09_obstacle_consistency(record_property, golden_anneal, radial_anneal):
    t0 = time.perf_counter()
    ok, notes = True, []
    for s, timed in (golden_anneal, radial_anneal):
        w, M = universal_competitor(s)
        wv = w.values
        inD = s.in_D & s.grid.interior_mask
        lap = laplacian_values(wv, s.grid.h)
        tol = 10 * 1e-10 * sum(2 / hk**2 for hk in s.grid.h)
        above = inD & (wv > s.phi.values)
        comp = (np.all(wv[inD] >= s.phi.values[inD]) and np.all(lap[inD] <= tol)
                and np.all(np.abs(lap[above]) <= tol) and np.all(wv[~s.in_D] == 0))
        e = perturbed_energy(timed.value.u, s, timed.value.final_params)
        bound = e.dirichlet + e.penalty_A_total <= M
        ok &= bool(comp and bound)
        notes.append(f"{s.dim}D: D+A={e.dirichlet + e.penalty_A_total:.4f} <= M={M:.4f}")
    dt = time.perf_counter() - t0
    _verdict(record_property, 9, ok and dt < 30, "; ".join(notes) + f"; {dt:.1f}s")


# ----------------------------------------------------------------------------- 10


@pytest.mark.criterion(10, "Lipschitz stability proxy")
def test_criterion_10_lipschitz_stability(record_property, golden_anneal):
    s, timed = golden_anneal
    t0 = time.perf_counter()
    stages = timed.value.stages
    g_last, g_prev = stages[-1].grad_sup_norm, stages[-2].grad_sup_norm
    _, fine = _anneal(golden_1d_spec(1025), 0.1)
    g_fine = grad_sup_norm(fine.value.u)
    g_coarse = grad_sup_norm(timed.value.u)
    ch_stage = abs(g_last - g_prev) / g_prev
    ch_grid = abs(g_fine - g_coarse) / g_coarse
    dt = timed.seconds + fine.seconds + time.perf_counter() - t0
    _verdict(record_property, 10, ch_stage < 0.2 and ch_grid < 0.2 and dt < 300,
             f"stage change {ch_stage:.2%}, grid change {ch_grid:.2%}, {dt:.1f}s")
