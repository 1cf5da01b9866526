import math

import numpy as np
import pytest

from heatfb.energy import sharp_energy, universal_competitor
from heatfb.grid import dirichlet_values
from heatfb.obstacle import solve_obstacle
from heatfb.oracles import (OracleScopeError, golden_record, oracle_radial_2d, oracle_solve_1d, read_golden,
                            write_golden)
from heatfb.scene import Bump, Disk, Interval, Rectangle, SceneSpec, analytic_lipschitz, build_scene

from conftest import (GOLDEN, GOLDEN_1D_A, GOLDEN_1D_E, GOLDEN_1D_T, RADIAL_E, RADIAL_Q, RADIAL_T,
                      golden_1d_spec, radial_spec, trivial_spec)


def test_1d_oracle_matches_independent_values(golden_scene):
    o = oracle_solve_1d(golden_scene)
    assert o.t_star == pytest.approx(GOLDEN_1D_T, abs=1e-8)
    assert o.E_star == pytest.approx(GOLDEN_1D_E, abs=1e-10)
    assert o.a_star == pytest.approx(GOLDEN_1D_A, abs=1e-8)
    assert o.fb_points == pytest.approx((-1.5, 1.5))
    # the exterior tail is linear: slope t / (R - r_D)
    assert o.q_star == pytest.approx(GOLDEN_1D_T / 0.5)


def test_radial_oracle_matches_independent_values():
    o = oracle_radial_2d(build_scene(radial_spec(nodes=64)))
    assert o.R_star == pytest.approx(2.0)
    assert o.t_star == pytest.approx(RADIAL_T, abs=1e-8)
    assert o.E_star == pytest.approx(RADIAL_E, abs=1e-8)
    assert o.q_star == pytest.approx(RADIAL_Q, abs=1e-8)
    assert o.u_profile[0] == pytest.approx(3.0)
    assert o.u_profile[-1] == pytest.approx(0.0, abs=1e-12)


def test_golden_file_regenerates_exactly(golden_scene, tmp_path):
    stored = read_golden(GOLDEN / "oracle1d.json")
    o = oracle_solve_1d(golden_scene, stored["resolution"])
    assert stored["scene_digest"] == golden_scene.spec.digest()
    assert golden_record(golden_scene, o) == stored
    write_golden(tmp_path / "g.json", golden_scene, o)
    assert read_golden(tmp_path / "g.json") == stored


def test_1d_oracle_beats_psor_on_extended_domain(golden_scene):
    """Brute force: obstacle solution on D plus the optimal exterior collar, by PSOR on a fine grid."""
    spec = golden_1d_spec(nodes=4097)
    s = build_scene(spec)
    x = s.grid.axis(0)
    free = s.grid.interior_mask & (np.abs(x) < 1.5)
    u, _, _ = solve_obstacle(s.phi.values, free, s.grid.h, tol=1e-12)
    E = dirichlet_values(u, s.grid.h)
    o = oracle_solve_1d(golden_scene)
    assert E == pytest.approx(o.E_star, rel=1e-4)


def test_oracle_energy_below_competitor(golden_scene):
    _, M = universal_competitor(golden_scene)
    assert oracle_solve_1d(golden_scene).E_star < M


def test_sampled_1d_oracle_has_sharp_energy_close_to_E_star(golden_scene):
    o = oracle_solve_1d(golden_scene)
    assert sharp_energy(o.u_star, golden_scene, 0.1) == pytest.approx(o.E_star, rel=1e-3)


def test_oracle_profile_is_continuous_and_above_obstacle():
    s = build_scene(radial_spec(nodes=64))
    o = oracle_radial_2d(s)
    r = np.linspace(0.0, 2.5, 20001)
    u = o.solution.profile(r)
    # Lipschitz with the obstacle's constant, so no jumps
    assert np.max(np.abs(np.diff(u))) <= 1.01 * analytic_lipschitz(s.spec) * (r[1] - r[0])
    phi = 3.0 * np.clip(1 - (r / 0.5) ** 2, 0, None) ** 4
    assert np.all(u >= phi - 1e-12)
    assert np.all(u[r >= 2.0] == 0.0)


@pytest.mark.parametrize("spec, fn", [
    (radial_spec(nodes=33), oracle_solve_1d),
    (golden_1d_spec(nodes=33), oracle_radial_2d),
    (SceneSpec((-2, -2), (2, 2), (33, 33), Rectangle((-1, -1), (1, 1)), (), 1.0), oracle_radial_2d),
    (SceneSpec((-2, -2), (2, 2), (33, 33), Disk((0, 0), 1.0), (Bump((0.2, 0.0), 0.5, 1.0),), 1.0),
     oracle_radial_2d),
    (SceneSpec((-2,), (2,), (33,), Interval(0.0, 1.0), (Bump((0.1,), 0.5, 1.0),), 1.0), oracle_solve_1d),
])
def test_scope_errors(spec, fn):
    with pytest.raises(OracleScopeError):
        fn(build_scene(spec))


def test_zero_obstacle_oracles():
    o1 = oracle_solve_1d(build_scene(trivial_spec(1, 33)))
    assert o1.E_star == 0.0 and o1.fb_points == () and not o1.u_star.values.any()
    s2 = build_scene(trivial_spec(2, 33))
    o2 = oracle_radial_2d(s2)
    assert o2.E_star == 0.0 and not o2.sample(s2).values.any()
    assert o2.R_star == pytest.approx(math.sqrt(1 + 1 / math.pi))
