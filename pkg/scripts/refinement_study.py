"""Radial scene at several resolutions: how the free boundary, q_u and energy converge."""
import argparse
import math
import time

from heatfb.continuation import anneal, default_schedule
from heatfb.diagnostics import extract_free_boundary, qu_statistics
from heatfb.energy import exterior_positive_volume, sharp_energy
from heatfb.grid import dirichlet_values
from heatfb.oracles import oracle_radial_2d
from heatfb.scene import Bump, Disk, SceneSpec, build_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--epsilon", type=float, default=0.05)
    args = ap.parse_args()

    print(f"{'n':>5} {'h':>8} {'R mean':>8} {'R std':>8} {'q mean':>8} {'q rel':>7} {'|V-m|':>8} "
          f"{'E dir':>9} {'E sharp':>9} {'E*':>9} {'sec':>6}")
    for n in args.nodes:
        spec = SceneSpec((-4.0, -4.0), (4.0, 4.0), (n, n), Disk((0.0, 0.0), 1.0),
                         (Bump((0.0, 0.0), 0.5, 3.0),), 3.0 * math.pi)
        s = build_scene(spec)
        t0 = time.perf_counter()
        res = anneal(s, default_schedule(s, args.epsilon))
        dt = time.perf_counter() - t0
        fb = extract_free_boundary(res.u, s)
        r = fb.radii()
        q, _, rel = qu_statistics(fb)
        dv = abs(exterior_positive_volume(res.u, s) - s.m)
        e = sharp_energy(res.u, s, args.epsilon)
        ed = dirichlet_values(res.u.values, s.grid.h)
        print(f"{n:5d} {s.h:8.4f} {r.mean():8.4f} {r.std():8.4f} {q:8.4f} {rel:7.3f} {dv:8.4f} "
              f"{ed:9.4f} {e:9.4f} {oracle_radial_2d(s).E_star:9.4f} {dt:6.1f}")
    print(f"E*: {oracle_radial_2d(s).assumption}")


if __name__ == "__main__":
    main()
