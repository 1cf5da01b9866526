"""Epsilon sweep on the radial scene: free-boundary radius, q_u spread and volume per epsilon."""
import argparse
import math

from heatfb.continuation import default_schedule, select_epsilon
from heatfb.diagnostics import extract_free_boundary, qu_statistics
from heatfb.oracles import oracle_radial_2d
from heatfb.scene import Bump, Disk, SceneSpec, build_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=256)
    ap.add_argument("--half", type=float, default=4.0)
    ap.add_argument("--epsilons", type=float, nargs="+", default=[0.4, 0.2, 0.1, 0.05, 0.025])
    args = ap.parse_args()

    spec = SceneSpec((-args.half,) * 2, (args.half,) * 2, (args.nodes,) * 2, Disk((0.0, 0.0), 1.0),
                     (Bump((0.0, 0.0), 0.5, 3.0),), 3.0 * math.pi)
    s = build_scene(spec)
    orc = oracle_radial_2d(s)
    vol_tol = 4.0 * s.h * s.domain.perimeter
    sel = select_epsilon(s, args.epsilons, default_schedule(s, args.epsilons[0]), vol_tol)
    print(f"h = {s.h:.5f}, vol_tol = {vol_tol:.4f}, oracle R = {orc.R_star:.4f}, q = {orc.q_star:.4f}")
    print(f"oracle: {orc.assumption}")
    print(f"{'eps':>8} {'volume':>10} {'|V-m|':>8} {'ok':>3} {'multiplier':>10}")
    for r in sel.sweep:
        print(f"{r['epsilon']:8.4g} {r['volume']:10.5f} {r['volume_error']:8.4f} {'y' if r['qualifies'] else 'n':>3}"
              f" {r['multiplier']:10.4g}")
    fb = extract_free_boundary(sel.state.u, s)
    radii = fb.radii()
    mean, _, rel = qu_statistics(fb)
    print(f"epsilon* = {sel.epsilon_star:g} (qualified: {sel.qualified})")
    print(f"free boundary radius {radii.mean():.4f} +- {radii.std():.4f}, q_u {mean:.4f} (rel std {rel:.3f})")


if __name__ == "__main__":
    main()
