"""Anneal the 1D golden scene and compare against the tangent-line oracle."""
import argparse
import json

import numpy as np

from heatfb.continuation import anneal, default_schedule
from heatfb.diagnostics import extract_free_boundary
from heatfb.energy import sharp_energy
from heatfb.oracles import oracle_solve_1d
from heatfb.scene import Bump, Interval, SceneSpec, build_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=513)
    ap.add_argument("--epsilon", type=float, default=0.1)
    args = ap.parse_args()

    spec = SceneSpec((-2.0,), (2.0,), (args.nodes,), Interval(0.0, 1.0), (Bump((0.0,), 0.5, 1.0),), 1.0)
    s = build_scene(spec)
    res = anneal(s, default_schedule(s, args.epsilon))
    orc = oracle_solve_1d(s)
    fb = extract_free_boundary(res.u, s)
    out = {
        "nodes": args.nodes,
        "h": s.h,
        "converged": res.converged,
        "max_abs_u_minus_oracle": float(np.abs(res.u.values - orc.u_star.values).max()),
        "sharp_energy": sharp_energy(res.u, s, args.epsilon),
        "oracle_energy": orc.E_star,
        "free_boundary": [float(x) for x in fb.points[:, 0]],
        "oracle_free_boundary": list(orc.fb_points),
        "qu_samples": fb.qu_samples.tolist(),
        "oracle_q": orc.q_star,
    }
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
