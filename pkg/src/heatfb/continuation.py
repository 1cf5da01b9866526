"""Parameter continuation: shrink kappa1, then kappa2, warm-starting each stage; then pick epsilon."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import exterior_positive_volume, perturbed_energy
from .grid import ScalarField, grad_sup_norm
from .penalty import PenaltyParams
from .scene import Scene
from .solver import SolverOptions, SolveState, collar_width, initial_guess, solve_fixed_params

log = logging.getLogger(__name__)


class ScheduleError(ValueError):
    pass


@dataclass
class Schedule:
    kappa1_seq: list[float]
    kappa2_seq: list[float]
    epsilon: float
    kappa1_floor: float = 0.0
    kappa2_floor: float = 0.0
    options: SolverOptions = field(default_factory=SolverOptions)
    joint: bool = False
    seed_volume: float | None = None

    def __post_init__(self):
        self.kappa1_seq = [float(k) for k in self.kappa1_seq]
        self.kappa2_seq = [float(k) for k in self.kappa2_seq]
        self.validate()

    def validate(self):
        for name, seq, floor in (("kappa1_seq", self.kappa1_seq, self.kappa1_floor),
                                 ("kappa2_seq", self.kappa2_seq, self.kappa2_floor)):
            if not seq:
                raise ScheduleError(f"{name} is empty")
            if any(not (k > 0 and math.isfinite(k)) for k in seq):
                raise ScheduleError(f"{name} must be positive and finite")
            if any(b >= a for a, b in zip(seq, seq[1:])):
                raise ScheduleError(f"{name} must be strictly decreasing")
            if seq[-1] < floor * (1 - 1e-12):
                raise ScheduleError(f"{name} ends at {seq[-1]:.4g}, below its floor {floor:.4g}")
        if not self.epsilon > 0:
            raise ScheduleError("epsilon must be positive")
        if self.joint and len(self.kappa1_seq) != len(self.kappa2_seq):
            raise ScheduleError("joint schedules need sequences of equal length")

    def stages(self) -> list[tuple[float, float]]:
        if self.joint:
            return list(zip(self.kappa1_seq, self.kappa2_seq))
        k2 = self.kappa2_seq[0]
        out = [(k1, k2) for k1 in self.kappa1_seq]
        out += [(self.kappa1_seq[-1], k2) for k2 in self.kappa2_seq[1:]]
        return out

    def with_epsilon(self, epsilon: float) -> "Schedule":
        return replace(self, epsilon=float(epsilon))

    def to_dict(self) -> dict:
        return {"kappa1_seq": self.kappa1_seq, "kappa2_seq": self.kappa2_seq,
                "epsilon": self.epsilon, "kappa1_floor": self.kappa1_floor,
                "kappa2_floor": self.kappa2_floor, "options": self.options.to_dict(),
                "joint": self.joint, "seed_volume": self.seed_volume}

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        d = dict(d)
        d["options"] = SolverOptions(**d.get("options", {}))
        return cls(**d)


def geometric(start: float, stop: float, n: int) -> list[float]:
    """n values from start down to stop, ratio constant."""
    if n == 1:
        return [float(stop)]
    return [float(start * (stop / start) ** (k / (n - 1))) for k in range(n)]


def kappa1_floor(s: Scene, scale: float = 4.0) -> float:
    """Smallest kappa1 the solver can resolve, ``scale * h^2``.

    Capped at ``0.5 / sup|lap phi|``: the obstacle force saturates at
    1/kappa1, and below that cap it can no longer hold u on a steep bump.
    """
    k = scale * s.h ** 2
    if s.c11_seminorm_phi > 0:
        k = min(k, 0.5 / s.c11_seminorm_phi)
    return k


def estimate_gradient_jump(s: Scene, u0: ScalarField | None = None, seed_volume: float | None = None) -> float:
    """Rough |grad u| at the exterior free boundary, read off the initial guess.

    Averages the gradient over exterior nodes in the outer half of the seed
    collar. Falls back to max_phi / diam(D) when there is no collar.
    """
    if s.max_phi <= 0:
        return 0.0
    fallback = s.max_phi / s.domain.diameter
    u0 = initial_guess(s, seed_volume) if u0 is None else u0
    vol = s.m if seed_volume is None else seed_volume
    ell = collar_width(s.domain, vol)
    dist = s.distance_to_D()
    band = s.exterior & (dist > 0.5 * ell) & (dist < ell) & (u0.values > 0)
    if not band.any():
        return fallback
    grads = np.gradient(u0.values, *s.grid.h) if s.dim > 1 else [np.gradient(u0.values, s.grid.h[0])]
    mag = np.sqrt(sum(g * g for g in grads))
    q = float(np.mean(mag[band]))
    return q if q > 0 else fallback


def default_schedule(s: Scene, epsilon: float, *, stages: int = 6, kappa1_scale: float = 4.0,
                     kappa2_factor: float = 0.5, options: SolverOptions | None = None,
                     seed_volume: float | None = None, u0: ScalarField | None = None) -> Schedule:
    """Halving sequences ending at the floors.

    kappa1 ends at ``kappa1_scale * h^2``; kappa2 ends at ``kappa2_factor * h * q``
    with q the estimated gradient jump, i.e. the smoothed layer is about one
    cell wide at the last stage.
    """
    h = s.h
    k1_min = kappa1_floor(s, kappa1_scale)
    q = estimate_gradient_jump(s, u0, seed_volume)
    k2_min = kappa2_factor * h * q if q > 0 else kappa2_factor * h
    span = 2.0 ** (stages - 1)
    return Schedule(geometric(span * k1_min, k1_min, stages), geometric(span * k2_min, k2_min, stages),
                    epsilon, k1_min, k2_min, options or SolverOptions(), False, seed_volume)


@dataclass
class StageRecord:
    kappa1: float
    kappa2: float
    epsilon: float
    iters: int
    converged: bool
    stalled: bool
    grad_norm: float
    multiplier: float
    energy_start: float
    energy_end: float
    min_u_minus_phi: float
    grad_sup_norm: float
    exterior_volume: float
    wall_time: float
    message: str = ""

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class AnnealResult:
    state: SolveState
    stages: list[StageRecord]
    schedule: Schedule
    failures: list[str] = field(default_factory=list)

    @property
    def u(self) -> ScalarField:
        return self.state.u

    @property
    def converged(self) -> bool:
        return not self.failures

    @property
    def final_params(self) -> PenaltyParams:
        last = self.stages[-1]
        return PenaltyParams(last.kappa1, last.kappa2, last.epsilon)


def anneal(s: Scene, sched: Schedule, u0: ScalarField | None = None) -> AnnealResult:
    sched.validate()
    u = initial_guess(s, sched.seed_volume) if u0 is None else u0
    records: list[StageRecord] = []
    failures: list[str] = []
    state = None
    for k, (k1, k2) in enumerate(sched.stages()):
        p = PenaltyParams(k1, k2, sched.epsilon)
        t0 = time.perf_counter()
        e0 = perturbed_energy(u, s, p).total
        state = solve_fixed_params(u, s, p, sched.options)
        u = state.u
        rec = StageRecord(k1, k2, sched.epsilon, state.iters, state.converged, state.stalled,
                          state.grad_norm, state.multiplier, e0, state.energy,
                          float(np.min(u.values - s.phi.values)), grad_sup_norm(u),
                          exterior_positive_volume(u, s), time.perf_counter() - t0, state.message)
        records.append(rec)
        if not state.converged:
            failures.append(f"stage {k} (kappa1={k1:.4g}, kappa2={k2:.4g}): {state.message}, "
                            f"residual {state.grad_norm:.3e}")
        log.info("stage %d kappa1=%.3g kappa2=%.3g iters=%d residual=%.2e E=%.8g vol=%.6g",
                 k, k1, k2, state.iters, state.grad_norm, state.energy, rec.exterior_volume)
    return AnnealResult(state, records, sched, failures)


@dataclass
class EpsilonSelection:
    epsilon_star: float
    result: AnnealResult
    qualified: bool
    sweep: list[dict]
    vol_tol: float

    @property
    def state(self) -> SolveState:
        return self.result.state

    @property
    def volume_monotone(self) -> bool:
        """|volume - m| never grows by more than vol_tol along the qualifying tail of the sweep."""
        errs = [r["volume_error"] for r in self.sweep if r["qualifies"]]
        return all(b <= a + self.vol_tol for a, b in zip(errs, errs[1:]))


def select_epsilon(s: Scene, epsilons, sched_template: Schedule, vol_tol: float,
                   stop_at_first: bool = False) -> EpsilonSelection:
    """Anneal for each epsilon (largest first) and keep the largest whose volume hits m."""
    eps = [float(e) for e in epsilons]
    if not eps:
        raise ValueError("epsilon list is empty")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    u0 = initial_guess(s, sched_template.seed_volume)
    sweep, results = [], []
    for e in eps:
        res = anneal(s, sched_template.with_epsilon(e), u0)
        vol = exterior_positive_volume(res.u, s)
        err = abs(vol - s.m)
        ok = err <= vol_tol
        sweep.append({"epsilon": e, "volume": vol, "volume_error": err, "qualifies": ok,
                      "energy": res.state.energy, "converged": res.converged,
                      "multiplier": res.state.multiplier})
        results.append(res)
        if ok and stop_at_first:
            break
    for rec, res in zip(sweep, results):
        if rec["qualifies"]:
            return EpsilonSelection(rec["epsilon"], res, True, sweep, vol_tol)
    best = min(range(len(sweep)), key=lambda i: sweep[i]["volume_error"])
    log.warning("no epsilon met the volume tolerance %.3g; best error %.3g", vol_tol, sweep[best]["volume_error"])
    return EpsilonSelection(sweep[best]["epsilon"], results[best], False, sweep, vol_tol)
