"""Command line: solve / anneal / sweep-eps / analyze / oracle / export, plus config and field I/O."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from .continuation import Schedule, ScheduleError, anneal, default_schedule, select_epsilon
from .diagnostics import EXTERIOR, extract_free_boundary, run_diagnostics
from .energy import exterior_positive_volume, perturbed_energy
from .grid import Grid, ScalarField
from .obstacle import ConvergenceError
from .oracles import OracleScopeError, oracle_solve_1d, write_golden
from .penalty import PenaltyParams
from .report import Report
from .scene import Disk, Scene, SceneError, SceneSpec, build_scene
from .solver import SolverOptions, initial_guess, solve_fixed_params

log = logging.getLogger(__name__)

FORMATS = ("csv", "bin", "pgm")
DEFAULT_EPSILONS = (0.4, 0.2, 0.1, 0.05, 0.025)
EXIT_OK, EXIT_STALL, EXIT_CONFIG = 0, 1, 2


# --------------------------------------------------------------------------- config


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)


class BoxConfig(_Strict):
    lo: list[float] = Field(min_length=1, max_length=2, description="lower box corner")
    hi: list[float] = Field(min_length=1, max_length=2, description="upper box corner")
    nodes: list[int] = Field(min_length=1, max_length=2, description="nodes per axis, >= 3")

    @model_validator(mode="after")
    def _shape(self):
        if not len(self.lo) == len(self.hi) == len(self.nodes):
            raise ValueError("lo, hi and nodes need the same length")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("need lo < hi on every axis")
        if any(n < 3 for n in self.nodes):
            raise ValueError("need at least 3 nodes per axis")
        return self


class DomainConfig(_Strict):
    shape: Literal["interval", "disk", "rectangle"]
    center: list[float] | float | None = None
    radius: float | None = Field(default=None, gt=0)
    lo: list[float] | None = None
    hi: list[float] | None = None

    @model_validator(mode="after")
    def _fields(self):
        if self.shape in ("interval", "disk"):
            if self.center is None or self.radius is None:
                raise ValueError(f"{self.shape} needs center and radius")
        elif self.lo is None or self.hi is None:
            raise ValueError("rectangle needs lo and hi")
        return self

    def as_dict(self) -> dict:
        if self.shape == "interval":
            c = self.center if isinstance(self.center, float) else self.center[0]
            return {"shape": "interval", "center": c, "radius": self.radius}
        if self.shape == "disk":
            return {"shape": "disk", "center": list(self.center), "radius": self.radius}
        return {"shape": "rectangle", "lo": self.lo, "hi": self.hi}


class BumpConfig(_Strict):
    profile: Literal["poly4", "mollifier"] = "poly4"
    center: list[float] | float
    radius: float = Field(gt=0)
    height: float = Field(ge=0)


class PenaltyConfig(_Strict):
    kappa1: float | None = Field(default=None, gt=0, description="default: kappa1 floor")
    kappa2: float | None = Field(default=None, gt=0, description="default: kappa2 floor")
    epsilon: float = Field(default=0.05, gt=0)


class ContinuationConfig(_Strict):
    kappa1_seq: list[float] | None = Field(
        default=None, description="default: 6 halvings ending at min(4 h^2, 0.5 / sup|lap phi|)")
    kappa2_seq: list[float] | None = Field(default=None, description="default: 6 halvings ending at h q / 2")
    epsilons: list[float] | None = Field(default=None, description=f"default: {list(DEFAULT_EPSILONS)}")
    vol_tol: float | None = Field(default=None, gt=0, description="default: 4 h perimeter(D)")
    stages: int = Field(default=6, ge=1)
    kappa1_scale: float = Field(default=4.0, gt=0)
    kappa2_factor: float = Field(default=0.5, gt=0)
    joint: bool = False


class SolverConfig(_Strict):
    max_iters: int = Field(default=300, ge=0)
    grad_tol: float = Field(default=1e-8, gt=0)
    armijo_c: float = Field(default=1e-4, gt=0, lt=1)
    step_init: float | None = Field(default=None, gt=0)
    step_shrink: float = Field(default=0.5, gt=0, lt=1)
    clip_box: bool = True
    method: Literal["newton", "gradient"] = "newton"


class OutputConfig(_Strict):
    dir: str = "run"
    formats: list[Literal["csv", "bin", "pgm"]] = Field(default_factory=lambda: ["bin"])


class Config(_Strict):
    box: BoxConfig
    domain: DomainConfig
    obstacle: list[BumpConfig] = Field(default_factory=list)
    m: float = Field(gt=0)
    penalty: PenaltyConfig = Field(default_factory=PenaltyConfig)
    continuation: ContinuationConfig = Field(default_factory=ContinuationConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)


@dataclass
class RunConfig:
    spec: SceneSpec
    config: Config
    raw: dict

    @property
    def options(self) -> SolverOptions:
        return SolverOptions(**self.config.solver.model_dump())

    @property
    def output(self) -> OutputConfig:
        return self.config.output

    def schedule(self, s: Scene, epsilon: float | None = None, seed_volume: float | None = None) -> Schedule:
        c = self.config.continuation
        eps = self.config.penalty.epsilon if epsilon is None else epsilon
        base = default_schedule(s, eps, stages=c.stages, kappa1_scale=c.kappa1_scale,
                                kappa2_factor=c.kappa2_factor, options=self.options,
                                seed_volume=seed_volume)
        try:
            return Schedule(c.kappa1_seq or base.kappa1_seq, c.kappa2_seq or base.kappa2_seq, eps,
                            base.kappa1_floor, base.kappa2_floor, self.options, c.joint, seed_volume)
        except ScheduleError as exc:
            raise ConfigError("continuation", str(exc)) from exc

    def penalty(self, s: Scene, seed_volume: float | None = None) -> PenaltyParams:
        pc = self.config.penalty
        if pc.kappa1 is not None and pc.kappa2 is not None:
            return PenaltyParams(pc.kappa1, pc.kappa2, pc.epsilon)
        sched = self.schedule(s, pc.epsilon, seed_volume)
        return PenaltyParams(pc.kappa1 or sched.kappa1_seq[-1], pc.kappa2 or sched.kappa2_seq[-1], pc.epsilon)

    def epsilons(self) -> list[float]:
        return list(self.config.continuation.epsilons or DEFAULT_EPSILONS)

    def vol_tol(self, s: Scene) -> float:
        return self.config.continuation.vol_tol or 4.0 * s.h * s.domain.perimeter


def _error_key(err: ValidationError) -> tuple[str, str]:
    first = err.errors()[0]
    loc = ".".join(str(x) for x in first["loc"])
    return loc or "<root>", first["msg"]


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    try:
        cfg = Config.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(*_error_key(exc)) from exc
    spec_dict = {"box": cfg.box.model_dump(), "domain": cfg.domain.as_dict(),
                 "obstacle": [b.model_dump() for b in cfg.obstacle], "m": cfg.m}
    try:
        spec = SceneSpec.from_dict(spec_dict)
        if spec.domain.dim != spec.dim:
            raise SceneError(f"{spec.domain.shape} domain in a {spec.dim}D box")
    except SceneError as exc:
        raise ConfigError("domain", str(exc)) from exc
    for k, b in enumerate(spec.bumps):
        if len(b.center) != spec.dim:
            raise ConfigError(f"obstacle.{k}.center", "dimension does not match the box")
    c = cfg.continuation
    for key in ("kappa1_seq", "kappa2_seq", "epsilons"):
        seq = getattr(c, key)
        if seq is not None:
            if not seq or any(not v > 0 for v in seq):
                raise ConfigError(f"continuation.{key}", "needs positive entries")
            if any(b >= a for a, b in zip(seq, seq[1:])):
                raise ConfigError(f"continuation.{key}", "must be strictly decreasing")
    return RunConfig(spec, cfg, raw)


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError("--config", f"no such file {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from exc
    return parse_config(raw)


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


_CONSTRAINT_TEXT = {"gt": "> {}", "ge": ">= {}", "lt": "< {}", "le": "<= {}",
                    "min_length": "length >= {}", "max_length": "length <= {}"}


def _type_name(ann) -> str:
    if isinstance(ann, type) and typing.get_origin(ann) is None:
        return ann.__name__
    return str(ann).replace("typing.", "").replace(f"{__name__}.", "")


def _cell(text: str) -> str:
    return text.replace("|", "\\|")


def _constraint(meta) -> str:
    for attr, fmt in _CONSTRAINT_TEXT.items():
        if hasattr(meta, attr):
            return fmt.format(getattr(meta, attr))
    return str(meta)


def config_reference() -> str:
    """Markdown table of every config key with its type, default and constraint."""
    lines = ["# Configuration reference", "",
             "Unknown keys are rejected. Numbers must be JSON numbers.", ""]
    sections = [("(top level)", Config), ("box", BoxConfig), ("domain", DomainConfig),
                ("obstacle[]", BumpConfig), ("penalty", PenaltyConfig),
                ("continuation", ContinuationConfig), ("solver", SolverConfig), ("output", OutputConfig)]
    for name, model in sections:
        lines += [f"## `{name}`", "", "| key | type | default | notes |", "|---|---|---|---|"]
        for key, f in model.model_fields.items():
            if f.is_required():
                default = "required"
            elif f.default_factory is not None:
                factory = f.default_factory
                is_model = isinstance(factory, type) and issubclass(factory, BaseModel)
                default = "see section" if is_model else json.dumps(factory())
            else:
                default = json.dumps(f.default)
            notes = [_constraint(m) for m in f.metadata] + ([f.description] if f.description else [])
            lines.append(f"| `{key}` | `{_cell(_type_name(f.annotation))}` | {default} | {_cell('; '.join(notes))} |")
        lines.append("")
    return "\n".join(lines)


# --------------------------------------------------------------------------- field I/O


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def _grid_meta(g: Grid) -> dict:
    return {"dims": list(g.n_nodes), "extents": [list(g.lo), list(g.hi)], "count": g.size}


def export_field(u: ScalarField, fmt: str, path) -> Path:
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    path = Path(path)
    g = u.grid
    v = u.values
    if fmt == "csv":
        cols = [c.ravel() for c in g.coords()] + [v.ravel() + 0.0]
        names = ["x", "y"][: g.dim] + ["value"]
        with open(path, "w") as fh:
            fh.write(",".join(names) + "\n")
            for row in zip(*cols):
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
    elif fmt == "bin":
        path.write_bytes(np.ascontiguousarray(v, dtype="<f8").tobytes())
        _sidecar(path).write_text(json.dumps({**_grid_meta(g), "dtype": "<f8", "order": "C"}, indent=2))
    else:
        top = float(v.max())
        scale = 65535.0 / top if top > 0 else 0.0
        pix = np.clip(np.rint(np.maximum(v, 0.0) * scale), 0, 65535).astype(">u2")
        # image rows run along the last axis, top row = largest coordinate
        img = pix.reshape(1, -1) if g.dim == 1 else pix.T[::-1]
        with open(path, "wb") as fh:
            fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode())
            fh.write(img.tobytes())
        _sidecar(path).write_text(json.dumps({**_grid_meta(g), "map": {"value_at_0": 0.0, "value_at_65535": top},
                                              "orientation": "rows = last axis descending"}, indent=2))
    return path


def import_field(path) -> ScalarField:
    path = Path(path)
    if path.suffix == ".bin":
        meta = json.loads(_sidecar(path).read_text())
        g = Grid(tuple(meta["extents"][0]), tuple(meta["extents"][1]), tuple(meta["dims"]))
        data = np.frombuffer(path.read_bytes(), dtype="<f8")
        if data.size != meta["count"]:
            raise ValueError(f"{path}: expected {meta['count']} values, found {data.size}")
        return ScalarField(g, data.astype(float).reshape(g.shape))
    if path.suffix == ".csv":
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        d = table.shape[1] - 1
        axes = [np.unique(table[:, k]) for k in range(d)]
        g = Grid(tuple(a[0] for a in axes), tuple(a[-1] for a in axes), tuple(len(a) for a in axes))
        return ScalarField(g, table[:, -1].reshape(g.shape))
    raise ValueError(f"cannot import {path}: expected .bin or .csv")


# --------------------------------------------------------------------------- manifest


@dataclass
class RunManifest:
    command: str
    config_hash: str
    scene: dict
    schedule: dict | None = None
    stages: list[dict] = field(default_factory=list)
    report: dict | None = None
    version: str = __version__
    timings: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    fields: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls.from_dict(json.loads(text))

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        return path


def read_manifest(path) -> RunManifest:
    return RunManifest.from_json(Path(path).read_text())


# --------------------------------------------------------------------------- commands


def _prepare_out(out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_fields(u: ScalarField, out: Path, formats, stem: str = "u") -> list[str]:
    names = []
    for fmt in formats:
        p = export_field(u, fmt, out / f"{stem}.{fmt}")
        names.append(p.name)
    return names


def _finish(rc: RunConfig, out: Path, man: RunManifest, u: ScalarField, rep: Report) -> None:
    (out / "config.json").write_text(json.dumps(rc.raw, indent=2, sort_keys=True) + "\n")
    man.fields = _write_fields(u, out, rc.output.formats)
    man.report = rep.to_dict()
    (out / "report.json").write_text(rep.to_json() + "\n")
    man.write(out / "manifest.json")


def fb_radius_estimate(u: ScalarField, s: Scene) -> float | None:
    """Mean distance of the exterior free boundary from the centre of a disk domain."""
    if s.dim != 2 or not isinstance(s.domain, Disk):
        return None
    fb = extract_free_boundary(u, s, EXTERIOR)
    return float(fb.radii(s.domain.center).mean()) if not fb.empty else None


def _cmd_solve(args, rc: RunConfig) -> int:
    s = build_scene(rc.spec)
    out = _prepare_out(args.out or rc.output.dir)
    t0 = time.perf_counter()
    p = rc.penalty(s, args.seed_volume)
    u0 = initial_guess(s, args.seed_volume)
    state = solve_fixed_params(u0, s, p, rc.options)
    dt = time.perf_counter() - t0
    rep = run_diagnostics(state.u, s, p, rc.options.grad_tol)
    man = RunManifest("solve", config_hash(rc.raw), rc.spec.to_dict(),
                      stages=[{"kappa1": p.kappa1, "kappa2": p.kappa2, "epsilon": p.epsilon,
                               "iters": state.iters, "converged": state.converged,
                               "grad_norm": state.grad_norm, "energy": state.energy,
                               "message": state.message, "wall_time": dt}],
                      timings={"solve": dt},
                      results={"energy": perturbed_energy(state.u, s, p).to_dict(),
                               "multiplier": state.multiplier,
                               "exterior_volume": exterior_positive_volume(state.u, s)})
    _finish(rc, out, man, state.u, rep)
    print(f"solve: {state.message} after {state.iters} iterations, E = {state.energy:.10g}")
    return EXIT_OK if state.converged else EXIT_STALL


def _cmd_anneal(args, rc: RunConfig) -> int:
    s = build_scene(rc.spec)
    out = _prepare_out(args.out or rc.output.dir)
    sched = rc.schedule(s, seed_volume=args.seed_volume)
    t0 = time.perf_counter()
    res = anneal(s, sched)
    dt = time.perf_counter() - t0
    rep = run_diagnostics(res.u, s, res.final_params, rc.options.grad_tol)
    man = RunManifest("anneal", config_hash(rc.raw), rc.spec.to_dict(), sched.to_dict(),
                      [r.to_dict() for r in res.stages], timings={"anneal": dt},
                      results={"failures": res.failures, "energy": res.state.energy,
                               "exterior_volume": exterior_positive_volume(res.u, s),
                               "fb_radius": fb_radius_estimate(res.u, s)})
    _finish(rc, out, man, res.u, rep)
    print(f"anneal: {len(res.stages)} stages, {len(res.failures)} failures, E = {res.state.energy:.10g}")
    return EXIT_OK if res.converged else EXIT_STALL


def _cmd_sweep(args, rc: RunConfig) -> int:
    s = build_scene(rc.spec)
    out = _prepare_out(args.out or rc.output.dir)
    sched = rc.schedule(s, seed_volume=args.seed_volume)
    vol_tol = rc.vol_tol(s)
    t0 = time.perf_counter()
    sel = select_epsilon(s, rc.epsilons(), sched, vol_tol)
    dt = time.perf_counter() - t0
    res = sel.result
    rep = run_diagnostics(res.u, s, res.final_params, rc.options.grad_tol)
    man = RunManifest("sweep-eps", config_hash(rc.raw), rc.spec.to_dict(), res.schedule.to_dict(),
                      [r.to_dict() for r in res.stages], timings={"sweep": dt},
                      results={"epsilon_star": sel.epsilon_star, "qualified": sel.qualified,
                               "vol_tol": vol_tol, "sweep": sel.sweep,
                               "volume_monotone": sel.volume_monotone,
                               "fb_radius": fb_radius_estimate(res.u, s),
                               "failures": res.failures})
    _finish(rc, out, man, res.u, rep)
    print(f"sweep-eps: epsilon* = {sel.epsilon_star:g} ({'qualified' if sel.qualified else 'NOT qualified'})")
    return EXIT_OK if res.converged else EXIT_STALL


def _cmd_analyze(args, rc: RunConfig) -> int:
    s = build_scene(rc.spec)
    u = import_field(args.field)
    if u.grid != s.grid:
        raise ConfigError("--field", "field grid does not match the config box")
    p = rc.penalty(s, args.seed_volume)
    rep = run_diagnostics(u, s, p, rc.options.grad_tol)
    text = rep.to_json()
    if args.out:
        out = _prepare_out(args.out)
        (out / "report.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def _cmd_oracle(args, rc: RunConfig) -> int:
    s = build_scene(rc.spec)
    target = Path(args.out or "oracle1d.json")
    if target.suffix != ".json":
        target = _prepare_out(target) / "oracle1d.json"
    try:
        result = oracle_solve_1d(s, args.resolution)
    except OracleScopeError as exc:
        raise ConfigError("domain", str(exc)) from exc
    target.parent.mkdir(parents=True, exist_ok=True)
    write_golden(target, s, result)
    print(f"oracle: t* = {result.t_star:.10g}, E* = {result.E_star:.10g} -> {target}")
    return EXIT_OK


def _cmd_export(args, rc: RunConfig | None) -> int:
    u = import_field(args.field)
    fmt = args.format
    out = Path(args.out) if args.out else Path(args.field).with_suffix(f".{fmt}")
    if out.is_dir():
        out = out / f"{Path(args.field).stem}.{fmt}"
    export_field(u, fmt, out)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heatfb", description="Penalized free-boundary solver")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required)
        p.add_argument("--out")
        p.add_argument("--seed-volume", type=float, default=None)
        return p

    common(sub.add_parser("solve", help="solve at fixed penalty parameters"))
    common(sub.add_parser("anneal", help="continuation in kappa1 then kappa2"))
    common(sub.add_parser("sweep-eps", help="anneal over epsilons and select the largest saturating one"))
    p = common(sub.add_parser("analyze", help="diagnostics on a saved field"))
    p.add_argument("--field", required=True)
    p = common(sub.add_parser("oracle", help="regenerate the 1D golden file"))
    p.add_argument("--resolution", type=int, default=10_000)
    p = sub.add_parser("export", help="convert a saved field")
    p.add_argument("--field", required=True)
    p.add_argument("--format", choices=FORMATS, required=True)
    p.add_argument("--out")
    p.add_argument("--config")
    return ap


COMMANDS = {"solve": _cmd_solve, "anneal": _cmd_anneal, "sweep-eps": _cmd_sweep,
            "analyze": _cmd_analyze, "oracle": _cmd_oracle, "export": _cmd_export}


def run_command(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = load_config(args.config) if args.config else None
        return COMMANDS[args.command](args, rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SceneError, ScheduleError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"stalled: {exc}", file=sys.stderr)
        return EXIT_STALL
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
