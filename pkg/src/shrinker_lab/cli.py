"""Batch experiment driver: ``shrinker-lab run`` and ``shrinker-lab presets``."""

from __future__ import annotations

import argparse
import contextlib
import copy
import csv
import dataclasses
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from . import analysis, energy, flow, geometry
from .analysis import FitError
from .flow import FlowError, Frame
from .geometry import DiscreteSurface, GeometryError, make_shrinker

log = logging.getLogger("shrinker_lab")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

TRAJECTORY_COLUMNS = ("tau", "E", "gap", "grad_norm", "dissipation", "vdot_norm", "vmax")


# ---------------------------------------------------------------- configuration


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)


Pair = Annotated[list[float], Field(min_length=2, max_length=2)]


class ModelConfig(_Strict):
    kind: Literal["circle", "round-sphere"] = "circle"
    n: int = Field(1, ge=1, le=8)
    N: int = Field(512, ge=16, le=16384)

    @model_validator(mode="after")
    def _dimension(self):
        if self.kind == "circle" and self.n != 1:
            raise ValueError("model.n must be 1 for the circle")
        if self.kind == "round-sphere" and self.n < 2:
            raise ValueError("model.n must be at least 2 for round-sphere")
        return self


class Mode(_Strict):
    k: int = Field(ge=0, le=64)
    cos: float = 0.0
    sin: float = 0.0


class InitialConfig(_Strict):
    generator: Literal["fourier", "random", "file"] = "fourier"
    radius: float | None = Field(None, gt=0)
    modes: list[Mode] = []
    amplitude: float = Field(0.05, ge=0, lt=0.5)
    max_mode: int = Field(4, ge=2, le=32)
    path: str | None = None

    @model_validator(mode="after")
    def _source(self):
        if self.generator == "file" and not self.path:
            raise ValueError("initial.path is required when initial.generator = 'file'")
        return self


class SolverConfig(_Strict):
    dtau: float = Field(1e-4, gt=0, le=0.1)
    dt: float = Field(1e-3, gt=0, le=0.1)
    t0: float = -1.0
    tau_max: float = Field(30.0, gt=0, le=1e4)
    conv_tol: float = Field(1e-8, ge=0)
    scheme: Literal["semi-implicit", "rk4"] = "semi-implicit"
    recenter: bool = True
    relax: float = Field(4.0, gt=0)
    stop_area: float = Field(2 * math.pi * 1e-5, gt=0)
    record_every: int = Field(1, ge=1)
    snapshot_every: int = Field(100, ge=1)


class AnalysisConfig(_Strict):
    gap_window: Pair = [1e-10, 1e-3]
    extinction_window: Pair = [0.70, 0.95]
    max_residual: float = Field(1e-3, gt=0)
    lambda_sequences: dict[str, list[float]] = {
        "2^i": [2.0, 4.0, 8.0, 16.0, 32.0],
        "3^i": [3.0, 9.0, 27.0],
    }
    uniqueness_tol: float = Field(1e-3, gt=0)
    control_offset: float = Field(0.1, ge=0)
    density_n: list[int] = [1, 2, 3, 4]
    plots: bool = True

    @model_validator(mode="after")
    def _windows(self):
        lo, hi = self.gap_window
        if not 0 < lo < hi:
            raise ValueError("analysis.gap_window must satisfy 0 < lo < hi")
        a, b = self.extinction_window
        if not 0 <= a < b <= 1:
            raise ValueError("analysis.extinction_window must satisfy 0 <= a < b <= 1")
        for name, seq in self.lambda_sequences.items():
            if not seq or min(seq) <= 0:
                raise ValueError(f"analysis.lambda_sequences.{name} must hold positive scales")
        return self


PresetName = Literal["density-table", "circle-perturb", "sphere-perturb", "tangent-uniqueness", "convergence-order"]


class ExperimentConfig(_Strict):
    preset: PresetName
    seed: int = Field(0, ge=0)
    out: str | None = None
    model: ModelConfig = ModelConfig()
    initial: InitialConfig = InitialConfig()
    solver: SolverConfig = SolverConfig()
    analysis: AnalysisConfig = AnalysisConfig()


PRESETS: dict[str, tuple[str, dict]] = {
    "density-table": (
        "Gaussian densities of the built-in shrinkers against their closed forms",
        {"model": {"N": 512}},
    ),
    "circle-perturb": (
        "Perturbed circle: physical flow, extinction fit, recentred rescaled flow, rate fits",
        {
            "model": {"kind": "circle", "n": 1, "N": 512},
            "initial": {"modes": [{"k": 2, "cos": 0.05}, {"k": 3, "sin": 0.03}]},
        },
    ),
    "sphere-perturb": (
        "Rotationally symmetric perturbed 2-sphere through the same pipeline",
        {
            "model": {"kind": "round-sphere", "n": 2, "N": 128},
            "initial": {"modes": [{"k": 2, "cos": 0.05}, {"k": 3, "cos": 0.03}]},
            "solver": {"dtau": 1e-3, "tau_max": 60.0, "stop_area": 1e-4, "snapshot_every": 20},
        },
    ),
    "tangent-uniqueness": (
        "Blow-ups of a perturbed circle along two scale sequences, with a mis-centred control",
        {
            "model": {"kind": "circle", "n": 1, "N": 512},
            "initial": {"modes": [{"k": 2, "cos": 0.05}]},
        },
    ),
    "convergence-order": (
        "Grid and step refinement of the residual, density, identity and round-solution invariants",
        {"model": {"kind": "circle", "n": 1, "N": 512}},
    ),
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a raw mapping on top of its preset's defaults."""
    preset = data.get("preset")
    if preset not in PRESETS:
        raise ConfigError(f"preset: unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    merged = _merge(PRESETS[preset][1], data)
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            key = ".".join(str(p) for p in err["loc"]) or "<root>"
            msgs.append(f"{key}: {err['msg']}")
        raise ConfigError("; ".join(msgs)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(cfg.model_dump(exclude_none=True))


# ---------------------------------------------------------------- initial data


def _resample_curve(points: np.ndarray, N: int) -> np.ndarray:
    """N points at equal chord-length spacing on the periodic spline through ``points``."""
    closed = np.vstack([points, points[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(closed, axis=0).T))])
    spl = CubicSpline(s, closed, bc_type="periodic")
    return spl(np.arange(N) * s[-1] / N)


def initial_surface(cfg: ExperimentConfig) -> tuple[DiscreteSurface, bool]:
    """Initial curve or profile, and whether it is exactly the model shrinker."""
    m = cfg.model
    model = make_shrinker(m.kind, m.n, m.N)
    kind = model.surface_kind
    ic = cfg.initial
    if ic.generator == "file":
        try:
            pts = np.loadtxt(ic.path, ndmin=2)
        except OSError as exc:
            raise ConfigError(f"initial.path: {exc}") from None
        if pts.shape[1] != 2:
            raise ConfigError("initial.path: expected two coordinates per line")
        if kind == "curve":
            pts = _resample_curve(pts, m.N)
        elif pts.shape[0] != m.N:
            raise ConfigError(f"initial.path: profile files need exactly model.N = {m.N} points")
        return DiscreteSurface(pts, kind, m.n), False

    R = ic.radius if ic.radius is not None else model.radius
    u = model.grid
    if ic.generator == "random":
        rng = np.random.default_rng(cfg.seed)
        ks = np.arange(2, ic.max_mode + 1)
        a = rng.standard_normal(ks.size)
        b = rng.standard_normal(ks.size) if kind == "curve" else np.zeros(ks.size)
        pert = a @ np.cos(np.outer(ks, u)) + b @ np.sin(np.outer(ks, u))
        peak = np.max(np.abs(pert))
        pert = ic.amplitude * pert / peak if peak > 0 else pert
    else:
        pert = np.zeros_like(u)
        for mode in ic.modes:
            if kind == "profile" and mode.sin != 0.0:
                raise ConfigError("initial.modes: profiles admit cosine modes only")
            pert += mode.cos * np.cos(mode.k * u) + mode.sin * np.sin(mode.k * u)
    exact = not np.any(pert) and R == model.radius
    r = R * (1.0 + pert)
    if np.any(r <= 0):
        raise ConfigError("initial.modes: perturbation makes the radius non-positive")
    return DiscreteSurface(np.column_stack([r * np.cos(u), r * np.sin(u)]), kind, m.n), exact


# ---------------------------------------------------------------- outputs


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating, int, np.integer)) and not isinstance(x, bool) else x for x in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def write_summary(path: Path, summary: dict) -> None:
    path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")


def svg_line_plot(path: Path, series, xlabel: str, ylabel: str, title: str = "") -> None:
    """Minimal native SVG line plot; ``series`` is a list of (x, y, label)."""
    W, H, pad = 640, 420, 60
    xs = np.concatenate([np.asarray(s[0], float) for s in series])
    ys = np.concatenate([np.asarray(s[1], float) for s in series])
    ok = np.isfinite(xs) & np.isfinite(ys)
    if not np.any(ok):
        return
    x0, x1 = float(xs[ok].min()), float(xs[ok].max())
    y0, y1 = float(ys[ok].min()), float(ys[ok].max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (W - 2 * pad)

    def py(y):
        return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" fill="none" stroke="black"/>',
        f'<text x="{W / 2}" y="{pad / 2}" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="15" y="{H / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {H / 2})">{ylabel}</text>',
        f'<text x="{pad}" y="{H - pad + 15}" font-size="10">{x0:.4g}</text>',
        f'<text x="{W - pad}" y="{H - pad + 15}" text-anchor="end" font-size="10">{x1:.4g}</text>',
        f'<text x="{pad - 5}" y="{H - pad}" text-anchor="end" font-size="10">{y0:.4g}</text>',
        f'<text x="{pad - 5}" y="{pad + 10}" text-anchor="end" font-size="10">{y1:.4g}</text>',
    ]
    for i, (x, y, label) in enumerate(series):
        x, y = np.asarray(x, float), np.asarray(y, float)
        keep = np.isfinite(x) & np.isfinite(y)
        x, y = x[keep], y[keep]
        stride = max(1, x.size // 2000)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[::stride], y[::stride]))
        c = colors[i % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{W - pad - 5}" y="{pad + 15 + 14 * i}" text-anchor="end" font-size="11" fill="{c}">{label}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------- experiments


class ExperimentError(RuntimeError):
    pass


@contextlib.contextmanager
def stage(preset: str, name: str):
    log.info("%s: %s", preset, name)
    try:
        yield
    except (FlowError, GeometryError, FitError, ValueError, np.linalg.LinAlgError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ExperimentError(f"{preset} [{name}]: {exc}") from exc


@dataclasses.dataclass
class Outcome:
    ok: bool
    summary: dict
    files: list


def _closed_form_density(n: int) -> float:
    # (4 pi)^(-n/2) |S^n| (2n)^(n/2) e^(-n/2)
    return (4 * math.pi) ** (-n / 2) * geometry.sphere_area(n) * (2 * n) ** (n / 2) * math.exp(-n / 2)


def _density_table(cfg: ExperimentConfig, out: Path) -> Outcome:
    rows, worst = [], 0.0
    for n in cfg.analysis.density_n:
        kind = "circle" if n == 1 else "round-sphere"
        with stage(cfg.preset, f"density n={n}"):
            model = make_shrinker(kind, n, cfg.model.N)
            val = model.density
        ref = _closed_form_density(n)
        rows.append((kind, n, val, ref, abs(val - ref)))
        worst = max(worst, abs(val - ref))
    write_table(out / "densities.csv", ("model", "n", "density", "closed_form", "abs_error"), rows)
    summary = {"max_abs_error": worst, "tolerance": 1e-6, "densities": {f"{r[0]}(n={r[1]})": r[2] for r in rows}}
    return Outcome(worst <= 1e-6, summary, ["densities.csv"])


def _trajectory_outputs(cfg, traj, out: Path, files: list) -> None:
    write_table(out / "trajectory.csv", TRAJECTORY_COLUMNS, traj.rows())
    files.append("trajectory.csv")
    if cfg.analysis.plots and traj.n_records > 1:
        gap = traj.gap
        pos = gap > 0
        svg_line_plot(
            out / "energy_gap.svg",
            [(traj.tau[pos], np.log10(gap[pos]), "log10(E - E_floor)")],
            "tau",
            "log10(E - E_floor)",
            "Energy gap",
        )
        ok = pos & (traj.grad_norm > 0)
        svg_line_plot(
            out / "lojasiewicz.svg",
            [(np.log10(gap[ok]), np.log10(traj.grad_norm[ok]), "log10 ||grad E||")],
            "log10(E - E_floor)",
            "log10 ||grad E||",
            "Gradient norm against energy gap",
        )
        files += ["energy_gap.svg", "lojasiewicz.svg"]


def _physical_outputs(pt, out: Path, files: list) -> None:
    rows = zip(pt.t, pt.enclosed, pt.centroid[:, 0], pt.centroid[:, 1])
    write_table(out / "physical.csv", ("t", "enclosed", "centroid_x", "centroid_y"), rows)
    files.append("physical.csv")


def _physical_stage(cfg: ExperimentConfig, S0: DiscreteSurface):
    s = cfg.solver
    with stage(cfg.preset, "physical flow"):
        pt = flow.run_physical(S0, dt=s.dt, stop_area=s.stop_area, t0=s.t0)
    with stage(cfg.preset, "extinction fit"):
        ext = flow.estimate_extinction(pt, tuple(cfg.analysis.extinction_window), cfg.analysis.max_residual)
    return pt, ext


def _shrinker_pipeline(cfg: ExperimentConfig, out: Path) -> Outcome:
    s, a = cfg.solver, cfg.analysis
    model = make_shrinker(cfg.model.kind, cfg.model.n, cfg.model.N)
    S0, exact = initial_surface(cfg)
    files: list = []
    summary: dict = {"model": {"kind": model.kind, "n": model.n, "N": model.N, "sigma": model.sigma}}
    if exact:
        # the initial datum is the shrinker itself at t = t0, so the graph is v = 0
        v0 = model.zero(0.0 - math.log(-s.t0)) if s.t0 < 0 else model.zero()
        frame = Frame((0.0, 0.0), s.t0, math.sqrt(-s.t0)) if s.t0 < 0 else None
    else:
        pt, ext = _physical_stage(cfg, S0)
        _physical_outputs(pt, out, files)
        summary["extinction"] = {"x0": list(ext.x0), "T": ext.T, "residual": ext.residual, "slope": ext.slope}
        with stage(cfg.preset, "graph conversion"):
            v0 = flow.rescale_to_graph(model, S0, s.t0, ext)
        frame = Frame(ext.x0, s.t0, math.sqrt(ext.T - s.t0))
    with stage(cfg.preset, "rescaled flow"):
        traj = flow.run_rescaled(
            model,
            v0,
            dtau=s.dtau,
            tau_max=v0.tau + s.tau_max,
            conv_tol=s.conv_tol,
            scheme=s.scheme,
            recenter=s.recenter,
            relax=s.relax,
            record_every=s.record_every,
            snapshot_every=s.snapshot_every,
            frame=frame,
        )
    _trajectory_outputs(cfg, traj, out, files)
    dE = np.diff(traj.E)
    summary["run"] = {
        "status": traj.status,
        "steps": traj.steps,
        "tau_final": float(traj.tau[-1]),
        "max_energy_increase": float(dE.max()) if dE.size else 0.0,
        "min_gap": float(traj.gap.min()),
        "refined_extinction": {"x0": list(traj.frame.x0), "T": traj.frame.extinction},
    }
    if traj.status != "converged":
        summary["verdict"] = "not converged"
        return Outcome(False, summary, files)
    if traj.steps <= 1:
        summary["verdict"] = "converged at step 1; margins trivially zero"
        summary["bounds"] = {"min_margin": 0.0}
        return Outcome(True, summary, files)

    with stage(cfg.preset, "limit"):
        limit = analysis.find_limit(traj)
        d_round, R_fit, _ = analysis.distance_to_round(geometry.embed_graph(model, limit))
    summary["limit"] = {
        "distance_end_to_limit": model.norm(traj.final.values - limit.values),
        "limit_norm": model.norm(limit.values),
        "distance_to_round": d_round,
        "fitted_radius": R_fit,
    }
    with stage(cfg.preset, "lojasiewicz fit"):
        fit = analysis.fit_lojasiewicz(traj, tuple(a.gap_window))
    summary["lojasiewicz"] = fit.as_dict()
    with stage(cfg.preset, "drift bounds"):
        bounds = analysis.check_bounds(traj, fit)
    summary["bounds"] = bounds.summary()
    with stage(cfg.preset, "decay rates"):
        decay = analysis.fit_decay(traj, limit, fit, a.gap_window[1])
    summary["decay"] = decay.summary()
    ok = fit.r2 >= 0.9 and fit.holds and bounds.ok and decay.ok and dE.max(initial=0.0) <= 1e-9
    summary["verdict"] = "pass" if ok else "fail"
    return Outcome(ok, summary, files)


def _tangent_uniqueness(cfg: ExperimentConfig, out: Path) -> Outcome:
    a = cfg.analysis
    S0, _ = initial_surface(cfg)
    pt, ext = _physical_stage(cfg, S0)
    files: list = []
    _physical_outputs(pt, out, files)
    model = make_shrinker(cfg.model.kind, cfg.model.n, cfg.model.N)
    with stage(cfg.preset, "blow-up sequences"):
        rep = analysis.tangent_uniqueness_experiment(
            pt, ext, a.lambda_sequences, model=model, tol=a.uniqueness_tol, max_residual=a.max_residual
        )
    with stage(cfg.preset, "mis-centred control"):
        bad = dataclasses.replace(ext, x0=(ext.x0[0] + a.control_offset, ext.x0[1]))
        ctrl = analysis.tangent_uniqueness_experiment(
            pt, bad, a.lambda_sequences, model=model, tol=a.uniqueness_tol, max_residual=a.max_residual
        )
    rows = []
    for label, r in (("centred", rep), ("control", ctrl)):
        for name, seq in r.sequences.items():
            for lam, d, met in zip(seq.lambdas, seq.distances, seq.metrics):
                rows.append((label, name, lam, d, met))
    write_table(out / "blowups.csv", ("run", "sequence", "lambda", "distance", "metric"), rows)
    files.append("blowups.csv")
    ok = rep.verdict == "unique" and ctrl.verdict != "unique"
    summary = {
        "extinction": {"x0": list(ext.x0), "T": ext.T, "residual": ext.residual},
        "centred": rep.summary(),
        "control": ctrl.summary(),
        "verdict": rep.verdict,
        "control_verdict": ctrl.verdict,
    }
    return Outcome(ok, summary, files)


def _observed_orders(errors) -> list:
    e = np.asarray(errors, dtype=float)
    return [float(x) for x in np.log2(e[:-1] / e[1:])]


def _convergence_order(cfg: ExperimentConfig, out: Path) -> Outcome:
    rows, checks = [], {}
    Ns = [64, 128, 256, 512, 1024]
    for kind, n in (("circle", 1), ("round-sphere", 2), ("round-sphere", 3)):
        with stage(cfg.preset, f"residual {kind} n={n}"):
            res = []
            for N in Ns:
                model = make_shrinker(kind, n, N)
                res.append(float(np.max(np.abs(energy.graph_state(model, model.zero()).residual))))
        orders = _observed_orders(res)
        for N, r, p in zip(Ns, res, [""] + orders):
            rows.append(("shrinker_residual", f"{kind}(n={n})", N, r, p))
        checks[f"residual_order_{kind}_n{n}"] = bool(1.7 <= orders[-1] <= 2.3)

    for n in (1, 2):
        kind = "circle" if n == 1 else "round-sphere"
        model = make_shrinker(kind, n, cfg.model.N)
        err = abs(model.density - _closed_form_density(n))
        rows.append(("density_error", f"{kind}(n={n})", cfg.model.N, err, ""))
        checks[f"density_{kind}_n{n}"] = bool(err <= 1e-6)

    # energy identity residual under step refinement on a short perturbed run
    model = make_shrinker("circle", 1, cfg.model.N)
    u = model.grid
    v0 = model.section(0.05 * np.cos(2 * u) + 0.03 * np.sin(3 * u))
    dts = [4e-4, 2e-4, 1e-4]
    with stage(cfg.preset, "identity residual"):
        ident = [
            energy.monotonicity_residual(flow.run_rescaled(model, v0, dtau=d, tau_max=0.25, conv_tol=0.0)).max
            for d in dts
        ]
    orders = _observed_orders(ident)
    for d, r, p in zip(dts, ident, [""] + orders):
        rows.append(("identity_residual", "circle", d, r, p))
    checks["identity_first_order"] = bool(min(orders) >= 0.9)

    # round solutions against the radius ODE dR/dtau = R/2 - 1/R
    model = make_shrinker("circle", 1, cfg.model.N)
    R0 = math.sqrt(2) - 0.05
    tau_end = 0.5
    with stage(cfg.preset, "round-solution ODE"):
        dtau = 0.2 * model.h**2
        traj = flow.run_rescaled(
            model, np.full(model.N, R0 - math.sqrt(2)), dtau=dtau, tau_max=tau_end, conv_tol=0.0,
            scheme="rk4", record_every=1000, snapshot_every=1,
        )
        ode = solve_ivp(lambda t, R: R / 2 - 1 / R, (0, tau_end), [R0], method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
        taus = traj.snapshot_taus()
        dev = max(
            float(np.max(np.abs(traj.snapshots[k] + math.sqrt(2) - ode.sol(taus[k])[0]))) for k in range(len(taus))
        )
    rows.append(("round_ode_deviation", "circle", model.N, dev, ""))
    checks["round_ode"] = bool(dev <= 1e-6)

    # extinction of translated round circles
    worst = 0.0
    with stage(cfg.preset, "round extinction"):
        for R0 in (0.5, 1.0, 2.0):
            M = 256
            th = np.arange(M) * 2 * np.pi / M
            c = np.array([0.3, -0.2])
            S = DiscreteSurface(np.column_stack([R0 * np.cos(th), R0 * np.sin(th)]) + c)
            pt = flow.run_physical(S, dt=1e-3 * R0**2, stop_area=1e-4 * math.pi * R0**2)
            ext = flow.estimate_extinction(pt)
            err = max(abs(ext.T - R0**2 / 2) / (R0**2 / 2), float(np.max(np.abs(np.array(ext.x0) - c))) / R0)
            rows.append(("round_extinction_error", "circle", R0, err, ""))
            worst = max(worst, err)
    checks["round_extinction"] = bool(worst <= 1e-3)

    write_table(out / "orders.csv", ("invariant", "model", "parameter", "value", "observed_order"), rows)
    return Outcome(all(checks.values()), {"checks": checks}, ["orders.csv"])


RUNNERS = {
    "density-table": _density_table,
    "circle-perturb": _shrinker_pipeline,
    "sphere-perturb": _shrinker_pipeline,
    "tangent-uniqueness": _tangent_uniqueness,
    "convergence-order": _convergence_order,
}


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path) -> tuple[int, list]:
    """Execute one preset into ``out_dir``; returns (exit status, written file names)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dump_config(cfg))
    t0 = time.perf_counter()
    try:
        res = RUNNERS[cfg.preset](cfg, out)
    except ExperimentError as exc:
        log.error("%s", exc)
        write_summary(out / "summary.json", {"preset": cfg.preset, "error": str(exc), "ok": False})
        return EXIT_RUNTIME, ["config.toml", "summary.json"]
    summary = {"preset": cfg.preset, "seed": cfg.seed, "ok": res.ok, **res.summary}
    write_summary(out / "summary.json", summary)
    log.info("%s finished in %.1f s (%s)", cfg.preset, time.perf_counter() - t0, "ok" if res.ok else "verdict failed")
    return (EXIT_OK if res.ok else EXIT_RUNTIME), ["config.toml", *res.files, "summary.json"]


def _run_one(path: str, out_root: str | None, seed: int | None) -> int:
    try:
        cfg = load_config(path)
        if seed is not None:
            cfg = cfg.model_copy(update={"seed": seed})
    except ConfigError as exc:
        print(f"config error in {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    root = Path(out_root or cfg.out or "runs")
    status, files = run_experiment(cfg, root / Path(path).stem)
    print(f"{path}: exit {status}; wrote {', '.join(files)} to {root / Path(path).stem}")
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="shrinker-lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run experiments described by config files")
    p_run.add_argument("configs", nargs="+", metavar="CONFIG")
    p_run.add_argument("--out", help="output root (one sub-directory per config)")
    p_run.add_argument("--jobs", type=int, default=1, help="run this many configs concurrently")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_pre = sub.add_parser("presets", help="list built-in presets")
    p_pre.add_argument("--show", metavar="NAME", help="print the full default config of a preset")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "presets":
        if args.show:
            if args.show not in PRESETS:
                print(f"unknown preset {args.show!r}", file=sys.stderr)
                return EXIT_CONFIG
            print(dump_config(parse_config({"preset": args.show})), end="")
            return EXIT_OK
        for name, (desc, _) in PRESETS.items():
            print(f"{name:20s} {desc}")
        return EXIT_OK

    if args.jobs < 1:
        print("--jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs == 1 or len(args.configs) == 1:
        codes = [_run_one(p, args.out, args.seed) for p in args.configs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_run_one, args.configs, [args.out] * len(args.configs), [args.seed] * len(args.configs)))
    if EXIT_CONFIG in codes:
        return EXIT_CONFIG
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
