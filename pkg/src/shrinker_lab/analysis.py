"""Fits and checks of convergence rates on computed trajectories.

The Lojasiewicz exponent is read off the gradient-norm versus energy-gap
relation, the drift and decay bounds it implies are tested sample by sample,
and the tangent-flow experiment compares parabolic blow-ups of a physical
flow along several scale sequences.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize
from scipy.spatial import cKDTree

from .geometry import DiscreteSurface, NormalSection, ShrinkerModel, _extend, make_shrinker
from .flow import (
    ExtinctionEstimate,
    FlowError,
    NotGraphicalError,
    PhysicalTrajectory,
    graph_from_surface,
    parabolic_rescale,
    rescaled_rhs,
)

__all__ = [
    "FitError",
    "Diagnostics",
    "LojasiewiczFit",
    "BoundsReport",
    "DecayReport",
    "SequenceResult",
    "UniquenessReport",
    "alpha_from_theta",
    "fit_lojasiewicz",
    "check_bounds",
    "find_limit",
    "distance_to_round",
    "fit_decay",
    "shape_distance",
    "tangent_uniqueness_experiment",
]

#: theta at or above this value is treated as the exponential (integrable) regime
EXPONENTIAL_THETA = 0.49
#: exponent used to test power-law decay when the fit is exponential
REFERENCE_THETA = 0.45
GAP_WINDOW = (1e-10, 1e-3)


class FitError(ValueError):
    """A fit or experiment could not be carried out on the given data."""


@dataclass
class Diagnostics:
    """Minimal per-record data accepted by the fits (synthetic or loaded runs)."""

    tau: np.ndarray
    E: np.ndarray
    grad_norm: np.ndarray
    vdot_norm: np.ndarray
    E_floor: float = 0.0
    record_every: int = 1

    def __post_init__(self):
        for name in ("tau", "E", "grad_norm", "vdot_norm"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def gap(self) -> np.ndarray:
        return self.E - self.E_floor


def alpha_from_theta(theta: float) -> float:
    """alpha = 2 theta / (1 - 2 theta); infinite in the exponential regime."""
    if theta >= EXPONENTIAL_THETA:
        return math.inf
    return 2.0 * theta / (1.0 - 2.0 * theta)


@dataclass(frozen=True)
class LojasiewiczFit:
    theta: float
    gamma: float
    alpha: float
    window: tuple
    r2: float
    slope: float
    intercept: float
    C_L: float
    gamma_chain: float
    n_records: int
    holds: bool

    @property
    def exponential(self) -> bool:
        return math.isinf(self.alpha)

    @property
    def alpha_label(self) -> str:
        return "inf (exponential)" if self.exponential else f"{self.alpha:.6g}"

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["alpha"] = self.alpha_label
        d["window"] = list(self.window)
        return d


def _window_indices(gap: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Contiguous block of records from the first entry into [lo, hi] to the last one."""
    inside = np.flatnonzero((gap >= lo) & (gap <= hi))
    if inside.size == 0:
        return inside
    return np.arange(inside[0], inside[-1] + 1)


def _chain_constant(traj, idx: np.ndarray) -> float:
    """min over the window of (-dE/dtau) / (||grad E|| ||dv/dtau||), forward differences."""
    idx = idx[idx + 1 < traj.tau.size]
    dE = -(traj.E[idx + 1] - traj.E[idx]) / (traj.tau[idx + 1] - traj.tau[idx])
    denom = traj.grad_norm[idx] * traj.vdot_norm[idx]
    ok = denom > 0
    if not np.any(ok):
        raise FitError("no motion in the fit window")
    return float(np.min(dE[ok] / denom[ok]))


def fit_lojasiewicz(traj, gap_window: tuple = GAP_WINDOW, min_steps: int = 50) -> LojasiewiczFit:
    """Regress log ||grad E|| on log(E - E_floor) over the convergent tail.

    The slope s gives theta = 1 - s.  The constant C_L is the largest one with
    ||grad E|| >= C_L (E - E_floor)^(1 - theta) on every record of the window,
    and gamma = C_L * gamma_chain where gamma_chain is the observed constant in
    -dE/dtau >= gamma_chain ||grad E|| ||dv/dtau||.
    """
    gap = np.asarray(traj.E, dtype=float) - traj.E_floor
    idx = _window_indices(gap, *gap_window)
    idx = idx[(gap[idx] > 0) & (traj.grad_norm[idx] > 0)]
    steps = idx.size * getattr(traj, "record_every", 1)
    if idx.size < 3 or steps < min_steps:
        raise FitError(
            f"fit window E - E_floor in [{gap_window[0]:g}, {gap_window[1]:g}] holds "
            f"{idx.size} records ({steps} steps); need {min_steps} steps"
        )
    x = np.log(gap[idx])
    y = np.log(traj.grad_norm[idx])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    theta = float(1.0 - slope)
    if not 0.0 < theta < 1.0:
        raise FitError(f"fitted exponent theta = {theta:.4g} lies outside (0, 1)")
    ratio = traj.grad_norm[idx] / gap[idx] ** (1.0 - theta)
    C_L = float(np.min(ratio))
    holds = bool(C_L > 0 and np.all(traj.grad_norm[idx] >= C_L * gap[idx] ** (1.0 - theta) * (1 - 1e-12)))
    gamma_chain = _chain_constant(traj, idx)
    return LojasiewiczFit(
        theta=theta,
        gamma=C_L * gamma_chain,
        alpha=alpha_from_theta(theta),
        window=(float(traj.tau[idx[0]]), float(traj.tau[idx[-1]])),
        r2=r2,
        slope=float(slope),
        intercept=float(intercept),
        C_L=C_L,
        gamma_chain=gamma_chain,
        n_records=int(idx.size),
        holds=holds,
    )


@dataclass
class BoundsReport:
    tau: np.ndarray
    drift: np.ndarray
    bound: np.ndarray
    margin: np.ndarray
    gamma: float
    gamma_max: float
    theta: float
    sup_distance: np.ndarray | None = None
    sup_margin: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        good = bool(np.all(self.margin >= 0))
        if self.sup_margin is not None and self.sup_margin.size:
            good = good and bool(np.all(self.sup_margin >= 0))
        return good

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margin)) if self.margin.size else 0.0

    def summary(self) -> dict:
        out = {
            "gamma": self.gamma,
            "gamma_max": self.gamma_max,
            "theta": self.theta,
            "min_margin": self.min_margin,
            "samples": int(self.margin.size),
            "ok": self.ok,
        }
        if self.sup_margin is not None and self.sup_margin.size:
            out["min_sup_margin"] = float(np.min(self.sup_margin))
        return out


def _remaining_path(traj) -> np.ndarray:
    """int_{tau_i}^{tau_end} ||dv/dtau|| dtau for every record i."""
    dt = np.diff(traj.tau)
    seg = traj.vdot_norm[:-1] * dt
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return tail


def check_bounds(traj, fit: LojasiewiczFit) -> BoundsReport:
    """Test the drift bound int_{tau_1}^inf ||dv/dtau|| <= (E(tau_1) - E_floor)^theta / (gamma theta).

    Every record of the fit window is a start point tau_1.  The margin is
    bound - drift; ``gamma_max`` is the largest constant for which all margins
    are non-negative.  With snapshots available the sup-distance
    sup_{tau >= tau_1} ||v(tau) - v(tau_1)|| is checked against the same bound.
    """
    tau = np.asarray(traj.tau, dtype=float)
    gap = np.asarray(traj.E, dtype=float) - traj.E_floor
    idx = np.flatnonzero((tau >= fit.window[0]) & (tau <= fit.window[1]))
    drift_all = _remaining_path(traj)
    theta, gamma = fit.theta, fit.gamma
    g = np.clip(gap[idx], 0.0, None) ** theta
    bound = g / (gamma * theta) if gamma > 0 else np.full(idx.size, np.inf)
    drift = drift_all[idx]
    margin = bound - drift
    with np.errstate(divide="ignore"):
        cand = np.where(drift > 0, g / (theta * np.where(drift > 0, drift, 1.0)), np.inf)
    gamma_max = float(np.min(cand)) if cand.size else math.inf

    sup_d = sup_m = None
    snaps = getattr(traj, "snapshots", None)
    if snaps is not None and len(snaps) > 1:
        model = traj.model
        s_idx = np.asarray(traj.snapshot_index)
        sel = np.flatnonzero((tau[s_idx] >= fit.window[0]) & (tau[s_idx] <= fit.window[1]))
        sup_d = np.empty(sel.size)
        w = model.weights
        for j, k in enumerate(sel):
            diff = snaps[k:] - snaps[k]
            sup_d[j] = math.sqrt(float(np.max(diff**2 @ w)))
        gs = np.clip(gap[s_idx[sel]], 0.0, None) ** theta
        sup_m = gs / (gamma * theta) - sup_d
    return BoundsReport(tau[idx], drift, bound, margin, gamma, gamma_max, theta, sup_d, sup_m)


def find_limit(traj, tol: float = 1e-12) -> NormalSection:
    """Stationary graph closest to the end of a converged run (Newton polish)."""
    if getattr(traj, "status", None) != "converged":
        raise FitError("the run did not converge; no limit section")
    model = traj.model
    v_end = traj.final

    def f(vals):
        return rescaled_rhs(model, vals).values

    def jac(vals, eps=1e-7):
        # fixed absolute step: near the limit |v| is far below the default relative step
        f0 = f(vals)
        J = np.empty((vals.size, vals.size))
        for j in range(vals.size):
            e = vals.copy()
            e[j] += eps
            J[:, j] = (f(e) - f0) / eps
        return J

    sol = optimize.root(f, v_end.values, jac=jac, method="hybr", tol=tol)
    vals = sol.x
    if not sol.success and model.norm(f(vals)) > 1e3 * tol:
        raise FitError(f"limit polish failed: {sol.message}")
    return NormalSection(vals, float(v_end.tau), model)


def distance_to_round(S: DiscreteSurface) -> tuple[float, float, np.ndarray]:
    """L2 distance of ``S`` to its best-fitting round circle or sphere.

    Returns (distance, radius, centre).  Profiles are fitted with a centre on
    the symmetry axis.
    """
    P = S.points
    if S.kind == "curve":
        A = np.column_stack([2 * P[:, 0], 2 * P[:, 1], np.ones(len(P))])
        b = np.sum(P**2, axis=1)
        cx, cy, c = np.linalg.lstsq(A, b, rcond=None)[0]
        centre = np.array([cx, cy])
    else:
        A = np.column_stack([2 * P[:, 0], np.ones(len(P))])
        b = np.sum(P**2, axis=1)
        cz, c = np.linalg.lstsq(A, b, rcond=None)[0]
        centre = np.array([cz, 0.0])
    R = math.sqrt(c + centre @ centre)
    dev = np.hypot(*(P - centre).T) - R
    return math.sqrt(S.integrate(dev**2)), R, centre


@dataclass
class DecayReport:
    """Power-law decay checks of the energy gap and the distance to the limit."""

    theta: float
    alpha: float
    exponent_gap: float
    exponent_dist: float
    tau: np.ndarray
    gap: np.ndarray
    snap_tau: np.ndarray
    dist: np.ndarray
    C_gap: float
    C_dist: float
    margin_gap: np.ndarray
    margin_dist: np.ndarray
    split: float
    # the same statements in the physical variable log(-1/(t - T))
    c0: float = math.nan
    C_gap_log: float = math.nan
    margin_gap_log: np.ndarray = field(default_factory=lambda: np.zeros(0))
    margin_dist_log: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reference_theta: bool = False

    @property
    def ok(self) -> bool:
        parts = [self.margin_gap, self.margin_dist, self.margin_gap_log, self.margin_dist_log]
        return all(bool(np.all(m > 0)) for m in parts) and self.margin_gap.size > 0 and self.margin_dist.size > 0

    def summary(self) -> dict:
        def mn(a):
            return float(np.min(a)) if np.size(a) else None

        return {
            "theta": self.theta,
            "alpha": "inf (exponential)" if math.isinf(self.alpha) else self.alpha,
            "reference_theta": self.reference_theta,
            "exponent_gap": self.exponent_gap,
            "exponent_dist": self.exponent_dist,
            "C_gap": self.C_gap,
            "C_dist": self.C_dist,
            "c0": self.c0,
            "alpha0": self.exponent_dist,
            "split_tau": self.split,
            "min_margin_gap": mn(self.margin_gap),
            "min_margin_dist": mn(self.margin_dist),
            "min_margin_gap_log": mn(self.margin_gap_log),
            "min_margin_dist_log": mn(self.margin_dist_log),
            "ok": self.ok,
        }


def _calibrate(x: np.ndarray, y: np.ndarray, p: float, split: float):
    """C = max y x^p on x < split; margins C x^-p - y on x >= split."""
    cal = x < split
    ver = ~cal
    if not np.any(cal) or not np.any(ver):
        raise FitError("decay tail too short to calibrate and verify")
    C = float(np.max(y[cal] * x[cal] ** p))
    return C, C * x[ver] ** (-p) - y[ver]


def fit_decay(traj, limit: NormalSection, fit: LojasiewiczFit | None = None, gap_max: float = GAP_WINDOW[1]) -> DecayReport:
    """Check E - E_floor <= C tau^-(1+alpha) and ||v - v'|| <= C' tau^-theta(1+alpha).

    The constants are calibrated on the first half of the tail (E - E_floor <=
    ``gap_max``, tau > 0) and the bounds verified with positive margin on the
    second half.  In the exponential regime the exponents come from
    ``REFERENCE_THETA``, since exponential decay beats every power.  The same
    check is repeated in the physical variable log(-1/(t - T)).
    """
    if getattr(traj, "status", None) != "converged":
        raise FitError("decay rates need a converged run")
    if fit is None:
        fit = fit_lojasiewicz(traj)
    theta = REFERENCE_THETA if fit.exponential else fit.theta
    alpha = alpha_from_theta(theta)
    p_gap, p_dist = 1.0 + alpha, theta * (1.0 + alpha)

    tau = np.asarray(traj.tau, dtype=float)
    gap = np.asarray(traj.E, dtype=float) - traj.E_floor
    below = np.flatnonzero(gap <= gap_max)
    if below.size == 0:
        raise FitError("the run never enters the convergent tail")
    start = below[0]
    tail = np.arange(start, tau.size)
    tail = tail[tau[tail] > 0]
    if tail.size < 4:
        raise FitError("decay tail has fewer than 4 records with tau > 0")
    split = 0.5 * (tau[tail[0]] + tau[tail[-1]])
    gap_t = np.clip(gap[tail], 0.0, None)
    C_gap, m_gap = _calibrate(tau[tail], gap_t, p_gap, split)

    s_idx = np.asarray(traj.snapshot_index)
    s_sel = s_idx[(s_idx >= tail[0])]
    w = traj.model.weights
    snaps = np.asarray(traj.snapshots)[np.searchsorted(s_idx, s_sel)]
    dist = np.sqrt(((snaps - limit.values) ** 2) @ w)
    C_dist, m_dist = _calibrate(tau[s_sel], dist, p_dist, split)

    rep = DecayReport(
        theta=theta,
        alpha=alpha,
        exponent_gap=p_gap,
        exponent_dist=p_dist,
        tau=tau[tail],
        gap=gap_t,
        snap_tau=tau[s_sel],
        dist=dist,
        C_gap=C_gap,
        C_dist=C_dist,
        margin_gap=m_gap,
        margin_dist=m_dist,
        split=split,
        reference_theta=fit.exponential,
    )

    t_phys = np.asarray(getattr(traj, "t_phys", np.zeros(0)))
    if t_phys.size == tau.size:
        T = traj.frame.extinction
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.log(-1.0 / (t_phys - T))
        ok_t = np.isfinite(s[tail]) & (s[tail] > 0)
        ok_s = np.isfinite(s[s_sel]) & (s[s_sel] > 0)
        split_s = 0.5 * (s[tail][ok_t][0] + s[tail][ok_t][-1])
        rep.C_gap_log, rep.margin_gap_log = _calibrate(s[tail][ok_t], gap_t[ok_t], p_gap, split_s)
        rep.c0, rep.margin_dist_log = _calibrate(s[s_sel][ok_s], dist[ok_s], p_dist, split_s)
    return rep


def _reference_points(model: ShrinkerModel, factor: int = 8) -> np.ndarray:
    M = model.N * (1 if model.kind == "circle" else 2) * factor
    u = np.arange(M) * 2 * np.pi / M
    return model.radius * np.column_stack([np.cos(u), np.sin(u)])


def shape_distance(model: ShrinkerModel, S: DiscreteSurface) -> tuple[float, str]:
    """Distance of ``S`` to the model shrinker.

    L2 norm of the radial graph height when ``S`` is a radial graph over the
    model, otherwise the symmetric Hausdorff distance of the point sets.
    """
    try:
        v = graph_from_surface(model, S)
        return model.norm(v.values), "L2"
    except NotGraphicalError:
        a = _extend(S.points, S.kind)
        b = _reference_points(model)
        d1 = cKDTree(b).query(a)[0].max()
        d2 = cKDTree(a).query(b)[0].max()
        return float(max(d1, d2)), "hausdorff"


@dataclass
class SequenceResult:
    lambdas: list
    distances: list
    metrics: list

    @property
    def decreasing(self) -> bool:
        d = np.asarray(self.distances)
        return bool(np.all(np.diff(d) < 0))

    def converged(self, tol: float) -> bool:
        return self.decreasing and self.distances[-1] <= tol


@dataclass
class UniquenessReport:
    sequences: dict
    verdict: str
    tol: float
    center: tuple
    T: float
    decay_c: float = math.nan
    decay_exponent: float = math.nan

    def summary(self) -> dict:
        return {
            "verdict": self.verdict,
            "tol": self.tol,
            "center": list(self.center),
            "T": self.T,
            "decay_c": self.decay_c,
            "decay_exponent": self.decay_exponent,
            "sequences": {
                k: {"lambda": r.lambdas, "distance": r.distances, "metric": r.metrics, "decreasing": r.decreasing}
                for k, r in self.sequences.items()
            },
        }


def tangent_uniqueness_experiment(
    ptraj: PhysicalTrajectory,
    ext: ExtinctionEstimate,
    sequences: Mapping[str, Sequence[float]] | Sequence[Sequence[float]],
    *,
    model: ShrinkerModel | None = None,
    tol: float = 1e-3,
    max_residual: float = 1e-3,
) -> UniquenessReport:
    """Blow up the flow about (x0, T) along each scale sequence.

    For every lambda the slice at t = T - 1/lambda^2 is mapped by
    x -> lambda (x - x0), which puts it at time -1, and compared with the
    model shrinker.  The verdict is "unique" when every sequence decreases
    to below ``tol``.
    """
    if ext.residual > max_residual:
        raise FitError(f"extinction fit residual {ext.residual:.3g} exceeds {max_residual:.3g}; experiment refused")
    if not isinstance(sequences, Mapping):
        sequences = {f"seq{i}": list(s) for i, s in enumerate(sequences)}
    if len(sequences) < 2:
        raise FitError("need at least two scale sequences")
    if model is None:
        kind = "circle" if ptraj.kind == "curve" else "round-sphere"
        model = make_shrinker(kind, ptraj.n, ptraj.points.shape[1])
    results = {}
    for name, lams in sequences.items():
        dists, metrics = [], []
        for lam in lams:
            t = ext.T - 1.0 / lam**2
            try:
                S = ptraj.slice_at(t)
            except ValueError as exc:
                raise FlowError(f"lambda = {lam:g}: {exc}") from exc
            Sr, _ = parabolic_rescale(S, t, lam, (ext.x0, ext.T))
            d, kind = shape_distance(model, Sr)
            dists.append(d)
            metrics.append(kind)
        results[name] = SequenceResult([float(x) for x in lams], dists, metrics)
    unique = all(r.converged(tol) for r in results.values())
    rep = UniquenessReport(results, "unique" if unique else "not unique / bad center", tol, tuple(ext.x0), ext.T)

    # distance ~ c (log(-1/(t - T)))^-exponent with log(-1/(t - T)) = 2 log lambda
    lam = np.concatenate([r.lambdas for r in results.values()])
    d = np.concatenate([r.distances for r in results.values()])
    good = (lam > 1) & (d > 0)
    if np.count_nonzero(good) >= 2:
        slope, icpt = np.polyfit(np.log(2 * np.log(lam[good])), np.log(d[good]), 1)
        rep.decay_c, rep.decay_exponent = float(math.exp(icpt)), float(-slope)
    return rep
