"""Rescaled graph flow, physical mean curvature flow, extinction fits and rescaling.

The rescaled flow is integrated for the graph height ``v`` over a model
shrinker.  Its velocity is ``<H + x_perp/2, nu_M> / <nu_Sigma, nu_M>`` minus the
same expression on the model itself, so the discrete model is an exact fixed
point.  With ``recenter=True`` the run continuously adjusts the space-time
centre of the rescaling: a dilation and a translation of the frame are added to
the velocity with rates chosen so the unstable modes of the model (constants
and, on the circle, the first harmonics) relax to zero.  This is the same
flow seen from a corrected extinction point, not a different equation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .energy import GraphState, graph_state
from .geometry import (
    DiscreteSurface,
    GeometryError,
    GraphOverflowError,
    NormalSection,
    ShrinkerModel,
    _extend,
    _spectral_diff,
    check_graph_bound,
)

__all__ = [
    "FlowError",
    "TiltError",
    "NotGraphicalError",
    "SelfIntersectionError",
    "Frame",
    "Trajectory",
    "PhysicalTrajectory",
    "ExtinctionEstimate",
    "rescaled_rhs",
    "run_rescaled",
    "run_physical",
    "estimate_extinction",
    "parabolic_rescale",
    "graph_from_surface",
    "rescale_to_graph",
    "project_unstable",
    "unstable_modes",
    "round_circle_exit_time",
]

log = logging.getLogger(__name__)

MIN_TILT = 0.1


class FlowError(RuntimeError):
    pass


class TiltError(FlowError):
    def __init__(self, node: int, tilt: float):
        self.node = node
        self.tilt = tilt
        super().__init__(f"excessive tilt at node {node}: <nu_Sigma, nu_M> = {tilt:.4g} <= {MIN_TILT}")


class NotGraphicalError(FlowError):
    pass


class SelfIntersectionError(FlowError):
    pass


def _velocity(st: GraphState) -> np.ndarray:
    tilt = st.tilt
    j = int(np.argmin(tilt))
    if tilt[j] <= MIN_TILT:
        raise TiltError(j, float(tilt[j]))
    return st.balanced / tilt


def rescaled_rhs(model: ShrinkerModel, v) -> NormalSection:
    """Graph velocity dv/dtau of the rescaled flow."""
    st = graph_state(model, v)
    tau = v.tau if isinstance(v, NormalSection) else 0.0
    return NormalSection(_velocity(st), tau, model)


def unstable_modes(model: ShrinkerModel) -> np.ndarray:
    """Test functions spanning the unstable directions of the round model."""
    u = model.grid
    if model.kind == "circle":
        return np.stack([np.ones_like(u), np.cos(u), np.sin(u)])
    return np.stack([np.ones_like(u), np.cos(u)])


def _mode_gram(model: ShrinkerModel, modes: np.ndarray, fields: np.ndarray) -> np.ndarray:
    return (modes * model.weights) @ fields.T


def project_unstable(model: ShrinkerModel, v) -> NormalSection:
    """Remove the dilation (and translation) components of ``v`` in L2(Sigma)."""
    vals = v.values if isinstance(v, NormalSection) else np.asarray(v, dtype=float)
    P = unstable_modes(model)
    G = _mode_gram(model, P, P)
    c = np.linalg.solve(G, (P * model.weights) @ vals)
    tau = v.tau if isinstance(v, NormalSection) else 0.0
    return NormalSection(vals - c @ P, tau, model)


def _generators(st: GraphState) -> np.ndarray:
    """Graph velocities of a unit frame dilation and unit frame translations."""
    S = st.surface
    nu = S.normals
    tilt = st.tilt
    gens = [np.sum(S.points * nu, axis=1) / tilt]
    if st.model.kind == "circle":
        gens += [nu[:, 0] / tilt, nu[:, 1] / tilt]
    else:
        gens += [nu[:, 0] / tilt]
    return np.stack(gens)


def _fd2_symbol(M: int) -> np.ndarray:
    h = 2.0 * np.pi / M
    k = np.fft.fftfreq(M, 1.0 / M)
    return 4.0 * np.sin(0.5 * k * h) ** 2 / (h * h)


def _even_extend(model: ShrinkerModel, f: np.ndarray) -> np.ndarray:
    return f if model.kind == "circle" else np.concatenate([f, f[::-1]])


@dataclass(frozen=True)
class Frame:
    """Space-time frame of a rescaled run: physical ``x = x0 + scale * x_tilde`` at time ``t``."""

    x0: tuple = (0.0, 0.0)
    t: float = -1.0
    scale: float = 1.0

    @property
    def extinction(self) -> float:
        # remaining lifetime of the model shrinker seen in this frame
        return self.t + self.scale**2


@dataclass
class Trajectory:
    """Per-record diagnostics of a rescaled run (records every ``record_every`` steps)."""

    model: ShrinkerModel
    dtau: float
    record_every: int
    tau: np.ndarray
    E: np.ndarray
    grad_norm: np.ndarray
    dissipation: np.ndarray
    vdot_norm: np.ndarray
    rhs_norm: np.ndarray
    vmax: np.ndarray
    modulation: np.ndarray
    snapshot_index: np.ndarray
    snapshots: np.ndarray
    status: str
    E_floor: float
    frame: Frame
    recenter: bool = False
    overflow_tau: float | None = None
    steps: int = 0
    t_phys: np.ndarray = field(default_factory=lambda: np.zeros(0))
    log_scale: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_records(self) -> int:
        return int(self.tau.size)

    @property
    def gap(self) -> np.ndarray:
        return self.E - self.E_floor

    @property
    def final(self) -> NormalSection:
        return NormalSection(self.snapshots[-1], float(self.tau[self.snapshot_index[-1]]), self.model)

    def section(self, k: int) -> NormalSection:
        """k-th stored snapshot."""
        return NormalSection(self.snapshots[k], float(self.tau[self.snapshot_index[k]]), self.model)

    def snapshot_taus(self) -> np.ndarray:
        return self.tau[self.snapshot_index]

    def rows(self):
        """Diagnostic rows in the table column order."""
        for i in range(self.n_records):
            yield (
                self.tau[i],
                self.E[i],
                self.E[i] - self.E_floor,
                self.grad_norm[i],
                self.dissipation[i],
                self.vdot_norm[i],
                self.vmax[i],
            )


def _implicit_filter(model: ShrinkerModel, dtau: float, a_star: float) -> np.ndarray:
    M = model.N if model.kind == "circle" else 2 * model.N
    h = model.h
    k = np.fft.fftfreq(M, 1.0 / M)
    lam = 4.0 * np.sin(0.5 * k * h) ** 2 / (h * h)
    return 1.0 / (1.0 + dtau * a_star * lam)


def _apply_filter(model: ShrinkerModel, f: np.ndarray, filt: np.ndarray) -> np.ndarray:
    fe = _even_extend(model, f)
    out = np.real(np.fft.ifft(np.fft.fft(fe) * filt))
    return out[: model.N]


def run_rescaled(
    model: ShrinkerModel,
    v0,
    dtau: float = 1e-4,
    tau_max: float = 30.0,
    conv_tol: float = 1e-8,
    *,
    scheme: str = "semi-implicit",
    recenter: bool = False,
    relax: float = 4.0,
    record_every: int = 1,
    snapshot_every: int | None = None,
    frame: Frame | None = None,
    max_steps: int | None = None,
) -> Trajectory:
    """Integrate the rescaled graph flow from ``v0``.

    Stops when ||dv/dtau||_{L2} < conv_tol (``converged``), at ``tau_max``
    (``step-limit``) or when the graph leaves the tube (``graph-overflow``).
    ``frame`` maps the rescaled picture back to physical space-time and is
    updated when ``recenter`` is on.
    """
    if scheme not in ("semi-implicit", "rk4"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if dtau <= 0:
        raise ValueError("dtau must be positive")
    if scheme == "rk4" and dtau > 0.2 * model.h**2:
        raise ValueError(f"rk4 needs dtau <= 0.2 h^2 = {0.2 * model.h ** 2:.3g}")
    record_every = max(1, int(record_every))
    tau0 = v0.tau if isinstance(v0, NormalSection) else 0.0
    v = check_graph_bound(model, v0).copy()
    if frame is None:
        frame = Frame((0.0, 0.0), -math.exp(-tau0), math.exp(-tau0 / 2))
    x0 = np.array(frame.x0, dtype=float)
    t_phys = frame.t
    log_scale = math.log(frame.scale)

    modes = unstable_modes(model)
    n_mod = modes.shape[0]

    rec = {k: [] for k in ("tau", "E", "g", "D", "path", "rhs", "vmax", "mod", "t", "ls")}
    snaps, snap_idx = [], []
    status = "running"
    overflow_tau = None
    path_acc = 0.0
    step = 0
    n_steps_max = int(math.ceil((tau_max - tau0) / dtau - 1e-9))
    if max_steps is not None:
        n_steps_max = min(n_steps_max, int(max_steps))

    def modulation(st: GraphState, vel: np.ndarray) -> np.ndarray:
        gens = _generators(st)
        A = _mode_gram(model, modes, gens)
        b = (modes * model.weights) @ vel + relax * ((modes * model.weights) @ st.v)
        return np.linalg.solve(A, b)

    def full_velocity(vals):
        st = graph_state(model, vals)
        vel = _velocity(st)
        if recenter:
            c = modulation(st, vel)
            return st, vel, vel - c @ _generators(st), c
        return st, vel, vel, np.zeros(n_mod)

    tau = tau0
    while True:
        try:
            st, rhs, vel, c = full_velocity(v)
        except GraphOverflowError:
            status = "graph-overflow"
            break
        rhs_norm = model.norm(rhs)
        is_record = step % record_every == 0
        done = model.norm(vel) < conv_tol
        if is_record or done:
            if rec["tau"]:
                rec["path"][-1] = path_acc / max(tau - rec["tau"][-1], 1e-300)
            path_acc = 0.0
            rec["tau"].append(tau)
            rec["E"].append(st.energy)
            rec["g"].append(st.grad_norm)
            rec["D"].append(st.dissipation)
            rec["path"].append(model.norm(vel))
            rec["rhs"].append(rhs_norm)
            rec["vmax"].append(float(np.max(np.abs(v))))
            rec["mod"].append(c.copy())
            rec["t"].append(t_phys)
            rec["ls"].append(log_scale)
            if snapshot_every is None or (len(rec["tau"]) - 1) % snapshot_every == 0:
                snaps.append(v.copy())
                snap_idx.append(len(rec["tau"]) - 1)
        if done:
            status = "converged"
            break
        if step >= n_steps_max:
            status = "step-limit"
            break

        if scheme == "semi-implicit":
            a_star = float(np.max(1.0 / st.surface.speed**2))
            filt = _implicit_filter(model, dtau, a_star)
            dv = dtau * _apply_filter(model, vel, filt)
        else:
            def f(vals):
                return full_velocity(vals)[2]
            try:
                k1 = vel
                k2 = f(v + 0.5 * dtau * k1)
                k3 = f(v + 0.5 * dtau * k2)
                k4 = f(v + dtau * k3)
            except GraphOverflowError:
                status = "graph-overflow"
                overflow_tau = tau
                break
            dv = dtau * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0

        v_new = v + dv
        if np.max(np.abs(v_new)) >= model.sigma:
            # linear interpolation of the exit time inside the step
            m_old = float(np.max(np.abs(v)))
            m_new = float(np.max(np.abs(v_new)))
            frac = (model.sigma - m_old) / max(m_new - m_old, 1e-300)
            overflow_tau = tau + min(max(frac, 0.0), 1.0) * dtau
            status = "graph-overflow"
            break
        # frame update: d log(scale)/dtau = -1/2 + mu, dt/dtau = scale^2, dx0/dtau = scale * b
        scale = math.exp(log_scale)
        t_phys += dtau * scale**2
        if recenter:
            if model.kind == "circle":
                x0 += dtau * scale * c[1:3]
            else:
                x0[0] += dtau * scale * c[1]
            log_scale += dtau * (-0.5 + c[0])
        else:
            log_scale += -0.5 * dtau
        path_acc += model.norm(dv)
        v = v_new
        step += 1
        tau = tau0 + step * dtau

    if rec["tau"] and (not snap_idx or snap_idx[-1] != len(rec["tau"]) - 1):
        snaps.append(v.copy())
        snap_idx.append(len(rec["tau"]) - 1)

    return Trajectory(
        model=model,
        dtau=dtau * record_every,
        record_every=record_every,
        tau=np.array(rec["tau"]),
        E=np.array(rec["E"]),
        grad_norm=np.array(rec["g"]),
        dissipation=np.array(rec["D"]),
        vdot_norm=np.array(rec["path"]),
        rhs_norm=np.array(rec["rhs"]),
        vmax=np.array(rec["vmax"]),
        modulation=np.array(rec["mod"]).reshape(len(rec["tau"]), n_mod),
        snapshot_index=np.array(snap_idx, dtype=int),
        snapshots=np.array(snaps),
        status=status,
        E_floor=model.density,
        frame=Frame(tuple(float(c) for c in x0), t_phys, math.exp(log_scale)),
        t_phys=np.array(rec["t"]),
        log_scale=np.array(rec["ls"]),
        recenter=recenter,
        overflow_tau=overflow_tau,
        steps=step,
    )


def round_circle_exit_time(R0: float, sigma: float, n: int = 1) -> float:
    """Exit time from |R - sqrt(2n)| < sigma for dR/dtau = R/2 - n/R, in closed form."""
    Rs2 = 2.0 * n
    R_exit = math.sqrt(Rs2) + math.copysign(sigma, R0 - math.sqrt(Rs2))
    return math.log((R_exit**2 - Rs2) / (R0**2 - Rs2))


# ---------------------------------------------------------------- physical flow


@dataclass
class PhysicalTrajectory:
    kind: str
    n: int
    t: np.ndarray
    points: np.ndarray
    enclosed: np.ndarray
    centroid: np.ndarray
    status: str = "running"

    def surface(self, i: int) -> DiscreteSurface:
        return DiscreteSurface(self.points[i], self.kind, self.n)

    def slice_at(self, t: float) -> DiscreteSurface:
        """Linear interpolation between the two recorded times bracketing ``t``."""
        if not self.t[0] <= t <= self.t[-1]:
            raise ValueError(f"time {t} outside the recorded range [{self.t[0]}, {self.t[-1]}]")
        i = int(np.searchsorted(self.t, t, side="right")) - 1
        i = min(max(i, 0), self.t.size - 2)
        s = (t - self.t[i]) / (self.t[i + 1] - self.t[i])
        pts = (1.0 - s) * self.points[i] + s * self.points[i + 1]
        return DiscreteSurface(pts, self.kind, self.n)

    @property
    def scaling_measure(self) -> np.ndarray:
        """Enclosed measure raised to 2/(n+1): linear in time for round solutions."""
        return self.enclosed ** (2.0 / (self.n + 1))


def _upsample(values: np.ndarray, factor: int) -> np.ndarray:
    """Trigonometric interpolation of periodic samples onto a grid ``factor`` times finer."""
    M = values.shape[0]
    c = np.fft.fft(values, axis=0)
    half = (M - 1) // 2
    pad = np.zeros((M * factor,) + values.shape[1:], dtype=complex)
    pad[: half + 1] = c[: half + 1]
    pad[-half:] = c[-half:]
    return np.real(np.fft.ifft(pad, axis=0)) * factor


def _redistribute(S: DiscreteSurface, factor: int = 16) -> DiscreteSurface:
    """Resample at equal arclength, keeping node 0 (curve) or the pole (profile) fixed.

    The curve is refined spectrally, arclength is integrated spectrally on the
    fine grid and the new nodes are read off a periodic cubic spline of the
    refined samples.
    """
    ext = _extend(S.points, S.kind)
    M = ext.shape[0]
    offset = 0.0 if S.kind == "curve" else np.pi / M
    fine = _upsample(ext, factor)
    Mf = fine.shape[0]
    hf = 2.0 * np.pi / Mf
    u_f = offset + hf * np.arange(Mf)
    speed = np.hypot(*_spectral_diff(fine).T)
    ks = np.fft.fftfreq(Mf, 1.0 / Mf)
    cs = np.fft.fft(speed) / Mf
    mean_speed = float(np.real(cs[0]))
    nz = ks != 0
    periodic = np.zeros(Mf, dtype=complex)
    periodic[nz] = cs[nz] / (1j * ks[nz])
    # arclength measured from u = 0 (node 0 of a curve, the pole of a profile)
    s_f = mean_speed * u_f + np.real(np.fft.ifft(periodic) * Mf)
    s_f -= np.real(np.fft.ifft(periodic * np.exp(-1j * ks * offset)) * Mf)[0]
    L = 2.0 * np.pi * mean_speed
    j = np.arange(S.N)
    target = (j + (0.0 if S.kind == "curve" else 0.5)) * L / M
    s_tab = np.concatenate([s_f - L, s_f, s_f + L])
    u_tab = np.concatenate([u_f - 2 * np.pi, u_f, u_f + 2 * np.pi])
    u_new = np.interp(target, s_tab, u_tab)
    spl = CubicSpline(
        np.concatenate([u_f, [u_f[0] + 2 * np.pi]]),
        np.concatenate([fine, fine[:1]], axis=0),
        bc_type="periodic",
    )
    return S.with_points(spl(u_new))


def _is_simple(S: DiscreteSurface) -> bool:
    from shapely.geometry import LinearRing

    return bool(LinearRing(_extend(S.points, S.kind)).is_simple)


def _scale_ratio(S: DiscreteSurface, ref: float) -> float:
    return (S.enclosed / ref) ** (2.0 / (S.n + 1))


def _filtered_curvature(S: DiscreteSurface, filt: np.ndarray) -> np.ndarray:
    Hv = S.curvature_vector
    He = Hv if S.kind == "curve" else np.concatenate([Hv, Hv[::-1] * np.array([1.0, -1.0])])
    return np.real(np.fft.ifft(np.fft.fft(He, axis=0) * filt[:, None], axis=0))[: S.N]


def run_physical(
    S0: DiscreteSurface,
    dt: float = 1e-3,
    stop_area: float = 1e-4,
    *,
    t0: float = 0.0,
    adaptive: bool = True,
    record_every: int = 1,
    check_every: int = 50,
    max_steps: int = 1_000_000,
    redistribute_tol: float = 1e-3,
) -> PhysicalTrajectory:
    """Evolve a closed curve or symmetric profile by mean curvature.

    Stabilized Heun steps with equal-arclength redistribution.  With
    ``adaptive`` the step shrinks with the square of the current length scale.
    Stops once the enclosed area (or volume) is at most ``stop_area``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not _is_simple(S0):
        raise SelfIntersectionError("initial curve is not embedded")
    S = _redistribute(S0)
    ref = S.enclosed
    if ref <= 0:
        raise GeometryError("curve must be positively oriented (counterclockwise)")
    M = S.N if S.kind == "curve" else 2 * S.N
    sym = _fd2_symbol(M)
    # leave the k = 1 modes (translations and dilations) unstabilized
    lam = np.maximum(sym - sym[1], 0.0)

    t = t0
    ts, pts, encl, cent = [], [], [], []
    status = "running"
    step = 0
    while True:
        if step % record_every == 0:
            ts.append(t)
            pts.append(S.points.copy())
            encl.append(S.enclosed)
            cent.append(S.centroid.copy())
        if S.enclosed <= stop_area:
            status = "stopped"
            break
        if step >= max_steps:
            status = "step-limit"
            break
        dt_k = dt * _scale_ratio(S, ref) if adaptive else dt
        c_star = float(np.max(1.0 / S.speed**2))
        filt = 1.0 / (1.0 + dt_k * c_star * lam)
        # Heun predictor-corrector on the stabilized velocity
        f1 = _filtered_curvature(S, filt)
        pred = S.points + dt_k * f1
        if S.kind == "profile" and np.any(pred[:, 1] <= 0):
            raise FlowError("profile reached the symmetry axis (neck pinch or extinction)")
        f2 = _filtered_curvature(S.with_points(pred), filt)
        new = S.points + 0.5 * dt_k * (f1 + f2)
        if S.kind == "profile" and np.any(new[:, 1] <= 0):
            raise FlowError("profile reached the symmetry axis (neck pinch or extinction)")
        S = S.with_points(new)
        # chords see the odd-even spacing mode that the spectral speed drops
        chord = np.hypot(*np.diff(_extend(S.points, S.kind), axis=0, append=S.points[:1]).T)
        if S.kind == "profile":
            chord = chord[: S.N]
        if np.max(chord) / np.min(chord) - 1.0 > redistribute_tol:
            S = _redistribute(S)
        t += dt_k
        step += 1
        if step % check_every == 0 and not _is_simple(S):
            raise SelfIntersectionError(f"self-intersection detected at t = {t:.6g}")
        if S.enclosed > encl[0] * 1.5 or not np.isfinite(S.enclosed):
            raise FlowError("physical flow became unstable; reduce dt")

    if (step % record_every) != 0 and ts[-1] != t:
        ts.append(t)
        pts.append(S.points.copy())
        encl.append(S.enclosed)
        cent.append(S.centroid.copy())
    return PhysicalTrajectory(S.kind, S.n, np.array(ts), np.array(pts), np.array(encl), np.array(cent), status)


@dataclass(frozen=True)
class ExtinctionEstimate:
    x0: tuple
    T: float
    residual: float
    window: tuple
    slope: float = float("nan")


def estimate_extinction(
    traj: PhysicalTrajectory,
    window: tuple = (0.70, 0.95),
    max_residual: float = 1e-3,
) -> ExtinctionEstimate:
    """Fit the extinction point from the linear area law and the centroid path.

    The fit uses the records between fractions ``window`` of the run.  For
    profiles the enclosed volume is raised to 2/(n+1) first.
    """
    if traj.t.size < 10:
        raise FlowError("extinction fit needs at least 10 records")
    A = traj.scaling_measure
    if np.any(np.diff(A) >= 0):
        raise FlowError("enclosed measure is not strictly decreasing")
    n = traj.t.size
    i0, i1 = int(window[0] * n), max(int(window[1] * n), int(window[0] * n) + 3)
    t = traj.t[i0:i1]
    a = A[i0:i1]
    slope, icpt = np.polyfit(t, a, 1)
    T = -icpt / slope
    resid = float(np.sqrt(np.mean((a - (slope * t + icpt)) ** 2)) / (np.max(a) - np.min(a)))
    if resid > max_residual:
        raise FlowError(f"extinction fit residual {resid:.3g} exceeds {max_residual:.3g}")
    c = traj.centroid[i0:i1]
    x0 = [float(np.polyval(np.polyfit(t, c[:, d], 1), T)) for d in range(2)]
    if T <= traj.t[-1]:
        raise FlowError("fitted extinction time precedes the last observation")
    return ExtinctionEstimate(tuple(x0), float(T), resid, (float(t[0]), float(t[-1])), float(slope))


def parabolic_rescale(S: DiscreteSurface, t: float, lam: float, center=((0.0, 0.0), 0.0)):
    """Apply (x, t) -> (lam (x - x0), lam^2 (t - t0))."""
    if lam <= 0:
        raise ValueError("scale factor must be positive")
    x0, t0 = center
    pts = lam * (S.points - np.asarray(x0, dtype=float))
    return S.with_points(pts), lam * lam * (t - t0)


def graph_from_surface(model: ShrinkerModel, S: DiscreteSurface, tau: float = 0.0) -> NormalSection:
    """Radial graph height of ``S`` (centred at the origin) over the model grid."""
    if S.kind != model.surface_kind or S.n != model.n:
        raise GeometryError("surface and model have different types")
    ext = _extend(S.points, S.kind)
    ang = np.unwrap(np.arctan2(ext[:, 1], ext[:, 0]))
    r = np.hypot(ext[:, 0], ext[:, 1])
    if np.any(np.diff(ang) <= 0) or ang[-1] - ang[0] >= 2 * np.pi:
        raise NotGraphicalError("surface is not a radial graph over the model")
    start = ang[0]
    a = np.concatenate([ang, [start + 2 * np.pi]])
    rr = np.concatenate([r, [r[0]]])
    spl = CubicSpline(a, rr, bc_type="periodic")
    u = model.grid
    uu = start + np.mod(u - start, 2 * np.pi)
    vals = spl(uu) - model.radius
    return NormalSection(vals, tau, model)


def rescale_to_graph(
    model: ShrinkerModel, S: DiscreteSurface, t: float, ext: ExtinctionEstimate
) -> NormalSection:
    """Rescaled surface (x - x0)/sqrt(T - t) as a graph at tau = -log(T - t)."""
    lam = 1.0 / math.sqrt(ext.T - t)
    Sr, _ = parabolic_rescale(S, t, lam, (ext.x0, ext.T))
    return graph_from_surface(model, Sr, -math.log(ext.T - t))
