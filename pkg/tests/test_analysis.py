import dataclasses
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shrinker_lab.analysis import (
    REFERENCE_THETA,
    Diagnostics,
    FitError,
    LojasiewiczFit,
    alpha_from_theta,
    check_bounds,
    distance_to_round,
    find_limit,
    fit_decay,
    fit_lojasiewicz,
    shape_distance,
    tangent_uniqueness_experiment,
)
from shrinker_lab.flow import (
    Frame,
    estimate_extinction,
    project_unstable,
    run_physical,
    run_rescaled,
)
from shrinker_lab.geometry import DiscreteSurface, embed_graph, make_shrinker

SQRT2 = math.sqrt(2.0)


def circle(R, N=256, center=(0.0, 0.0)):
    u = 2 * np.pi * np.arange(N) / N
    return DiscreteSurface(np.column_stack([R * np.cos(u), R * np.sin(u)]) + np.asarray(center), "curve", 1)


def exponential_diagnostics(lam, dtau=1e-3):
    # gradient flow with E - E_floor = exp(-lam tau): ||grad|| = ||dv/dtau|| = sqrt(lam) exp(-lam tau / 2)
    tau = np.arange(0.0, 30.0 / lam, dtau)
    g = math.sqrt(lam) * np.exp(-lam * tau / 2)
    return Diagnostics(tau, 1.0 + np.exp(-lam * tau), g, g, E_floor=1.0)


def power_diagnostics(p, n=6000):
    # E - E_floor = tau^-p, ||grad|| = sqrt(p) tau^-(p+1)/2 so that dE/dtau = -||grad||^2
    tau = np.geomspace(1.0, 10 ** (11 / p), n)
    g = math.sqrt(p) * tau ** (-(p + 1) / 2)
    return Diagnostics(tau, tau**-p, g, g)


# ------------------------------------------------------------------ Lojasiewicz fit


def test_exponential_recovery():
    fit = fit_lojasiewicz(exponential_diagnostics(2.0))
    assert fit.theta == pytest.approx(0.5, abs=0.02)
    assert fit.exponential and fit.alpha_label.startswith("inf")
    assert fit.r2 >= 0.999 and fit.holds
    assert fit.window[0] > 0 and fit.n_records >= 50


def test_power_law_recovery():
    fit = fit_lojasiewicz(power_diagnostics(2.0))
    assert fit.theta == pytest.approx(0.25, abs=0.02)
    assert fit.alpha == pytest.approx(1.0, abs=0.1)
    assert fit.holds


@settings(max_examples=30, deadline=None)
@given(p=st.floats(1.5, 6.0))
def test_regression_recovery(p):
    fit = fit_lojasiewicz(power_diagnostics(p))
    assert fit.theta == pytest.approx((p - 1) / (2 * p), abs=0.02)
    assert fit.alpha == pytest.approx(p - 1, abs=0.1)
    assert fit.alpha == pytest.approx(2 * fit.theta / (1 - 2 * fit.theta), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(0.5, 5.0))
def test_exponential_regime_property(lam):
    fit = fit_lojasiewicz(exponential_diagnostics(lam))
    assert abs(fit.theta - 0.5) <= 0.02
    assert math.isinf(fit.alpha)


def test_alpha_formula():
    assert alpha_from_theta(0.25) == 1.0
    assert 1 + alpha_from_theta(0.25) == 2.0
    assert 0.25 * (1 + alpha_from_theta(0.25)) == 0.5
    assert math.isinf(alpha_from_theta(0.495))


def test_empty_window_is_an_error():
    tau = np.linspace(0, 1, 200)
    d = Diagnostics(tau, np.full(200, 1.0), np.full(200, 1.0), np.full(200, 1.0))
    with pytest.raises(FitError, match="window"):
        fit_lojasiewicz(d)


def test_short_window_is_an_error():
    d = power_diagnostics(2.0, n=40)
    with pytest.raises(FitError):
        fit_lojasiewicz(d)


# ------------------------------------------------------------------ drift bounds


def test_zero_trajectory_has_zero_margin():
    tau = np.linspace(0, 1, 11)
    zeros = np.zeros(11)
    d = Diagnostics(tau, zeros, zeros, zeros)
    fit = LojasiewiczFit(0.5, 1.0, math.inf, (0.0, 1.0), 1.0, 0.5, 0.0, 1.0, 1.0, 11, True)
    rep = check_bounds(d, fit)
    assert np.all(rep.drift == 0) and np.all(rep.bound == 0)
    assert np.all(rep.margin == 0) and rep.ok


def test_exponential_bounds_hold():
    d = exponential_diagnostics(2.0)
    fit = fit_lojasiewicz(d)
    rep = check_bounds(d, fit)
    assert rep.ok and np.all(rep.margin > 0)
    # closed form: bound = 2 exp(-lam tau / 2) / gamma and drift <= 2 exp(-lam tau / 2) / sqrt(lam)
    assert fit.gamma <= math.sqrt(2.0)
    assert rep.gamma_max >= fit.gamma


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(0.5, 5.0), factor=st.floats(1.01, 100.0))
def test_bounds_flag_violations(lam, factor):
    d = exponential_diagnostics(lam)
    fit = fit_lojasiewicz(d)
    honest = check_bounds(d, fit)
    # inflate the path length beyond the bound at the worst sample
    need = np.max(honest.bound[honest.drift > 0] / honest.drift[honest.drift > 0])
    bad = dataclasses.replace(d, vdot_norm=d.vdot_norm * need * factor)
    rep = check_bounds(bad, fit)
    assert not rep.ok
    assert rep.min_margin < 0


# ------------------------------------------------------------------ decay rates


def synthetic_converged(q_gap, q_dist):
    # physical frame with extinction at T = 0, so t = -exp(-tau)
    model = make_shrinker("circle", 1, 64)
    tau = np.linspace(1.0, 30.0, 4000)
    f = np.cos(2 * model.grid)
    snaps = tau[:, None] ** (-q_dist) * f[None, :] / model.norm(f)
    return SimpleNamespace(
        status="converged",
        model=model,
        tau=tau,
        E=1.0 + tau ** (-q_gap),
        E_floor=1.0,
        snapshot_index=np.arange(tau.size),
        snapshots=snaps,
        t_phys=-np.exp(-tau),
        frame=Frame((0.0, 0.0), -1.0, 1.0),
    )


def test_decay_exponents_from_theta():
    traj = synthetic_converged(2.2, 0.6)
    fit = LojasiewiczFit(0.25, 1.0, 1.0, (1.0, 30.0), 1.0, 0.75, 0.0, 1.0, 1.0, 100, True)
    rep = fit_decay(traj, traj.model.zero(), fit, gap_max=1.0)
    assert rep.exponent_gap == pytest.approx(2.0)
    assert rep.exponent_dist == pytest.approx(0.5)
    assert rep.ok


def test_decay_translation_between_variables():
    # with t = -exp(-tau) the variable log(-1/t) equals tau
    traj = synthetic_converged(2.2, 0.6)
    fit = LojasiewiczFit(0.25, 1.0, 1.0, (1.0, 30.0), 1.0, 0.75, 0.0, 1.0, 1.0, 100, True)
    rep = fit_decay(traj, traj.model.zero(), fit, gap_max=1.0)
    assert rep.C_gap_log == pytest.approx(rep.C_gap, rel=1e-9)
    assert rep.c0 == pytest.approx(rep.C_dist, rel=1e-9)
    np.testing.assert_allclose(rep.margin_gap_log, rep.margin_gap, rtol=1e-8, atol=1e-15)


def test_decay_violation_detected():
    traj = synthetic_converged(1.5, 0.3)
    fit = LojasiewiczFit(0.25, 1.0, 1.0, (1.0, 30.0), 1.0, 0.75, 0.0, 1.0, 1.0, 100, True)
    assert not fit_decay(traj, traj.model.zero(), fit, gap_max=1.0).ok


def test_time_change():
    model = make_shrinker("circle", 1, 64)
    assert run_rescaled(model, model.zero(0.0)).frame.t == -1.0
    assert run_rescaled(model, model.zero(10.0)).frame.t == pytest.approx(-math.exp(-10.0), rel=1e-15)
    assert -math.log(math.exp(-10.0)) == pytest.approx(10.0)


def test_decay_needs_converged_run():
    traj = synthetic_converged(2.2, 0.6)
    traj.status = "step-limit"
    with pytest.raises(FitError):
        fit_decay(traj, traj.model.zero())


# ------------------------------------------------------------------ converged circle run


@pytest.fixture(scope="module")
def small_circle_run():
    model = make_shrinker("circle", 1, 128)
    u = model.grid
    v0 = project_unstable(model, 0.02 * np.cos(2 * u) + 0.01 * np.sin(3 * u))
    traj = run_rescaled(model, v0, dtau=1e-3, tau_max=40.0, conv_tol=1e-9, recenter=True, snapshot_every=20)
    return traj


def test_small_run_pipeline(small_circle_run):
    traj = small_circle_run
    assert traj.status == "converged"
    assert np.all(np.diff(traj.E) <= 1e-9)
    limit = find_limit(traj)
    S = embed_graph(traj.model, limit)
    dist, R, _ = distance_to_round(S)
    assert dist <= 1e-8 and R == pytest.approx(SQRT2, abs=1e-8)
    fit = fit_lojasiewicz(traj)
    assert 0.3 < fit.theta < 0.55 and fit.r2 >= 0.95 and fit.holds
    assert check_bounds(traj, fit).ok
    rep = fit_decay(traj, limit, fit)
    assert rep.reference_theta and rep.theta == REFERENCE_THETA
    assert rep.ok


def test_find_limit_needs_convergence():
    model = make_shrinker("circle", 1, 64)
    traj = run_rescaled(model, 0.01 * np.cos(2 * model.grid), dtau=1e-3, tau_max=0.01)
    with pytest.raises(FitError):
        find_limit(traj)


def test_distance_to_round_profile():
    model = make_shrinker("round-sphere", 2, 64)
    d, R, c = distance_to_round(model.surface)
    assert d <= 1e-12 and R == pytest.approx(2.0) and c[1] == 0.0


# ------------------------------------------------------------------ tangent-flow uniqueness

SEQUENCES = {"2^i": [2.0, 4.0, 8.0, 16.0, 32.0], "3^i": [3.0, 9.0, 27.0]}


@pytest.fixture(scope="module")
def round_flow():
    pt = run_physical(circle(SQRT2, N=512), dt=1e-3, stop_area=2 * math.pi * 1e-5)
    return pt, estimate_extinction(pt)


def test_round_circle_blowups(round_flow):
    pt, ext = round_flow
    rep = tangent_uniqueness_experiment(pt, ext, SEQUENCES)
    for res in rep.sequences.values():
        assert max(res.distances) <= 1e-4
        assert set(res.metrics) == {"L2"}


def test_bad_center_control(round_flow):
    pt, ext = round_flow
    bad = dataclasses.replace(ext, x0=(ext.x0[0] + 0.1, ext.x0[1]))
    rep = tangent_uniqueness_experiment(pt, bad, SEQUENCES)
    assert rep.verdict == "not unique / bad center"
    assert not any(r.decreasing for r in rep.sequences.values())


@pytest.fixture(scope="module")
def perturbed_flow():
    model = make_shrinker("circle", 1, 256)
    S0 = embed_graph(model, SQRT2 * 0.05 * np.cos(2 * model.grid))
    pt = run_physical(S0, dt=1e-3, stop_area=2 * math.pi * 1e-5)
    return pt, estimate_extinction(pt)


def test_perturbed_blowups_are_unique(perturbed_flow):
    pt, ext = perturbed_flow
    rep = tangent_uniqueness_experiment(pt, ext, SEQUENCES)
    assert rep.verdict == "unique"
    assert all(r.decreasing and r.distances[-1] <= 1e-3 for r in rep.sequences.values())


def test_verdicts_agree_across_sequences(perturbed_flow):
    pt, ext = perturbed_flow
    seqs = {"a": [2.0, 4.0, 8.0, 16.0], "b": [1.5 * 2.25**i for i in range(4)], "c": [5.0, 25.0]}
    rep = tangent_uniqueness_experiment(pt, ext, seqs)
    assert len({r.converged(1e-3) for r in rep.sequences.values()}) == 1


def test_experiment_refusals(round_flow):
    pt, ext = round_flow
    with pytest.raises(FitError, match="refused"):
        tangent_uniqueness_experiment(pt, dataclasses.replace(ext, residual=0.5), SEQUENCES)
    with pytest.raises(FitError, match="two"):
        tangent_uniqueness_experiment(pt, ext, {"only": [2.0, 4.0]})


def test_hausdorff_when_not_graphical():
    model = make_shrinker("circle", 1, 128)
    d, metric = shape_distance(model, circle(0.3, center=(2.0, 0.0)))
    assert metric == "hausdorff"
    assert d == pytest.approx(2.0 + SQRT2 - 0.3, abs=1e-3)
    d, metric = shape_distance(model, circle(SQRT2 + 0.01))
    assert metric == "L2" and d == pytest.approx(0.01 * math.sqrt(2 * math.pi * SQRT2), rel=1e-6)
