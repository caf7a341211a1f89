import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shrinker_lab.energy import graph_state
from shrinker_lab.geometry import (
    DiscreteSurface,
    GeometryError,
    GraphOverflowError,
    area_jacobian,
    embed_graph,
    gaussian_weight,
    make_shrinker,
    mean_curvature,
    static_weight,
)

SQRT2 = math.sqrt(2.0)


def smooth_field(model, coeffs):
    """Even cosine series over the model grid (valid on both model kinds)."""
    u = model.grid
    return sum(c * np.cos((k + 1) * u) for k, c in enumerate(coeffs))


def polyline_length(points):
    closed = np.vstack([points, points[:1]])
    return float(np.sum(np.hypot(*np.diff(closed, axis=0).T)))


def test_model_radii():
    assert make_shrinker("circle", 1, 64).radius == pytest.approx(SQRT2, abs=1e-15)
    assert make_shrinker("round-sphere", 2, 64).radius == pytest.approx(2.0, abs=1e-15)
    assert make_shrinker("round-sphere", 3, 64).radius == pytest.approx(math.sqrt(6.0), abs=1e-15)


def test_default_sigma():
    m = make_shrinker("round-sphere", 2, 64)
    assert m.sigma == pytest.approx(0.3 * 2.0)


@pytest.mark.parametrize(
    "args",
    [("torus", 1, 64), ("circle", 2, 64), ("round-sphere", 1, 64), ("circle", 1, 4)],
)
def test_make_shrinker_rejects_bad_arguments(args):
    with pytest.raises(GeometryError):
        make_shrinker(*args)


def test_zero_graph_is_the_model_bit_identically():
    for model in (make_shrinker("circle", 1, 128), make_shrinker("round-sphere", 2, 64)):
        S = embed_graph(model, np.zeros(model.N))
        assert np.array_equal(S.points, model.surface.points)


def test_constant_graph_is_a_round_circle():
    model = make_shrinker("circle", 1, 256)
    S = embed_graph(model, 0.1)
    np.testing.assert_allclose(np.hypot(*S.points.T), SQRT2 + 0.1, rtol=0, atol=1e-14)


def test_polar_graph_curvature_matches_closed_form():
    N = 512
    model = make_shrinker("circle", 1, N)
    u = model.grid
    S = embed_graph(model, 0.05 * np.cos(2 * u))
    r = SQRT2 + 0.05 * np.cos(2 * u)
    r1 = -0.1 * np.sin(2 * u)
    r2 = -0.2 * np.cos(2 * u)
    kappa = (r**2 + 2 * r1**2 - r * r2) / (r**2 + r1**2) ** 1.5
    H = np.linalg.norm(mean_curvature(S), axis=1)
    assert np.max(np.abs(H - kappa)) <= 1e-4


def test_unit_circle_curvature_points_inward():
    u = 2 * np.pi * np.arange(256) / 256
    pts = np.column_stack([np.cos(u), np.sin(u)])
    H = mean_curvature(DiscreteSurface(pts, "curve", 1))
    np.testing.assert_allclose(np.linalg.norm(H, axis=1), 1.0, atol=1e-3)
    assert np.all(np.sum(H * pts, axis=1) < 0)


def test_sphere_radius_two_has_unit_mean_curvature():
    model = make_shrinker("round-sphere", 2, 128)
    H = mean_curvature(model.surface)
    np.testing.assert_allclose(np.linalg.norm(H, axis=1), 1.0, atol=1e-3)


def test_ellipse_curvature_at_vertex():
    N = 512
    u = 2 * np.pi * np.arange(N) / N
    S = DiscreteSurface(np.column_stack([2 * np.cos(u), np.sin(u)]), "curve", 1)
    kappa = np.linalg.norm(mean_curvature(S), axis=1)
    assert abs(kappa[0] - 2.0) <= 1e-3
    exact = 2.0 / (4 * np.sin(u) ** 2 + np.cos(u) ** 2) ** 1.5
    assert np.max(np.abs(kappa - exact)) <= 1e-3


def test_degenerate_area_element_names_node():
    u = 2 * np.pi * np.arange(16) / 16
    pts = np.column_stack([np.cos(u), np.sin(u)])
    pts[:] = pts[0]
    S = DiscreteSurface(pts, "curve", 1)
    with pytest.raises(GeometryError, match="node"):
        mean_curvature(S)


def test_jacobian_examples():
    model = make_shrinker("circle", 1, 128)
    np.testing.assert_allclose(area_jacobian(model, np.zeros(128)), 1.0, atol=1e-14)
    np.testing.assert_allclose(area_jacobian(model, 0.2), (SQRT2 + 0.2) / SQRT2, atol=1e-13)


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_jacobian_integrates_to_polygon_length(k):
    model = make_shrinker("circle", 1, 512)
    v = 0.05 * np.cos(k * model.grid)
    J = area_jacobian(model, v)
    length = float(np.sum(J * model.weights))
    # the polygon length converges at second order, so compare against a finely sampled curve
    fine = make_shrinker("circle", 1, 65536)
    ref = polyline_length(embed_graph(fine, 0.05 * np.cos(k * fine.grid)).points)
    assert abs(length - ref) <= 1e-6


def test_jacobian_checks_graph_bound():
    model = make_shrinker("circle", 1, 64)
    with pytest.raises(GraphOverflowError):
        area_jacobian(model, model.sigma * 1.01)


def test_gaussian_weight_values():
    assert static_weight(np.zeros(2), 1) == pytest.approx(0.28209479177387814, abs=1e-15)
    assert static_weight(np.array([2.0, 0.0]), 1) == pytest.approx(0.28209479177387814 / math.e, rel=1e-14)
    assert static_weight(np.array([2.0, 0.0]), 1) == pytest.approx(0.10378, abs=5e-6)


def test_gaussian_weight_domain_error():
    with pytest.raises(GeometryError):
        gaussian_weight(np.zeros(2), 1, t0=0.0, t=0.0)
    with pytest.raises(GeometryError):
        gaussian_weight(np.zeros(2), 1, t0=0.0, t=0.5)


def test_residual_is_second_order():
    errs = []
    for N in (64, 128, 256, 512):
        model = make_shrinker("circle", 1, N)
        errs.append(np.max(np.abs(graph_state(model, np.zeros(N)).residual)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios >= 3.5) & (ratios <= 4.5))


@settings(max_examples=50, deadline=None)
@given(
    x=st.tuples(st.floats(-3, 3), st.floats(-3, 3)),
    t=st.floats(-4.0, -0.05),
    lam=st.floats(0.2, 5.0),
    n=st.integers(1, 4),
)
def test_gaussian_weight_parabolic_scaling(x, t, lam, n):
    x = np.array(x)
    lhs = gaussian_weight(lam * x, n, t=lam**2 * t) * lam**n
    rhs = gaussian_weight(x, n, t=t)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-0.4, 0.4))
def test_constant_graph_radius_property(c):
    model = make_shrinker("circle", 1, 64)
    S = embed_graph(model, c)
    np.testing.assert_allclose(np.hypot(*S.points.T), SQRT2 + c, atol=1e-13)


@settings(max_examples=10, deadline=None)
@given(coeffs=st.lists(st.floats(-0.03, 0.03), min_size=1, max_size=3))
def test_jacobian_integrates_to_surface_measure(coeffs):
    # reference measure from a much finer grid of the same surface
    for kind, n in (("circle", 1), ("round-sphere", 2)):
        model = make_shrinker(kind, n, 512)
        fine = make_shrinker(kind, n, 8192)
        J = area_jacobian(model, smooth_field(model, coeffs))
        ref = embed_graph(fine, smooth_field(fine, coeffs)).area
        assert abs(float(np.sum(J * model.weights)) - ref) <= 1e-6
