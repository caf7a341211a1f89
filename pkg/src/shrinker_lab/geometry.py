"""Model shrinkers, normal graphs and the discrete differential geometry kernel.

Two families of closed hypersurfaces are supported, both represented by a
planar closed curve:

* ``curve``: a closed plane curve sampled at ``u_j = 2*pi*j/N`` (counterclockwise).
* ``profile``: a rotationally symmetric hypersurface in R^{n+1}, stored as its
  meridian ``(z, s)`` (axis coordinate, distance from the axis) at the
  cell-centred polar nodes ``u_j = (j + 1/2)*pi/N``.  The meridian is extended
  by reflection across the axis to a closed curve with ``2N`` nodes, so no
  node ever sits on the axis.

First derivatives are spectral, second derivatives are centred second-order
differences.  Quadrature is spectrally accurate on both grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import gammaln

__all__ = [
    "GeometryError",
    "GraphOverflowError",
    "ShrinkerModel",
    "NormalSection",
    "DiscreteSurface",
    "make_shrinker",
    "embed_graph",
    "mean_curvature",
    "area_jacobian",
    "gaussian_weight",
    "static_weight",
    "sphere_area",
]

MIN_NODES = 16


class GeometryError(ValueError):
    """Invalid geometric input (bad model parameters, degenerate samples)."""


class GraphOverflowError(GeometryError):
    """A normal graph left the admissible tube ``max|v| < sigma``."""

    def __init__(self, node: int, value: float, bound: float):
        self.node = node
        self.value = value
        self.bound = bound
        super().__init__(
            f"graph overflow at node {node}: |v| = {abs(value):.6g} >= sigma = {bound:.6g}"
        )


def sphere_area(m: int) -> float:
    """Area of the unit m-sphere S^m in R^{m+1}."""
    return 2.0 * math.pi ** ((m + 1) / 2) / math.gamma((m + 1) / 2)


def _ball_volume(m: int) -> float:
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


def _sin_moment(k: int, m: int) -> float:
    # int_0^pi sin^m(x) cos(k x) dx in closed form
    if k % 2:
        return 0.0
    a = (m + 2 + k) / 2
    b = (m + 2 - k) / 2
    if b > 0:
        inv_beta = math.exp(-gammaln(a) - gammaln(b))
    elif float(b).is_integer():
        return 0.0
    else:
        inv_beta = math.sin(math.pi * b) / math.pi * math.exp(gammaln(1 - b) - gammaln(a))
    sign = -1.0 if (k // 2) % 2 else 1.0
    return sign * math.pi * math.exp(gammaln(m + 2)) / (2.0**m * (m + 1)) * inv_beta


@lru_cache(maxsize=64)
def _polar_weights(N: int, m: int) -> np.ndarray:
    """Weights for int_0^pi g(u) sin^m(u) du on the nodes (j + 1/2) pi / N.

    Exact for g in span{cos(k u) : k < N}; ``g`` is assumed even about both
    poles, as every quantity produced by a symmetric meridian is.
    """
    u = (np.arange(N) + 0.5) * np.pi / N
    moments = np.array([_sin_moment(k, m) for k in range(N)])
    coeff = np.full(N, 2.0 / N)
    coeff[0] = 1.0 / N
    w = np.cos(np.outer(u, np.arange(N))) @ (coeff * moments)
    w.setflags(write=False)
    return w


def _parameter_grid(kind: str, N: int) -> tuple[np.ndarray, float]:
    if kind == "curve":
        h = 2.0 * np.pi / N
        return np.arange(N) * h, h
    h = np.pi / N
    return (np.arange(N) + 0.5) * h, h


def _extend(points: np.ndarray, kind: str) -> np.ndarray:
    if kind == "curve":
        return points
    mirror = points[::-1] * np.array([1.0, -1.0])
    return np.concatenate([points, mirror], axis=0)


def _spectral_diff(x: np.ndarray) -> np.ndarray:
    """d/du of a 2pi-periodic sampled array along axis 0."""
    M = x.shape[0]
    k = np.fft.fftfreq(M, 1.0 / M)
    if M % 2 == 0:
        k[M // 2] = 0.0
    xh = np.fft.fft(x, axis=0)
    shape = (M,) + (1,) * (x.ndim - 1)
    return np.real(np.fft.ifft(1j * k.reshape(shape) * xh, axis=0))


def _second_diff(x: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(x, -1, axis=0) - 2.0 * x + np.roll(x, 1, axis=0)) / (h * h)


@dataclass(frozen=True, eq=False)
class DiscreteSurface:
    """Samples of a closed hypersurface with its derived geometric cache.

    ``points`` has shape (N, 2): plane coordinates for a curve, meridian
    coordinates ``(z, s)`` with ``s > 0`` for a profile.
    """

    points: np.ndarray
    kind: str = "curve"
    n: int = 1

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise GeometryError(f"points must have shape (N, 2), got {pts.shape}")
        if self.kind not in ("curve", "profile"):
            raise GeometryError(f"unknown surface kind {self.kind!r}")
        if self.kind == "curve" and self.n != 1:
            raise GeometryError("a curve has intrinsic dimension n = 1")
        if self.kind == "profile":
            if self.n < 2:
                raise GeometryError("a rotationally symmetric profile needs n >= 2")
            if np.any(pts[:, 1] <= 0.0):
                raise GeometryError("profile samples must stay off the axis (s > 0)")
        if pts.shape[0] < 4:
            raise GeometryError("need at least 4 samples")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @cached_property
    def params(self) -> np.ndarray:
        return _parameter_grid(self.kind, self.N)[0]

    @property
    def h(self) -> float:
        return _parameter_grid(self.kind, self.N)[1]

    @cached_property
    def _derivs(self):
        ext = _extend(self.points, self.kind)
        xu = _spectral_diff(ext)[: self.N]
        xuu = _second_diff(ext, self.h)[: self.N]
        return xu, xuu

    @cached_property
    def speed(self) -> np.ndarray:
        """|dx/du| at each node."""
        xu = self._derivs[0]
        sp = np.hypot(xu[:, 0], xu[:, 1])
        bad = np.flatnonzero(sp <= 1e-12 * max(1.0, float(np.max(sp))))
        if bad.size:
            raise GeometryError(f"degenerate area element at node {int(bad[0])}")
        return sp

    @cached_property
    def tangents(self) -> np.ndarray:
        return self._derivs[0] / self.speed[:, None]

    @cached_property
    def normals(self) -> np.ndarray:
        """Outward unit normals (counterclockwise orientation)."""
        t = self.tangents
        return np.column_stack([t[:, 1], -t[:, 0]])

    @cached_property
    def curvature_vector(self) -> np.ndarray:
        """Mean curvature vector H with the shrinking sign convention."""
        xuu = self._derivs[1]
        t = self.tangents
        hv = (xuu - np.sum(xuu * t, axis=1)[:, None] * t) / self.speed[:, None] ** 2
        if self.kind == "profile":
            nu = self.normals
            hv = hv - (self.n - 1) * (nu[:, 1] / self.points[:, 1])[:, None] * nu
        return hv

    @cached_property
    def area_elements(self) -> np.ndarray:
        """Quadrature weights dA_j with sum_j f_j dA_j ~ int_M f dH^n."""
        if self.kind == "curve":
            return self.speed * self.h
        u = self.params
        m = self.n - 1
        g = (self.points[:, 1] / np.sin(u)) ** m * self.speed
        return sphere_area(m) * g * _polar_weights(self.N, m)

    @property
    def area(self) -> float:
        return float(np.sum(self.area_elements))

    def integrate(self, f) -> float:
        return float(np.sum(np.asarray(f) * self.area_elements))

    @cached_property
    def enclosed(self) -> float:
        """Enclosed area (curve) or enclosed (n+1)-volume (profile)."""
        x, y = self.points[:, 0], self.points[:, 1]
        xu, yu = self._derivs[0][:, 0], self._derivs[0][:, 1]
        if self.kind == "curve":
            return float(0.5 * np.sum(x * yu - y * xu) * self.h)
        u = self.params
        g = (y / np.sin(u)) ** self.n * (-xu / np.sin(u))
        return float(_ball_volume(self.n) * np.sum(g * _polar_weights(self.N, self.n + 1)))

    @cached_property
    def centroid(self) -> np.ndarray:
        """Centroid of the enclosed region (on the axis for a profile)."""
        x, y = self.points[:, 0], self.points[:, 1]
        xu, yu = self._derivs[0][:, 0], self._derivs[0][:, 1]
        if self.kind == "curve":
            a = self.enclosed
            cx = 0.5 * np.sum(x * x * yu) * self.h / a
            cy = -0.5 * np.sum(y * y * xu) * self.h / a
            return np.array([cx, cy])
        u = self.params
        g = x * (y / np.sin(u)) ** self.n * (-xu / np.sin(u))
        cz = _ball_volume(self.n) * np.sum(g * _polar_weights(self.N, self.n + 1)) / self.enclosed
        return np.array([cz, 0.0])

    def with_points(self, points: np.ndarray) -> "DiscreteSurface":
        return DiscreteSurface(points, self.kind, self.n)


@dataclass(frozen=True, eq=False)
class ShrinkerModel:
    """Round compact shrinker of radius sqrt(2n) sampled on a parameter grid."""

    kind: str
    n: int
    N: int
    sigma: float | None = None
    radius: float = field(init=False)
    grid: np.ndarray = field(init=False, repr=False)
    base_points: np.ndarray = field(init=False, repr=False)
    base_normals: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("circle", "round-sphere"):
            raise GeometryError(f"unknown shrinker kind {self.kind!r}; use 'circle' or 'round-sphere'")
        if self.kind == "circle" and self.n != 1:
            raise GeometryError("kind='circle' requires n = 1")
        if self.kind == "round-sphere" and self.n < 2:
            raise GeometryError("kind='round-sphere' requires n >= 2")
        if self.N < MIN_NODES:
            raise GeometryError(f"grid size N = {self.N} is below the minimum {MIN_NODES}")
        radius = math.sqrt(2.0 * self.n)
        sigma = 0.3 * radius if self.sigma is None else float(self.sigma)
        if not 0.0 < sigma < radius:
            raise GeometryError(f"sigma must lie in (0, {radius}), got {sigma}")
        u, _ = _parameter_grid(self.surface_kind, self.N)
        nu = np.column_stack([np.cos(u), np.sin(u)])
        pts = radius * nu
        S = DiscreteSurface(pts, self.surface_kind, self.n)
        for a in (u, nu, pts):
            a.setflags(write=False)
        w = S.area_elements.copy()
        w.setflags(write=False)
        object.__setattr__(self, "radius", radius)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "grid", u)
        object.__setattr__(self, "base_points", pts)
        object.__setattr__(self, "base_normals", nu)
        object.__setattr__(self, "weights", w)

    @property
    def surface_kind(self) -> str:
        return "curve" if self.kind == "circle" else "profile"

    @property
    def h(self) -> float:
        return _parameter_grid(self.surface_kind, self.N)[1]

    @cached_property
    def surface(self) -> DiscreteSurface:
        return DiscreteSurface(self.base_points, self.surface_kind, self.n)

    @cached_property
    def density(self) -> float:
        """Gaussian density of the shrinker, by the same quadrature as the energy."""
        rho = static_weight(self.base_points, self.n)
        return float(np.sum(rho * self.weights))

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))

    # closed-form evaluators at arbitrary parameter values
    def position(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.radius * np.stack([np.cos(u), np.sin(u)], axis=-1)

    def normal(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.stack([np.cos(u), np.sin(u)], axis=-1)

    def mean_curvature_exact(self) -> float:
        """Scalar mean curvature n / R (equal to R / 2 on the shrinker)."""
        return self.n / self.radius

    def inner(self, f, g) -> float:
        return float(np.sum(np.asarray(f) * np.asarray(g) * self.weights))

    def norm(self, f) -> float:
        return math.sqrt(self.inner(f, f))

    def section(self, values, tau: float = 0.0) -> "NormalSection":
        return NormalSection(values, tau, self)

    def zero(self, tau: float = 0.0) -> "NormalSection":
        return NormalSection(np.zeros(self.N), tau, self)


@dataclass(frozen=True, eq=False)
class NormalSection:
    """Signed normal height field over a shrinker's grid at rescaled time tau."""

    values: np.ndarray
    tau: float
    model: ShrinkerModel

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.model.N,):
            raise GeometryError(f"section needs shape ({self.model.N},), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l2(self) -> float:
        return self.model.norm(self.values)


def _section_values(model: ShrinkerModel, v) -> np.ndarray:
    if isinstance(v, NormalSection):
        if v.model is not model and v.model.N != model.N:
            raise GeometryError("section belongs to a different grid")
        return v.values
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        return np.full(model.N, float(arr))
    if arr.shape != (model.N,):
        raise GeometryError(f"section needs shape ({model.N},), got {arr.shape}")
    return arr


def check_graph_bound(model: ShrinkerModel, v) -> np.ndarray:
    vals = _section_values(model, v)
    if not np.all(np.isfinite(vals)):
        j = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise GraphOverflowError(j, float("inf"), model.sigma)
    j = int(np.argmax(np.abs(vals)))
    if abs(vals[j]) >= model.sigma:
        raise GraphOverflowError(j, float(vals[j]), model.sigma)
    return vals


def make_shrinker(kind: str, n: int, N: int, sigma: float | None = None) -> ShrinkerModel:
    """Build the round shrinker of the given kind; ``sigma`` defaults to 0.3 sqrt(2n)."""
    return ShrinkerModel(kind, n, N, sigma)


def embed_graph(model: ShrinkerModel, v) -> DiscreteSurface:
    """Surface ``x_j = y_j + v_j nu(y_j)`` of the normal graph of ``v`` over the model."""
    vals = check_graph_bound(model, v)
    if not np.any(vals):
        return model.surface
    pts = model.base_points + vals[:, None] * model.base_normals
    return DiscreteSurface(pts, model.surface_kind, model.n)


def mean_curvature(S: DiscreteSurface) -> np.ndarray:
    """Per-node mean curvature vectors, H = -(n/R) nu_out on a round sphere."""
    return S.curvature_vector


def area_jacobian(model: ShrinkerModel, v) -> np.ndarray:
    """Jacobian J with int_M f dH^n = int_Sigma f(y + v) J dH^n on the grid."""
    S = embed_graph(model, v)
    return S.area_elements / model.weights


def gaussian_weight(x, n: int, x0=None, t0: float = 0.0, t: float = -1.0) -> np.ndarray:
    """Backward heat kernel rho_{x0,t0}(x, t) on points x of shape (..., d)."""
    if not t < t0:
        raise GeometryError(f"backward heat kernel needs t < t0 (got t={t}, t0={t0})")
    x = np.asarray(x, dtype=float)
    d = x if x0 is None else x - np.asarray(x0, dtype=float)
    r2 = np.sum(d * d, axis=-1)
    s = t0 - t
    return (4.0 * np.pi * s) ** (-n / 2) * np.exp(-r2 / (4.0 * s))


def static_weight(x, n: int) -> np.ndarray:
    """rho(x) = (4 pi)^{-n/2} exp(-|x|^2 / 4)."""
    return gaussian_weight(x, n)
