"""Gaussian density ratios, the Gaussian energy of a normal graph and its gradient."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .geometry import (
    DiscreteSurface,
    GeometryError,
    NormalSection,
    ShrinkerModel,
    embed_graph,
    gaussian_weight,
    static_weight,
)

__all__ = [
    "DensityRecord",
    "EnergyReport",
    "GraphState",
    "graph_state",
    "base_residual",
    "density_ratio",
    "energy",
    "grad_energy",
    "dissipation",
    "energy_report",
    "chain_gamma",
    "monotonicity_residual",
    "MonotonicityResidual",
]


@dataclass(frozen=True)
class DensityRecord:
    x0: tuple
    t0: float
    t: float
    value: float


@dataclass(frozen=True)
class EnergyReport:
    E: float
    grad_norm: float
    dissipation: float
    E_floor: float

    @property
    def gap(self) -> float:
        return self.E - self.E_floor


@dataclass(frozen=True, eq=False)
class GraphState:
    """Everything the energy and the flow need from one embedded graph.

    In codimension one the normal projection and the normal-bundle metric
    reduce to products with the model normal, so all fields are scalars.
    """

    model: ShrinkerModel
    v: np.ndarray
    surface: DiscreteSurface

    @cached_property
    def residual(self) -> np.ndarray:
        """w = <H + x_perp / 2, nu_M>, the shrinker residual along the graph normal."""
        S = self.surface
        nu = S.normals
        return np.sum(S.curvature_vector * nu, axis=1) + 0.5 * np.sum(S.points * nu, axis=1)

    @cached_property
    def balanced(self) -> np.ndarray:
        """Residual minus the model's own discrete residual at the same node.

        Vanishes exactly on the model, so discretization error in the
        curvature scales with v instead of with the grid alone.
        """
        return self.residual - base_residual(self.model)

    @cached_property
    def tilt(self) -> np.ndarray:
        """<nu_Sigma, nu_M> at every node."""
        return np.sum(self.model.base_normals * self.surface.normals, axis=1)

    @cached_property
    def rho(self) -> np.ndarray:
        return static_weight(self.surface.points, self.model.n)

    @cached_property
    def jacobian(self) -> np.ndarray:
        return self.surface.area_elements / self.model.weights

    @cached_property
    def energy(self) -> float:
        return float(np.sum(self.rho * self.surface.area_elements))

    @cached_property
    def gradient(self) -> np.ndarray:
        return -self.balanced * self.tilt * self.rho * self.jacobian

    @cached_property
    def dissipation(self) -> float:
        return float(np.sum(self.balanced**2 * self.rho * self.surface.area_elements))

    @property
    def grad_norm(self) -> float:
        return self.model.norm(self.gradient)


@lru_cache(maxsize=32)
def base_residual(model: ShrinkerModel) -> np.ndarray:
    """Discrete shrinker residual of the model itself (O(h^2))."""
    return GraphState(model, np.zeros(model.N), model.surface).residual


def graph_state(model: ShrinkerModel, v) -> GraphState:
    S = embed_graph(model, v)
    vals = v.values if isinstance(v, NormalSection) else np.broadcast_to(np.asarray(v, float), (model.N,))
    return GraphState(model, np.asarray(vals), S)


def density_ratio(S: DiscreteSurface, x0=None, t0: float = 0.0, t: float = -1.0) -> DensityRecord:
    """Theta_{x0,t0}(M, t): the backward heat kernel integrated over the surface."""
    if not t < t0:
        raise GeometryError(f"density ratio needs t < t0 (got t={t}, t0={t0})")
    if x0 is None:
        x0 = np.zeros(2)
    x0 = np.asarray(x0, dtype=float)
    if S.kind == "profile" and abs(x0[1]) > 0.0:
        raise GeometryError("profile densities need a centre on the symmetry axis")
    rho = gaussian_weight(S.points, S.n, x0, t0, t)
    return DensityRecord(tuple(float(c) for c in x0), float(t0), float(t), S.integrate(rho))


def energy(model: ShrinkerModel, v) -> float:
    """E(v) = int_Sigma rho(y + v) J dH^n."""
    return graph_state(model, v).energy


def grad_energy(model: ShrinkerModel, v) -> NormalSection:
    """L2(Sigma) gradient -<H + x_perp/2, nu_Sigma> rho J of the energy (well-balanced residual)."""
    st = graph_state(model, v)
    tau = v.tau if isinstance(v, NormalSection) else 0.0
    return NormalSection(st.gradient, tau, model)


def dissipation(model: ShrinkerModel, v) -> float:
    """int_M |H + x_perp/2|^2 rho dH^n."""
    return graph_state(model, v).dissipation


def energy_report(model: ShrinkerModel, v) -> EnergyReport:
    st = graph_state(model, v)
    return EnergyReport(st.energy, st.grad_norm, st.dissipation, model.density)


def chain_gamma(model: ShrinkerModel, v) -> float:
    """Per-state constant in -dE/dtau >= gamma ||grad E|| ||dv/dtau||.

    From Cauchy-Schwarz with the weights rho J: gamma = min tilt * sqrt(min(rho J) / max(rho J)).
    """
    st = graph_state(model, v)
    wj = st.rho * st.jacobian
    return float(np.min(st.tilt) * math.sqrt(np.min(wj) / np.max(wj)))


@dataclass(frozen=True)
class MonotonicityResidual:
    tau: np.ndarray
    residual: np.ndarray

    @property
    def max(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.residual**2)))


def monotonicity_residual(traj) -> MonotonicityResidual:
    """r_i = (E_{i+1} - E_{i-1}) / (2 dtau) + D_i at the interior records."""
    tau = np.asarray(traj.tau, dtype=float)
    E = np.asarray(traj.E, dtype=float)
    D = np.asarray(traj.dissipation, dtype=float)
    if tau.size < 3:
        raise ValueError("monotonicity residual needs at least 3 records")
    steps = np.diff(tau)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, abs(tau[-1])):
        raise ValueError("records are not uniformly spaced in tau; resample first")
    dt = steps[0]
    r = (E[2:] - E[:-2]) / (2.0 * dt) + D[1:-1]
    return MonotonicityResidual(tau[1:-1], r)
