"""Numerical experiments on mean curvature flow near round self-shrinkers.

Modules
-------
geometry
    Discrete curves and rotationally symmetric profiles, shrinker models,
    normal graphs and Gaussian weights.
energy
    Gaussian density ratios, the Gaussian energy of a normal graph, its
    gradient and the dissipation.
flow
    The rescaled graph flow, the physical flow, extinction fits and
    parabolic rescaling.
analysis
    Lojasiewicz fits, drift and decay bounds, tangent-flow blow-ups.
cli
    The ``shrinker-lab`` batch driver.
"""

from .geometry import (
    DiscreteSurface,
    GeometryError,
    GraphOverflowError,
    NormalSection,
    ShrinkerModel,
    area_jacobian,
    embed_graph,
    gaussian_weight,
    make_shrinker,
    mean_curvature,
)
from .energy import density_ratio, energy_report, grad_energy, monotonicity_residual
from .flow import (
    ExtinctionEstimate,
    FlowError,
    Frame,
    PhysicalTrajectory,
    Trajectory,
    estimate_extinction,
    parabolic_rescale,
    rescale_to_graph,
    rescaled_rhs,
    run_physical,
    run_rescaled,
)
from .analysis import (
    FitError,
    check_bounds,
    find_limit,
    fit_decay,
    fit_lojasiewicz,
    tangent_uniqueness_experiment,
)

__version__ = "0.1.0"
