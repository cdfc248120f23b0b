"""Centroidal Voronoi tessellations as minimisers of a boundary-balanced electrostatic energy."""

from .energy import (
    EnergyReport,
    Quadrature,
    SpectrumReport,
    boundary_potential,
    centroid_energy,
    edge_energy,
    electrostatic_energy,
    numeric_gradient,
    numeric_hessian,
    second_variation_checks,
)
from .geometry import (
    Configuration,
    Domain,
    Tessellation,
    build_domain,
    regular_polygon,
    second_moment,
    tessellate,
    unit_square,
)
from .laam import (
    LatticeAnchor,
    MinimaAtlas,
    anchored_optimize,
    build_anchor,
    cluster_minima,
    gap_timescale_table,
    sweep_rates,
)
from .optimize import (
    AnnealParams,
    RunRecord,
    Schedule,
    anneal,
    lloyd_run,
    lloyd_step,
    metropolis_sweep,
    sample_fixed_temperature,
    temperature,
)

__version__ = "0.1.0"

__all__ = [
    "EnergyReport",
    "Quadrature",
    "SpectrumReport",
    "boundary_potential",
    "centroid_energy",
    "edge_energy",
    "electrostatic_energy",
    "numeric_gradient",
    "numeric_hessian",
    "second_variation_checks",
    "Configuration",
    "Domain",
    "Tessellation",
    "build_domain",
    "regular_polygon",
    "second_moment",
    "tessellate",
    "unit_square",
    "LatticeAnchor",
    "MinimaAtlas",
    "anchored_optimize",
    "build_anchor",
    "cluster_minima",
    "gap_timescale_table",
    "sweep_rates",
    "AnnealParams",
    "RunRecord",
    "Schedule",
    "anneal",
    "lloyd_run",
    "lloyd_step",
    "metropolis_sweep",
    "sample_fixed_temperature",
    "temperature",
]
