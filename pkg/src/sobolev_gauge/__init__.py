"""Numerical gauges for Sobolev extension domains with decreasing integrability.

Geometry of planar domains (volume densities, intrinsic distances), discrete
p-capacities, the additive set function controlling extension norms, and the
necessary conditions these quantities must satisfy.
"""

__version__ = "0.1.0"

from .capacity import Condenser, capacity_phi_lower_bound, p_capacity  # noqa: E402
from .conditions import (aggregate_norm_lb, cusp_admissible_region, density_phi_lb,  # noqa: E402
                         metric_phi_lb, norm_lb_from_K, norm_lb_from_M, run_check)
from .geometry import (Ball, CuspDomain, ball_intersection_volume, density_ratio,  # noqa: E402
                       domain_from_spec, l_domain, limsup_density, load_domain, unit_disc)
from .metric import build_grid_graph, intrinsic_distance, m_at_scale, vaisala_test_function  # noqa: E402
from .setfn import ExponentPair, estimate_phi  # noqa: E402

__all__ = [
    "Ball", "Condenser", "CuspDomain", "ExponentPair", "aggregate_norm_lb",
    "ball_intersection_volume", "build_grid_graph", "capacity_phi_lower_bound",
    "cusp_admissible_region", "density_phi_lb", "density_ratio", "domain_from_spec",
    "estimate_phi", "intrinsic_distance", "l_domain", "limsup_density", "load_domain",
    "m_at_scale", "metric_phi_lb", "norm_lb_from_K", "norm_lb_from_M", "p_capacity",
    "run_check", "unit_disc", "vaisala_test_function",
]
