"""Gaussian walk above the ``1 - |x|^p`` obstacle: oracles, sampler, transfer evaluation."""

from .alpha import AlphaRow, SamplerConfig, estimate_alpha_p, height_scale
from .closed_forms import (
    HolleyReport,
    alpha_p,
    bridge_covariance,
    excursion_density,
    excursion_marginal_density,
    excursion_tail_bound,
    holley_check,
    holley_slacks,
    log_excursion_density,
    tail_exponent_p,
)
from .gibbs import GaussianField, GibbsResult, gibbs_sample
from .obstacles import PObstacles, build_p_obstacles, default_plateau, discrete_curvature, p_profile
from .transfer import SiteMarginal, transfer_marginal

__all__ = [
    "AlphaRow",
    "GaussianField",
    "GibbsResult",
    "HolleyReport",
    "PObstacles",
    "SamplerConfig",
    "SiteMarginal",
    "alpha_p",
    "bridge_covariance",
    "build_p_obstacles",
    "default_plateau",
    "discrete_curvature",
    "estimate_alpha_p",
    "excursion_density",
    "excursion_marginal_density",
    "excursion_tail_bound",
    "gibbs_sample",
    "height_scale",
    "holley_check",
    "holley_slacks",
    "log_excursion_density",
    "p_profile",
    "tail_exponent_p",
    "transfer_marginal",
]
