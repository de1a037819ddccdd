"""Fast Ewald summation with prolate spheroidal wave functions."""

from .errors import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    FitExtrapolationWarning,
    MollifierPositivityWarning,
    OutOfBandError,
    PlanConsistencyError,
    ProlateEwaldError,
    StaleCacheWarning,
)
from .ewald_engine import (
    EwaldPlan,
    direct_fourier_sum,
    fast_fourier_gradient,
    fast_fourier_sum,
    forces,
    make_plan,
    total_energy,
    total_gradient,
    total_potential,
)
from .kernel_split import SplitFamily, SplitSpec, make_gaussian_split, make_pswf_split
from .param_select import ErrorModelInput, EwaldParameters, plan_from_parameters, select_parameters
from .particles import ParticleSystem, load_system, save_system
from .pswf_core import PswfBasis, build_pswf
from .window_functions import WindowFamily, WindowSpec, make_window

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ConvergenceError",
    "DomainError",
    "ErrorModelInput",
    "EwaldParameters",
    "EwaldPlan",
    "FitExtrapolationWarning",
    "MollifierPositivityWarning",
    "OutOfBandError",
    "ParticleSystem",
    "PlanConsistencyError",
    "ProlateEwaldError",
    "PswfBasis",
    "SplitFamily",
    "SplitSpec",
    "StaleCacheWarning",
    "WindowFamily",
    "WindowSpec",
    "build_pswf",
    "direct_fourier_sum",
    "fast_fourier_gradient",
    "fast_fourier_sum",
    "forces",
    "load_system",
    "make_gaussian_split",
    "make_plan",
    "make_pswf_split",
    "plan_from_parameters",
    "save_system",
    "select_parameters",
    "total_energy",
    "total_gradient",
    "total_potential",
]
