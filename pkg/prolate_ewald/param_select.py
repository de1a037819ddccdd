"""
Error models, rigorous bounds and the parameter selection for the PSWF/PSWF method.

Closed-form models (B = ||rho|| / sqrt(V)):

    split error  ~ B sqrt(r_c) A_s c_s^(-1/2) exp(-c_s)
    alias error  ~ B sqrt(L)   A_w c_w^(1/2)  exp(-c_w)

Setting the split model to eps and balancing the alias model against it gives

    c_s = W0(2 (B_s/eps)^2) / 2,              B_s = A_s ||rho|| sqrt(r_c) / sqrt(V)
    c_w = -W_{-1}(-2 B_w^2 exp(-2 c_s)/c_s) / 2,   B_w = (A_s/A_w) sqrt(r_c/L)

and then alpha = r_c c_w/c_s, m = ceil(L c_s/(pi r_c)), P = ceil(2 alpha m/L).
"""

import logging
import math
import warnings
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .errors import ConvergenceError, DomainError, FitExtrapolationWarning
from .ewald_engine import EwaldPlan, make_plan
from .kernel_split import SplitSpec, make_pswf_split
from .particles import ParticleSystem
from .pswf_core import CURVE_FITS, build_pswf, fit_alias_amp, fit_E, fit_split_amp, in_fit_window
from .window_functions import WindowFamily, alias_ratio_1d, make_window

logger = logging.getLogger(__name__)

INV_E = math.exp(-1.0)
# Above this c_s the exact bracket 2 pi/lambda_0^2 - c_s is lost to cancellation
EXACT_EIGENVALUE_C_MAX = 17.0
MAX_HALLEY_ITERATIONS = 64


# ---------------------------------------------------------------------------
# Lambert W
# ---------------------------------------------------------------------------


class LambertBranch(str, Enum):
    W0 = "W0"
    WM1 = "Wm1"


def lambert_w(branch: Union[LambertBranch, str], x: float) -> float:
    """Real Lambert W: the w on the given branch with w exp(w) = x.

    Halley iteration from a branch-point series (near -1/e) or the asymptotic
    log x - log log x guess.
    """
    branch = LambertBranch(branch)
    x = float(x)
    if math.isnan(x):
        raise DomainError("Lambert W of NaN")
    if x < -INV_E:
        if x < -INV_E * (1.0 + 4.0 * np.finfo(float).eps):
            raise DomainError(f"Lambert W is real only for x >= -1/e (got {x:g})")
        x = -INV_E
    if branch is LambertBranch.WM1 and x >= 0.0:
        raise DomainError(f"branch W_-1 requires -1/e <= x < 0 (got {x:g})")
    if branch is LambertBranch.W0 and x == 0.0:
        return 0.0

    sign = 1.0 if branch is LambertBranch.W0 else -1.0
    p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
    series = -1.0 + sign * p - p * p / 3.0 + 11.0 / 72.0 * sign * p**3
    if p < 1e-7:
        return series

    if x < -0.25:
        w = series
    elif branch is LambertBranch.W0:
        if x < 3.0:
            w = math.log1p(x)
        else:
            l1 = math.log(x)
            l2 = math.log(l1)
            w = l1 - l2 + l2 / l1
    else:
        l1 = math.log(-x)
        l2 = math.log(-l1)
        w = l1 - l2 + l2 / l1

    for _ in range(MAX_HALLEY_ITERATIONS):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= 4.0 * np.finfo(float).eps * max(abs(x), abs(w * ew)):
            return w
        wp1 = w + 1.0
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= dw
        if abs(dw) <= 1e-15 * (1.0 + abs(w)):
            return w
    raise ConvergenceError(f"Halley iteration for W_{branch.value}({x:g}) did not converge")


# ---------------------------------------------------------------------------
# Inputs and outputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorModelInput:
    """Tolerance and system data the error models depend on."""

    eps: float
    r_c: float
    L: float
    rho_norm: float
    C_rho: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.eps < 1.0:
            raise DomainError(f"tolerance eps={self.eps!r} must lie in (0, 1)")
        if not self.L > 0:
            raise DomainError(f"box length L={self.L!r} must be positive")
        if not 0.0 < self.r_c < 0.5 * self.L:
            raise DomainError(f"cutoff r_c={self.r_c!r} must lie in (0, L/2)")
        if not self.rho_norm > 0:
            raise DomainError("||rho|| must be positive")
        if not self.C_rho > 0:
            raise DomainError("clustering constant C_rho must be positive")

    @property
    def volume(self) -> float:
        return self.L**3

    @classmethod
    def for_system(cls, system: ParticleSystem, eps: float, r_c: float, C_rho: float = 1.0) -> "ErrorModelInput":
        return cls(eps=eps, r_c=r_c, L=system.L, rho_norm=system.rho_norm, C_rho=C_rho)


@dataclass(frozen=True)
class EwaldParameters:
    c_s: float
    c_w: float
    m: int
    P: int
    alpha: float
    predicted_split_err: float
    predicted_alias_err: float
    extrapolated: bool = False

    @property
    def predicted_err(self) -> float:
        return math.hypot(self.predicted_split_err, self.predicted_alias_err)

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class BoundEstimate:
    """A rigorous bound on the squared RMS error.

    used_curve_fit records whether an eigenvalue bracket came from fit_E; remainder is the
    part of the bound a truncated sum leaves out.
    """

    value: float
    used_curve_fit: bool = False
    remainder: float = 0.0
    c_star: float = math.nan


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


def split_error_model(c_s: float, inp: ErrorModelInput) -> float:
    """Predicted RMS split error of the direct sum with a band-matched grid."""
    return inp.rho_norm * math.sqrt(inp.r_c / inp.volume) * fit_split_amp(c_s)


def alias_error_model(c_w: float, inp: ErrorModelInput) -> float:
    """Predicted RMS aliasing error of a PSWF window with shape c_w."""
    return inp.rho_norm * math.sqrt(inp.L / inp.volume) * fit_alias_amp(c_w)


def select_cs(target: float, inp: ErrorModelInput) -> float:
    """The c_s whose split model equals target."""
    if not target > 0:
        raise DomainError("target error must be positive")
    b_s = CURVE_FITS.A_s * inp.rho_norm * math.sqrt(inp.r_c / inp.volume)
    return 0.5 * lambert_w(LambertBranch.W0, 2.0 * (b_s / target) ** 2)


def select_cw(c_s: float, inp: ErrorModelInput) -> float:
    """The c_w > 1/2 whose alias model equals the split model at c_s."""
    b_w = CURVE_FITS.A_s / CURVE_FITS.A_w * math.sqrt(inp.r_c / inp.L)
    arg = -2.0 * b_w**2 * math.exp(-2.0 * c_s) / c_s
    if arg < -INV_E:
        raise DomainError(
            f"no window shape balances the split error at c_s={c_s:.3g}; "
            "the tolerance is too loose for the error models, use a smaller eps"
        )
    return -0.5 * lambert_w(LambertBranch.WM1, arg)


def select_parameters(inp: ErrorModelInput) -> EwaldParameters:
    """Choose (c_s, c_w, m, P, alpha) so the predicted RMS error is about eps."""
    c_s = select_cs(inp.eps, inp)
    c_w = select_cw(c_s, inp)
    alpha = inp.r_c * c_w / c_s
    m = math.ceil(inp.L * c_s / (math.pi * inp.r_c))
    P = math.ceil(2.0 * alpha * m / inp.L)
    if P > m:
        raise DomainError(f"window support P={P} exceeds the grid size m={m}; decrease r_c or eps")

    extrapolated = not (in_fit_window(c_s) and in_fit_window(c_w))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FitExtrapolationWarning)
        split_err = split_error_model(c_s, inp)
        alias_err = alias_error_model(c_w, inp)
    if extrapolated:
        warnings.warn(
            f"c_s={c_s:.3g}, c_w={c_w:.3g} lie outside the fitted range of the error models",
            FitExtrapolationWarning,
            stacklevel=2,
        )
    params = EwaldParameters(c_s, c_w, m, P, alpha, split_err, alias_err, extrapolated)
    logger.info("eps=%g: c_s=%.4f c_w=%.4f m=%d P=%d alpha=%.4g", inp.eps, c_s, c_w, m, P, alpha)
    return params


def plan_from_parameters(params: EwaldParameters, inp: ErrorModelInput, workers: int = 1) -> Tuple[SplitSpec, EwaldPlan]:
    """The PSWF split and fast-sum plan described by params."""
    split = make_pswf_split(params.c_s, inp.r_c)
    window = make_window(WindowFamily.PSWF, params.m, inp.L, params.P, shape=params.c_w, alpha=params.alpha)
    return split, make_plan(split, window, workers)


# ---------------------------------------------------------------------------
# Rigorous bounds
# ---------------------------------------------------------------------------


def rigorous_split_bound(c_s: float, r_c: float, m: int, L: float, inp: ErrorModelInput) -> BoundEstimate:
    """Bound on the squared RMS split error of the direct sum over the m^3 grid.

        4 C_rho C_* r_c ||rho||^2 / (V c_s^2 psi(0)^2) * (2 pi/lambda_0^2 - c_s)
        C_* = 1 + (omega_max/omega_*)^2 c_s/(2 pi/lambda_0^2 - c_s)

    with omega_max = c_s/r_c and omega_* = min(2 pi floor(m/2)/L, omega_max) - sqrt(3) pi/L.
    """
    omega_max = c_s / r_c
    omega_trunc = min(2.0 * math.pi * (m // 2) / L, omega_max)
    omega_star = omega_trunc - math.sqrt(3.0) * math.pi / L
    if not omega_star > 0.0:
        raise DomainError(f"grid m={m} is too coarse for a split bound (omega_* = {omega_star:.3g})")

    basis = build_pswf(c_s)
    psi0 = basis.psi_at_zero
    gap = 2.0 * math.pi / basis.lambda0**2 - c_s
    used_fit = c_s > EXACT_EIGENVALUE_C_MAX or gap <= 0.0
    if used_fit:
        gap = (fit_E(c_s) * c_s * psi0 / 2.0) ** 2
    c_star = 1.0 + (omega_max / omega_star) ** 2 * c_s / gap
    value = 4.0 * inp.C_rho * c_star * r_c * inp.rho_norm**2 / (L**3 * c_s**2 * psi0**2) * gap
    return BoundEstimate(value=value, used_curve_fit=used_fit, c_star=c_star)


def _alias_sum(plan: EwaldPlan, ratio: np.ndarray) -> float:
    product = ratio[:, None, None] * ratio[None, :, None] * ratio[None, None, :] - 1.0
    return float(np.sum(plan.mhat**2 * product))


def rigorous_alias_bound(plan: EwaldPlan, inp: ErrorModelInput, r_max: Optional[int] = 3) -> BoundEstimate:
    """Bound on the squared RMS aliasing error of the grid pipeline.

        C_rho ||rho||^2 / V^2 * sum_{k != 0} |M_hat_k|^2 (prod_i rho_i(k_i) - 1)

    where rho_i(k) = sum_r c_{k+mr}^2 / c_k^2 per axis. With r_max the image sum is truncated
    and the remainder against the exact Poisson sum is reported.
    """
    if plan.window.family is WindowFamily.BSPLINE:
        raise DomainError("the aliasing bound needs a window deconvolved by its own transform")
    scale = inp.C_rho * inp.rho_norm**2 / inp.volume**2
    exact = scale * _alias_sum(plan, alias_ratio_1d(plan.window))
    if r_max is None:
        return BoundEstimate(value=exact)
    truncated = scale * _alias_sum(plan, alias_ratio_1d(plan.window, r_max=r_max))
    return BoundEstimate(value=truncated, remainder=exact - truncated)


# ---------------------------------------------------------------------------
# Units
# ---------------------------------------------------------------------------


def nondimensionalize(system: ParticleSystem) -> Tuple[ParticleSystem, float]:
    """Map the system to the unit box; returns (unit-box system, L).

    Potentials of the unit-box solve scale back by 1/L, gradients by 1/L^2, and r_c maps to
    r_c/L.
    """
    L = system.L
    return ParticleSystem(system.positions / L, system.charges, 1.0), L


def redimensionalize_potential(phi: np.ndarray, L: float) -> np.ndarray:
    return np.asarray(phi) / L


def redimensionalize_gradient(grad: np.ndarray, L: float) -> np.ndarray:
    return np.asarray(grad) / L**2
