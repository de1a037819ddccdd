"""
Ewald splits of the Laplace kernel 1/r = M(r) + R(r).

Both families are built from an even, unit-mass mollifier gamma on the line:

    Phi(r) = 2 int_0^r gamma,      M(r) = Phi(r)/r,      R(r) = (1 - Phi(r))/r

    PSWF:      gamma(x) = psi(x/r_c) / (r_c lambda_0 psi(0)),  |x| <= r_c
               gamma_hat(w) = psi(r_c w / c_s) / psi(0)        for |w| <= c_s/r_c
    Gaussian:  gamma(x) = exp(-x^2/sigma^2) / (sigma sqrt(pi))
               gamma_hat(w) = exp(-sigma^2 w^2 / 4)

The Fourier transform of M on R^3 is M_hat(w) = 4 pi gamma_hat(|w|) / |w|^2. For the PSWF split
R vanishes identically beyond r_c and M_hat has a closed form only inside the band
|w| <= c_s/r_c. Grids drop the modes outside it unless asked for the full transform, which
is then taken by quadrature over the support of gamma.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
from numpy.polynomial import Chebyshev
from numpy.polynomial import legendre as npleg
from scipy.special import erf, erfc

from .errors import ConvergenceError, DomainError, MollifierPositivityWarning, OutOfBandError
from .pswf_core import DEFAULT_TOL, PswfBasis, build_pswf, eval_pswf, quadrature_order

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Number of Gauss-Legendre nodes on [0, 1] used to verify the tabulated split function
PHI_CHECK_NODES = 2048
PHI_TABLE_TOL = 1e-12
# Relative slack when comparing a frequency with a band edge
BAND_SLACK = 1e-12
# Frequencies per block in the out-of-band quadrature
QUADRATURE_CHUNK = 4096


class SplitFamily(str, Enum):
    PSWF = "pswf"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True, eq=False)
class SplitSpec:
    """A mollifier-based kernel split.

    shape is c_s for the PSWF family and sigma for the Gaussian family. r_c is the cutoff of
    the real-space sum; for the PSWF family it is also the exact support of R.
    """

    family: SplitFamily
    r_c: float
    shape: float
    basis: Optional[PswfBasis] = None
    phi_table: Optional[Chebyshev] = None

    @property
    def band_edge(self) -> float:
        """Largest |omega| with a closed-form M_hat."""
        if self.family is SplitFamily.PSWF:
            return self.shape / self.r_c
        return math.inf


def _phi_integral(basis: PswfBasis, u: np.ndarray) -> np.ndarray:
    """int_0^u psi for each u in [0, 1], Gauss-Legendre on [0, u]."""
    nodes, weights = npleg.leggauss(quadrature_order(basis))
    half = 0.5 * np.asarray(u, dtype=float)[:, None]
    t = half * (nodes[None, :] + 1.0)
    values = eval_pswf(basis, t.ravel()).reshape(t.shape)
    return (half[:, 0]) * (values @ weights)


def make_pswf_split(c_s: float, r_c: float, tol: float = DEFAULT_TOL) -> SplitSpec:
    """PSWF split with bandlimit c_s and cutoff r_c."""
    if not r_c > 0:
        raise DomainError(f"cutoff r_c={r_c!r} must be positive")
    basis = build_pswf(c_s, tol)
    scale = 2.0 / (basis.lambda0 * basis.psi_at_zero)

    # Phi(u r_c) is a polynomial of degree 2K+1 in u, so this interpolant is exact up to rounding
    table = Chebyshev.interpolate(lambda u: scale * _phi_integral(basis, u), 2 * basis.K + 1, domain=[0.0, 1.0])

    nodes, _ = npleg.leggauss(PHI_CHECK_NODES)
    check = 0.5 * (nodes + 1.0)
    deviation = float(np.max(np.abs(table(check) - scale * _phi_integral(basis, check))))
    if deviation > PHI_TABLE_TOL:
        raise ConvergenceError(
            f"split function table for c_s={c_s:g} deviates by {deviation:.2e} from quadrature"
        )
    if np.any(eval_pswf(basis, check) <= 0.0):
        warnings.warn(
            f"psi_0 with c={c_s:g} is not positive on [0, 1]; the residual kernel may change sign",
            MollifierPositivityWarning,
            stacklevel=2,
        )
    logger.debug("PSWF split c_s=%g r_c=%g, table deviation %.2e", c_s, r_c, deviation)
    return SplitSpec(SplitFamily.PSWF, float(r_c), float(c_s), basis, table)


def gaussian_sigma(r_c: float, eps: float) -> float:
    """Gaussian width with (r_c/sigma)^2 = log(1/eps)."""
    if not 0.0 < eps < 1.0:
        raise DomainError(f"tolerance eps={eps!r} must lie in (0, 1)")
    return r_c / math.sqrt(math.log(1.0 / eps))


def make_gaussian_split(sigma: float, r_c: Optional[float] = None) -> SplitSpec:
    """Classical erf/erfc split of width sigma.

    Without r_c the real-space cutoff defaults to 6 sigma, where erfc is below 3e-17.
    """
    if not sigma > 0:
        raise DomainError(f"Gaussian width sigma={sigma!r} must be positive")
    if r_c is None:
        r_c = 6.0 * sigma
    if not r_c > 0:
        raise DomainError(f"cutoff r_c={r_c!r} must be positive")
    return SplitSpec(SplitFamily.GAUSSIAN, float(r_c), float(sigma))


def _restore(values: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(values) if np.ndim(like) == 0 else values


def split_function(spec: SplitSpec, r: ArrayLike) -> ArrayLike:
    """Phi(r) for r >= 0, clipped to [0, 1]."""
    arr = np.asarray(r, dtype=float)
    if spec.family is SplitFamily.PSWF:
        u = np.clip(arr / spec.r_c, 0.0, 1.0)
        values = np.where(u >= 1.0, 1.0, np.clip(spec.phi_table(u), 0.0, 1.0))
    else:
        values = erf(arr / spec.shape)
    return _restore(values, r)


def mollifier(spec: SplitSpec, x: ArrayLike) -> ArrayLike:
    """gamma(x) on the line."""
    arr = np.abs(np.asarray(x, dtype=float))
    if spec.family is SplitFamily.PSWF:
        basis = spec.basis
        inside = arr <= spec.r_c
        u = np.where(inside, arr / spec.r_c, 0.0)
        values = np.where(inside, eval_pswf(basis, u), 0.0) / (spec.r_c * basis.lambda0 * basis.psi_at_zero)
    else:
        sigma = spec.shape
        values = np.exp(-((arr / sigma) ** 2)) / (sigma * math.sqrt(math.pi))
    return _restore(values, x)


def self_term(spec: SplitSpec) -> float:
    """lim_{r->0} M(r) = 2 gamma(0)."""
    if spec.family is SplitFamily.PSWF:
        return 2.0 / (spec.r_c * spec.basis.lambda0)
    return 2.0 / (spec.shape * math.sqrt(math.pi))


def mollified(spec: SplitSpec, r: ArrayLike) -> ArrayLike:
    """M(r) = Phi(r)/r, continued by self_term at r = 0."""
    arr = np.asarray(r, dtype=float)
    safe = np.where(arr > 0.0, arr, 1.0)
    values = np.where(arr > 0.0, np.asarray(split_function(spec, arr)) / safe, self_term(spec))
    return _restore(values, r)


def residual(spec: SplitSpec, r: ArrayLike) -> ArrayLike:
    """R(r) = (1 - Phi(r))/r for r > 0; exactly zero beyond r_c for the PSWF family."""
    arr = np.asarray(r, dtype=float)
    if np.any(arr <= 0.0):
        raise DomainError("residual kernel is not defined at r = 0 (self pairs are excluded)")
    if spec.family is SplitFamily.PSWF:
        values = (1.0 - np.asarray(split_function(spec, arr))) / arr
        values = np.where(arr >= spec.r_c, 0.0, values)
    else:
        values = erfc(arr / spec.shape) / arr
    return _restore(values, r)


def residual_deriv(spec: SplitSpec, r: ArrayLike) -> ArrayLike:
    """dR/dr = -2 gamma(r)/r - (1 - Phi(r))/r^2."""
    arr = np.asarray(r, dtype=float)
    if np.any(arr <= 0.0):
        raise DomainError("residual kernel is not defined at r = 0 (self pairs are excluded)")
    values = -2.0 * np.asarray(mollifier(spec, arr)) / arr - np.asarray(residual(spec, arr)) / arr
    if spec.family is SplitFamily.PSWF:
        values = np.where(arr >= spec.r_c, 0.0, values)
    return _restore(values, r)


def gamma_hat(spec: SplitSpec, omega: ArrayLike) -> ArrayLike:
    """Fourier transform of the mollifier; PSWF queries beyond c_s/r_c raise OutOfBandError."""
    arr = np.abs(np.asarray(omega, dtype=float))
    if spec.family is SplitFamily.PSWF:
        edge = spec.band_edge
        if np.any(arr > edge * (1.0 + BAND_SLACK)):
            raise OutOfBandError(
                f"gamma_hat has no closed form beyond the band edge c_s/r_c = {edge:g}"
            )
        basis = spec.basis
        values = np.asarray(eval_pswf(basis, np.minimum(arr / edge, 1.0))) / basis.psi_at_zero
    else:
        values = np.exp(-0.25 * (spec.shape * arr) ** 2)
    return _restore(values, omega)


def gamma_hat_quadrature(spec: SplitSpec, omega: ArrayLike) -> ArrayLike:
    """Fourier transform of the mollifier at any omega, by quadrature over its support.

    For the PSWF family this is (2/(lambda_0 psi(0))) int_0^1 psi(u) cos(omega r_c u) du, which
    agrees with gamma_hat inside the band and continues it beyond c_s/r_c.
    """
    arr = np.abs(np.atleast_1d(np.asarray(omega, dtype=float)))
    if spec.family is not SplitFamily.PSWF:
        return gamma_hat(spec, omega)
    basis = spec.basis
    reach = float(np.max(arr, initial=0.0)) * spec.r_c
    nodes, weights = npleg.leggauss(quadrature_order(basis) + math.ceil(reach) + 32)
    u = 0.5 * (nodes + 1.0)
    w = 0.5 * weights * np.asarray(eval_pswf(basis, u))
    values = np.empty(arr.size)
    for start in range(0, arr.size, QUADRATURE_CHUNK):
        block = arr[start : start + QUADRATURE_CHUNK]
        values[start : start + QUADRATURE_CHUNK] = np.cos(np.outer(block * spec.r_c, u)) @ w
    values *= 2.0 / (basis.lambda0 * basis.psi_at_zero)
    return float(values[0]) if np.ndim(omega) == 0 else values


def mollified_hat(spec: SplitSpec, omega: ArrayLike) -> ArrayLike:
    """M_hat(omega) = 4 pi gamma_hat(omega)/omega^2 for omega > 0."""
    arr = np.abs(np.asarray(omega, dtype=float))
    if np.any(arr == 0.0):
        raise DomainError("M_hat is singular at omega = 0; the zero mode is omitted under neutrality")
    values = 4.0 * math.pi * np.asarray(gamma_hat(spec, arr)) / arr**2
    return _restore(values, omega)


def mollified_hat_grid(spec: SplitSpec, omega: np.ndarray, band_limited: bool = True) -> np.ndarray:
    """M_hat on an array of |omega| with the zero mode set to zero.

    With band_limited, PSWF modes beyond c_s/r_c are dropped as well. Without it they take
    the quadrature transform, so the grid sum converges to the full far field as m grows.
    """
    omega = np.asarray(omega, dtype=float)
    values = np.zeros_like(omega)
    if band_limited or spec.family is not SplitFamily.PSWF:
        keep = (omega > 0.0) & (omega <= spec.band_edge * (1.0 + BAND_SLACK))
        if np.any(keep):
            values[keep] = mollified_hat(spec, omega[keep])
        return values

    positive = omega > 0.0
    norms, inverse = np.unique(omega[positive], return_inverse=True)
    inside = norms <= spec.band_edge * (1.0 + BAND_SLACK)
    hat = np.empty(norms.size)
    if np.any(inside):
        hat[inside] = gamma_hat(spec, norms[inside])
    if np.any(~inside):
        hat[~inside] = gamma_hat_quadrature(spec, norms[~inside])
    values[positive] = (4.0 * math.pi * hat / norms**2)[inverse.ravel()]
    return values
