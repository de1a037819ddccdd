"""
Spreading/interpolation windows on the uniform grid x_l = h l, h = L/m.

Families:

    PSWF      phi(x) = psi(x/alpha)/psi(0) on |x| <= alpha, shape c_w (default pi P/2)
    Gaussian  phi(x) = exp(-c_g (x/alpha)^2) truncated to |x| <= alpha
    B-spline  cardinal B-spline of order P on knots h Z (SPME)

Each particle touches P consecutive nodes per axis. For the PSWF and Gaussian windows the
stencil offsets x - h l lie in [-P h/2, P h/2). The B-spline stencil is the SPME one: with
u = x/h, nodes l = floor(u) - j for j = 0..P-1 and weights M_P(u - l).

Deconvolution coefficients are per axis and multiply out over the three axes:

    m c_k = phi_hat(2 pi k/L) / h         (PSWF, Gaussian)
    m c_k = |sum_{q=0}^{P-2} M_P(q+1) exp(2 pi i k q/m)|          (B-spline, Euler factor)
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np
from numpy.polynomial import legendre as npleg

from .errors import ConfigurationError, DomainError, OutOfBandError
from .kernel_split import BAND_SLACK
from .pswf_core import DEFAULT_TOL, PswfBasis, build_pswf, eval_pswf, eval_pswf_deriv, truncation_order

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Gaussian window shape per unit support, c_g = GAUSSIAN_SHAPE_FACTOR * P
GAUSSIAN_SHAPE_FACTOR = 0.95**2 / 2.0 * math.pi
# Euler factors below this are replaced by the mean of their neighbours
EULER_FACTOR_FLOOR = 1e-7


class WindowFamily(str, Enum):
    PSWF = "pswf"
    GAUSSIAN = "gaussian"
    BSPLINE = "bspline"


@dataclass(frozen=True, eq=False)
class WindowSpec:
    """A window bound to a grid of m nodes per side on [0, L)^3.

    shape is c_w (PSWF), c_g (Gaussian) or the order P (B-spline). alpha is the half support.
    """

    family: WindowFamily
    P: int
    m: int
    L: float
    alpha: float
    shape: float
    basis: Optional[PswfBasis] = None

    @property
    def h(self) -> float:
        return self.L / self.m

    @property
    def band_edge(self) -> float:
        """Largest |omega| with a closed-form window transform."""
        if self.family is WindowFamily.PSWF:
            return self.shape / self.alpha
        return math.inf


def make_window(
    family: Union[WindowFamily, str],
    m: int,
    L: float,
    P: int,
    shape: Optional[float] = None,
    alpha: Optional[float] = None,
    tol: float = DEFAULT_TOL,
) -> WindowSpec:
    """Build a window with P-point support on an m-point grid of period L.

    alpha defaults to P h/2 and may be smaller (parameter selection shrinks it to
    r_c c_w/c_s). The B-spline family ignores shape and alpha.
    """
    family = WindowFamily(family)
    m = int(m)
    P = int(P)
    if m < 1 or not L > 0:
        raise ConfigurationError(f"grid needs m >= 1 and L > 0 (got m={m}, L={L!r})")
    if P < 1 or P > m:
        raise ConfigurationError(f"window support P={P} must satisfy 1 <= P <= m={m}")
    h = L / m
    max_alpha = 0.5 * P * h

    if family is WindowFamily.BSPLINE:
        if P < 2:
            raise ConfigurationError("B-spline windows need order P >= 2")
        return WindowSpec(family, P, m, float(L), max_alpha, float(P))

    if alpha is None:
        alpha = max_alpha
    if not 0.0 < alpha <= max_alpha * (1.0 + BAND_SLACK):
        raise ConfigurationError(
            f"window half support alpha={alpha:g} must lie in (0, P h/2 = {max_alpha:g}]"
        )
    alpha = min(float(alpha), max_alpha)

    if family is WindowFamily.PSWF:
        c_w = 0.5 * math.pi * P if shape is None else float(shape)
        return WindowSpec(family, P, m, float(L), alpha, c_w, build_pswf(c_w, tol))

    c_g = GAUSSIAN_SHAPE_FACTOR * P if shape is None else float(shape)
    if not c_g > 0:
        raise ConfigurationError(f"Gaussian window shape c_g={c_g!r} must be positive")
    return WindowSpec(family, P, m, float(L), alpha, c_g)


def _restore(values: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(values) if np.ndim(like) == 0 else values


# ---------------------------------------------------------------------------
# Cardinal B-splines
# ---------------------------------------------------------------------------


def cardinal_bspline(order: int, t: ArrayLike) -> ArrayLike:
    """M_order(t): the cardinal B-spline supported on [0, order).

    Uses M_n(t) = (t M_{n-1}(t) + (n - t) M_{n-1}(t - 1)) / (n - 1), carried for all shifts
    t - j at once.
    """
    arr = np.asarray(t, dtype=float)
    shifts = arr[..., None] - np.arange(order)
    vals = ((shifts >= 0.0) & (shifts < 1.0)).astype(float)
    for n in range(2, order + 1):
        s = shifts[..., : order - n + 1]
        vals = (s * vals[..., :-1] + (n - s) * vals[..., 1:]) / (n - 1)
    return _restore(vals[..., 0], t)


def cardinal_bspline_deriv(order: int, t: ArrayLike) -> ArrayLike:
    """M_order'(t) = M_{order-1}(t) - M_{order-1}(t - 1)."""
    arr = np.asarray(t, dtype=float)
    values = np.asarray(cardinal_bspline(order - 1, arr)) - np.asarray(cardinal_bspline(order - 1, arr - 1.0))
    return _restore(values, t)


# ---------------------------------------------------------------------------
# Window values and transforms
# ---------------------------------------------------------------------------


def window_1d(spec: WindowSpec, x: ArrayLike) -> ArrayLike:
    """phi(x); the B-spline window is centred, B_P(x/h) = M_P(x/h + P/2)."""
    arr = np.asarray(x, dtype=float)
    if spec.family is WindowFamily.BSPLINE:
        values = np.asarray(cardinal_bspline(spec.P, arr / spec.h + 0.5 * spec.P))
        return _restore(values, x)
    inside = np.abs(arr) <= spec.alpha
    u = np.where(inside, arr / spec.alpha, 0.0)
    if spec.family is WindowFamily.PSWF:
        values = np.where(inside, eval_pswf(spec.basis, u), 0.0) / spec.basis.psi_at_zero
    else:
        values = np.where(inside, np.exp(-spec.shape * u * u), 0.0)
    return _restore(values, x)


def window_deriv_1d(spec: WindowSpec, x: ArrayLike) -> ArrayLike:
    """phi'(x)."""
    arr = np.asarray(x, dtype=float)
    if spec.family is WindowFamily.BSPLINE:
        values = np.asarray(cardinal_bspline_deriv(spec.P, arr / spec.h + 0.5 * spec.P)) / spec.h
        return _restore(values, x)
    inside = np.abs(arr) <= spec.alpha
    u = np.where(inside, arr / spec.alpha, 0.0)
    if spec.family is WindowFamily.PSWF:
        values = np.where(inside, eval_pswf_deriv(spec.basis, u), 0.0) / (
            spec.alpha * spec.basis.psi_at_zero
        )
    else:
        values = np.where(inside, -2.0 * spec.shape * u / spec.alpha * np.exp(-spec.shape * u * u), 0.0)
    return _restore(values, x)


def window_3d(spec: WindowSpec, x: np.ndarray) -> np.ndarray:
    """Tensor-product window at points x of shape (..., 3)."""
    x = np.asarray(x, dtype=float)
    return np.prod(np.asarray(window_1d(spec, x)), axis=-1)


def window_grad_3d(spec: WindowSpec, x: np.ndarray) -> np.ndarray:
    """Gradient of the tensor-product window, shape (..., 3)."""
    x = np.asarray(x, dtype=float)
    values = np.asarray(window_1d(spec, x))
    derivs = np.asarray(window_deriv_1d(spec, x))
    grad = np.empty_like(values)
    for d in range(3):
        others = [e for e in range(3) if e != d]
        grad[..., d] = derivs[..., d] * values[..., others[0]] * values[..., others[1]]
    return grad


def window_hat_1d(spec: WindowSpec, omega: ArrayLike) -> ArrayLike:
    """Closed-form transform int phi(x) exp(i omega x) dx.

    PSWF: alpha lambda_0 psi(alpha omega/c_w)/psi(0), only for |omega| <= c_w/alpha.
    Gaussian: the untruncated transform alpha sqrt(pi/c_g) exp(-omega^2 alpha^2/(4 c_g)).
    B-spline: h sinc(omega h/2pi)^P.
    """
    arr = np.abs(np.asarray(omega, dtype=float))
    if spec.family is WindowFamily.PSWF:
        edge = spec.band_edge
        if np.any(arr > edge * (1.0 + BAND_SLACK)):
            raise OutOfBandError(f"PSWF window transform has no closed form beyond c_w/alpha = {edge:g}")
        basis = spec.basis
        values = (
            spec.alpha * basis.lambda0 * np.asarray(eval_pswf(basis, np.minimum(arr / edge, 1.0))) / basis.psi_at_zero
        )
    elif spec.family is WindowFamily.GAUSSIAN:
        c_g = spec.shape
        values = spec.alpha * math.sqrt(math.pi / c_g) * np.exp(-((arr * spec.alpha) ** 2) / (4.0 * c_g))
    else:
        values = spec.h * np.sinc(arr * spec.h / (2.0 * math.pi)) ** spec.P
    return _restore(values, omega)


def truncated_window_hat_1d(spec: WindowSpec, omega: ArrayLike, order: Optional[int] = None) -> ArrayLike:
    """Transform of the window exactly as it is applied (truncated to its support), any omega.

    Gauss-Legendre on P equal pieces of [-alpha, alpha]; B-spline knots fall on piece ends.
    """
    arr = np.abs(np.atleast_1d(np.asarray(omega, dtype=float)))
    pieces = spec.P
    width = 2.0 * spec.alpha / pieces
    if order is None:
        base = max(64, 2 * truncation_order(spec.shape)) if spec.family is WindowFamily.PSWF else 64
        order = base + math.ceil(float(np.max(arr, initial=0.0)) * width) + 32
    nodes, weights = npleg.leggauss(order)
    left = -spec.alpha + width * np.arange(pieces)
    x = (left[:, None] + 0.5 * width * (nodes[None, :] + 1.0)).ravel()
    w = np.tile(0.5 * width * weights, pieces)
    phi = np.asarray(window_1d(spec, x))
    values = np.cos(np.outer(arr, x)) @ (w * phi)
    return _restore(values if np.ndim(omega) else values[0], omega)


# ---------------------------------------------------------------------------
# Deconvolution coefficients
# ---------------------------------------------------------------------------


def grid_wavenumbers(m: int) -> np.ndarray:
    """Integer wavenumbers k in FFT order."""
    return np.fft.fftfreq(m, 1.0 / m)


def euler_factors(P: int, m: int) -> np.ndarray:
    """|sum_{q=0}^{P-2} M_P(q+1) exp(2 pi i k q/m)| for k in FFT order."""
    k = grid_wavenumbers(m)
    q = np.arange(P - 1)
    weights = np.asarray(cardinal_bspline(P, q + 1.0))
    factors = np.abs(np.exp(2j * math.pi * np.outer(k, q) / m) @ weights)
    small = factors < EULER_FACTOR_FLOOR
    if np.any(small):
        neighbours = 0.5 * (np.roll(factors, 1) + np.roll(factors, -1))
        factors = np.where(small, neighbours, factors)
    return factors


def grid_coefficients_1d(spec: WindowSpec, omega_limit: float = math.inf) -> Tuple[np.ndarray, np.ndarray]:
    """m c_k per axis in FFT order, and a mask of the entries that were evaluated.

    Only |omega_k| <= omega_limit is evaluated; other entries are 1.0 and masked out.
    """
    k = grid_wavenumbers(spec.m)
    if spec.family is WindowFamily.BSPLINE:
        return euler_factors(spec.P, spec.m), np.ones(spec.m, dtype=bool)
    omega = 2.0 * math.pi * k / spec.L
    needed = np.abs(omega) <= omega_limit * (1.0 + BAND_SLACK)
    values = np.ones(spec.m)
    if np.any(needed):
        values[needed] = np.asarray(window_hat_1d(spec, omega[needed])) / spec.h
    return values, needed


def fourier_coeff(spec: WindowSpec, k: np.ndarray) -> ArrayLike:
    """c_k for integer wavevectors k of shape (..., 3).

    PSWF and Gaussian: (1/V) prod_i phi_hat(2 pi k_i/L). B-spline: the SPME Euler-factor
    coefficient (1/m^3) prod_i |b(k_i)|.
    """
    k = np.asarray(k, dtype=float)
    if spec.family is WindowFamily.BSPLINE:
        factors = euler_factors(spec.P, spec.m)
        index = np.mod(k.astype(int), spec.m)
        values = np.prod(factors[index], axis=-1) / spec.m**3
    else:
        omega = 2.0 * math.pi * k / spec.L
        values = np.prod(np.asarray(window_hat_1d(spec, omega)), axis=-1) / spec.L**3
    return float(values) if np.ndim(values) == 0 else values


# ---------------------------------------------------------------------------
# Stencils
# ---------------------------------------------------------------------------


def stencil_1d(
    spec: WindowSpec, coords: np.ndarray, with_derivative: bool = False
) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Grid indices (mod m), weights and optionally d/dx weights for 1-D coordinates.

    Shapes are (n, P). The weight of node l is phi(x - h l) (periodized), or M_P(x/h - l) for
    the B-spline family.
    """
    coords = np.asarray(coords, dtype=float)
    t = coords / spec.h
    j = np.arange(spec.P)
    if spec.family is WindowFamily.BSPLINE:
        base = np.floor(t)
        nodes = base[:, None] - j[None, :]
        arg = t[:, None] - nodes
        weights = np.asarray(cardinal_bspline(spec.P, arg))
        derivs = np.asarray(cardinal_bspline_deriv(spec.P, arg)) / spec.h if with_derivative else None
    else:
        top = np.floor(t + 0.5 * spec.P)
        nodes = top[:, None] - j[None, :]
        offset = (t[:, None] - nodes) * spec.h
        weights = np.asarray(window_1d(spec, offset))
        derivs = np.asarray(window_deriv_1d(spec, offset)) if with_derivative else None
    indices = np.mod(nodes.astype(np.int64), spec.m)
    return indices, weights, derivs


# ---------------------------------------------------------------------------
# Aliasing
# ---------------------------------------------------------------------------


def _cell_breakpoints(spec: WindowSpec) -> np.ndarray:
    """Points of [0, h] where the periodized stencil weights may be non-smooth."""
    h = spec.h
    points = {0.0, 0.5 * h, h}
    if spec.family is not WindowFamily.BSPLINE:
        for edge in (spec.alpha, -spec.alpha):
            points.add(math.fmod(edge, h) % h)
    return np.array(sorted(p for p in points if 0.0 <= p <= h))


def alias_ratio_1d(spec: WindowSpec, r_max: Optional[int] = None, order: int = 64) -> np.ndarray:
    """sum_r c_{k+mr}^2 / c_k^2 per axis for k in FFT order (the r = 0 term included).

    With r_max=None the sum over all r is exact: by Poisson summation it equals the cell
    average of |(1/m) sum_l phi(x - h l) exp(i omega_k h l)|^2, integrated piecewise. With
    r_max the sum stops at |r| <= r_max and uses truncated_window_hat_1d.
    """
    m, L = spec.m, spec.L
    k = grid_wavenumbers(m)
    if spec.family is WindowFamily.BSPLINE:
        center = np.asarray(window_hat_1d(spec, 2.0 * math.pi * k / L)) / L
    else:
        center = np.asarray(truncated_window_hat_1d(spec, 2.0 * math.pi * k / L)) / L
    if np.any(center == 0.0):
        raise DomainError("window transform vanishes on the grid; aliasing ratio undefined")

    if r_max is not None:
        shifts = np.arange(-int(r_max), int(r_max) + 1)
        q = (k[:, None] + m * shifts[None, :]).ravel()
        coeffs = np.asarray(truncated_window_hat_1d(spec, 2.0 * math.pi * q / L)) / L
        total = np.sum(coeffs.reshape(m, shifts.size) ** 2, axis=1)
        return total / center**2

    nodes, weights = npleg.leggauss(order)
    breaks = _cell_breakpoints(spec)
    total = np.zeros(m)
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a <= 0.0:
            continue
        x = a + 0.5 * (b - a) * (nodes + 1.0)
        indices, wts, _ = stencil_1d(spec, x)
        # G_k(x) = (1/m) sum_l phi(x - h l) exp(2 pi i k l/m)
        phases = np.exp(2j * math.pi * indices[:, :, None] * k[None, None, :] / m)
        g = np.einsum("ij,ijk->ik", wts, phases) / m
        total += 0.5 * (b - a) * (weights @ np.abs(g) ** 2)
    return total / spec.h / center**2
