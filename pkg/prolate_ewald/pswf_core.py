"""
Prolate spheroidal wavefunction of order zero.

psi_0^c is the even eigenfunction of the prolate differential operator

    -((1 - x^2) psi')' + c^2 x^2 psi = chi_0 psi      on [-1, 1]

with the smallest eigenvalue chi_0. It is also the eigenfunction of the bandlimited Fourier
integral operator with eigenvalue lambda_0:

    lambda_0 psi(s) = int_{-1}^{1} psi(t) exp(i c s t) dt

The function is stored as a short even-Legendre series

    psi_0^c(x) = sum_k a_{2k} P_{2k}(x),     k = 0..K,  K = max(ceil(1.2 c), 20)

whose coefficients come from the symmetric tridiagonal matrix obtained by substituting the
series into the differential equation (normalized Legendre basis). The smallest eigenvalue is
bracketed by Sturm bisection and its eigenvector refined by shifted inverse iteration.

Normalization: int psi^2 = 1, psi(0) > 0.

The curve fits at the bottom model quantities that lose all digits to cancellation for
c above ~17; they are valid on 7 <= c <= 35 and warn outside that window.
"""

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.linalg import LinAlgError, eigvalsh_tridiagonal, solve_banded

from .errors import ConvergenceError, DomainError, FitExtrapolationWarning

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

C_MIN = 0.1
C_MAX = 60.0
MIN_TOL = 1e-14
DEFAULT_TOL = 1e-14

FIT_C_MIN = 7.0
FIT_C_MAX = 35.0

MAX_INVERSE_ITERATIONS = 50
MAX_RETRIES = 3
# Relative distance of the inverse-iteration shift below the bisected eigenvalue
SHIFT_OFFSET = 1e-10


@dataclass(frozen=True)
class CurveFitConstants:
    """Fitted amplitudes: model A * c**p (times exp(-c) where noted)."""

    A_s: float = 6.91
    A_w: float = 2.78
    psi0_at0: Tuple[float, float] = (0.736, 0.2548)
    psi0_at1: Tuple[float, float] = (2.540, 0.75)  # * exp(-c)
    ratio10: Tuple[float, float] = (3.424, 0.5)  # * exp(-c)
    Efit: Tuple[float, float] = (6.906, -0.5)  # * exp(-c)


CURVE_FITS = CurveFitConstants()


@dataclass(frozen=True, eq=False)
class PswfBasis:
    """One evaluable psi_0^c.

    coeffs holds a_{2k} (standard Legendre normalization, k = 0..K). legendre and derivative
    are the dense series of psi and psi' in P_0..P_{2K}, kept for the evaluators.
    """

    c: float
    coeffs: np.ndarray
    chi0: float
    lambda0: float
    K: int
    psi_at_zero: float
    legendre: np.ndarray = field(repr=False)
    derivative: np.ndarray = field(repr=False)
    iterations: int = 0

    @property
    def concentration(self) -> float:
        """Fraction (c/2pi) lambda_0^2 of the energy kept inside the band."""
        return self.c * self.lambda0**2 / (2.0 * math.pi)


def truncation_order(c: float) -> int:
    """Number of even Legendre terms (minus one) needed for bandlimit c."""
    return max(math.ceil(1.2 * c), 20)


def quadrature_order(basis_or_K: Union[PswfBasis, int]) -> int:
    """Gauss-Legendre order used for integrals of psi."""
    K = basis_or_K.K if isinstance(basis_or_K, PswfBasis) else int(basis_or_K)
    return max(64, 2 * K + 1)


def _prolate_matrix(c: float, K: int) -> Tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the prolate operator in normalized even Legendre."""
    n = 2.0 * np.arange(K + 1)
    diag = n * (n + 1.0) + c * c * (2.0 * n * (n + 1.0) - 1.0) / ((2.0 * n + 3.0) * (2.0 * n - 1.0))
    nk = n[:-1]
    off = c * c * (nk + 1.0) * (nk + 2.0) / ((2.0 * nk + 3.0) * np.sqrt((2.0 * nk + 1.0) * (2.0 * nk + 5.0)))
    return diag, off


def _inverse_iteration(
    diag: np.ndarray, off: np.ndarray, shift: float, tol: float
) -> Tuple[np.ndarray, int, float]:
    """Refine the eigenvector nearest to shift. Returns (vector, iterations, last angle)."""
    size = diag.size
    banded = np.zeros((3, size))
    banded[0, 1:] = off
    banded[1] = diag - shift
    banded[2, :-1] = off

    # Components alternate in sign for the ground state; this start is never orthogonal to it
    v = (-1.0) ** np.arange(size) / math.sqrt(size)
    floor = 64.0 * np.finfo(float).eps * math.sqrt(size)
    angle = math.inf
    for iteration in range(1, MAX_INVERSE_ITERATIONS + 1):
        w = solve_banded((1, 1), banded, v, check_finite=False)
        w /= np.linalg.norm(w)
        if np.dot(w, v) < 0.0:
            w = -w
        previous = angle
        angle = float(np.linalg.norm(w - v))
        v = w
        if angle < tol:
            return v, iteration, angle
        # Stagnation at rounding level counts as converged
        if angle <= floor and angle >= previous:
            return v, iteration, angle
    return v, MAX_INVERSE_ITERATIONS, angle


def _legendre_series(x: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Sum coeffs[n] P_n(x) with the three-term recurrence."""
    p_prev = np.ones_like(x)
    total = coeffs[0] * p_prev
    if coeffs.size == 1:
        return total
    p = x.copy()
    total = total + coeffs[1] * p
    for n in range(1, coeffs.size - 1):
        p_prev, p = p, ((2 * n + 1) * x * p - n * p_prev) / (n + 1)
        if coeffs[n + 1] != 0.0:
            total = total + coeffs[n + 1] * p
    return total


def _as_unit_interval(x: ArrayLike) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) > 1.0 + 1e-14) or np.any(np.isnan(arr)):
        raise DomainError("PSWF evaluation requires |x| <= 1")
    return np.clip(arr, -1.0, 1.0)


def _restore_shape(values: np.ndarray, x: ArrayLike) -> ArrayLike:
    if np.ndim(x) == 0:
        return float(values)
    return values


def eval_pswf(basis: PswfBasis, x: ArrayLike) -> ArrayLike:
    """Evaluate psi_0^c at x in [-1, 1]."""
    arr = _as_unit_interval(x)
    # Evaluating at |x| makes psi(x) == psi(-x) bit for bit
    values = _legendre_series(np.abs(arr), basis.legendre)
    return _restore_shape(values, x)


def eval_pswf_deriv(basis: PswfBasis, x: ArrayLike) -> ArrayLike:
    """Evaluate psi_0^c'(x) for x in [-1, 1]."""
    arr = _as_unit_interval(x)
    values = np.sign(arr) * _legendre_series(np.abs(arr), basis.derivative)
    return _restore_shape(values, x)


def compute_lambda0(basis: PswfBasis) -> float:
    """lambda_0 = (1/psi(0)) int_{-1}^{1} psi by Gauss-Legendre quadrature."""
    if basis.psi_at_zero == 0.0:
        raise DomainError("lambda_0 is undefined when psi(0) = 0")
    nodes, weights = npleg.leggauss(quadrature_order(basis))
    integral = float(np.dot(weights, _legendre_series(np.abs(nodes), basis.legendre)))
    value = integral / basis.psi_at_zero
    # 1 - (c/2pi) lambda_0^2 drops below one ulp near c = 20; keep lambda_0 strictly under the asymptote
    ceiling = math.sqrt(2.0 * math.pi / basis.c)
    if value >= ceiling:
        value = float(np.nextafter(ceiling, 0.0))
    return value


def _solve_ground_state(c: float, K: int, tol: float) -> Tuple[float, np.ndarray, int]:
    diag, off = _prolate_matrix(c, K)
    chi0 = float(
        eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, 0), lapack_driver="stebz")[0]
    )
    diagnostics = []
    for attempt in range(MAX_RETRIES):
        offset = SHIFT_OFFSET * 100.0**attempt * max(1.0, abs(chi0))
        try:
            vector, iterations, angle = _inverse_iteration(diag, off, chi0 - offset, tol)
        except (LinAlgError, ValueError) as exc:
            diagnostics.append(f"attempt {attempt}: {exc}")
            continue
        if angle < tol or iterations < MAX_INVERSE_ITERATIONS:
            logger.debug(
                "psi_0 c=%g K=%d chi0=%.16g converged in %d iterations (angle %.2e)",
                c, K, chi0, iterations, angle,
            )
            return chi0, vector, iterations
        diagnostics.append(f"attempt {attempt}: angle {angle:.3e} after {iterations} iterations")
    raise ConvergenceError(
        f"inverse iteration for psi_0 with c={c:g}, K={K} did not converge: " + "; ".join(diagnostics)
    )


@lru_cache(maxsize=256)
def _build_cached(c: float, tol: float) -> PswfBasis:
    K = truncation_order(c)
    chi0, vector, iterations = _solve_ground_state(c, K, tol)

    degrees = 2 * np.arange(K + 1)
    coeffs = vector * np.sqrt((2.0 * degrees + 1.0) / 2.0)

    dense = np.zeros(2 * K + 1)
    dense[::2] = coeffs
    nodes, weights = npleg.leggauss(quadrature_order(K))
    norm = math.sqrt(float(np.dot(weights, _legendre_series(np.abs(nodes), dense) ** 2)))
    dense /= norm
    psi0 = float(_legendre_series(np.zeros(1), dense)[0])
    if psi0 < 0.0:
        dense = -dense
        psi0 = -psi0

    dense.setflags(write=False)
    derivative = npleg.legder(dense)
    derivative.setflags(write=False)
    even = dense[::2].copy()
    even.setflags(write=False)

    basis = PswfBasis(
        c=c,
        coeffs=even,
        chi0=chi0,
        lambda0=math.nan,
        K=K,
        psi_at_zero=psi0,
        legendre=dense,
        derivative=derivative,
        iterations=iterations,
    )
    return replace(basis, lambda0=compute_lambda0(basis))


def build_pswf(c: float, tol: float = DEFAULT_TOL) -> PswfBasis:
    """Build psi_0^c for 0.1 <= c <= 60.

    tol is the target angle between successive inverse-iteration eigenvectors. Bases are
    cached per (c, tol); they are immutable and safe to share between threads.
    """
    c = float(c)
    tol = float(tol)
    if not C_MIN <= c <= C_MAX or math.isnan(c):
        raise DomainError(f"bandlimit c={c:g} outside the supported range [{C_MIN}, {C_MAX}]")
    if not tol >= MIN_TOL:
        raise DomainError(f"tolerance {tol:g} is below the attainable {MIN_TOL:g}")
    return _build_cached(c, tol)


def exact_E(basis: PswfBasis) -> float:
    """(2/(c psi(0))) sqrt(2pi/lambda_0^2 - c); only meaningful for c below ~17."""
    c = basis.c
    gap = 2.0 * math.pi / basis.lambda0**2 - c
    return 2.0 / (c * basis.psi_at_zero) * math.sqrt(max(gap, 0.0))


def write_basis_csv(basis: PswfBasis, path: Union[str, Path]) -> None:
    """Dump (c, chi0, lambda0) and the coefficient vector for debugging."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["c", "chi0", "lambda0", "K"])
        writer.writerow([repr(basis.c), repr(basis.chi0), repr(basis.lambda0), basis.K])
        writer.writerow(["k", "a_2k"])
        for k, a in enumerate(basis.coeffs):
            writer.writerow([k, repr(float(a))])


# ---------------------------------------------------------------------------
# Curve fits
# ---------------------------------------------------------------------------


def in_fit_window(c: float) -> bool:
    return FIT_C_MIN <= c <= FIT_C_MAX


def _check_fit_window(name: str, c: float) -> None:
    if not in_fit_window(c):
        warnings.warn(
            f"{name}({c:g}) extrapolates beyond the fitted range [{FIT_C_MIN:g}, {FIT_C_MAX:g}]",
            FitExtrapolationWarning,
            stacklevel=3,
        )


def fit_lambda0(c: float) -> float:
    """lambda_0 ~ sqrt(2pi/c)."""
    _check_fit_window("fit_lambda0", c)
    return math.sqrt(2.0 * math.pi / c)


def fit_psi0_at0(c: float) -> float:
    _check_fit_window("fit_psi0_at0", c)
    amp, power = CURVE_FITS.psi0_at0
    return amp * c**power


def fit_psi0_at1(c: float) -> float:
    _check_fit_window("fit_psi0_at1", c)
    amp, power = CURVE_FITS.psi0_at1
    return amp * c**power * math.exp(-c)


def fit_ratio10(c: float) -> float:
    """psi(1)/psi(0), the edge value of the normalized PSWF."""
    _check_fit_window("fit_ratio10", c)
    amp, power = CURVE_FITS.ratio10
    return amp * c**power * math.exp(-c)


def fit_E(c: float) -> float:
    _check_fit_window("fit_E", c)
    amp, power = CURVE_FITS.Efit
    return amp * c**power * math.exp(-c)


def fit_split_amp(c: float) -> float:
    """A_s c^(-1/2) e^(-c): split error per unit sqrt(r_c) ||rho|| / sqrt(V)."""
    _check_fit_window("fit_split_amp", c)
    return CURVE_FITS.A_s * math.exp(-c) / math.sqrt(c)


def fit_alias_amp(c: float) -> float:
    """A_w c^(1/2) e^(-c): aliasing error per unit sqrt(L) ||rho|| / sqrt(V)."""
    _check_fit_window("fit_alias_amp", c)
    return CURVE_FITS.A_w * math.sqrt(c) * math.exp(-c)
