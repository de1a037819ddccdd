"""
Periodic Coulomb potential, energy and forces by Ewald summation.

    phi_i = phi_i^local + phi_i^far - self_term * rho_i

The local part sums R over neighbours within r_c. The far part is the Fourier series of M,

    phi_i^far = sum_{k != 0} (1/V) M_hat(k) rho_hat(k) exp(-i omega_k . x_i),
    rho_hat(k) = sum_j rho_j exp(+i omega_k . x_j),     omega_k = 2 pi k / L,

summed either directly over the m^3 modes in O(n m^3), or through the grid: spread the
charges with a window, FFT, scale by (1/V) M_hat / (m^3 c_k)^2, FFT back and interpolate with
the same window. Arrays over k are kept in FFT order; k = np.fft.fftfreq(m, 1/m).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.fft

from .cell_list import neighbor_pairs
from .errors import DomainError, OutOfBandError, PlanConsistencyError
from .kernel_split import SplitFamily, SplitSpec, mollified_hat_grid, residual, residual_deriv, self_term
from .particles import ParticleSystem
from .window_functions import WindowFamily, WindowSpec, grid_coefficients_1d, grid_wavenumbers, stencil_1d

logger = logging.getLogger(__name__)

# Stencil entries (particles * P^3) handled per chunk
CHUNK_ENTRIES = 1 << 20
# Particles per chunk in the direct sums (each holds an m^2 slab)
DIRECT_CHUNK = 64


@dataclass(frozen=True, eq=False)
class EwaldPlan:
    """Split, window and the precomputed diagonal scaling of the grid pipeline."""

    split: SplitSpec
    window: WindowSpec
    scaling: np.ndarray
    mhat: np.ndarray
    workers: int = 1

    @property
    def m(self) -> int:
        return self.window.m

    @property
    def L(self) -> float:
        return self.window.L

    @property
    def h(self) -> float:
        return self.window.h

    @property
    def volume(self) -> float:
        return self.window.L**3


def mode_norms(m: int, L: float) -> np.ndarray:
    """|omega_k| on the m^3 grid in FFT order."""
    omega = 2.0 * math.pi * grid_wavenumbers(m) / L
    sq = omega**2
    return np.sqrt(sq[:, None, None] + sq[None, :, None] + sq[None, None, :])


def make_plan(
    split: SplitSpec,
    window: WindowSpec,
    workers: int = 1,
    band_limited: bool = True,
    warn_unmatched: bool = True,
) -> EwaldPlan:
    """Precompute the scaling of the grid pipeline; reject inconsistent combinations.

    band_limited drops PSWF split modes beyond c_s/r_c (see mollified_hat_grid). A PSWF/PSWF
    plan whose grid is not matched to the split band logs a warning unless warn_unmatched is
    off, as it is for sweeps that scan m on purpose.
    """
    m, L = window.m, window.L
    if window.P > m:
        raise PlanConsistencyError(f"window support P={window.P} exceeds the grid size m={m}")
    mhat = mollified_hat_grid(split, mode_norms(m, L), band_limited)
    active = mhat != 0.0

    axis_omega = np.abs(2.0 * math.pi * grid_wavenumbers(m) / L)
    used = active.any(axis=(1, 2)) | active.any(axis=(0, 2)) | active.any(axis=(0, 1))
    limit = float(np.max(axis_omega[used], initial=0.0))
    try:
        coeffs, evaluated = grid_coefficients_1d(window, omega_limit=limit)
    except OutOfBandError as exc:
        raise PlanConsistencyError(
            f"window band c_w/alpha = {window.band_edge:g} does not cover the split modes up to "
            f"|omega| = {limit:g}"
        ) from exc
    if np.any(used & ~evaluated) or np.any(coeffs[used] <= 0.0):
        raise PlanConsistencyError("window transform is not available or vanishes on an active mode")

    denom = coeffs[:, None, None] * coeffs[None, :, None] * coeffs[None, None, :]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        scaling = np.where(active, mhat / (L**3 * denom**2), 0.0)
    if not np.all(np.isfinite(scaling)):
        raise PlanConsistencyError("deconvolution produced non-finite scaling entries")

    if warn_unmatched and split.family is SplitFamily.PSWF and window.family is WindowFamily.PSWF:
        matched = L * split.shape / (math.pi * split.r_c)
        if abs(m - matched) > 1.0:
            logger.warning("grid m=%d is not matched to the split band (L c_s/(pi r_c) = %.2f)", m, matched)
    logger.debug(
        "plan: m=%d P=%d %s/%s, %d active modes",
        m, window.P, split.family.value, window.family.value, int(np.count_nonzero(active)),
    )
    scaling.setflags(write=False)
    mhat.setflags(write=False)
    return EwaldPlan(split, window, scaling, mhat, max(1, int(workers)))


# ---------------------------------------------------------------------------
# Real-space sum
# ---------------------------------------------------------------------------


def real_space_sum(system: ParticleSystem, split: SplitSpec) -> np.ndarray:
    """phi_i^local = sum_j R(|x_i - x_j|) rho_j over minimum-image pairs with r < r_c."""
    i, j, _, r = neighbor_pairs(system.positions, system.L, split.r_c)
    if r.size == 0:
        return np.zeros(system.n)
    values = np.asarray(residual(split, r)) * system.charges[j]
    return np.bincount(i, weights=values, minlength=system.n)


def real_space_gradient(system: ParticleSystem, split: SplitSpec) -> np.ndarray:
    """grad_i phi_i^local, shape (n, 3)."""
    i, j, d, r = neighbor_pairs(system.positions, system.L, split.r_c)
    grad = np.zeros((system.n, 3))
    if r.size == 0:
        return grad
    # d = x_j - x_i, so d|x_i - x_j|/dx_i = -d/r
    scale = -np.asarray(residual_deriv(split, r)) * system.charges[j] / r
    for axis in range(3):
        grad[:, axis] = np.bincount(i, weights=scale * d[:, axis], minlength=system.n)
    return grad


# ---------------------------------------------------------------------------
# Direct Fourier sum
# ---------------------------------------------------------------------------


def _axis_phases(coords: np.ndarray, m: int, L: float, sign: float) -> np.ndarray:
    """exp(sign 2 pi i k x / L) for each coordinate and k in FFT order, shape (n, m)."""
    return np.exp(sign * 2j * math.pi * np.outer(coords, grid_wavenumbers(m)) / L)


def structure_factor(system: ParticleSystem, m: int) -> np.ndarray:
    """rho_hat(k) = sum_j rho_j exp(+i omega_k . x_j) on the m^3 grid."""
    result = np.zeros((m, m, m), dtype=complex)
    for start in range(0, system.n, DIRECT_CHUNK):
        stop = min(start + DIRECT_CHUNK, system.n)
        pos = system.positions[start:stop]
        ex, ey, ez = (_axis_phases(pos[:, d], m, system.L, 1.0) for d in range(3))
        slab = (system.charges[start:stop, None] * ex)[:, :, None] * ey[:, None, :]
        result += np.tensordot(slab, ez, axes=([0], [0]))
    return result


def _evaluate_modes(coeffs: np.ndarray, positions: np.ndarray, L: float, axis: Optional[int] = None) -> np.ndarray:
    """Re sum_k coeffs[k] exp(-i omega_k . x) (times -i omega_{k,axis} when axis is given)."""
    m = coeffs.shape[0]
    omega = 2.0 * math.pi * grid_wavenumbers(m) / L
    out = np.empty(positions.shape[0])
    for start in range(0, positions.shape[0], DIRECT_CHUNK):
        stop = min(start + DIRECT_CHUNK, positions.shape[0])
        pos = positions[start:stop]
        phases = [_axis_phases(pos[:, d], m, L, -1.0) for d in range(3)]
        if axis is not None:
            phases[axis] = phases[axis] * (-1j * omega)[None, :]
        ex, ey, ez = phases
        t = np.einsum("abc,jc->jab", coeffs, ez)
        t = np.einsum("jab,jb->ja", t, ey)
        out[start:stop] = np.einsum("ja,ja->j", t, ex).real
    return out


def _far_coefficients(system: ParticleSystem, split: SplitSpec, m: int) -> np.ndarray:
    if m < 1:
        raise DomainError(f"grid size m={m} must be positive")
    mhat = mollified_hat_grid(split, mode_norms(m, system.L))
    return mhat * structure_factor(system, m) / system.volume


def direct_fourier_sum(system: ParticleSystem, split: SplitSpec, m: int) -> np.ndarray:
    """phi^far by explicit summation over the m^3 modes (zero mode and out-of-band modes omitted)."""
    coeffs = _far_coefficients(system, split, int(m))
    return _evaluate_modes(coeffs, system.positions, system.L)


def direct_fourier_gradient(system: ParticleSystem, split: SplitSpec, m: int) -> np.ndarray:
    coeffs = _far_coefficients(system, split, int(m))
    return np.column_stack([_evaluate_modes(coeffs, system.positions, system.L, axis) for axis in range(3)])


# ---------------------------------------------------------------------------
# Grid pipeline
# ---------------------------------------------------------------------------


def _chunks(n: int, P: int) -> List[Tuple[int, int]]:
    size = max(1, CHUNK_ENTRIES // P**3)
    return [(start, min(start + size, n)) for start in range(0, n, size)]


def _run_chunks(fn: Callable[[int, int], np.ndarray], chunks: List[Tuple[int, int]], workers: int) -> List[np.ndarray]:
    if workers <= 1 or len(chunks) <= 1:
        return [fn(a, b) for a, b in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ab: fn(*ab), chunks))


def _flat_indices(ix: np.ndarray, iy: np.ndarray, iz: np.ndarray, m: int) -> np.ndarray:
    return (ix[:, :, None, None] * m + iy[:, None, :, None]) * m + iz[:, None, None, :]


def spread(system: ParticleSystem, window: WindowSpec, workers: int = 1) -> np.ndarray:
    """a_l = sum_j rho_j phi(x_j - h l), periodized, on the m^3 grid."""
    m = window.m

    def chunk(start: int, stop: int) -> np.ndarray:
        pos = system.positions[start:stop]
        (ix, wx, _), (iy, wy, _), (iz, wz, _) = (stencil_1d(window, pos[:, d]) for d in range(3))
        weights = (
            system.charges[start:stop, None, None, None]
            * wx[:, :, None, None]
            * wy[:, None, :, None]
            * wz[:, None, None, :]
        )
        return np.bincount(_flat_indices(ix, iy, iz, m).ravel(), weights=weights.ravel(), minlength=m**3)

    grid = np.zeros(m**3)
    for part in _run_chunks(chunk, _chunks(system.n, window.P), workers):
        grid += part
    return grid.reshape(m, m, m)


def interpolate(grid: np.ndarray, positions: np.ndarray, window: WindowSpec, workers: int = 1) -> np.ndarray:
    """sum_l b_l phi(x_i - h l): the transpose of spread."""
    flat_grid = np.asarray(grid).ravel()
    positions = np.asarray(positions, dtype=float)

    def chunk(start: int, stop: int) -> np.ndarray:
        pos = positions[start:stop]
        (ix, wx, _), (iy, wy, _), (iz, wz, _) = (stencil_1d(window, pos[:, d]) for d in range(3))
        values = flat_grid[_flat_indices(ix, iy, iz, window.m)]
        t = np.einsum("npqr,nr->npq", values, wz)
        t = np.einsum("npq,nq->np", t, wy)
        return np.einsum("np,np->n", t, wx)

    parts = _run_chunks(chunk, _chunks(positions.shape[0], window.P), workers)
    return np.concatenate(parts) if parts else np.zeros(0)


def interpolate_gradient(grid: np.ndarray, positions: np.ndarray, window: WindowSpec, workers: int = 1) -> np.ndarray:
    """sum_l b_l grad phi(x_i - h l), shape (n, 3)."""
    flat_grid = np.asarray(grid).ravel()
    positions = np.asarray(positions, dtype=float)

    def chunk(start: int, stop: int) -> np.ndarray:
        pos = positions[start:stop]
        (ix, wx, dx), (iy, wy, dy), (iz, wz, dz) = (
            stencil_1d(window, pos[:, d], with_derivative=True) for d in range(3)
        )
        values = flat_grid[_flat_indices(ix, iy, iz, window.m)]
        vz = np.einsum("npqr,nr->npq", values, wz)
        gz = np.einsum("npqr,nr->npq", values, dz)
        vzy = np.einsum("npq,nq->np", vz, wy)
        return np.column_stack(
            [
                np.einsum("np,np->n", vzy, dx),
                np.einsum("np,np->n", np.einsum("npq,nq->np", vz, dy), wx),
                np.einsum("np,np->n", np.einsum("npq,nq->np", gz, wy), wx),
            ]
        )

    parts = _run_chunks(chunk, _chunks(positions.shape[0], window.P), workers)
    return np.concatenate(parts) if parts else np.zeros((0, 3))


def _potential_grid(system: ParticleSystem, plan: EwaldPlan) -> np.ndarray:
    if not math.isclose(system.L, plan.L, rel_tol=1e-14):
        raise PlanConsistencyError(f"plan box L={plan.L:g} does not match the system box L={system.L:g}")
    a = spread(system, plan.window, plan.workers)
    # forward transform with exp(+i), unscaled
    a_hat = scipy.fft.ifftn(a, norm="forward", workers=plan.workers)
    b = scipy.fft.fftn(plan.scaling * a_hat, norm="backward", workers=plan.workers)
    return b.real


def fast_fourier_sum(system: ParticleSystem, plan: EwaldPlan) -> np.ndarray:
    """phi^far through spreading, FFT, diagonal scaling, FFT and interpolation."""
    return interpolate(_potential_grid(system, plan), system.positions, plan.window, plan.workers)


def fast_fourier_gradient(system: ParticleSystem, plan: EwaldPlan) -> np.ndarray:
    """grad phi^far; the last step interpolates with the window gradient."""
    return interpolate_gradient(_potential_grid(system, plan), system.positions, plan.window, plan.workers)


# ---------------------------------------------------------------------------
# Totals
# ---------------------------------------------------------------------------

FarField = Union[EwaldPlan, int]


def _far_potential(system: ParticleSystem, split: SplitSpec, far: FarField) -> np.ndarray:
    if isinstance(far, EwaldPlan):
        if far.split is not split:
            raise PlanConsistencyError("plan was built for a different split")
        return fast_fourier_sum(system, far)
    return direct_fourier_sum(system, split, int(far))


def total_potential(system: ParticleSystem, split: SplitSpec, far: FarField) -> np.ndarray:
    """phi_i = local + far - self_term * rho_i; far is a plan (fast) or a grid size (direct)."""
    local = real_space_sum(system, split)
    return local + _far_potential(system, split, far) - self_term(split) * system.charges


def total_energy(system: ParticleSystem, split: SplitSpec, far: FarField) -> float:
    """E = 1/2 sum_i rho_i phi_i."""
    return 0.5 * float(np.dot(system.charges, total_potential(system, split, far)))


def total_gradient(system: ParticleSystem, split: SplitSpec, far: FarField) -> np.ndarray:
    local = real_space_gradient(system, split)
    if isinstance(far, EwaldPlan):
        if far.split is not split:
            raise PlanConsistencyError("plan was built for a different split")
        return local + fast_fourier_gradient(system, far)
    return local + direct_fourier_gradient(system, split, int(far))


def forces(system: ParticleSystem, split: SplitSpec, far: FarField) -> np.ndarray:
    """F_i = -rho_i grad phi_i."""
    return -system.charges[:, None] * total_gradient(system, split, far)


def rms_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b) / math.sqrt(a.size))


def rel_l2_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch {a.shape} vs {b.shape}")
    norm = float(np.linalg.norm(b))
    if norm == 0.0:
        raise DomainError("relative error against a zero reference")
    return float(np.linalg.norm(a - b)) / norm
