"""
Benchmark sweeps behind the resolution tables and the error plots.

Every sweep measures errors against the cached Gaussian reference. Resolution sweeps report
the far-field error relative to the reference far field of the same split; the error surface
and the tolerance check report absolute RMS errors.
"""

import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig
from .errors import DomainError
from .ewald_engine import EwaldPlan, direct_fourier_sum, fast_fourier_sum, make_plan, rel_l2_error, rms_error
from .kernel_split import SplitSpec, gaussian_sigma, make_gaussian_split, make_pswf_split
from .param_select import ErrorModelInput, plan_from_parameters, select_parameters
from .particles import ParticleSystem
from .reference import ReferenceSettings, cached_reference, reference_far_field
from .window_functions import WindowFamily, WindowSpec, make_window

logger = logging.getLogger(__name__)

FAMILY_CODES = {"pswf": "P", "gaussian": "G", "bspline": "B"}
DEFAULT_BSPLINE_ORDERS = (4, 6, 8)
# Gaussian/Gaussian grids are inflated by this factor over the direct Gaussian resolution
GAUSSIAN_GRID_INFLATION = 1.05
M_START = 4


def gen_system(seed: int, n: int, L: float = 1.0) -> ParticleSystem:
    """Uniform positions and standard-normal charges shifted to zero mean (Philox stream)."""
    if n < 2:
        raise DomainError(f"a neutral system needs at least 2 particles (got n={n})")
    rng = np.random.Generator(np.random.Philox(seed))
    positions = rng.random((n, 3)) * L
    charges = rng.standard_normal(n)
    charges -= charges.mean()
    return ParticleSystem(positions, charges, L)


@dataclass(frozen=True)
class Sample:
    """One system with its reference total potential."""

    seed: int
    system: ParticleSystem
    total: np.ndarray


def _settings(config: RunConfig) -> ReferenceSettings:
    return ReferenceSettings(m_ref=config.reference_m)


def make_sample(config: RunConfig, seed: int, n: Optional[int] = None) -> Sample:
    system = gen_system(seed, config.n if n is None else n, config.box)
    return Sample(seed, system, cached_reference(system, seed, config.cache_dir, _settings(config)))


def _map(fn: Callable[[Any], Any], tasks: Sequence[Any], threads: int) -> List[Any]:
    if threads <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def build_split(config: RunConfig, eps: float, r_c: float, m: Optional[int] = None) -> SplitSpec:
    """The split a sweep point uses: c_s = log(1/eps) (or pi r_c m/L for surfaces) for PSWF."""
    if config.split == "gaussian":
        return make_gaussian_split(gaussian_sigma(r_c, eps), r_c)
    if config.c_s is not None:
        c_s = config.c_s
    elif m is not None:
        c_s = math.pi * r_c * m / config.box
    else:
        c_s = math.log(1.0 / eps)
    return make_pswf_split(c_s, r_c)


def sweep_plan(split: SplitSpec, window: WindowSpec) -> EwaldPlan:
    """Plan for one sweep point.

    B-spline windows keep every split mode, so their error falls to the aliasing level as m
    grows. Other windows keep the band-limited scaling.
    """
    return make_plan(split, window, band_limited=window.family is not WindowFamily.BSPLINE, warn_unmatched=False)


def window_shape(config: RunConfig) -> Optional[float]:
    if config.window == "pswf":
        return config.c_w
    if config.window == "gaussian":
        return config.c_g
    return None


# ---------------------------------------------------------------------------
# Minimal-m searches
# ---------------------------------------------------------------------------


def smallest_passing(passes: Callable[[int], bool], lo: int, hi: int) -> Optional[int]:
    """Smallest m in [lo, hi] with passes(m), assuming passes is monotone.

    Doubles from lo to bracket the answer, then bisects.
    """
    if lo > hi:
        return None
    if passes(lo):
        return lo
    fail = lo
    step = max(1, lo)
    while True:
        trial = min(fail + step, hi)
        if passes(trial):
            break
        if trial >= hi:
            return None
        fail = trial
        step *= 2
    ok = trial
    while ok - fail > 1:
        mid = (ok + fail) // 2
        if passes(mid):
            ok = mid
        else:
            fail = mid
    return ok


@dataclass
class _Measure:
    """Relative far-field errors against one sample, memoized per grid point."""

    sample: Sample
    split: SplitSpec
    far_ref: np.ndarray
    scale: float

    def direct(self, m: int) -> float:
        far = direct_fourier_sum(self.sample.system, self.split, m)
        return float(np.linalg.norm(far - self.far_ref)) / self.scale

    def fast(self, window_family: str, m: int, P: int, shape: Optional[float]) -> float:
        window = make_window(window_family, m, self.sample.system.L, P, shape=shape)
        far = fast_fourier_sum(self.sample.system, sweep_plan(self.split, window))
        return float(np.linalg.norm(far - self.far_ref)) / self.scale


def _measure_for(sample: Sample, split: SplitSpec) -> _Measure:
    far_ref = reference_far_field(sample.system, split, sample.total)
    return _Measure(sample, split, far_ref, float(np.linalg.norm(far_ref)))


def _row(code: str, eps: float, m: Optional[int], P: Optional[int], error: float, seed: int) -> Dict[str, Any]:
    return {
        "family": code,
        "eps": eps,
        "m": m if m is not None else -1,
        "P": P if P is not None else 0,
        "error": error,
        "converged": int(m is not None),
        "seed": seed,
    }


def _resolution_task(task: Tuple[RunConfig, Sample, float]) -> List[Dict[str, Any]]:
    config, sample, eps = task
    split = build_split(config, eps, config.rc)
    measure = _measure_for(sample, split)
    split_code = FAMILY_CODES[config.split]
    errors: Dict[Any, float] = {}

    def direct_err(m: int) -> float:
        if ("direct", m) not in errors:
            errors[("direct", m)] = measure.direct(m)
        return errors[("direct", m)]

    if config.direct:
        m_direct = smallest_passing(lambda m: direct_err(m) < eps, M_START, config.m_max)
        err = direct_err(m_direct) if m_direct is not None else direct_err(config.m_max)
        return [_row(split_code, eps, m_direct, None, err, sample.seed)]

    code = split_code + FAMILY_CODES[config.window]
    shape = window_shape(config)

    if config.window == "bspline":
        rows = []
        for P in config.support or DEFAULT_BSPLINE_ORDERS:
            def fast_err(m: int, P: int = P) -> float:
                key = ("bspline", m, P)
                if key not in errors:
                    errors[key] = measure.fast("bspline", m, P, None)
                return errors[key]

            m_found = smallest_passing(lambda m, err=fast_err: err(m) < eps, max(M_START, P), config.m_max)
            err = fast_err(m_found if m_found is not None else config.m_max)
            rows.append(_row(code, eps, m_found, P, err, sample.seed))
        return rows

    m_direct = smallest_passing(lambda m: direct_err(m) < eps, M_START, config.m_max)
    lo = m_direct if m_direct is not None else M_START

    def best_support(m: int) -> Optional[Tuple[int, float]]:
        last = math.inf
        for P in range(2, min(config.p_max, m) + 1):
            key = (config.window, m, P)
            if key not in errors:
                errors[key] = measure.fast(config.window, m, P, shape)
            last = errors[key]
            if last < eps:
                return P, last
        return None

    if config.split == "gaussian" and config.window == "gaussian" and m_direct is not None:
        m = math.ceil(GAUSSIAN_GRID_INFLATION * m_direct)
        while m <= config.m_max:
            found = best_support(m)
            if found is not None:
                return [_row(code, eps, m, found[0], found[1], sample.seed)]
            m += 1
        return [_row(code, eps, None, None, math.inf, sample.seed)]

    m_found = smallest_passing(lambda m: best_support(m) is not None, lo, config.m_max)
    if m_found is None:
        return [_row(code, eps, None, None, math.inf, sample.seed)]
    P, err = best_support(m_found)
    return [_row(code, eps, m_found, P, err, sample.seed)]


def _median_rows(rows: Iterable[Dict[str, Any]], key_fields: Sequence[str]) -> List[Dict[str, Any]]:
    groups: Dict[tuple, List[Dict[str, Any]]] = {}
    for row in rows:
        groups.setdefault(tuple(row[f] for f in key_fields), []).append(row)
    merged = []
    for key in sorted(groups):
        group = groups[key]
        converged = all(r["converged"] for r in group)
        merged.append(
            {
                **dict(zip(key_fields, key)),
                "m": int(statistics.median_low([r["m"] for r in group])) if converged else -1,
                "P": int(statistics.median_low([r["P"] for r in group])),
                "error": float(statistics.median([r["error"] for r in group])),
                "converged": int(converged),
                "seeds": len(group),
            }
        )
    return merged


def sweep_resolution(config: RunConfig) -> List[Dict[str, Any]]:
    """Minimal (m, P) per tolerance; median over the configured seeds."""
    samples = [make_sample(config, seed) for seed in config.seeds]
    tasks = [(config, sample, eps) for sample in samples for eps in config.eps]
    rows = [row for part in _map(_resolution_task, tasks, config.threads) for row in part]
    logger.info("resolution sweep: %d points over %d seeds", len(tasks), len(samples))
    key = ["family", "eps"] if config.window != "bspline" or config.direct else ["family", "eps", "P"]
    merged = _median_rows(rows, key)
    for row in merged:
        row.pop("seed", None)
    return merged


# ---------------------------------------------------------------------------
# Error surface and tolerance check
# ---------------------------------------------------------------------------


def _surface_task(task: Tuple[RunConfig, Sample, int, int]) -> Dict[str, Any]:
    config, sample, m, P = task
    split = build_split(config, config.eps[0], config.rc, m)
    far_ref = reference_far_field(sample.system, split, sample.total)
    window = make_window(config.window, m, config.box, P, shape=window_shape(config))
    far = fast_fourier_sum(sample.system, sweep_plan(split, window))
    return {
        "m": m,
        "P": P,
        "shape_s": split.shape,
        "shape_w": window.shape,
        "rms_error": rms_error(far, far_ref),
        "rel_error": rel_l2_error(far, far_ref),
    }


def sweep_error_surface(config: RunConfig) -> List[Dict[str, Any]]:
    """Absolute RMS far-field error over the (m, P) grid for one system."""
    if not config.m or not config.support:
        raise DomainError("sweep-surface needs both 'm' and 'support' lists")
    sample = make_sample(config, config.seed)
    tasks = [(config, sample, m, P) for m in config.m for P in config.support if P <= m]
    rows = _map(_surface_task, tasks, config.threads)
    return sorted(rows, key=lambda r: (r["m"], r["P"]))


def _tolerance_task(task: Tuple[RunConfig, Sample, float, float]) -> Dict[str, Any]:
    config, sample, r_c, eps = task
    system = sample.system
    inp = ErrorModelInput.for_system(system, eps, r_c)
    params = select_parameters(inp)
    split, plan = plan_from_parameters(params, inp)
    far = fast_fourier_sum(system, plan)
    far_ref = reference_far_field(system, split, sample.total)
    measured = rms_error(far, far_ref)
    return {
        "n": system.n,
        "rc": r_c,
        "eps": eps,
        "c_s": params.c_s,
        "c_w": params.c_w,
        "m": params.m,
        "P": params.P,
        "alpha": params.alpha,
        "predicted": params.predicted_err,
        "measured": measured,
        "rho_norm": system.rho_norm,
        "measured_per_rho": measured / system.rho_norm,
    }


def tolerance_check(config: RunConfig) -> List[Dict[str, Any]]:
    """Run the parameter selection per (n, r_c, eps) and record the measured RMS error."""
    tasks = []
    for n in config.n_values:
        sample = make_sample(config, config.seed, n)
        tasks.extend((config, sample, r_c, eps) for r_c in config.rc_values for eps in config.eps)
    rows = _map(_tolerance_task, tasks, config.threads)
    return sorted(rows, key=lambda r: (r["n"], r["rc"], -r["eps"]))
