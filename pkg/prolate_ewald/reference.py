"""
Machine-precision reference potentials and their on-disk cache.

The reference total potential is a classical Gaussian-split Ewald sum with a wide real-space
cutoff (0.45 L), sigma = r_c/6 and the full cube of 64^3 modes; both truncation errors are
below 1e-16. The far field of any other split follows by subtracting its real-space part.
"""

import logging
import os
import sys
import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

from .errors import StaleCacheWarning
from .ewald_engine import direct_fourier_sum, real_space_sum
from .kernel_split import SplitFamily, SplitSpec, make_gaussian_split, self_term
from .particles import ParticleSystem

logger = logging.getLogger(__name__)

_LOCK_TIMEOUT = 60.0
_LOCK_POLL = 0.05


@dataclass(frozen=True)
class ReferenceSettings:
    rc_fraction: float = 0.45
    sigma_ratio: float = 6.0
    m_ref: int = 64
    # Real-space cutoff (fraction of L) for Gaussian splits when extracting their far field
    local_fraction: float = 0.49

    @property
    def tag(self) -> str:
        return f"rc{self.rc_fraction:g}_s{self.sigma_ratio:g}_m{self.m_ref}"


DEFAULT_SETTINGS = ReferenceSettings()


def reference_split(L: float, settings: ReferenceSettings = DEFAULT_SETTINGS) -> SplitSpec:
    r_ref = settings.rc_fraction * L
    return make_gaussian_split(r_ref / settings.sigma_ratio, r_ref)


def reference_potential(system: ParticleSystem, settings: ReferenceSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Total potential phi_i (self interaction removed) to machine precision."""
    split = reference_split(system.L, settings)
    local = real_space_sum(system, split)
    far = direct_fourier_sum(system, split, settings.m_ref)
    return local + far - self_term(split) * system.charges


def reference_far_field(
    system: ParticleSystem,
    split: SplitSpec,
    total: np.ndarray,
    settings: ReferenceSettings = DEFAULT_SETTINGS,
) -> np.ndarray:
    """Exact far field of split: total - local(split) + self_term * rho."""
    local_split = split
    if split.family is SplitFamily.GAUSSIAN:
        local_split = replace(split, r_c=settings.local_fraction * system.L)
    return np.asarray(total) - real_space_sum(system, local_split) + self_term(split) * system.charges


# ---------------------------------------------------------------------------
# Cache
# ---------------------------------------------------------------------------


if sys.platform == "win32":
    import msvcrt

    def _try_acquire(handle) -> None:
        handle.seek(0)
        msvcrt.locking(handle.fileno(), msvcrt.LK_NBLCK, 1)

    def _release(handle) -> None:
        handle.seek(0)
        msvcrt.locking(handle.fileno(), msvcrt.LK_UNLCK, 1)

else:
    import fcntl

    def _try_acquire(handle) -> None:
        fcntl.flock(handle, fcntl.LOCK_EX | fcntl.LOCK_NB)

    def _release(handle) -> None:
        fcntl.flock(handle, fcntl.LOCK_UN)


@contextmanager
def _entry_lock(path: Path) -> Iterator[bool]:
    """Exclusive lock on the cache entry's .lock sibling, yielding whether it is held.

    Waits up to _LOCK_TIMEOUT for another writer, then goes ahead unlocked.
    """
    lock_path = path.with_name(path.name + ".lock")
    with open(lock_path, "a+b") as handle:
        deadline = time.monotonic() + _LOCK_TIMEOUT
        held = False
        while not held:
            try:
                _try_acquire(handle)
                held = True
            except OSError:
                if time.monotonic() >= deadline:
                    logger.warning("could not lock %s within %.0fs; writing unlocked", lock_path.name, _LOCK_TIMEOUT)
                    break
                time.sleep(_LOCK_POLL)
        try:
            yield held
        finally:
            if held:
                _release(handle)


class ReferenceCache:
    """Reference potentials stored as .npz files, one per (seed, n, L, settings)."""

    def __init__(self, directory: Union[str, Path], settings: ReferenceSettings = DEFAULT_SETTINGS):
        self.directory = Path(directory)
        self.settings = settings

    def path_for(self, system: ParticleSystem, seed: int) -> Path:
        return self.directory / f"ref_seed{seed}_n{system.n}_L{system.L!r}_{self.settings.tag}.npz"

    def _read(self, path: Path, checksum: str) -> Optional[np.ndarray]:
        if not path.is_file():
            return None
        try:
            with np.load(path) as data:
                stored = str(data["checksum"])
                potential = np.array(data["potential"])
        except (OSError, ValueError, KeyError) as exc:
            warnings.warn(f"unreadable reference cache {path.name} ({exc}); recomputing", StaleCacheWarning, stacklevel=3)
            return None
        if stored != checksum:
            warnings.warn(
                f"reference cache {path.name} does not match the particle system; recomputing",
                StaleCacheWarning,
                stacklevel=3,
            )
            return None
        return potential

    def total(self, system: ParticleSystem, seed: int) -> np.ndarray:
        """Cached reference_potential; computed and stored on a miss."""
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path_for(system, seed)
        checksum = system.checksum()
        with _entry_lock(path):
            # another process may have written it while we waited
            cached = self._read(path, checksum)
            if cached is not None:
                logger.debug("reference cache hit %s", path.name)
                return cached
            potential = reference_potential(system, self.settings)
            tmp = path.with_name(path.name + f".{os.getpid()}.tmp")
            with open(tmp, "wb") as f:
                np.savez(f, potential=potential, checksum=np.array(checksum))
            os.replace(tmp, path)
            logger.info("stored reference %s", path.name)
            return potential


def cached_reference(
    system: ParticleSystem,
    seed: int,
    cache_dir: Optional[Union[str, Path]],
    settings: ReferenceSettings = DEFAULT_SETTINGS,
) -> np.ndarray:
    """reference_potential, going through a ReferenceCache when cache_dir is set."""
    if cache_dir is None:
        return reference_potential(system, settings)
    return ReferenceCache(cache_dir, settings).total(system, seed)
