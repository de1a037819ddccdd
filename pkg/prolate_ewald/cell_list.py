"""
Linked-cell neighbour search in a periodic cube.

The box is cut into n_c = floor(L/cutoff) cells per side, so every pair within the cutoff
sits in the same or an adjacent cell. Displacements use the minimum image convention, which
is exact for cutoff < L/2.
"""

import itertools
import logging
import math
from typing import Tuple

import numpy as np

from .errors import ConfigurationError

logger = logging.getLogger(__name__)


def cells_per_side(L: float, cutoff: float) -> int:
    if not 0.0 < cutoff < 0.5 * L:
        raise ConfigurationError(f"cutoff {cutoff:g} must lie in (0, L/2) for L={L:g}")
    return max(1, int(math.floor(L / cutoff)))


def _neighbour_offsets(n_cells: int) -> np.ndarray:
    """The 27 stencil offsets, deduplicated modulo n_cells."""
    unique = {
        tuple(o % n_cells for o in offset) for offset in itertools.product((-1, 0, 1), repeat=3)
    }
    return np.array(sorted(unique), dtype=np.int64)


def minimum_image(d: np.ndarray, L: float) -> np.ndarray:
    return d - L * np.round(d / L)


def neighbor_pairs(
    positions: np.ndarray, L: float, cutoff: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """All ordered pairs i != j with minimum-image distance below cutoff.

    Returns (i, j, d, r) with d = x_j - x_i (minimum image, shape (npairs, 3)) and r = |d|.
    Pair order is deterministic.
    """
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[0]
    n_cells = cells_per_side(L, cutoff)
    edge = L / n_cells

    cell = np.floor(positions / edge).astype(np.int64) % n_cells
    flat = (cell[:, 0] * n_cells + cell[:, 1]) * n_cells + cell[:, 2]
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n_cells**3)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))

    found_i, found_j, found_d, found_r = [], [], [], []
    for offset in _neighbour_offsets(n_cells):
        nb = (cell + offset) % n_cells
        nb_flat = (nb[:, 0] * n_cells + nb[:, 1]) * n_cells + nb[:, 2]
        cnt = counts[nb_flat]
        total = int(cnt.sum())
        if total == 0:
            continue
        i = np.repeat(np.arange(n), cnt)
        first = np.repeat(starts[nb_flat], cnt)
        within = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        j = order[first + within]

        keep = i != j
        i, j = i[keep], j[keep]
        d = minimum_image(positions[j] - positions[i], L)
        r = np.sqrt(np.einsum("ij,ij->i", d, d))
        close = r < cutoff
        found_i.append(i[close])
        found_j.append(j[close])
        found_d.append(d[close])
        found_r.append(r[close])

    if not found_i:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros((0, 3)), np.zeros(0)
    pairs = (
        np.concatenate(found_i),
        np.concatenate(found_j),
        np.concatenate(found_d),
        np.concatenate(found_r),
    )
    logger.debug("cell list: %d cells per side, %d pairs within %g", n_cells, pairs[0].size, cutoff)
    return pairs
