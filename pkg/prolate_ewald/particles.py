"""Charged particle systems in a periodic cube and their on-disk formats."""

import csv
import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DomainError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FORMAT_TAG = "prolate-ewald v1"
CSV_HEADER = ["x", "y", "z", "q"]
# Net charge allowed relative to ||rho||
NEUTRALITY_TOL = 1e-12


def _wrap(positions: np.ndarray, L: float) -> np.ndarray:
    wrapped = np.mod(positions, L)
    # mod of a tiny negative rounds up to L
    return np.where(wrapped >= L, 0.0, wrapped)


@dataclass(frozen=True, eq=False)
class ParticleSystem:
    """n point charges in [0, L)^3. Positions are wrapped into the box on construction."""

    positions: np.ndarray
    charges: np.ndarray
    L: float

    def __post_init__(self) -> None:
        positions = np.array(self.positions, dtype=float)
        charges = np.array(self.charges, dtype=float).reshape(-1)
        L = float(self.L)
        if not L > 0 or not math.isfinite(L):
            raise DomainError(f"box length L={self.L!r} must be positive and finite")
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise DomainError(f"positions must have shape (n, 3), got {positions.shape}")
        if positions.shape[0] != charges.size:
            raise DomainError(f"{positions.shape[0]} positions but {charges.size} charges")
        if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(charges))):
            raise DomainError("positions and charges must be finite")
        norm = float(np.linalg.norm(charges))
        net = float(np.sum(charges))
        if abs(net) > NEUTRALITY_TOL * norm:
            raise DomainError(f"system is not charge neutral (sum q = {net:.3e})")
        positions = _wrap(positions, L)
        positions.setflags(write=False)
        charges.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "charges", charges)
        object.__setattr__(self, "L", L)

    @property
    def n(self) -> int:
        return int(self.charges.size)

    @property
    def volume(self) -> float:
        return self.L**3

    @property
    def rho_norm(self) -> float:
        """||rho||, the Euclidean norm of the charge vector."""
        return float(np.linalg.norm(self.charges))

    def translated(self, shift: np.ndarray) -> "ParticleSystem":
        return ParticleSystem(self.positions + np.asarray(shift, dtype=float), self.charges, self.L)

    def with_charges(self, charges: np.ndarray) -> "ParticleSystem":
        return ParticleSystem(self.positions, charges, self.L)

    def checksum(self) -> str:
        """SHA-256 over L, positions and charges (little-endian float64)."""
        digest = hashlib.sha256()
        digest.update(np.float64(self.L).astype("<f8").tobytes())
        digest.update(self.positions.astype("<f8").tobytes())
        digest.update(self.charges.astype("<f8").tobytes())
        return digest.hexdigest()


def write_csv(system: ParticleSystem, path: PathLike) -> None:
    """Write "x,y,z,q" rows after the format and box comment lines."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# {FORMAT_TAG}\n")
        f.write(f"# box={system.L!r}\n")
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for (x, y, z), q in zip(system.positions, system.charges):
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(z)), repr(float(q))])


def read_csv(path: PathLike) -> ParticleSystem:
    L = None
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for line in f:
            text = line.strip()
            if text.startswith("#"):
                key, _, value = text[1:].strip().partition("=")
                if key.strip() == "box":
                    L = float(value)
                continue
            if text and text.split(",") != CSV_HEADER:
                rows.append([float(v) for v in text.split(",")])
    if L is None:
        raise DomainError(f"{path}: missing '# box=' line")
    data = np.array(rows, dtype=float).reshape(-1, 4)
    return ParticleSystem(data[:, :3], data[:, 3], L)


def write_binary(system: ParticleSystem, path: PathLike) -> None:
    """n (int64), L, positions (n x 3, row-major), charges; little-endian float64."""
    with open(path, "wb") as f:
        f.write(np.int64(system.n).astype("<i8").tobytes())
        f.write(np.float64(system.L).astype("<f8").tobytes())
        f.write(system.positions.astype("<f8").tobytes())
        f.write(system.charges.astype("<f8").tobytes())


def read_binary(path: PathLike) -> ParticleSystem:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise DomainError(f"{path}: truncated particle file")
    n = int(np.frombuffer(raw, dtype="<i8", count=1, offset=0)[0])
    if n < 0 or len(raw) != 16 + 32 * n:
        raise DomainError(f"{path}: size does not match a particle file with n={n}")
    L = float(np.frombuffer(raw, dtype="<f8", count=1, offset=8)[0])
    positions = np.frombuffer(raw, dtype="<f8", count=3 * n, offset=16).reshape(n, 3)
    charges = np.frombuffer(raw, dtype="<f8", count=n, offset=16 + 24 * n)
    return ParticleSystem(positions, charges, L)


def load_system(path: PathLike) -> ParticleSystem:
    """Read a particle file, binary for .bin and CSV otherwise."""
    if Path(path).suffix == ".bin":
        return read_binary(path)
    return read_csv(path)


def save_system(system: ParticleSystem, path: PathLike) -> None:
    if Path(path).suffix == ".bin":
        write_binary(system, path)
    else:
        write_csv(system, path)
    logger.debug("wrote %d particles to %s", system.n, path)
