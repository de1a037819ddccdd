"""
Shared fixtures and utilities for prolate_ewald tests.
"""
import itertools
import json
import math
import os
import subprocess
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pytest
from scipy.special import erfc

from prolate_ewald.kernel_split import SplitSpec, residual
from prolate_ewald.particles import ParticleSystem
from prolate_ewald.sweeps import gen_system

REPO_ROOT = Path(__file__).parent.parent


@pytest.fixture
def test_dir(tmp_path):
    """Create a temporary test directory."""
    return tmp_path


@pytest.fixture
def small_system():
    """20 random neutral charges in the unit box."""
    return gen_system(seed=7, n=20, L=1.0)


@pytest.fixture
def bench_system():
    """The n=100, L=1 system used by the resolution tables."""
    return gen_system(seed=1, n=100, L=1.0)


# Utility functions - can be imported by test modules
def random_system(seed: int, n: int, L: float = 1.0) -> ParticleSystem:
    """Random neutral system from a plain numpy stream (independent of gen_system)."""
    rng = np.random.default_rng(seed)
    positions = rng.random((n, 3)) * L
    charges = rng.standard_normal(n)
    charges -= charges.mean()
    return ParticleSystem(positions, charges, L)


def charge_pair(d: float, L: float = 1.0, axis: int = 0) -> ParticleSystem:
    """Charges +1 and -1 a distance d apart along one axis, centred in the box."""
    a = np.full(3, 0.5 * L)
    b = a.copy()
    a[axis] -= 0.5 * d
    b[axis] += 0.5 * d
    return ParticleSystem(np.array([a, b]), np.array([1.0, -1.0]), L)


def with_tracer(system: ParticleSystem, point: Sequence[float]) -> ParticleSystem:
    """system plus one zero-charge particle at point (the last index)."""
    positions = np.vstack([system.positions, np.asarray(point, dtype=float)])
    charges = np.append(system.charges, 0.0)
    return ParticleSystem(positions, charges, system.L)


def image_offsets(L: float) -> np.ndarray:
    """The 27 lattice translations L r with r in {-1, 0, 1}^3."""
    return L * np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=float)


def brute_force_real_space(system: ParticleSystem, split: SplitSpec) -> np.ndarray:
    """sum over j and the 27 nearest images of R(|x_i - x_j + L r|) rho_j, self pair excluded."""
    phi = np.zeros(system.n)
    shifts = image_offsets(system.L)
    for i in range(system.n):
        for j in range(system.n):
            for shift in shifts:
                if i == j and not shift.any():
                    continue
                r = float(np.linalg.norm(system.positions[i] - system.positions[j] + shift))
                if r < split.r_c:
                    phi[i] += float(residual(split, r)) * system.charges[j]
    return phi


def gaussian_ewald_oracle(system: ParticleSystem, sigma: float = 0.1, kmax: int = 20) -> np.ndarray:
    """Classical Ewald potential with an explicit image loop and an explicit k loop.

    Real space sums erfc(r/sigma)/r over the 27 nearest images; Fourier space sums every k
    with |k_i| <= kmax. For sigma = 0.1 L both truncations are far below 1e-13.
    """
    L = system.L
    x = system.positions
    q = system.charges
    phi = np.zeros(system.n)
    for shift in image_offsets(L):
        d = x[:, None, :] - x[None, :, :] + shift
        r = np.sqrt(np.sum(d * d, axis=-1))
        if not shift.any():
            np.fill_diagonal(r, np.inf)
        phi += np.sum(erfc(r / sigma) / r * q[None, :], axis=1)

    ks = np.array(
        [k for k in itertools.product(range(-kmax, kmax + 1), repeat=3) if any(k)], dtype=float
    )
    omega = 2.0 * math.pi * ks / L
    w2 = np.sum(omega * omega, axis=1)
    weight = 4.0 * math.pi / L**3 * np.exp(-0.25 * sigma**2 * w2) / w2
    phases = np.exp(1j * x @ omega.T)
    rho_hat = phases.T @ q
    phi += np.real(np.conj(phases) @ (weight * rho_hat))
    phi -= 2.0 / (sigma * math.sqrt(math.pi)) * q
    return phi


def nystrom_pswf(c: float, nodes: int = 120) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Independent psi_0^c from the Nystrom discretization of the even Fourier integral operator.

    Returns (lambda_0, x, w, psi(x)) on Gauss-Legendre nodes, normalized to int psi^2 = 1 and
    psi(0) > 0.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    sw = np.sqrt(w)
    kernel = sw[:, None] * np.cos(c * np.outer(x, x)) * sw[None, :]
    values, vectors = np.linalg.eigh(kernel)
    lam = float(values[-1])
    psi = vectors[:, -1] / sw
    if np.dot(w, psi) < 0.0:
        psi = -psi
    return lam, x, w, psi


def nystrom_eval(c: float, s: np.ndarray, nodes: int = 120) -> np.ndarray:
    """psi_0^c(s) by Nystrom interpolation: (1/lambda) sum_j w_j cos(c s t_j) psi(t_j)."""
    lam, x, w, psi = nystrom_pswf(c, nodes)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return (np.cos(c * np.outer(s, x)) @ (w * psi)) / lam


def _cli_env() -> dict:
    """Environment that can import prolate_ewald from the checkout."""
    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join(p for p in (str(REPO_ROOT), env.get("PYTHONPATH", "")) if p)
    return env


def run_cli(args: List[str], cwd: Optional[Path] = None) -> Tuple[int, str, str]:
    """
    Run the prolate-ewald CLI in a subprocess.
    Returns (exit_code, stdout, stderr).

    Args:
        args: Command line arguments after the program name
        cwd: Optional working directory to run the CLI from
    """
    result = subprocess.run(
        [sys.executable, "-m", "prolate_ewald", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
        env=_cli_env(),
    )
    return result.returncode, result.stdout, result.stderr


def parse_json_output(output: str) -> dict:
    """Parse the JSON summary a subcommand printed to stdout."""
    try:
        return json.loads(output)
    except json.JSONDecodeError:
        return {}


def read_result_csv(path: Path) -> Tuple[List[str], List[dict]]:
    """Comment lines and data rows of a result CSV."""
    comments, body = [], []
    for line in path.read_text().splitlines():
        (comments if line.startswith("#") else body).append(line)
    header = body[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in body[1:]]
    return comments, rows
