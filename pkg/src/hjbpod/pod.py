"""Rank-l orthonormal basis from the snapshot fluctuation matrix.

Uses the snapshot form of the decomposition: the small n-by-n Gram matrix
is diagonalized and left vectors are recovered as Y v / sigma, which is
cheap because n is far smaller than the grid dimension.  The inner
product is the plain Euclidean one, matching the uniform staggered grid.
"""

from dataclasses import dataclass

import numpy as np

from . import fileio
from .errors import ConfigError
from .grid import CavityGrid
from .snapshots import SnapshotSet

RANK_CUTOFF = 1e-12


def snapshot_svd(matrix: np.ndarray):
    """Left singular vectors and all singular values of a tall matrix.

    Returns (left, sigma) with sigma holding all min(n, cols) values in
    non-increasing order and ``left`` the vectors belonging to the
    numerically nonzero ones.  Each vector is sign-fixed so its
    largest-magnitude entry is positive (ties resolved to the lowest row),
    making the decomposition reproducible.
    """
    matrix = np.asarray(matrix, dtype=float)
    gram = matrix.T @ matrix
    eigvals, eigvecs = np.linalg.eigh(gram)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    sigma = np.sqrt(np.clip(eigvals, 0.0, None))
    rank = int(np.sum(sigma > RANK_CUTOFF * (sigma[0] if sigma.size else 0.0)))
    left = matrix @ (eigvecs[:, :rank] / sigma[:rank])
    for col in range(rank):
        pivot = int(np.argmax(np.abs(left[:, col])))
        if left[pivot, col] < 0:
            left[:, col] = -left[:, col]
    return left, sigma


@dataclass
class PodBasis:
    """Orthonormal modes, all snapshot singular values, and the mean flow."""

    grid: CavityGrid
    mean: np.ndarray             # (n_vel,)
    singular_values: np.ndarray  # all n values, non-increasing
    modes: np.ndarray            # (n_vel, n_modes)

    @property
    def n_modes(self) -> int:
        return self.modes.shape[1]


def compute_pod(snapshot_set: SnapshotSet, n_modes: int) -> PodBasis:
    """Leading left singular vectors of the fluctuation matrix."""
    if n_modes < 1:
        raise ConfigError(f"need at least one mode, got {n_modes}")
    left, sigma = snapshot_svd(snapshot_set.fluctuations)
    if n_modes > left.shape[1]:
        tail = sigma[n_modes - 1] if n_modes <= sigma.size else 0.0
        raise ConfigError(
            f"requested {n_modes} modes but numerical rank is {left.shape[1]} "
            f"(sigma_{n_modes} = {tail:.3e} vs sigma_1 = {sigma[0]:.3e})"
        )
    return PodBasis(snapshot_set.grid, snapshot_set.mean.copy(), sigma, left[:, :n_modes])


def project(basis: PodBasis, vel: np.ndarray) -> np.ndarray:
    """Reduced coordinates of a velocity field: modes^T (vel - mean)."""
    vel = np.asarray(vel, dtype=float)
    if vel.shape != basis.mean.shape:
        raise ConfigError(
            f"field has shape {vel.shape}, basis grid expects {basis.mean.shape}"
        )
    return basis.modes.T @ (vel - basis.mean)


def reconstruct(basis: PodBasis, coeffs: np.ndarray) -> np.ndarray:
    """Velocity field of reduced coordinates: mean + modes @ w."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.n_modes,):
        raise ConfigError(
            f"coefficient vector has shape {coeffs.shape}, expected ({basis.n_modes},)"
        )
    return basis.mean + basis.modes @ coeffs


def save(basis: PodBasis, path) -> None:
    fileio.save_basis(path, basis.grid, basis.mean, basis.singular_values, basis.modes)


def load(path) -> PodBasis:
    grid, mean, singular_values, modes = fileio.load_basis(path)
    return PodBasis(grid, mean, singular_values, modes)
