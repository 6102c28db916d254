"""Discrete empirical interpolation of the advection nonlinearity.

Greedy row selection picks, for each nonlinearity mode, the row where the
interpolation built from the previous rows errs most; the oblique
projection then maps the handful of sampled nonlinearity values straight
into reduced-space contributions.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import fileio
from .errors import ConfigError, NumericalError
from .operators import advection_term
from .pod import PodBasis, snapshot_svd

logger = logging.getLogger(__name__)


def nonlinearity_snapshots(grid, states, lid_speed: float = 1.0) -> np.ndarray:
    """Advection term of each snapshot, one column per state.

    ``states`` may contain StaggeredState objects or plain velocity
    vectors on the same grid.
    """
    columns = []
    for state in states:
        vel = state if isinstance(state, np.ndarray) else state.velocity()
        if vel.shape != (grid.n_vel,):
            raise ConfigError(
                f"snapshot of length {vel.shape} does not match grid ({grid.n_vel})"
            )
        columns.append(advection_term(grid, vel, lid_speed))
    return np.column_stack(columns)


def select_indices(nonlinearity_basis: np.ndarray) -> np.ndarray:
    """Greedy interpolation rows for an orthonormal nonlinearity basis.

    Row 1 maximizes |first column|; row k maximizes the residual of
    interpolating column k at the previously selected rows.  Ties go to
    the lowest row index.
    """
    basis = np.atleast_2d(np.asarray(nonlinearity_basis, dtype=float))
    n_rows, m = basis.shape
    indices = np.empty(m, dtype=int)
    indices[0] = int(np.argmax(np.abs(basis[:, 0])))
    for k in range(1, m):
        sub = basis[indices[:k], :k]
        try:
            coeff = np.linalg.solve(sub, basis[indices[:k], k])
        except np.linalg.LinAlgError as err:
            raise NumericalError(
                f"singular sampled system at greedy step {k + 1}: {err}"
            ) from err
        residual = basis[:, k] - basis[:, :k] @ coeff
        indices[k] = int(np.argmax(np.abs(residual)))
    if len(set(indices.tolist())) != m:
        raise NumericalError("greedy selection produced duplicate rows")
    return indices


@dataclass
class DeimOperator:
    """Selected rows plus the reduced-space oblique projection."""

    indices: np.ndarray     # (m,) distinct velocity rows
    projection: np.ndarray  # (n_modes, m), modes^T U (P^T U)^{-1}

    @property
    def m(self) -> int:
        return self.indices.size


def build_deim(
    basis: PodBasis, nonlinearity_matrix: np.ndarray, m: int
) -> DeimOperator:
    """DEIM operator from nonlinearity snapshots and the reduced basis."""
    if m < 1:
        raise ConfigError(f"need at least one interpolation mode, got {m}")
    left, sigma = snapshot_svd(nonlinearity_matrix)
    if m > left.shape[1]:
        raise ConfigError(
            f"requested {m} interpolation modes but nonlinearity rank is {left.shape[1]}"
        )
    nonlinearity_basis = left[:, :m]
    indices = select_indices(nonlinearity_basis)
    sampled = nonlinearity_basis[indices, :]
    condition = np.linalg.cond(sampled)
    logger.info("interpolation system condition number: %.3e", condition)
    if not np.isfinite(condition):
        raise NumericalError("sampled interpolation system is singular")
    projection = basis.modes.T @ nonlinearity_basis @ np.linalg.inv(sampled)
    return DeimOperator(indices, projection)


def apply_deim(operator: DeimOperator, sampled_values: np.ndarray) -> np.ndarray:
    """Reduced-space contribution of sampled nonlinearity values."""
    sampled_values = np.asarray(sampled_values, dtype=float)
    if sampled_values.shape[-1] != operator.m:
        raise ConfigError(
            f"sample vector has length {sampled_values.shape[-1]}, expected {operator.m}"
        )
    return sampled_values @ operator.projection.T


def reconstruction_matrix(nonlinearity_basis: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Full-space interpolation operator U (P^T U)^{-1}, for diagnostics."""
    sampled = nonlinearity_basis[indices, :]
    return nonlinearity_basis @ np.linalg.inv(sampled)


def save(operator: DeimOperator, path) -> None:
    fileio.save_deim(path, operator.indices, operator.projection)


def load(path) -> DeimOperator:
    indices, projection = fileio.load_deim(path)
    return DeimOperator(indices, projection)
