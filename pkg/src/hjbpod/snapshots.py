"""Snapshot collection: mean flow plus mean-subtracted fluctuation matrix."""

from dataclasses import dataclass

import numpy as np

from . import fileio
from .errors import ConfigError
from .grid import CavityGrid


@dataclass
class SnapshotSet:
    """Mean flow and fluctuation columns of a set of velocity snapshots.

    Column j of ``fluctuations`` is the j-th selected velocity snapshot
    minus the arithmetic mean; pressures are discarded because the
    divergence-free snapshots determine the reduced dynamics without them.
    """

    grid: CavityGrid
    times: np.ndarray          # (n,)
    mean: np.ndarray           # (n_vel,)
    fluctuations: np.ndarray   # (n_vel, n)

    @property
    def count(self) -> int:
        return self.times.size

    def snapshot(self, j: int) -> np.ndarray:
        """Reassembled j-th velocity snapshot."""
        return self.mean + self.fluctuations[:, j]


def collect(trajectory, times, grid: CavityGrid | None = None) -> SnapshotSet:
    """Average the selected trajectory states and store their fluctuations.

    Each requested time must match a stored state; a missing time raises
    an error naming it.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        raise ConfigError(f"need at least 2 snapshot times, got {times.size}")
    states = [trajectory.state_at(t) for t in times]
    if grid is None:
        n_vel = states[0].velocity().size
    else:
        n_vel = grid.n_vel
    columns = np.column_stack([s.velocity() for s in states])
    if columns.shape[0] != n_vel:
        raise ConfigError("snapshot states do not match the grid")
    mean = columns.mean(axis=1)
    return SnapshotSet(
        grid if grid is not None else _grid_of(states[0]),
        times.copy(),
        mean,
        columns - mean[:, None],
    )


def _grid_of(state):
    from .grid import build_grid

    nx = state.u.shape[0] + 1
    ny = state.u.shape[1]
    return build_grid(nx, ny)


def save(snapshot_set: SnapshotSet, path) -> None:
    fileio.save_snapshots(
        path,
        snapshot_set.grid,
        snapshot_set.times,
        snapshot_set.mean,
        snapshot_set.fluctuations,
    )


def load(path) -> SnapshotSet:
    grid, times, mean, fluctuations = fileio.load_snapshots(path)
    return SnapshotSet(grid, times, mean, fluctuations)
