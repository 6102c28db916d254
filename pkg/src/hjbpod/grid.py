"""Staggered (MAC) grid geometry on the unit square."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class CavityGrid:
    """Uniform staggered grid on (0,1)x(0,1) with nx-by-ny cells.

    u-velocities live on interior vertical faces (shape (nx-1, ny)),
    v-velocities on interior horizontal faces (shape (nx, ny-1)) and
    pressures at cell centers (shape (nx, ny)).  Boundary faces carry the
    wall data and are not unknowns.  Velocity vectors stack the u block
    before the v block, both flattened in C order.
    """

    nx: int
    ny: int

    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def hy(self) -> float:
        return 1.0 / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def n_u(self) -> int:
        return (self.nx - 1) * self.ny

    @property
    def n_v(self) -> int:
        return self.nx * (self.ny - 1)

    @property
    def n_vel(self) -> int:
        return self.n_u + self.n_v

    @property
    def n_p(self) -> int:
        return self.nx * self.ny

    def split(self, vel: np.ndarray):
        """Split a stacked velocity vector into (u, v) face arrays."""
        vel = np.asarray(vel)
        if vel.shape != (self.n_vel,):
            raise ConfigError(
                f"velocity vector has length {vel.shape}, expected ({self.n_vel},)"
            )
        u = vel[: self.n_u].reshape(self.nx - 1, self.ny)
        v = vel[self.n_u :].reshape(self.nx, self.ny - 1)
        return u, v

    def join(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Stack (u, v) face arrays into one velocity vector."""
        if u.shape != (self.nx - 1, self.ny) or v.shape != (self.nx, self.ny - 1):
            raise ConfigError(
                f"face arrays have shapes {u.shape}/{v.shape}, expected "
                f"{(self.nx - 1, self.ny)}/{(self.nx, self.ny - 1)}"
            )
        return np.concatenate([u.ravel(), v.ravel()])

    def u_index(self, i: int, j: int) -> int:
        """Flat index of the u unknown at face x=i*hx, cell row j (i in 1..nx-1)."""
        return (i - 1) * self.ny + j

    def v_index(self, i: int, j: int) -> int:
        """Flat index of the v unknown in cell column i at face y=j*hy (j in 1..ny-1)."""
        return self.n_u + i * (self.ny - 1) + (j - 1)

    def cell_centers(self):
        """Coordinates (x, y) of all cell centers, each shaped (nx, ny)."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")


def build_grid(nx: int, ny: int) -> CavityGrid:
    """Validate cell counts and build the staggered grid."""
    if nx < 4 or ny < 4:
        raise ConfigError(f"grid must have at least 4 cells per direction, got {nx}x{ny}")
    return CavityGrid(int(nx), int(ny))
