"""Semi-discrete operators on the staggered grid.

Assembles the homogeneous-Dirichlet vector Laplacian, the pressure
gradient and velocity divergence, the lid boundary load, and provides the
upwind-biased advection kernels: a vectorized full-field evaluation and a
row-sampled evaluation that touches only the stencil faces of a fixed set
of rows (the hyper-reduction path).

The momentum balance reads, per interior unknown,

    d(vel)/dt = -nu*(A @ vel - lid*lid_load) + advection(vel) + C @ (-p) + B @ u

with A the positive-definite Laplacian assembled here (viscosity enters
only as a scalar multiplier) and advection(vel) the *negated* transport
term -(y . grad y), i.e. the quantity that appears on the right-hand side
of the momentum equation.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .grid import CavityGrid


def _second_difference_1d(n: int, h: float, ghost_lo: bool, ghost_hi: bool) -> sp.csr_matrix:
    """1-D tridiagonal block of the negative Laplacian with Dirichlet walls.

    ghost_lo / ghost_hi select the ghost-cell reflection closure (wall half
    a cell outside the line, diagonal 3/h^2) instead of the plain
    elimination closure (wall on the line, diagonal 2/h^2).
    """
    main = np.full(n, 2.0 / h**2)
    if ghost_lo:
        main[0] = 3.0 / h**2
    if ghost_hi:
        main[-1] = 3.0 / h**2
    off = np.full(n - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


@dataclass
class SemiDiscreteOperators:
    """Sparse operators of the semi-discrete cavity system."""

    grid: CavityGrid
    laplacian: sp.csr_matrix        # A, (n_vel, n_vel), SPD, viscosity NOT included
    gradient: sp.csr_matrix         # C, (n_vel, n_p)
    divergence: sp.csr_matrix       # D, (n_p, n_vel)
    lid_load: np.ndarray            # (n_vel,), diffusion load per unit lid speed
    control: np.ndarray | None      # B, (n_vel, m) injection fields, or None


def assemble_operators(
    grid: CavityGrid,
    viscosity: float,
    control_fields: np.ndarray | None = None,
) -> SemiDiscreteOperators:
    """Assemble Laplacian, gradient, divergence and the lid load.

    The viscosity is validated here but never baked into the matrix
    entries; callers scale ``laplacian`` by their own nu.
    """
    if viscosity <= 0:
        raise ConfigError(f"viscosity must be positive, got {viscosity}")
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy

    # u block: walls on the line in x, ghost closure in y.
    a_u = sp.kron(
        _second_difference_1d(nx - 1, hx, False, False), sp.identity(ny)
    ) + sp.kron(sp.identity(nx - 1), _second_difference_1d(ny, hy, True, True))
    # v block: ghost closure in x, walls on the line in y.
    a_v = sp.kron(
        _second_difference_1d(nx, hx, True, True), sp.identity(ny - 1)
    ) + sp.kron(sp.identity(nx), _second_difference_1d(ny - 1, hy, False, False))
    laplacian = sp.block_diag([a_u, a_v], format="csr")

    # Lid load: moving-lid ghost contributes 2*lid/hy^2 to the top u row.
    lid_load = np.zeros(grid.n_vel)
    for i in range(1, nx):
        lid_load[grid.u_index(i, ny - 1)] = 2.0 / hy**2

    # Pressure gradient, one row per velocity unknown.
    rows, cols, vals = [], [], []
    for i in range(1, nx):
        for j in range(ny):
            r = grid.u_index(i, j)
            rows += [r, r]
            cols += [i * ny + j, (i - 1) * ny + j]
            vals += [1.0 / hx, -1.0 / hx]
    for i in range(nx):
        for j in range(1, ny):
            r = grid.v_index(i, j)
            rows += [r, r]
            cols += [i * ny + j, i * ny + (j - 1)]
            vals += [1.0 / hy, -1.0 / hy]
    gradient = sp.csr_matrix(
        (vals, (rows, cols)), shape=(grid.n_vel, grid.n_p)
    )

    # Divergence, assembled from its own stencil (duality with the gradient
    # is checked by the tests, not imposed).
    rows, cols, vals = [], [], []
    for i in range(nx):
        for j in range(ny):
            r = i * ny + j
            if i + 1 <= nx - 1:
                rows.append(r)
                cols.append(grid.u_index(i + 1, j))
                vals.append(1.0 / hx)
            if i >= 1:
                rows.append(r)
                cols.append(grid.u_index(i, j))
                vals.append(-1.0 / hx)
            if j + 1 <= ny - 1:
                rows.append(r)
                cols.append(grid.v_index(i, j + 1))
                vals.append(1.0 / hy)
            if j >= 1:
                rows.append(r)
                cols.append(grid.v_index(i, j))
                vals.append(-1.0 / hy)
    divergence = sp.csr_matrix(
        (vals, (rows, cols)), shape=(grid.n_p, grid.n_vel)
    )

    control = None
    if control_fields is not None:
        control = np.atleast_2d(np.asarray(control_fields, dtype=float))
        if control.shape[0] != grid.n_vel:
            control = control.T
        if control.shape[0] != grid.n_vel:
            raise ConfigError(
                f"control fields have {control.shape[0]} rows, expected {grid.n_vel}"
            )

    return SemiDiscreteOperators(grid, laplacian, gradient, divergence, lid_load, control)


def padded_velocity(grid: CavityGrid, u: np.ndarray, v: np.ndarray, lid_speed: float):
    """Extend face arrays with boundary faces and tangential ghost layers.

    Returns ``up`` of shape (nx+1, ny+2) indexed [face_i, j+1] and ``vp``
    of shape (nx+2, ny+1) indexed [i+1, face_j].  Wall faces are zero, the
    top ghost row of u carries the moving lid.
    """
    nx, ny = grid.nx, grid.ny
    up = np.zeros((nx + 1, ny + 2))
    vp = np.zeros((nx + 2, ny + 1))
    up[1:nx, 1 : ny + 1] = u
    up[:, 0] = -up[:, 1]
    up[:, ny + 1] = 2.0 * lid_speed - up[:, ny]
    vp[1 : nx + 1, 1:ny] = v
    vp[0, :] = -vp[1, :]
    vp[nx + 1, :] = -vp[nx, :]
    return up, vp


def advection_from_padded(grid: CavityGrid, up: np.ndarray, vp: np.ndarray) -> np.ndarray:
    """Negated upwind transport term -(y.grad y) from padded face arrays."""
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy

    uc = up[1:nx, 1 : ny + 1]
    um = up[0 : nx - 1, 1 : ny + 1]
    upl = up[2 : nx + 1, 1 : ny + 1]
    ud = up[1:nx, 0:ny]
    uu = up[1:nx, 2 : ny + 2]
    vbar = 0.25 * (
        vp[1:nx, 0:ny] + vp[2 : nx + 1, 0:ny] + vp[1:nx, 1 : ny + 1] + vp[2 : nx + 1, 1 : ny + 1]
    )
    dudx = np.where(uc >= 0, (uc - um) / hx, (upl - uc) / hx)
    dudy = np.where(vbar >= 0, (uc - ud) / hy, (uu - uc) / hy)
    eta_u = -(uc * dudx + vbar * dudy)

    vc = vp[1 : nx + 1, 1:ny]
    vm = vp[0:nx, 1:ny]
    vpl = vp[2 : nx + 2, 1:ny]
    vd = vp[1 : nx + 1, 0 : ny - 1]
    vu = vp[1 : nx + 1, 2 : ny + 1]
    ubar = 0.25 * (
        up[0:nx, 1:ny] + up[1 : nx + 1, 1:ny] + up[0:nx, 2 : ny + 1] + up[1 : nx + 1, 2 : ny + 1]
    )
    dvdx = np.where(ubar >= 0, (vc - vm) / hx, (vpl - vc) / hx)
    dvdy = np.where(vc >= 0, (vc - vd) / hy, (vu - vc) / hy)
    eta_v = -(ubar * dvdx + vc * dvdy)

    return grid.join(eta_u, eta_v)


def advection_term(grid: CavityGrid, vel: np.ndarray, lid_speed: float = 1.0) -> np.ndarray:
    """Negated upwind transport term of a stacked velocity vector."""
    u, v = grid.split(vel)
    up, vp = padded_velocity(grid, u, v, lid_speed)
    return advection_from_padded(grid, up, vp)


# --- row-sampled evaluation -------------------------------------------------
#
# Each velocity row needs 5 same-component values (left/center/right along x,
# down/up along y -- in that order) and 4 cross-component values whose
# summation order matches advection_from_padded exactly.  Every stencil slot
# is an affine function  coef*state[idx] + const  of the interior unknowns
# (coef=-1 for ghost reflections, coef=0 for wall faces).

_WALL = (0.0, 0, 0.0)


def _u_slot(grid, i, jj):
    """Affine descriptor of u_pad[i, jj] (jj includes the +1 offset)."""
    nx, ny = grid.nx, grid.ny
    if i == 0 or i == nx:
        return _WALL
    if jj == 0:
        return (-1.0, grid.u_index(i, 0), 0.0)
    if jj == ny + 1:
        return (-1.0, grid.u_index(i, ny - 1), None)  # const filled with 2*lid
    return (1.0, grid.u_index(i, jj - 1), 0.0)


def _v_slot(grid, ii, j):
    """Affine descriptor of v_pad[ii, j] (ii includes the +1 offset)."""
    nx, ny = grid.nx, grid.ny
    if j == 0 or j == ny:
        return _WALL
    if ii == 0:
        return (-1.0, grid.v_index(0, j), 0.0)
    if ii == nx + 1:
        return (-1.0, grid.v_index(nx - 1, j), 0.0)
    return (1.0, grid.v_index(ii - 1, j), 0.0)


def _row_slots(grid, row, lid_speed):
    """The 9 stencil descriptors of one velocity row, main block first."""
    nx, ny = grid.nx, grid.ny
    if row < grid.n_u:
        i, j = divmod(row, ny)
        i += 1
        jj = j + 1
        slots = [
            _u_slot(grid, i - 1, jj),
            _u_slot(grid, i, jj),
            _u_slot(grid, i + 1, jj),
            _u_slot(grid, i, jj - 1),
            _u_slot(grid, i, jj + 1),
            _v_slot(grid, i, jj - 1),
            _v_slot(grid, i + 1, jj - 1),
            _v_slot(grid, i, jj),
            _v_slot(grid, i + 1, jj),
        ]
        kind = "u"
    else:
        i, j = divmod(row - grid.n_u, ny - 1)
        j += 1
        ii = i + 1
        slots = [
            _v_slot(grid, ii - 1, j),
            _v_slot(grid, ii, j),
            _v_slot(grid, ii + 1, j),
            _v_slot(grid, ii, j - 1),
            _v_slot(grid, ii, j + 1),
            _u_slot(grid, ii - 1, j),
            _u_slot(grid, ii, j),
            _u_slot(grid, ii - 1, j + 1),
            _u_slot(grid, ii, j + 1),
        ]
        kind = "v"
    slots = [
        (c, idx, 2.0 * lid_speed if const is None else const)
        for (c, idx, const) in slots
    ]
    return kind, slots


class SampledAdvection:
    """Advection term at a fixed set of velocity rows, from reduced state.

    The full state is ``mean + modes @ w``; only the interior unknowns
    appearing in the stencils of the selected rows are ever reconstructed,
    so an evaluation costs O(len(rows) * n_modes) regardless of grid size.
    """

    def __init__(self, grid, rows, mean, modes, lid_speed=1.0):
        self.grid = grid
        self.rows = np.asarray(rows, dtype=int)
        mean = np.asarray(mean, dtype=float)
        modes = np.asarray(modes, dtype=float)
        if mean.shape[0] != grid.n_vel or modes.shape[0] != grid.n_vel:
            raise ConfigError("mean/modes do not match the grid")

        descriptors = [_row_slots(grid, r, lid_speed) for r in self.rows]
        needed = sorted(
            {idx for _, slots in descriptors for (c, idx, _) in slots if c != 0.0}
        )
        pos_of = {idx: p for p, idx in enumerate(needed)}
        self._mean_s = mean[needed] if needed else np.zeros(1)
        self._modes_s = modes[needed] if needed else np.zeros((1, modes.shape[1]))

        self._kind_order = []
        self._coef = {}
        self._pos = {}
        self._const = {}
        self._out = {}
        for kind in ("u", "v"):
            sel = [k for k, (kk, _) in enumerate(descriptors) if kk == kind]
            if not sel:
                continue
            coef = np.zeros((len(sel), 9))
            pos = np.zeros((len(sel), 9), dtype=int)
            const = np.zeros((len(sel), 9))
            for a, k in enumerate(sel):
                for b, (c, idx, cst) in enumerate(descriptors[k][1]):
                    coef[a, b] = c
                    pos[a, b] = pos_of.get(idx, 0) if c != 0.0 else 0
                    const[a, b] = cst
            self._kind_order.append(kind)
            self._coef[kind] = coef
            self._pos[kind] = pos
            self._const[kind] = const
            self._out[kind] = np.asarray(sel, dtype=int)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def __call__(self, w: np.ndarray) -> np.ndarray:
        """Sampled advection values; w is (n_modes,) or (batch, n_modes)."""
        w = np.asarray(w, dtype=float)
        single = w.ndim == 1
        wb = w[None, :] if single else w
        gathered = self._mean_s[None, :] + wb @ self._modes_s.T
        out = np.empty((wb.shape[0], len(self.rows)))
        hx, hy = self.grid.hx, self.grid.hy
        for kind in self._kind_order:
            vals = (
                self._coef[kind][None] * gathered[:, self._pos[kind]]
                + self._const[kind][None]
            )
            cm, cc, cp = vals[..., 0], vals[..., 1], vals[..., 2]
            cd, cu = vals[..., 3], vals[..., 4]
            cross = 0.25 * (vals[..., 5] + vals[..., 6] + vals[..., 7] + vals[..., 8])
            if kind == "u":
                ddx = np.where(cc >= 0, (cc - cm) / hx, (cp - cc) / hx)
                ddy = np.where(cross >= 0, (cc - cd) / hy, (cu - cc) / hy)
                eta = -(cc * ddx + cross * ddy)
            else:
                ddx = np.where(cross >= 0, (cc - cm) / hx, (cp - cc) / hx)
                ddy = np.where(cc >= 0, (cc - cd) / hy, (cu - cc) / hy)
                eta = -(cross * ddx + cc * ddy)
            out[:, self._out[kind]] = eta
        return out[0] if single else out
