"""Projection-method solver for the controlled cavity flow.

One step performs explicit upwind advection, an implicit viscous solve
with the lagged pressure gradient and the control forcing, and a
pressure-correction projection back onto the discretely divergence-free
space.  The incremental (lagged-pressure) form makes true steady states
exact fixed points of the stepping map for any stable dt.  All linear
systems are solved with sparse LU factorizations computed once per grid
(and once per time step size for the viscous Helmholtz operator), which
keeps runs deterministic.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, NumericalError, StabilityError
from .grid import CavityGrid
from .operators import SemiDiscreteOperators, advection_term, assemble_operators

ADVECTIVE_SAFETY = 0.8


class ShapeKind(str, Enum):
    NAVIER_STOKES_STEADY = "navier_stokes"
    STOKES_STEADY = "stokes"


@dataclass
class ShapeFunction:
    """Fixed spatial field through which the scalar control signal forces
    the momentum equation."""

    kind: ShapeKind
    velocity: np.ndarray  # (n_vel,)


@dataclass
class StaggeredState:
    """Velocity faces plus cell pressures at one time instant."""

    u: np.ndarray  # (nx-1, ny)
    v: np.ndarray  # (nx, ny-1)
    p: np.ndarray  # (nx, ny)
    t: float = 0.0

    @classmethod
    def zero(cls, grid: CavityGrid, t: float = 0.0) -> "StaggeredState":
        return cls(
            np.zeros((grid.nx - 1, grid.ny)),
            np.zeros((grid.nx, grid.ny - 1)),
            np.zeros((grid.nx, grid.ny)),
            t,
        )

    @classmethod
    def from_velocity(cls, grid: CavityGrid, vel: np.ndarray, p=None, t: float = 0.0):
        u, v = grid.split(vel)
        return cls(u.copy(), v.copy(), np.zeros((grid.nx, grid.ny)) if p is None else p, t)

    def velocity(self) -> np.ndarray:
        return np.concatenate([self.u.ravel(), self.v.ravel()])

    def copy(self) -> "StaggeredState":
        return StaggeredState(self.u.copy(), self.v.copy(), self.p.copy(), self.t)


@dataclass
class Trajectory:
    states: list
    snapshot_indices: list

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def state_at(self, t: float, tol: float = 1e-9) -> StaggeredState:
        times = self.times
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > tol:
            raise ConfigError(f"no stored state at t={t} (closest is t={times[k]})")
        return self.states[k]


class CavitySolver:
    """Stable finite-difference integrator on one fixed grid.

    Instances hold the assembled operators and cached factorizations; all
    stepping methods are pure functions of their explicit state argument,
    so a solver can be shared across threads.
    """

    def __init__(
        self,
        grid: CavityGrid,
        viscosity: float,
        lid_speed: float = 1.0,
        control_fields: np.ndarray | None = None,
    ):
        self.grid = grid
        self.viscosity = float(viscosity)
        self.lid_speed = float(lid_speed)
        self.ops: SemiDiscreteOperators = assemble_operators(
            grid, viscosity, control_fields
        )
        self._helmholtz = {}
        # Pressure Poisson operator D*C with one pinned cell to fix the
        # constant nullspace; the right-hand side is mean-corrected so the
        # pinned row stays consistent.
        poisson = (self.ops.divergence @ self.ops.gradient).tolil()
        poisson[0, :] = 0.0
        poisson[0, 0] = 1.0
        self._poisson_lu = spla.splu(poisson.tocsc())

    # -- linear solves --------------------------------------------------

    def _viscous_lu(self, dt: float):
        key = float(dt)
        if key not in self._helmholtz:
            n = self.grid.n_vel
            matrix = sp.identity(n, format="csc") + (dt * self.viscosity) * self.ops.laplacian
            self._helmholtz[key] = spla.splu(matrix.tocsc())
        return self._helmholtz[key]

    def pressure_project(self, vel: np.ndarray, dt: float):
        """Project a velocity onto the divergence-free space; returns
        (projected velocity, pressure)."""
        rhs = (self.ops.divergence @ vel) / dt
        rhs = rhs - rhs.mean()
        rhs[0] = 0.0
        phi = self._poisson_lu.solve(rhs)
        return vel - dt * (self.ops.gradient @ phi), phi

    # -- stepping ---------------------------------------------------------

    def stability_limit(self, vel: np.ndarray) -> float:
        vmax = max(float(np.max(np.abs(vel))) if vel.size else 0.0, abs(self.lid_speed))
        h = min(self.grid.hx, self.grid.hy)
        return ADVECTIVE_SAFETY * h / max(vmax, 1e-12)

    def step(self, state: StaggeredState, control, dt: float) -> StaggeredState:
        """Advance one projection step with piecewise-constant control.

        control is a vector in U (length = number of shape functions), a
        scalar when there is a single shape function, or None for no
        forcing.
        """
        if dt <= 0:
            raise ConfigError(f"dt must be positive, got {dt}")
        vel = state.velocity()
        limit = self.stability_limit(vel)
        if dt > limit:
            raise StabilityError(
                f"dt={dt} exceeds advective stability bound {limit:.3e} at t={state.t}"
            )
        if control is not None and not np.all(np.isfinite(np.atleast_1d(control))):
            raise ConfigError(f"non-finite control at t={state.t}")

        pressure_old = state.p.ravel()
        rhs = vel + dt * (
            advection_term(self.grid, vel, self.lid_speed)
            + (self.viscosity * self.lid_speed) * self.ops.lid_load
            - self.ops.gradient @ pressure_old
        )
        if control is not None:
            u_vec = np.atleast_1d(np.asarray(control, dtype=float))
            if np.any(u_vec != 0.0):
                if self.ops.control is None:
                    raise ConfigError("solver has no control fields attached")
                rhs = rhs + dt * (self.ops.control @ u_vec)
        star = self._viscous_lu(dt).solve(rhs)
        new_vel, increment = self.pressure_project(star, dt)
        if not np.all(np.isfinite(new_vel)):
            raise NumericalError(f"velocity blow-up at t={state.t + dt}")
        u, v = self.grid.split(new_vel)
        pressure = (pressure_old + increment).reshape(self.grid.nx, self.grid.ny)
        return StaggeredState(u, v, pressure, state.t + dt)

    def simulate(
        self,
        y0: StaggeredState,
        control_signal,
        horizon: float,
        dt: float,
        snapshot_stride: int = 1,
    ) -> Trajectory:
        """Integrate from y0, flagging every stride-th state for export.

        control_signal maps t -> control vector (or None for u == 0); the
        control is held constant over each step.
        """
        if horizon < 0 or dt <= 0 or snapshot_stride < 1:
            raise ConfigError(
                f"bad simulate arguments: horizon={horizon}, dt={dt}, stride={snapshot_stride}"
            )
        n_steps = int(round(horizon / dt))
        states = [y0.copy()]
        for k in range(n_steps):
            control = None if control_signal is None else control_signal(states[-1].t)
            try:
                states.append(self.step(states[-1], control, dt))
            except NumericalError as err:
                raise NumericalError(f"step failed at t={states[-1].t}: {err}") from err
        flagged = list(range(0, n_steps + 1, snapshot_stride))
        return Trajectory(states, flagged)

    # -- diagnostics -----------------------------------------------------

    def divergence_inf(self, state: StaggeredState) -> float:
        return float(np.max(np.abs(self.ops.divergence @ state.velocity())))

    def kinetic_energy(self, state: StaggeredState) -> float:
        vel = state.velocity()
        return 0.5 * self.grid.cell_area * float(vel @ vel)

    def momentum_rhs(self, vel: np.ndarray, control=None) -> np.ndarray:
        """Momentum right-hand side before pressure projection."""
        out = (
            -self.viscosity * (self.ops.laplacian @ vel)
            + (self.viscosity * self.lid_speed) * self.ops.lid_load
            + advection_term(self.grid, vel, self.lid_speed)
        )
        if control is not None:
            u_vec = np.atleast_1d(np.asarray(control, dtype=float))
            if np.any(u_vec != 0.0):
                out = out + self.ops.control @ u_vec
        return out

    def steady_residual(self, state: StaggeredState, include_advection: bool = True) -> float:
        """Sup norm of the Leray-projected steady residual."""
        vel = state.velocity()
        raw = -self.viscosity * (self.ops.laplacian @ vel) + (
            self.viscosity * self.lid_speed
        ) * self.ops.lid_load
        if include_advection:
            raw = raw + advection_term(self.grid, vel, self.lid_speed)
        projected, _ = self.pressure_project(raw, 1.0)
        return float(np.max(np.abs(projected)))


def stokes_steady(
    grid: CavityGrid, viscosity: float, lid_speed: float = 1.0
) -> StaggeredState:
    """Steady Stokes solution by one saddle-point solve."""
    ops = assemble_operators(grid, viscosity)
    saddle = sp.bmat(
        [
            [viscosity * ops.laplacian, ops.gradient],
            [ops.divergence, None],
        ],
        format="lil",
    )
    # Pin one pressure value; global mass conservation makes the dropped
    # continuity row redundant.
    row = grid.n_vel
    saddle[row, :] = 0.0
    saddle[row, grid.n_vel] = 1.0
    rhs = np.zeros(grid.n_vel + grid.n_p)
    rhs[: grid.n_vel] = (viscosity * lid_speed) * ops.lid_load
    solution = spla.splu(saddle.tocsc()).solve(rhs)
    u, v = grid.split(solution[: grid.n_vel])
    p = solution[grid.n_vel :].reshape(grid.nx, grid.ny)
    return StaggeredState(u, v, p, 0.0)


def navier_stokes_steady(
    solver: CavitySolver,
    tol: float = 1e-8,
    max_steps: int = 200_000,
    dt: float | None = None,
) -> StaggeredState:
    """Steady Navier-Stokes solution by pseudo-time marching.

    Marches the projection scheme from the Stokes solution until the
    time-derivative residual drops below tol; raises NumericalError if the
    step budget runs out first.
    """
    state = stokes_steady(solver.grid, solver.viscosity, solver.lid_speed)
    if dt is None:
        dt = ADVECTIVE_SAFETY * min(solver.grid.hx, solver.grid.hy) / max(
            1.0, abs(solver.lid_speed)
        )
    for _ in range(max_steps):
        new = solver.step(state, None, dt)
        residual = float(np.max(np.abs(new.velocity() - state.velocity()))) / dt
        state = new
        if residual < tol:
            state.t = 0.0
            return state
    raise NumericalError(
        f"steady state not reached in {max_steps} steps (residual {residual:.3e} > {tol})"
    )


def steady_state(
    grid: CavityGrid,
    viscosity: float,
    kind: ShapeKind,
    lid_speed: float = 1.0,
    tol: float = 1e-8,
    max_steps: int = 200_000,
) -> StaggeredState:
    """Steady flow of the requested kind on the given grid."""
    kind = ShapeKind(kind)
    if viscosity <= 0:
        raise ConfigError(f"viscosity must be positive, got {viscosity}")
    if kind is ShapeKind.STOKES_STEADY:
        return stokes_steady(grid, viscosity, lid_speed)
    solver = CavitySolver(grid, viscosity, lid_speed)
    return navier_stokes_steady(solver, tol=tol, max_steps=max_steps)


def shape_function(
    grid: CavityGrid, viscosity: float, kind: ShapeKind, lid_speed: float = 1.0, **kwargs
) -> ShapeFunction:
    """Shape function given by the steady flow of the requested kind."""
    state = steady_state(grid, viscosity, kind, lid_speed, **kwargs)
    return ShapeFunction(ShapeKind(kind), state.velocity())
