"""Galerkin reduced-order model of the cavity flow.

Projects the semi-discrete momentum balance onto the orthonormal basis.
Because the basis vectors are discretely divergence-free, the pressure
drops out; the viscous boundary lift produces a constant forcing term and
the advection nonlinearity is evaluated through the sampled-row
interpolation, so the online right-hand side never touches the full grid.
"""

from dataclasses import dataclass

import numpy as np

from . import fileio
from .deim import DeimOperator, apply_deim
from .errors import ConfigError, NumericalError
from .flow import ShapeFunction
from .grid import CavityGrid
from .operators import SampledAdvection, SemiDiscreteOperators, advection_term
from .pod import PodBasis

BLOWUP_NORM = 1e6


@dataclass
class RomSystem:
    """Reduced operators and cost parameters of the l-dimensional model."""

    grid: CavityGrid
    n_modes: int
    mass: np.ndarray         # (l, l), identity for an orthonormal basis
    stiffness: np.ndarray    # (l, l), reduced Laplacian
    control: np.ndarray      # (l, m_controls), reduced injection fields
    const_force: np.ndarray  # (l,), viscous boundary-lift contribution
    deim: DeimOperator
    sampler: SampledAdvection
    viscosity: float
    alpha: float
    discount: float
    shape_kind: str = ""


def assemble_rom(
    basis: PodBasis,
    ops: SemiDiscreteOperators,
    shape: ShapeFunction,
    deim_op: DeimOperator,
    viscosity: float,
    alpha: float,
    discount: float,
    lid_speed: float = 1.0,
) -> RomSystem:
    """Reduced operators from the basis and the semi-discrete system.

    Substituting mean + modes @ w into the momentum balance yields the
    reduced Laplacian acting on w, a constant term collecting the lid
    boundary lift and the mean-flow diffusion, and the advection term; the
    latter (with its own mean-flow couplings) is evaluated online at the
    interpolation rows only.
    """
    if viscosity <= 0 or discount <= 0 or alpha < 0:
        raise ConfigError(
            f"need viscosity>0, discount>0, alpha>=0; got {viscosity}, {discount}, {alpha}"
        )
    grid = basis.grid
    if ops.grid.nx != grid.nx or ops.grid.ny != grid.ny:
        raise ConfigError("operator grid does not match basis grid")
    if shape.velocity.shape != (grid.n_vel,):
        raise ConfigError("shape function does not match the grid")
    modes = basis.modes
    mass = modes.T @ modes
    stiffness = modes.T @ (ops.laplacian @ modes)
    control = modes.T @ shape.velocity[:, None]
    const_force = viscosity * (
        modes.T @ (lid_speed * ops.lid_load - ops.laplacian @ basis.mean)
    )
    sampler = SampledAdvection(grid, deim_op.indices, basis.mean, modes, lid_speed)
    return RomSystem(
        grid,
        basis.n_modes,
        mass,
        stiffness,
        control,
        const_force,
        deim_op,
        sampler,
        float(viscosity),
        float(alpha),
        float(discount),
        shape.kind.value,
    )


def _as_control_vector(rom: RomSystem, u) -> np.ndarray:
    u_vec = np.atleast_1d(np.asarray(u, dtype=float))
    if u_vec.shape != (rom.control.shape[1],):
        raise ConfigError(
            f"control has shape {u_vec.shape}, expected ({rom.control.shape[1]},)"
        )
    return u_vec


def rhs_batch(rom: RomSystem, coeffs: np.ndarray, u) -> np.ndarray:
    """Reduced right-hand side for a batch of coefficient vectors."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    u_vec = _as_control_vector(rom, u)
    out = -rom.viscosity * (coeffs @ rom.stiffness.T)
    out = out + rom.const_force[None, :]
    out = out + apply_deim(rom.deim, rom.sampler(coeffs))
    out = out + (rom.control @ u_vec)[None, :]
    return out


def rom_rhs(rom: RomSystem, coeffs: np.ndarray, u) -> np.ndarray:
    """Reduced right-hand side at one coefficient vector."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (rom.n_modes,):
        raise ConfigError(
            f"coefficients have shape {coeffs.shape}, expected ({rom.n_modes},)"
        )
    out = rhs_batch(rom, coeffs[None, :], u)[0]
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite reduced right-hand side")
    return out


def galerkin_nonlinearity(basis: PodBasis, coeffs: np.ndarray, lid_speed: float = 1.0):
    """Exact reduced advection modes^T eta(mean + modes @ w).

    The full-grid reference evaluation that the sampled-row path
    approximates; used for consistency checks.
    """
    field = basis.mean + basis.modes @ np.asarray(coeffs, dtype=float)
    return basis.modes.T @ advection_term(basis.grid, field, lid_speed)


def rk4_step(rom: RomSystem, coeffs: np.ndarray, u, dt: float) -> np.ndarray:
    """One classical fourth-order step with the control held constant."""
    k1 = rhs_batch(rom, coeffs[None, :], u)[0]
    k2 = rhs_batch(rom, (coeffs + 0.5 * dt * k1)[None, :], u)[0]
    k3 = rhs_batch(rom, (coeffs + 0.5 * dt * k2)[None, :], u)[0]
    k4 = rhs_batch(rom, (coeffs + dt * k3)[None, :], u)[0]
    return coeffs + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_rom(rom: RomSystem, w0: np.ndarray, control_signal, horizon: float, dt: float):
    """Explicit fourth-order integration at uniform dt.

    control_signal maps t to a control (scalar or vector); None means
    u == 0 throughout.  Returns (times, coefficients) with coefficients of
    shape (n_steps+1, n_modes).  Aborts with the failing time if the state
    norm exceeds 1e6.
    """
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (rom.n_modes,):
        raise ConfigError(f"w0 has shape {w0.shape}, expected ({rom.n_modes},)")
    n_steps = int(round(horizon / dt))
    coeffs = np.empty((n_steps + 1, rom.n_modes))
    coeffs[0] = w0
    times = np.arange(n_steps + 1) * dt
    for k in range(n_steps):
        u = 0.0 if control_signal is None else control_signal(times[k])
        coeffs[k + 1] = rk4_step(rom, coeffs[k], u, dt)
        norm = float(np.linalg.norm(coeffs[k + 1]))
        if not np.isfinite(norm) or norm > BLOWUP_NORM:
            raise NumericalError(
                f"reduced state blow-up at t={times[k + 1]:.6g} (|w|={norm:.3e})"
            )
    return times, coeffs


def running_cost(rom: RomSystem, coeffs: np.ndarray, u) -> float:
    """Instantaneous cost |w|^2 + alpha |u|^2, steering w to the origin.

    The tracking term is the squared Euclidean norm of the reduced
    coordinates; with the Euclidean-orthonormal basis this is the squared
    reconstruction error up to the uniform cell-area factor, which is
    absorbed into the state weight so the control penalty alpha keeps the
    controller active.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    u_vec = np.atleast_1d(np.asarray(u, dtype=float))
    return float(coeffs @ coeffs) + rom.alpha * float(u_vec @ u_vec)


def cost_batch(rom: RomSystem, coeffs: np.ndarray, u) -> np.ndarray:
    """running_cost over a batch of coefficient vectors (same control)."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    u_vec = np.atleast_1d(np.asarray(u, dtype=float))
    return np.einsum("ij,ij->i", coeffs, coeffs) + rom.alpha * float(u_vec @ u_vec)


def reduced_cost(rom: RomSystem, w0: np.ndarray, control_signal, horizon: float, dt: float):
    """Discounted trapezoid quadrature of the running cost.

    Returns (cost, tail_bound) where the tail bound L_max e^{-lambda T} /
    lambda covers the truncated part of the infinite horizon.
    """
    times, coeffs = integrate_rom(rom, w0, control_signal, horizon, dt)
    rates = np.array(
        [
            running_cost(
                rom, coeffs[k], 0.0 if control_signal is None else control_signal(times[k])
            )
            for k in range(times.size)
        ]
    )
    weights = np.exp(-rom.discount * times)
    cost = float(np.trapezoid(rates * weights, times)) if times.size > 1 else 0.0
    tail = float(rates.max()) * np.exp(-rom.discount * horizon) / rom.discount
    return cost, tail


def save(rom: RomSystem, path) -> None:
    fileio.save_rom(path, rom)


def load(path, basis: PodBasis, lid_speed: float = 1.0, shape_kind: str = "") -> RomSystem:
    """Rebuild a reduced system from file, rebinding the advection sampler
    to the given basis."""
    data = fileio.load_rom_arrays(path)
    if data["n_modes"] != basis.n_modes:
        raise ConfigError(
            f"ROM file has {data['n_modes']} modes, basis has {basis.n_modes}"
        )
    deim_op = DeimOperator(data["deim_indices"], data["deim_projection"])
    sampler = SampledAdvection(
        basis.grid, deim_op.indices, basis.mean, basis.modes, lid_speed
    )
    return RomSystem(
        basis.grid,
        data["n_modes"],
        data["mass"],
        data["stiffness"],
        data["control"],
        data["const_force"],
        deim_op,
        sampler,
        data["viscosity"],
        data["alpha"],
        data["discount"],
        shape_kind,
    )
