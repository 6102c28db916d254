"""Closed-loop evaluation: synthesized feedback on the reduced and full models.

The feedback is sampled once per trajectory step and held constant over
the step (zero-order hold).  Tracking quality is measured as the sup-norm
distance of the velocity field from the mean flow, reported at the
requested instants alongside the control trace.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .flow import CavitySolver, StaggeredState
from .hjb import ValueGrid, feedback_at
from .pod import PodBasis, project
from .rom import RomSystem, cost_batch, rhs_batch, rk4_step, running_cost


def _rom_callbacks(rom: RomSystem):
    def dynamics(points, u):
        return rhs_batch(rom, points, u)

    def stage_cost(points, u):
        return cost_batch(rom, points, u)

    return dynamics, stage_cost


def linf_error(field: np.ndarray, reference: np.ndarray) -> float:
    """Sup norm of the difference of two velocity vectors on one grid."""
    field = np.asarray(field, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if field.shape != reference.shape:
        raise ConfigError(
            f"field shapes differ: {field.shape} vs {reference.shape}"
        )
    return float(np.max(np.abs(field - reference)))


def run_closed_loop_rom(
    rom: RomSystem,
    value_grid: ValueGrid,
    controls,
    w0: np.ndarray,
    horizon: float,
    dt: float,
):
    """Feedback run of the reduced model.

    Returns (times, coefficients, control_trace) where control_trace[k] is
    the control held over step k.
    """
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    dynamics, stage_cost = _rom_callbacks(rom)
    n_steps = int(round(horizon / dt))
    coeffs = np.empty((n_steps + 1, rom.n_modes))
    coeffs[0] = np.asarray(w0, dtype=float)
    trace = np.empty(n_steps)
    times = np.arange(n_steps + 1) * dt
    for k in range(n_steps):
        u = feedback_at(value_grid, coeffs[k], dynamics, stage_cost, controls)
        trace[k] = u
        coeffs[k + 1] = rk4_step(rom, coeffs[k], u, dt)
        norm = float(np.linalg.norm(coeffs[k + 1]))
        if not np.isfinite(norm) or norm > 1e6:
            raise NumericalError(f"reduced closed loop blew up at t={times[k + 1]:.6g}")
    return times, coeffs, trace


def run_closed_loop_full(
    solver: CavitySolver,
    basis: PodBasis,
    rom: RomSystem,
    value_grid: ValueGrid,
    controls,
    y0: StaggeredState,
    horizon: float,
    dt: float,
    override_control=None,
):
    """Feedback run of the full finite-difference model.

    At every step the state is projected onto the basis, the minimizing
    control is evaluated online and held over the step.  Passing
    override_control forces that control at every step instead (the u == 0
    case reproduces the uncontrolled simulation exactly).

    Returns (states, control_trace).
    """
    if basis.n_modes < 1:
        raise ConfigError("basis must carry at least one mode")
    dynamics, stage_cost = _rom_callbacks(rom)
    n_steps = int(round(horizon / dt))
    states = [y0.copy()]
    trace = np.empty(n_steps)
    for k in range(n_steps):
        if override_control is None:
            w = project(basis, states[-1].velocity())
            u = feedback_at(value_grid, w, dynamics, stage_cost, controls)
        else:
            u = override_control
        trace[k] = u
        states.append(solver.step(states[-1], np.atleast_1d(float(u)), dt))
    return states, trace


@dataclass
class ClosedLoopReport:
    """Tracking errors at the report instants plus the control trace."""

    times: np.ndarray
    err_controlled: np.ndarray
    err_uncontrolled: np.ndarray
    trace_times: np.ndarray
    control_trace: np.ndarray
    shape_kind: str
    cost_estimate: float
    cost_tail: float

    def switch_count(self) -> int:
        if self.control_trace.size < 2:
            return 0
        return int(np.count_nonzero(np.diff(self.control_trace) != 0))


def error_series(states, mean: np.ndarray) -> np.ndarray:
    """Sup-norm distance from the mean flow at every stored step."""
    return np.array([linf_error(s.velocity(), mean) for s in states])


def sample_nearest(times: np.ndarray, series: np.ndarray, t: float, dt: float) -> float:
    """Series value at the stored step nearest to t."""
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > 0.5 * dt + 1e-12:
        raise ConfigError(f"time {t} lies beyond the stored horizon {times[-1]}")
    return float(series[k])


def build_report(
    controlled_states,
    uncontrolled_states,
    mean: np.ndarray,
    control_trace: np.ndarray,
    dt: float,
    report_times,
    shape_kind: str,
    cost_estimate: float = np.nan,
    cost_tail: float = np.nan,
) -> ClosedLoopReport:
    """Sample both error series at the requested instants."""
    if not controlled_states or not uncontrolled_states:
        raise ConfigError("cannot build a report from empty runs")
    report_times = np.asarray(report_times, dtype=float)
    t_ctrl = np.array([s.t for s in controlled_states])
    t_unc = np.array([s.t for s in uncontrolled_states])
    err_ctrl = error_series(controlled_states, mean)
    err_unc = error_series(uncontrolled_states, mean)
    sampled_ctrl = np.array([sample_nearest(t_ctrl, err_ctrl, t, dt) for t in report_times])
    sampled_unc = np.array([sample_nearest(t_unc, err_unc, t, dt) for t in report_times])
    trace_times = np.arange(control_trace.size) * dt
    return ClosedLoopReport(
        report_times,
        sampled_ctrl,
        sampled_unc,
        trace_times,
        np.asarray(control_trace, dtype=float),
        shape_kind,
        cost_estimate,
        cost_tail,
    )
