"""Stage functions behind the command-line pipeline.

Each stage consumes only artifacts of earlier stages plus the
configuration, and writes its own artifacts into the output directory.
All stages are deterministic: rerunning one with the same inputs
reproduces its outputs byte for byte.
"""

import logging
import math
from pathlib import Path

import numpy as np

from . import closed_loop, deim, fileio, pod, rom, snapshots
from .config import SHAPE_KINDS, PipelineConfig
from .errors import ConfigError, MissingArtifactError
from .flow import CavitySolver, ShapeFunction, ShapeKind, StaggeredState, steady_state
from .grid import build_grid
from .hjb import build_value_grid, extract_policy, value_iteration
from .pod import project

logger = logging.getLogger(__name__)

_FMT = "%.17g"


# --- artifact paths ----------------------------------------------------------

def snapshots_path(out: Path) -> Path:
    return out / "snapshots.txt"


def basis_path(out: Path) -> Path:
    return out / "basis.txt"


def deim_path(out: Path) -> Path:
    return out / "deim.txt"


def steady_path(out: Path, kind: str) -> Path:
    return out / f"steady_{kind}.txt"


def rom_path(out: Path, shape: str) -> Path:
    return out / f"rom_{shape}.txt"


def value_path(out: Path, shape: str) -> Path:
    return out / f"value_{shape}.txt"


def policy_path(out: Path, shape: str) -> Path:
    return out / f"policy_{shape}.txt"


def report_csv_path(out: Path, shape: str) -> Path:
    return out / f"report_{shape}.csv"


def trace_csv_path(out: Path, shape: str) -> Path:
    return out / f"control_trace_{shape}.csv"


def summary_csv_path(out: Path, shape: str) -> Path:
    return out / f"summary_{shape}.csv"


def rom_trajectory_path(out: Path, shape: str) -> Path:
    return out / f"rom_trajectory_{shape}.csv"


def controlled_field_path(out: Path, shape: str, t: float) -> Path:
    return out / f"field_controlled_{shape}_t{t:g}.txt"


def uncontrolled_field_path(out: Path, t: float) -> Path:
    return out / f"field_uncontrolled_t{t:g}.txt"


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(path, stage)
    return path


# --- shared loaders ----------------------------------------------------------

def _load_snapshots(out: Path):
    return snapshots.load(_require(snapshots_path(out), "simulate"))


def _load_basis(out: Path):
    return pod.load(_require(basis_path(out), "reduce"))


def _load_rom(out: Path, shape: str, basis):
    return rom.load(_require(rom_path(out, shape), "reduce"), basis, shape_kind=shape)


def _load_value(out: Path, shape: str):
    return fileio.load_value_grid(_require(value_path(out, shape), "solve-hjb"))


# --- stages ------------------------------------------------------------------

def cmd_simulate(config: PipelineConfig, out: Path) -> Path:
    """Uncontrolled spin-up run; collects and persists the snapshot set."""
    out.mkdir(parents=True, exist_ok=True)
    grid = build_grid(config.nx, config.ny)
    solver = CavitySolver(grid, config.nu)
    stride = int(round(config.snapshot_horizon / (config.snapshot_count * config.dt)))
    trajectory = solver.simulate(
        StaggeredState.zero(grid),
        None,
        config.snapshot_horizon,
        config.dt,
        snapshot_stride=stride,
    )
    flagged = trajectory.snapshot_indices[: config.snapshot_count]
    times = trajectory.times[flagged]
    snapshot_set = snapshots.collect(trajectory, times, grid)
    snapshots.save(snapshot_set, snapshots_path(out))
    logger.info(
        "collected %d snapshots over [0, %g] on %dx%d",
        snapshot_set.count,
        config.snapshot_horizon,
        config.nx,
        config.ny,
    )
    return snapshots_path(out)


def cmd_reduce(config: PipelineConfig, out: Path):
    """Flow basis, interpolation operator, steady shape, reduced system."""
    out.mkdir(parents=True, exist_ok=True)
    snapshot_set = _load_snapshots(out)
    grid = snapshot_set.grid
    basis = pod.compute_pod(snapshot_set, config.pod_modes)
    pod.save(basis, basis_path(out))

    states = [snapshot_set.snapshot(j) for j in range(snapshot_set.count)]
    nonlinearity = deim.nonlinearity_snapshots(grid, states)
    deim_op = deim.build_deim(basis, nonlinearity, config.deim_modes)
    deim.save(deim_op, deim_path(out))

    shape_state = steady_state(
        grid,
        config.nu,
        ShapeKind(config.shape_kind),
        tol=config.steady_tol,
        max_steps=config.steady_max_steps,
    )
    fileio.save_field(
        steady_path(out, config.shape_kind),
        grid,
        shape_state.u,
        shape_state.v,
        shape_state.p,
        shape_state.t,
    )
    shape = ShapeFunction(ShapeKind(config.shape_kind), shape_state.velocity())

    solver = CavitySolver(grid, config.nu)
    system = rom.assemble_rom(
        basis,
        solver.ops,
        shape,
        deim_op,
        config.nu,
        config.alpha,
        config.discount,
    )
    rom.save(system, rom_path(out, config.shape_kind))
    return basis_path(out), deim_path(out), rom_path(out, config.shape_kind)


def auto_bounds(basis, snapshot_set, spacing: float, margin: float = 1.5):
    """Symmetric per-axis box covering the projected snapshots.

    Each half-width is margin times the largest observed |w_i|, rounded up
    to a whole number of cells so the extent divides the spacing.
    """
    projected = basis.modes.T @ snapshot_set.fluctuations
    bounds = []
    for axis in range(basis.n_modes):
        radius = margin * float(np.max(np.abs(projected[axis])))
        cells = max(1, int(math.ceil(radius / spacing - 1e-9)))
        bounds.append((-cells * spacing, cells * spacing))
    return tuple(bounds)


def cmd_solve_hjb(config: PipelineConfig, out: Path):
    """Value function and feedback table on the reduced state box."""
    out.mkdir(parents=True, exist_ok=True)
    snapshot_set = _load_snapshots(out)
    basis = _load_basis(out)
    system = _load_rom(out, config.shape_kind, basis)
    if config.hjb_bounds == "auto":
        bounds = auto_bounds(basis, snapshot_set, config.hjb_spacing)
    else:
        bounds = config.hjb_bounds
    grid = build_value_grid(
        basis.n_modes, bounds, config.hjb_spacing, config.hjb_step, config.discount
    )
    logger.info(
        "value grid: %s nodes over %s",
        "x".join(str(s) for s in grid.axis_sizes),
        [(float(lo), float(hi)) for lo, hi in zip(grid.bounds_lo, grid.bounds_hi)],
    )
    dynamics = lambda points, u: rom.rhs_batch(system, points, u)
    stage_cost = lambda points, u: rom.cost_batch(system, points, u)
    value_iteration(
        grid,
        dynamics,
        stage_cost,
        list(config.controls),
        tol=config.hjb_tol,
        max_iters=config.hjb_max_iters,
        threads=config.threads,
    )
    for k, residual in enumerate(grid.residual_history[:12], start=1):
        logger.info("sweep %d residual %.6e", k, residual)
    fileio.save_value_grid(value_path(out, config.shape_kind), grid)
    policy = extract_policy(grid, dynamics, stage_cost, list(config.controls))
    fileio.save_policy(policy_path(out, config.shape_kind), policy)
    return value_path(out, config.shape_kind), policy_path(out, config.shape_kind)


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="ascii") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(
                ",".join(x if isinstance(x, str) else _FMT % x for x in row) + "\n"
            )


def cmd_control(config: PipelineConfig, out: Path):
    """Closed-loop runs on the reduced and full models plus error tables."""
    out.mkdir(parents=True, exist_ok=True)
    shape = config.shape_kind
    snapshot_set = _load_snapshots(out)
    basis = _load_basis(out)
    system = _load_rom(out, shape, basis)
    value_grid = _load_value(out, shape)
    grid = basis.grid
    _, shape_u, shape_v, _, _ = fileio.load_field(_require(steady_path(out, shape), "reduce"))
    shape_vel = grid.join(shape_u, shape_v)

    solver = CavitySolver(grid, config.nu, control_fields=shape_vel[:, None])
    y0 = StaggeredState.zero(grid)
    controls = list(config.controls)

    uncontrolled = solver.simulate(y0, None, config.control_horizon, config.dt)
    controlled, trace = closed_loop.run_closed_loop_full(
        solver, basis, system, value_grid, controls, y0, config.control_horizon, config.dt
    )

    w0 = project(basis, y0.velocity())
    rom_times, rom_coeffs, rom_trace = closed_loop.run_closed_loop_rom(
        system, value_grid, controls, w0, config.control_horizon, config.dt
    )
    rates = np.array(
        [
            rom.running_cost(
                system, rom_coeffs[k], rom_trace[min(k, rom_trace.size - 1)]
            )
            for k in range(rom_times.size)
        ]
    )
    weights = np.exp(-config.discount * rom_times)
    cost_estimate = float(np.trapezoid(rates * weights, rom_times))
    cost_tail = float(rates.max()) * math.exp(
        -config.discount * config.control_horizon
    ) / config.discount

    report = closed_loop.build_report(
        controlled,
        uncontrolled.states,
        snapshot_set.mean,
        trace,
        config.dt,
        config.report_times,
        shape,
        cost_estimate,
        cost_tail,
    )

    _write_csv(
        report_csv_path(out, shape),
        ["t", "err_controlled", "err_uncontrolled", "shape_kind"],
        [
            (t, ec, eu, shape)
            for t, ec, eu in zip(report.times, report.err_controlled, report.err_uncontrolled)
        ],
    )
    _write_csv(
        trace_csv_path(out, shape),
        ["t", "u"],
        list(zip(report.trace_times, report.control_trace)),
    )

    # Reduced-model variant of the tracking error, for the summary only;
    # the full-model errors above are the primary table.
    rom_errors = []
    for t in config.report_times:
        k = int(np.argmin(np.abs(rom_times - t)))
        field = pod.reconstruct(basis, rom_coeffs[k])
        rom_errors.append(closed_loop.linf_error(field, snapshot_set.mean))
    _write_csv(
        summary_csv_path(out, shape),
        ["shape_kind", "cost_estimate", "cost_tail", "switches"]
        + [f"err_rom_t{t:g}" for t in config.report_times],
        [(shape, cost_estimate, cost_tail, float(report.switch_count())) + tuple(rom_errors)],
    )

    _write_csv(
        rom_trajectory_path(out, shape),
        ["t"] + [f"w{i + 1}" for i in range(system.n_modes)] + ["u"],
        [
            (rom_times[k], *rom_coeffs[k], rom_trace[min(k, rom_trace.size - 1)])
            for k in range(rom_times.size)
        ],
    )

    traj_times = np.array([s.t for s in controlled])
    for t in config.report_times:
        k = int(np.argmin(np.abs(traj_times - t)))
        state = controlled[k]
        fileio.save_field(
            controlled_field_path(out, shape, t), grid, state.u, state.v, state.p, state.t
        )
        state = uncontrolled.states[k]
        fileio.save_field(
            uncontrolled_field_path(out, t), grid, state.u, state.v, state.p, state.t
        )
    return report


def cmd_report(config: PipelineConfig, out: Path):
    """Combined error tables, quiver data and rendered figures."""
    from . import report as report_mod

    return report_mod.generate(config, out)


def cmd_run_all(config: PipelineConfig, out: Path):
    cmd_simulate(config, out)
    cmd_reduce(config, out)
    cmd_solve_hjb(config, out)
    cmd_control(config, out)
    cmd_report(config, out)
