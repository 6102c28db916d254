"""Report stage: combined tables, quiver exports, rendered figures.

Writes the delimited outputs first (one table mirroring the two-shape
error comparison, `x y u v` quiver rows for the mean, controlled and
uncontrolled fields) and renders the matching figures to PNG files next
to them.
"""

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import fileio, pipeline, snapshots
from .config import SHAPE_KINDS, PipelineConfig
from .errors import MissingArtifactError
from .grid import CavityGrid

logger = logging.getLogger(__name__)

_FMT = "%.17g"


def cell_centered(grid: CavityGrid, vel: np.ndarray):
    """Velocity components averaged to cell centers, each (nx, ny)."""
    u, v = grid.split(vel)
    u_full = np.zeros((grid.nx + 1, grid.ny))
    u_full[1 : grid.nx] = u
    v_full = np.zeros((grid.nx, grid.ny + 1))
    v_full[:, 1 : grid.ny] = v
    uc = 0.5 * (u_full[:-1] + u_full[1:])
    vc = 0.5 * (v_full[:, :-1] + v_full[:, 1:])
    return uc, vc


def write_quiver(path, grid: CavityGrid, vel: np.ndarray) -> None:
    """Cell-center samples as `x y u v` rows."""
    uc, vc = cell_centered(grid, vel)
    x, y = grid.cell_centers()
    with open(path, "w", encoding="ascii") as handle:
        for i in range(grid.nx):
            for j in range(grid.ny):
                handle.write(
                    " ".join(_FMT % value for value in (x[i, j], y[i, j], uc[i, j], vc[i, j]))
                    + "\n"
                )


def _read_report_csv(path):
    rows = []
    with open(path, "r", encoding="ascii") as handle:
        header = handle.readline().strip().split(",")
        for line in handle:
            parts = line.strip().split(",")
            rows.append(dict(zip(header, parts)))
    return rows


def _quiver_panel(ax, grid, vel, title, stride):
    uc, vc = cell_centered(grid, vel)
    x, y = grid.cell_centers()
    sl = (slice(None, None, stride), slice(None, None, stride))
    ax.quiver(x[sl], y[sl], uc[sl], vc[sl], scale=12.0, width=0.004)
    ax.set_title(title)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_aspect("equal")


def _flow_figure(path, grid, mean, controlled, uncontrolled, t):
    stride = max(1, grid.nx // 16)
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    _quiver_panel(axes[0], grid, mean, "mean flow", stride)
    _quiver_panel(axes[1], grid, controlled, f"controlled, t={t:g}", stride)
    _quiver_panel(axes[2], grid, uncontrolled, f"uncontrolled, t={t:g}", stride)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _control_figure(path, times, trace, controls):
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.step(times, trace, where="post")
    ax.set_xlabel("t")
    ax.set_ylabel("u")
    ax.set_yticks(sorted(controls))
    ax.set_ylim(min(controls) - 0.3, max(controls) + 0.3)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def generate(config: PipelineConfig, out: Path):
    """Aggregate whatever shape runs are present into tables and figures."""
    out = Path(out)
    snapshot_set = snapshots.load(
        pipeline._require(pipeline.snapshots_path(out), "simulate")
    )
    grid = snapshot_set.grid

    present = [s for s in SHAPE_KINDS if pipeline.report_csv_path(out, s).exists()]
    if not present:
        raise MissingArtifactError(pipeline.report_csv_path(out, config.shape_kind), "control")

    # Combined table, one controlled/uncontrolled row pair per shape run.
    table_rows = []
    times = None
    for shape in present:
        rows = _read_report_csv(pipeline.report_csv_path(out, shape))
        times = [float(r["t"]) for r in rows]
        table_rows.append(
            [shape, "controlled"] + [r["err_controlled"] for r in rows]
        )
        table_rows.append(
            [shape, "uncontrolled"] + [r["err_uncontrolled"] for r in rows]
        )
    header = ["shape_kind", "row"] + [f"t={t:g}" for t in times]
    with open(out / "tables.csv", "w", encoding="ascii") as handle:
        handle.write(",".join(header) + "\n")
        for row in table_rows:
            handle.write(",".join(str(x) for x in row) + "\n")

    # Quiver data and figures at the first report time.
    t_figure = float(config.report_times[0])
    write_quiver(out / "quiver_mean.dat", grid, snapshot_set.mean)
    unc_path = pipeline.uncontrolled_field_path(out, t_figure)
    if unc_path.exists():
        _, uu, uv, _, _ = fileio.load_field(unc_path)
        uncontrolled_vel = grid.join(uu, uv)
        write_quiver(out / "quiver_uncontrolled.dat", grid, uncontrolled_vel)
    else:
        uncontrolled_vel = None
    for shape in present:
        ctrl_path = pipeline.controlled_field_path(out, shape, t_figure)
        if not ctrl_path.exists():
            continue
        _, cu, cv, _, _ = fileio.load_field(ctrl_path)
        controlled_vel = grid.join(cu, cv)
        write_quiver(out / f"quiver_controlled_{shape}.dat", grid, controlled_vel)
        if uncontrolled_vel is not None:
            _flow_figure(
                out / f"figure_flow_{shape}.png",
                grid,
                snapshot_set.mean,
                controlled_vel,
                uncontrolled_vel,
                t_figure,
            )
        trace_rows = _read_report_csv(pipeline.trace_csv_path(out, shape))
        trace_t = np.array([float(r["t"]) for r in trace_rows])
        trace_u = np.array([float(r["u"]) for r in trace_rows])
        _control_figure(
            out / f"figure_control_{shape}.png", trace_t, trace_u, list(config.controls)
        )
    logger.info("report written for shapes: %s", ", ".join(present))
    return out / "tables.csv"
