"""Feedback control of the lid-driven cavity flow.

Pipeline: simulate the flow on a staggered grid, build an orthonormal
basis from snapshots, compress the advection nonlinearity by greedy row
interpolation, assemble the reduced model, solve the stationary
discounted dynamic-programming equation on the reduced state box, and
evaluate the resulting feedback law on both the reduced and the full
model.
"""

from .closed_loop import (
    ClosedLoopReport,
    build_report,
    linf_error,
    run_closed_loop_full,
    run_closed_loop_rom,
)
from .config import PipelineConfig, load_config, parse_config
from .deim import DeimOperator, apply_deim, build_deim, nonlinearity_snapshots, select_indices
from .errors import ConfigError, FormatError, MissingArtifactError, NumericalError, StabilityError
from .flow import (
    CavitySolver,
    ShapeFunction,
    ShapeKind,
    StaggeredState,
    Trajectory,
    navier_stokes_steady,
    shape_function,
    steady_state,
    stokes_steady,
)
from .grid import CavityGrid, build_grid
from .hjb import (
    FeedbackPolicy,
    ValueGrid,
    build_value_grid,
    extract_policy,
    feedback_at,
    interpolate,
    value_iteration,
)
from .operators import SampledAdvection, SemiDiscreteOperators, advection_term, assemble_operators
from .pod import PodBasis, compute_pod, project, reconstruct
from .rom import (
    RomSystem,
    assemble_rom,
    integrate_rom,
    reduced_cost,
    rom_rhs,
    running_cost,
)
from .snapshots import SnapshotSet, collect

__version__ = "0.1.0"
