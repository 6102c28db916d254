"""Stationary discounted dynamic-programming solver on a tensor grid.

The value function satisfies the fully discrete fixed point

    V(x_i) = min_u { (1 - lambda*h) * I1[V](x_i + h f(x_i, u)) + h L(x_i, u) }

with I1 the multilinear interpolant and arrival points clamped to the
box.  The stage cost carries the factor h so that the h -> 0 limit
recovers the continuous discounted integral (constant cost c gives
V = c/lambda exactly).  Sweeps are Jacobi (two buffers): every node reads
the previous iterate only, which makes multithreaded sweeps bit-identical
to serial ones.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class ValueGrid:
    """Value function samples on a uniform box grid in R^dim."""

    bounds_lo: np.ndarray   # (dim,)
    bounds_hi: np.ndarray   # (dim,)
    spacing: float          # node distance k, shared by all axes
    step: float             # pseudo-time step h
    discount: float         # lambda
    axis_sizes: tuple       # nodes per axis
    values: np.ndarray      # flat, C order (axis 0 outermost)
    iterations: int = 0
    final_residual: float = np.inf
    converged: bool = False
    residual_history: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.bounds_lo.size

    @property
    def n_nodes(self) -> int:
        return self.values.size

    @property
    def contraction_factor(self) -> float:
        return 1.0 - self.discount * self.step

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return self.bounds_lo[axis] + self.spacing * np.arange(self.axis_sizes[axis])

    def node_coordinates(self) -> np.ndarray:
        """All node positions, (n_nodes, dim), matching the value ordering."""
        axes = [self.axis_coordinates(d) for d in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


def build_value_grid(dim: int, bounds, spacing: float, step: float, discount: float) -> ValueGrid:
    """Zero-initialized grid; rejects parameters that break contraction."""
    if discount <= 0 or step <= 0:
        raise ConfigError(f"need discount>0 and step>0, got {discount}, {step}")
    if discount * step >= 1.0:
        raise ConfigError(
            f"discount*step = {discount * step} >= 1 breaks the fixed-point contraction"
        )
    if spacing <= 0:
        raise ConfigError(f"node spacing must be positive, got {spacing}")
    bounds = [(float(lo), float(hi)) for lo, hi in bounds]
    if len(bounds) != dim:
        raise ConfigError(f"got {len(bounds)} bounds for dimension {dim}")
    sizes = []
    for lo, hi in bounds:
        if hi <= lo:
            raise ConfigError(f"empty axis bounds [{lo}, {hi}]")
        cells = (hi - lo) / spacing
        if abs(cells - round(cells)) > 1e-9 * max(1.0, abs(cells)):
            raise ConfigError(
                f"axis extent {hi - lo} is not a multiple of spacing {spacing}"
            )
        sizes.append(int(round(cells)) + 1)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    sizes = tuple(sizes)
    return ValueGrid(lo, hi, float(spacing), float(step), float(discount), sizes, np.zeros(int(np.prod(sizes))))


def clamp_points(grid: ValueGrid, points: np.ndarray) -> np.ndarray:
    return np.clip(points, grid.bounds_lo, grid.bounds_hi)


def _interpolate_values(grid: ValueGrid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of an arbitrary value buffer."""
    pts = clamp_points(grid, np.atleast_2d(np.asarray(points, dtype=float)))
    scaled = (pts - grid.bounds_lo) / grid.spacing
    sizes = np.asarray(grid.axis_sizes)
    base = np.clip(np.floor(scaled).astype(np.int64), 0, sizes - 2)
    frac = scaled - base
    strides = np.ones(grid.dim, dtype=np.int64)
    for d in range(grid.dim - 2, -1, -1):
        strides[d] = strides[d + 1] * sizes[d + 1]
    out = np.zeros(pts.shape[0])
    for corner in product((0, 1), repeat=grid.dim):
        weight = np.ones(pts.shape[0])
        flat = np.zeros(pts.shape[0], dtype=np.int64)
        for d, c in enumerate(corner):
            weight = weight * (frac[:, d] if c else 1.0 - frac[:, d])
            flat = flat + (base[:, d] + c) * strides[d]
        out = out + weight * values[flat]
    return out


def interpolate(grid: ValueGrid, points: np.ndarray):
    """Value interpolant at one point (dim,) or a batch (n, dim).

    Points outside the box are clamped componentwise before interpolation.
    """
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    out = _interpolate_values(grid, grid.values, points)
    return float(out[0]) if single else out


def _precompute(grid: ValueGrid, dynamics, stage_cost, controls):
    """Arrival points and scaled stage costs per control (time-independent
    dynamics make these reusable across sweeps)."""
    nodes = grid.node_coordinates()
    arrivals, costs = [], []
    for u in controls:
        drift = np.asarray(dynamics(nodes, u), dtype=float)
        if drift.shape != nodes.shape:
            raise ConfigError(
                f"dynamics returned shape {drift.shape}, expected {nodes.shape}"
            )
        arrivals.append(nodes + grid.step * drift)
        costs.append(grid.step * np.asarray(stage_cost(nodes, u), dtype=float))
    return arrivals, costs


def value_iteration(
    grid: ValueGrid,
    dynamics,
    stage_cost,
    controls,
    tol: float = 1e-6,
    max_iters: int = 100_000,
    threads: int = 1,
) -> ValueGrid:
    """Fixed-point sweeps until the sup-norm update drops below tol.

    dynamics(points, u) and stage_cost(points, u) must accept point
    batches of shape (n, dim).  Exceeding max_iters is non-fatal: the grid
    is returned with converged=False and the reached residual.
    """
    if not controls:
        raise ConfigError("control set must be nonempty")
    if not 0.0 < grid.contraction_factor < 1.0:
        raise ConfigError(
            f"contraction factor {grid.contraction_factor} outside (0, 1)"
        )
    arrivals, costs = _precompute(grid, dynamics, stage_cost, controls)
    beta = grid.contraction_factor
    n = grid.n_nodes
    current = grid.values
    scratch = np.empty_like(current)

    if threads > 1:
        chunk_edges = np.linspace(0, n, threads + 1, dtype=int)
        chunks = [slice(a, b) for a, b in zip(chunk_edges[:-1], chunk_edges[1:]) if b > a]
        pool = ThreadPoolExecutor(max_workers=threads)
    else:
        chunks = [slice(0, n)]
        pool = None

    def sweep_chunk(sl):
        best = None
        for arr, cost in zip(arrivals, costs):
            cand = beta * _interpolate_values(grid, current, arr[sl]) + cost[sl]
            best = cand if best is None else np.minimum(best, cand)
        scratch[sl] = best

    grid.residual_history = []
    grid.converged = False
    try:
        for iteration in range(1, int(max_iters) + 1):
            if pool is not None:
                list(pool.map(sweep_chunk, chunks))
            else:
                sweep_chunk(chunks[0])
            residual = float(np.max(np.abs(scratch - current)))
            grid.residual_history.append(residual)
            current, scratch = scratch, current
            if residual <= tol:
                grid.converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    grid.values = current
    grid.iterations = len(grid.residual_history)
    grid.final_residual = grid.residual_history[-1] if grid.residual_history else 0.0
    if not grid.converged:
        logger.warning(
            "value iteration hit max_iters=%d with residual %.3e",
            max_iters,
            grid.final_residual,
        )
    else:
        logger.info(
            "value iteration converged in %d sweeps (residual %.3e)",
            grid.iterations,
            grid.final_residual,
        )
    return grid


def _preference_order(controls):
    """Tie rule: the zero control wins, then the lower index in U."""

    def is_zero(u):
        return bool(np.all(np.asarray(u) == 0))

    return sorted(range(len(controls)), key=lambda i: (not is_zero(controls[i]), i))


def _candidate_values(grid, points, dynamics, stage_cost, controls):
    """One-step lookahead cost of every control at the given points."""
    points = np.atleast_2d(points)
    beta = grid.contraction_factor
    cand = np.empty((points.shape[0], len(controls)))
    for idx, u in enumerate(controls):
        drift = np.asarray(dynamics(points, u), dtype=float)
        arrival = points + grid.step * drift
        cand[:, idx] = beta * _interpolate_values(grid, grid.values, arrival) + grid.step * np.asarray(
            stage_cost(points, u), dtype=float
        )
    return cand


def _argmin_with_ties(cand: np.ndarray, controls) -> np.ndarray:
    pref = _preference_order(controls)
    picked = np.argmin(cand[:, pref], axis=1)
    return np.asarray(pref, dtype=int)[picked]


@dataclass
class FeedbackPolicy:
    """Minimizing control index per grid node."""

    grid: ValueGrid
    control_indices: np.ndarray  # (n_nodes,)
    controls: list

    def at_node(self, node: int):
        return self.controls[int(self.control_indices[node])]

    def nearest(self, x) -> object:
        """Table fallback: control of the node closest to x."""
        x = clamp_points(self.grid, np.atleast_2d(np.asarray(x, dtype=float)))[0]
        scaled = (x - self.grid.bounds_lo) / self.grid.spacing
        idx = np.clip(
            np.rint(scaled).astype(np.int64), 0, np.asarray(self.grid.axis_sizes) - 1
        )
        flat = 0
        for d in range(self.grid.dim):
            flat = flat * self.grid.axis_sizes[d] + idx[d]
        return self.at_node(int(flat))


def extract_policy(grid: ValueGrid, dynamics, stage_cost, controls) -> FeedbackPolicy:
    """Minimizing control per node of the converged value function."""
    cand = _candidate_values(grid, grid.node_coordinates(), dynamics, stage_cost, controls)
    return FeedbackPolicy(grid, _argmin_with_ties(cand, controls), list(controls))


def feedback_at(grid: ValueGrid, x, dynamics, stage_cost, controls):
    """Online minimizing control at an arbitrary state.

    The state is clamped to the box first, then the same one-step
    lookahead as in policy extraction is evaluated through the
    interpolant.
    """
    x = clamp_points(grid, np.atleast_2d(np.asarray(x, dtype=float)))
    cand = _candidate_values(grid, x, dynamics, stage_cost, controls)
    return controls[int(_argmin_with_ties(cand, controls)[0])]
