"""Versioned plain-text artifact formats.

Every file starts with a magic+version header; numbers are written with
17 significant digits so float64 values round-trip bit-exactly.  Readers
consume whitespace-separated tokens, so line wrapping is free.
"""

import numpy as np

from .errors import FormatError
from .grid import CavityGrid, build_grid

_FMT = "%.17g"


def _format_block(values: np.ndarray, per_line: int = 8) -> str:
    flat = np.asarray(values, dtype=float).ravel()
    lines = []
    for start in range(0, flat.size, per_line):
        lines.append(" ".join(_FMT % x for x in flat[start : start + per_line]))
    return "\n".join(lines)


class _TokenReader:
    """Sequential token stream over a text artifact."""

    def __init__(self, path):
        self.path = str(path)
        with open(path, "r", encoding="ascii") as handle:
            self._header = handle.readline().split()
            self._tokens = handle.read().split()
        self._cursor = 0

    def header(self, magic: str, n_params: int):
        if len(self._header) < 2 or self._header[0] != magic:
            raise FormatError(f"{self.path}: expected {magic} header, got {self._header[:2]}")
        if self._header[1] != "v1":
            raise FormatError(f"{self.path}: unsupported {magic} version {self._header[1]}")
        params = self._header[2:]
        if len(params) != n_params:
            raise FormatError(
                f"{self.path}: {magic} header carries {len(params)} parameters, expected {n_params}"
            )
        return params

    def floats(self, count: int) -> np.ndarray:
        if self._cursor + count > len(self._tokens):
            raise FormatError(f"{self.path}: truncated file (needed {count} more values)")
        try:
            out = np.array(
                [float(t) for t in self._tokens[self._cursor : self._cursor + count]]
            )
        except ValueError as err:
            raise FormatError(f"{self.path}: bad numeric token ({err})") from err
        self._cursor += count
        return out

    def ints(self, count: int) -> np.ndarray:
        raw = self.floats(count)
        out = raw.astype(int)
        if np.any(out != raw):
            raise FormatError(f"{self.path}: expected integer values")
        return out

    def done(self):
        if self._cursor != len(self._tokens):
            raise FormatError(
                f"{self.path}: {len(self._tokens) - self._cursor} unexpected trailing values"
            )


# --- HJBPOD-FIELD ------------------------------------------------------------

def save_field(path, grid: CavityGrid, u, v, p, t: float):
    with open(path, "w", encoding="ascii") as handle:
        handle.write(f"HJBPOD-FIELD v1 {grid.nx} {grid.ny} {_FMT % t}\n")
        handle.write(_format_block(u) + "\n")
        handle.write(_format_block(v) + "\n")
        handle.write(_format_block(p) + "\n")


def load_field(path):
    """Returns (grid, u, v, p, t)."""
    reader = _TokenReader(path)
    nx_s, ny_s, t_s = reader.header("HJBPOD-FIELD", 3)
    grid = build_grid(int(nx_s), int(ny_s))
    u = reader.floats(grid.n_u).reshape(grid.nx - 1, grid.ny)
    v = reader.floats(grid.n_v).reshape(grid.nx, grid.ny - 1)
    p = reader.floats(grid.n_p).reshape(grid.nx, grid.ny)
    reader.done()
    return grid, u, v, p, float(t_s)


# --- HJBPOD-SNAPS ------------------------------------------------------------

def save_snapshots(path, grid: CavityGrid, times, mean, fluctuations):
    times = np.asarray(times, dtype=float)
    fluctuations = np.asarray(fluctuations, dtype=float)
    with open(path, "w", encoding="ascii") as handle:
        handle.write(f"HJBPOD-SNAPS v1 {grid.nx} {grid.ny} {times.size}\n")
        handle.write(_format_block(times) + "\n")
        handle.write(_format_block(mean) + "\n")
        for col in range(fluctuations.shape[1]):
            handle.write(_format_block(fluctuations[:, col]) + "\n")


def load_snapshots(path):
    """Returns (grid, times, mean, fluctuations)."""
    reader = _TokenReader(path)
    nx_s, ny_s, n_s = reader.header("HJBPOD-SNAPS", 3)
    grid = build_grid(int(nx_s), int(ny_s))
    count = int(n_s)
    times = reader.floats(count)
    mean = reader.floats(grid.n_vel)
    cols = [reader.floats(grid.n_vel) for _ in range(count)]
    reader.done()
    return grid, times, mean, np.column_stack(cols)


# --- HJBPOD-BASIS ------------------------------------------------------------

def save_basis(path, grid: CavityGrid, mean, singular_values, modes):
    modes = np.asarray(modes, dtype=float)
    singular_values = np.asarray(singular_values, dtype=float)
    with open(path, "w", encoding="ascii") as handle:
        handle.write(
            f"HJBPOD-BASIS v1 {grid.nx} {grid.ny} {modes.shape[1]} {singular_values.size}\n"
        )
        handle.write(_format_block(mean) + "\n")
        handle.write(_format_block(singular_values) + "\n")
        for col in range(modes.shape[1]):
            handle.write(_format_block(modes[:, col]) + "\n")


def load_basis(path):
    """Returns (grid, mean, singular_values, modes)."""
    reader = _TokenReader(path)
    nx_s, ny_s, l_s, n_s = reader.header("HJBPOD-BASIS", 4)
    grid = build_grid(int(nx_s), int(ny_s))
    n_modes, count = int(l_s), int(n_s)
    mean = reader.floats(grid.n_vel)
    singular_values = reader.floats(count)
    cols = [reader.floats(grid.n_vel) for _ in range(n_modes)]
    reader.done()
    return grid, mean, singular_values, np.column_stack(cols)


# --- HJBPOD-DEIM -------------------------------------------------------------

def save_deim(path, indices, projection):
    with open(path, "w", encoding="ascii") as handle:
        handle.write(_deim_body(indices, projection))


def _deim_body(indices, projection) -> str:
    indices = np.asarray(indices, dtype=int)
    projection = np.atleast_2d(np.asarray(projection, dtype=float))
    lines = [f"HJBPOD-DEIM v1 {indices.size}"]
    lines.append(" ".join(str(int(i)) for i in indices))
    lines.append("%d" % projection.shape[0])
    lines.append(_format_block(projection))
    return "\n".join(lines) + "\n"


def load_deim(path):
    reader = _TokenReader(path)
    (m_s,) = reader.header("HJBPOD-DEIM", 1)
    return _read_deim_tokens(reader, int(m_s), check_done=True)


def _read_deim_tokens(reader: _TokenReader, m: int, check_done: bool):
    indices = reader.ints(m)
    n_modes = int(reader.ints(1)[0])
    projection = reader.floats(n_modes * m).reshape(n_modes, m)
    if check_done:
        reader.done()
    return indices, projection


# --- HJBPOD-ROM --------------------------------------------------------------

def save_rom(path, rom):
    n_modes = rom.n_modes
    n_controls = rom.control.shape[1]
    with open(path, "w", encoding="ascii") as handle:
        handle.write(f"HJBPOD-ROM v1 {n_modes}\n")
        handle.write(f"controls {n_controls}\n")
        handle.write(
            " ".join(_FMT % x for x in (rom.viscosity, rom.alpha, rom.discount))
            + "\n"
        )
        handle.write(_format_block(rom.mass) + "\n")
        handle.write(_format_block(rom.stiffness) + "\n")
        handle.write(_format_block(rom.control) + "\n")
        handle.write(_format_block(rom.const_force) + "\n")
        handle.write(_deim_body(rom.deim.indices, rom.deim.projection))


def load_rom_arrays(path):
    """Raw ROM file contents; the caller rebinds the advection sampler.

    Returns a dict with keys mass, stiffness, control, const_force,
    viscosity, alpha, discount, cell_area, deim_indices, deim_projection.
    """
    reader = _TokenReader(path)
    (l_s,) = reader.header("HJBPOD-ROM", 1)
    n_modes = int(l_s)
    tag = reader._tokens[reader._cursor]
    if tag != "controls":
        raise FormatError(f"{path}: expected 'controls' section, got {tag!r}")
    reader._cursor += 1
    n_controls = int(reader.ints(1)[0])
    viscosity, alpha, discount = reader.floats(3)
    mass = reader.floats(n_modes * n_modes).reshape(n_modes, n_modes)
    stiffness = reader.floats(n_modes * n_modes).reshape(n_modes, n_modes)
    control = reader.floats(n_modes * n_controls).reshape(n_modes, n_controls)
    const_force = reader.floats(n_modes)
    header = reader._tokens[reader._cursor : reader._cursor + 3]
    if len(header) < 3 or header[0] != "HJBPOD-DEIM" or header[1] != "v1":
        raise FormatError(f"{path}: missing embedded HJBPOD-DEIM block")
    reader._cursor += 3
    indices, projection = _read_deim_tokens(reader, int(header[2]), check_done=True)
    return {
        "n_modes": n_modes,
        "mass": mass,
        "stiffness": stiffness,
        "control": control,
        "const_force": const_force,
        "viscosity": viscosity,
        "alpha": alpha,
        "discount": discount,
        "deim_indices": indices,
        "deim_projection": projection,
    }


# --- HJBPOD-VALUE / HJBPOD-POLICY ---------------------------------------------

def _write_grid_header(handle, magic, grid):
    handle.write(
        f"{magic} v1 {grid.dim} {_FMT % grid.spacing} {_FMT % grid.step} "
        f"{_FMT % grid.discount}\n"
    )
    for lo, hi in zip(grid.bounds_lo, grid.bounds_hi):
        handle.write(f"{_FMT % lo} {_FMT % hi}\n")


def _read_grid_header(reader, magic):
    dim_s, k_s, h_s, lam_s = reader.header(magic, 4)
    dim = int(dim_s)
    bounds = [tuple(reader.floats(2)) for _ in range(dim)]
    return dim, float(k_s), float(h_s), float(lam_s), bounds


def save_value_grid(path, grid):
    with open(path, "w", encoding="ascii") as handle:
        _write_grid_header(handle, "HJBPOD-VALUE", grid)
        handle.write(_format_block(grid.values) + "\n")


def load_value_grid(path):
    from .hjb import build_value_grid

    reader = _TokenReader(path)
    dim, k, h, lam, bounds = _read_grid_header(reader, "HJBPOD-VALUE")
    grid = build_value_grid(dim, bounds, k, h, lam)
    grid.values[:] = reader.floats(grid.n_nodes)
    reader.done()
    return grid


def save_policy(path, policy):
    grid = policy.grid
    controls = np.asarray(policy.controls, dtype=float)
    with open(path, "w", encoding="ascii") as handle:
        _write_grid_header(handle, "HJBPOD-POLICY", grid)
        handle.write("%d\n" % controls.size)
        handle.write(_format_block(controls) + "\n")
        handle.write(" ".join(str(int(i)) for i in policy.control_indices) + "\n")


def load_policy(path):
    from .hjb import FeedbackPolicy, build_value_grid

    reader = _TokenReader(path)
    dim, k, h, lam, bounds = _read_grid_header(reader, "HJBPOD-POLICY")
    grid = build_value_grid(dim, bounds, k, h, lam)
    n_controls = int(reader.ints(1)[0])
    controls = reader.floats(n_controls)
    indices = reader.ints(grid.n_nodes)
    reader.done()
    if np.any(indices < 0) or np.any(indices >= n_controls):
        raise FormatError(f"{path}: control index out of range")
    return FeedbackPolicy(grid, indices, list(controls))
