"""Flat key = value configuration with experiment defaults.

Every key defaults to the reference cavity experiment (64x64 grid,
nu = 0.01, alpha = 0.01, lambda = 1, controls {-1, 0, 1}, 3 flow modes,
6 interpolation modes, 80 snapshots over [0, 4], DP grid k = 0.2 and
h = 0.04, trajectory step 0.01), so an empty file reproduces it.
The format is diff-able text: one `key = value` per line, `#` comments.
"""

from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError

SHAPE_KINDS = ("navier_stokes", "stokes")


@dataclass
class PipelineConfig:
    nx: int = 64
    ny: int = 64
    nu: float = 0.01
    alpha: float = 0.01
    discount: float = 1.0                      # key: lambda
    controls: tuple = (-1.0, 0.0, 1.0)
    pod_modes: int = 3
    deim_modes: int = 6
    snapshot_horizon: float = 4.0
    snapshot_count: int = 80
    hjb_spacing: float = 0.2                   # key: k
    hjb_step: float = 0.04                     # key: h
    hjb_bounds: object = "auto"                # "auto" or tuple of (lo, hi)
    dt: float = 0.01
    control_horizon: float = 4.0
    report_times: tuple = (0.5, 4.0)
    shape_kind: str = "navier_stokes"
    threads: int = 1
    hjb_tol: float = 1e-6
    hjb_max_iters: int = 100_000
    steady_tol: float = 1e-8
    steady_max_steps: int = 200_000
    out_dir: str = "out"


_KEY_ALIASES = {
    "lambda": "discount",
    "k": "hjb_spacing",
    "h": "hjb_step",
}


def _parse_bounds(text: str):
    if text.strip() == "auto":
        return "auto"
    bounds = []
    for part in text.split(","):
        pieces = part.split(":")
        if len(pieces) != 2:
            raise ConfigError(f"bad bounds entry {part!r}; expected lo:hi")
        bounds.append((float(pieces[0]), float(pieces[1])))
    return tuple(bounds)


def _parse_value(name: str, text: str, current):
    text = text.strip()
    try:
        if name == "hjb_bounds":
            return _parse_bounds(text)
        if name in ("controls", "report_times"):
            return tuple(float(x) for x in text.split(","))
        if isinstance(current, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        return text
    except ValueError as err:
        raise ConfigError(f"bad value for key {name!r}: {text!r} ({err})") from err


def _apply(config: PipelineConfig, key: str, value_text: str) -> PipelineConfig:
    name = _KEY_ALIASES.get(key, key)
    known = {f.name for f in fields(PipelineConfig)}
    if name not in known:
        raise ConfigError(f"unknown config key {key!r}")
    return replace(config, **{name: _parse_value(name, value_text, getattr(config, name))})


def parse_config(text: str) -> PipelineConfig:
    """Configuration from file text; unknown keys and bad values raise."""
    config = PipelineConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        config = _apply(config, key.strip(), value)
    return config


def load_config(path, overrides=()) -> PipelineConfig:
    """Configuration from a file plus repeatable key=value overrides."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            config = parse_config(handle.read())
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"bad override {item!r}; expected key=value")
        key, value = item.split("=", 1)
        config = _apply(config, key.strip(), value)
    validate(config)
    return config


def validate(config: PipelineConfig) -> None:
    """Reject dimensionally impossible or contraction-breaking setups."""
    if config.nx < 4 or config.ny < 4:
        raise ConfigError(f"grid must be at least 4x4, got {config.nx}x{config.ny}")
    for name in ("nu", "discount", "snapshot_horizon", "hjb_spacing", "hjb_step",
                 "dt", "control_horizon", "hjb_tol", "steady_tol"):
        if getattr(config, name) <= 0:
            raise ConfigError(f"{name} must be positive, got {getattr(config, name)}")
    if config.alpha < 0:
        raise ConfigError(f"alpha must be nonnegative, got {config.alpha}")
    if config.discount * config.hjb_step >= 1.0:
        raise ConfigError(
            f"lambda*h = {config.discount * config.hjb_step} >= 1 breaks contraction"
        )
    if not config.controls:
        raise ConfigError("control set must be nonempty")
    if config.pod_modes < 1 or config.deim_modes < 1:
        raise ConfigError("pod_modes and deim_modes must be at least 1")
    if config.snapshot_count < 2:
        raise ConfigError(f"need at least 2 snapshots, got {config.snapshot_count}")
    if config.threads < 1:
        raise ConfigError(f"threads must be at least 1, got {config.threads}")
    if config.shape_kind not in SHAPE_KINDS:
        raise ConfigError(
            f"shape_kind must be one of {SHAPE_KINDS}, got {config.shape_kind!r}"
        )
    if config.hjb_bounds != "auto":
        if len(config.hjb_bounds) != config.pod_modes:
            raise ConfigError(
                f"explicit hjb_bounds carries {len(config.hjb_bounds)} axes, "
                f"pod_modes is {config.pod_modes}"
            )
        for lo, hi in config.hjb_bounds:
            if hi <= lo:
                raise ConfigError(f"empty bounds [{lo}, {hi}]")
    for t in config.report_times:
        if t < 0 or t > config.control_horizon + 1e-12:
            raise ConfigError(
                f"report time {t} outside the control horizon {config.control_horizon}"
            )
    stride = config.snapshot_horizon / (config.snapshot_count * config.dt)
    if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
        raise ConfigError(
            "snapshot_horizon / (snapshot_count * dt) must be a positive integer "
            f"stride, got {stride}"
        )
