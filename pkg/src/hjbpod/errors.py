"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 2,
NumericalError -> 3, FormatError / OSError -> 4.
"""


class ConfigError(ValueError):
    """Invalid configuration value or violated operation precondition."""


class NumericalError(RuntimeError):
    """Numerical failure: blow-up, NaN/Inf state, or nonconvergence."""


class StabilityError(NumericalError):
    """Time step exceeds the advective stability bound."""


class FormatError(RuntimeError):
    """Malformed, truncated, or wrong-version artifact file."""


class MissingArtifactError(FormatError):
    """A required upstream artifact file is absent."""

    def __init__(self, path, stage):
        super().__init__(
            f"missing artifact '{path}'; run the '{stage}' stage first"
        )
        self.path = str(path)
        self.stage = stage
