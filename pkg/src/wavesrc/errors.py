"""Exception types; the CLI maps each to an exit status."""


class WavesrcError(Exception):
    exit_code = 1


class ConfigError(WavesrcError, ValueError):
    """Invalid configuration (grids, CFL, regularisation weights, unknown keys)."""

    exit_code = 2


class ModelError(WavesrcError, ValueError):
    """The model assumptions fail, e.g. ``h(x, 0) = 0`` at a node."""

    exit_code = 2


class NumericalError(WavesrcError, ArithmeticError):
    """Breakdown of a numerical kernel (NaN/Inf iterates, non-PD pivot)."""

    exit_code = 3


class StageError(WavesrcError):
    """Wraps a failure inside a pipeline stage, keeping the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
