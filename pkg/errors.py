"""Exceptions raised across the separation and location pipeline."""

# Exit codes used by aebss.py
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_DIVERGENCE = 3


class AebssError(Exception):
    """Base class for every error raised by this project."""

    exit_code = EXIT_FAILURE


class ParameterError(AebssError, ValueError):
    exit_code = EXIT_INPUT


class DimensionError(AebssError, ValueError):
    exit_code = EXIT_INPUT


class RecordFormatError(AebssError, ValueError):
    exit_code = EXIT_INPUT


class DegenerateError(AebssError, ArithmeticError):
    exit_code = EXIT_INPUT


class MissingSourceError(DegenerateError):
    """Both filters of a mixing column are all-zero."""

    def __init__(self, column: int):
        super().__init__(f"Mixing column {column} holds no source: both filters are all-zero.")
        self.column = column


class DivergenceError(AebssError, ArithmeticError):
    """The learning state became non-finite."""

    exit_code = EXIT_DIVERGENCE

    def __init__(self, bin_index: int, pass_index: int, block_index: int):
        super().__init__(
            f"Unmixing filters diverged at bin {bin_index} (pass {pass_index}, block {block_index}); "
            f"try a smaller learning rate."
        )
        self.bin_index = bin_index
        self.pass_index = pass_index
        self.block_index = block_index


class IllConditionedError(AebssError, ArithmeticError):
    exit_code = EXIT_DIVERGENCE

    def __init__(self, bin_index: int, condition: float):
        super().__init__(
            f"Unmixing matrix at bin {bin_index} is ill-conditioned (condition number {condition:.3g}); "
            f"invert with a ridge > 0."
        )
        self.bin_index = bin_index
        self.condition = condition


class PipelineStageError(AebssError):
    """Wraps a failure inside one pipeline stage and keeps its exit code."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"Stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", EXIT_FAILURE)
