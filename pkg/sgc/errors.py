"""
Errors
======

Every error raised by the library derives from SgcError. Each class carries
the process exit code the CLI maps it to and a MESSAGE template filled from
the constructor arguments.

Exit codes:
    0: success
    2: config or argument contract error
    3: numeric error (degenerate matrices, breakdown, non-convergence)
    4: I/O error (unreadable or malformed input, unwritable output)

"""


class SgcError(Exception):
    """Base class for library errors."""

    exit_code = 1
    MESSAGE = "{}"

    def __init__(self, *args):
        super().__init__(*args)
        self.args_ = args

    def __str__(self):
        return self.MESSAGE.format(*self.args_)


class ConfigError(SgcError):
    exit_code = 2
    MESSAGE = "Invalid configuration: {}"


class InvalidDimensionError(SgcError):
    exit_code = 2
    MESSAGE = "Invalid dimension: {}"


class InvalidSparsityError(SgcError):
    exit_code = 2
    MESSAGE = "Invalid sparsity: {}"


class InvalidChunkingError(SgcError):
    exit_code = 2
    MESSAGE = "Invalid chunking: {}"


class InvalidRankError(SgcError):
    exit_code = 2
    MESSAGE = "Invalid rank: {}"


class NumericError(SgcError):
    exit_code = 3
    MESSAGE = "Numeric error: {}"


class InvalidGradientError(NumericError):
    MESSAGE = "Gradient contains non-finite entries: {}"


class DegenerateMatrixError(NumericError):
    MESSAGE = "Measurement matrix column {} has zero norm"


class DegenerateSupportError(NumericError):
    MESSAGE = "Least squares on the selected support is rank deficient: {}"


class CholeskyBreakdownError(NumericError):
    MESSAGE = "Inverse Cholesky update broke down at iteration {} (pivot {:.3e})"

    def __init__(self, iteration, pivot):
        super().__init__(iteration, pivot)
        self.iteration = iteration
        self.pivot = pivot


class ConvergenceError(NumericError):
    MESSAGE = "No convergence after {} iterations (residual {:.3e})"

    def __init__(self, iterations, residual):
        super().__init__(iterations, residual)
        self.iterations = iterations
        self.residual = residual


class InputError(SgcError):
    exit_code = 4
    MESSAGE = "I/O error: {}"


class TrainingStepError(SgcError):
    """Wraps an error raised inside an optimizer step with the step index."""

    MESSAGE = "Step {} failed: {}"

    def __init__(self, step, cause):
        super().__init__(step, cause)
        self.step = step
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
