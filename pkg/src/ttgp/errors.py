"""Exception hierarchy shared by all ttgp modules."""


class TTGPError(Exception):
    """Base class for every error raised by ttgp."""


class DomainError(TTGPError, IndexError):
    """A multi-index lies outside the tensor's mode sizes."""


class ShapeError(TTGPError, ValueError):
    """Operands have incompatible mode sizes or rank chains."""


class SizeError(TTGPError, MemoryError):
    """A dense object would exceed the configured element cap."""


class ParseError(TTGPError, ValueError):
    """Malformed serialized input."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(ParseError):
    """Serialized input carries an unknown format tag."""


class DegeneracyError(TTGPError, ArithmeticError):
    """Matrix is numerically rank deficient; ``rank`` holds the numerical rank."""

    def __init__(self, message, rank):
        super().__init__(f"{message} (numerical rank {rank})")
        self.rank = rank


class ConditioningError(TTGPError, ArithmeticError):
    """Kernel matrix is not positive definite even after maximal jitter."""


class FitError(TTGPError, RuntimeError):
    """GP hyperparameter fitting failed for every start."""


class DivergenceError(TTGPError, FloatingPointError):
    """Completion objective became non-finite."""

    def __init__(self, iteration):
        super().__init__(f"objective became non-finite at iteration {iteration}")
        self.iteration = iteration


class EvaluationError(TTGPError, RuntimeError):
    """Black-box evaluation failed; ``index`` is the offending 1-based multi-index."""

    def __init__(self, index, cause):
        super().__init__(f"black-box evaluation failed at index {tuple(index)}: {cause}")
        self.index = tuple(int(i) for i in index)


class StageError(TTGPError, RuntimeError):
    """Pipeline stage failure, labelled with the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage
        self.cause = cause
