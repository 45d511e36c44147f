"""Exception types shared across the package."""


class SketchcondError(Exception):
    """Base class for all package errors."""


class ConfigError(SketchcondError):
    """Invalid configuration values (bad ranks, step sizes, arm specs)."""


class DataError(SketchcondError):
    """Malformed dataset input: bad CSV rows, empty data, label problems."""


class LinalgError(SketchcondError):
    """Numerical-kernel precondition violation (shape, finiteness, PSD)."""


class RankDeficiencyError(LinalgError):
    """Input has lower numerical rank than the operation requires."""

    def __init__(self, message: str, detected_rank: int):
        super().__init__(f"{message} (detected numerical rank {detected_rank})")
        self.detected_rank = detected_rank


class DivergenceError(SketchcondError):
    """Training produced a non-finite value; carries the partial results."""

    def __init__(self, iteration: int, state=None, trace=None):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.iteration = iteration
        self.state = state
        self.trace = trace
