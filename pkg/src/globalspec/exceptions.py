"""Exception types raised across the package."""


class DataError(ValueError):
    """Malformed input data (CSV contents, record invariants).

    ``line`` carries the 1-based line number for file-level problems.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NoActiveBandsError(ValueError):
    """Raised when a band refinement receives an empty active set."""


class AllBandsPrunedError(RuntimeError):
    """Every band fell below the activity threshold at some zoom level."""

    def __init__(self, level, grid, powers, tau):
        super().__init__(
            f"all bands pruned at zoom level {level} (max power "
            f"{float(max(powers, default=0.0)):.3g} <= tau={tau:g}); "
            "lower tau or raise SNR"
        )
        self.level = level
        self.grid = grid
        self.powers = powers
        self.tau = tau


class SolverConvergenceError(RuntimeError):
    """The joint solver hit ``max_iter``; ``best`` holds the last feasible iterate."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


class NotEnoughPeaksError(ValueError):
    """Fewer strict local maxima than requested."""

    def __init__(self, requested, found):
        super().__init__(
            f"requested {requested} peaks but only {len(found)} local maxima found: "
            + ", ".join(f"{w:.6g}" for w in found)
        )
        self.requested = requested
        self.found = found


class BoundComputationError(RuntimeError):
    """Degenerate Fisher-type matrix or failed pseudo-true fit."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(ValueError):
    """Invalid experiment or command configuration."""


class ExperimentFailedError(RuntimeError):
    """Too many replicates failed; ``result`` holds the partial result."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
