"""Exception types shared across the package."""


class NetshiftError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(NetshiftError):
    """Invalid or inconsistent run configuration."""


class DataError(NetshiftError):
    """Input data violates a documented requirement."""


class EmptyCellError(DataError):
    """A covariate cell contains no observations."""


class NonGraphicError(DataError):
    """Degree sequence admits no simple-graph realization."""


class NumericalError(NetshiftError):
    """A numerical routine failed beyond recoverable tolerances."""


class SolverError(NumericalError):
    """Linear program did not reach an optimum."""


class InfeasibleError(SolverError):
    """Linear program has no feasible point."""


class RankDeficiencyError(NumericalError):
    """Weighted Gram matrix is numerically singular."""


class IndefiniteKernelError(NumericalError):
    """Bootstrap multiplier kernel matrix is materially indefinite."""


class InfeasibleShapeError(NumericalError):
    """Shape restriction is incompatible with the trust ball."""
