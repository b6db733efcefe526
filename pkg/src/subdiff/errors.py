"""Exception types shared across the package."""


class SubdiffError(Exception):
    """Base class for all package-specific errors."""


class GraphDisconnected(SubdiffError):
    """The sampled geometric graph is not connected."""


class EigenFailure(SubdiffError):
    """A symmetric eigensolver failed to converge."""


class RankDeficient(SubdiffError):
    """A constraint basis lost full column rank."""


class InfeasibleConstraints(SubdiffError):
    """No block-sparse matrix satisfies the subspace-fixing constraints."""


class SpectralViolation(SubdiffError):
    """A synthesized combiner violates the spectral-radius condition.

    Carries the offending radius as ``.radius``.
    """

    def __init__(self, radius: float, message: str | None = None):
        self.radius = float(radius)
        super().__init__(message or f"spectral radius {radius!r} >= 1")


class NotPSD(SubdiffError):
    """A matrix expected to be positive semidefinite is not."""


class SingularProjection(SubdiffError):
    """The subspace-restricted normal matrix is numerically singular."""


class NonFiniteIterate(SubdiffError):
    """An algorithm iterate became non-finite or exceeded the divergence bound."""


class SeriesDiverges(SubdiffError):
    """The matrix series underlying a prediction does not converge."""


class NotConverged(SubdiffError):
    """An iterative computation hit its iteration cap before its tolerance."""


class OutputUnwritable(SubdiffError):
    """Experiment outputs could not be written."""
