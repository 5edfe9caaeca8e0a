"""Exception and warning types raised across the package."""


class GibbsTorusError(Exception):
    """Base class for all package errors."""


class NonConvergence(GibbsTorusError):
    pass


class NonInvertible(GibbsTorusError):
    pass


class DegenerateSplitting(GibbsTorusError):
    pass


class MissingSplitting(GibbsTorusError):
    pass


class SimplicityViolation(GibbsTorusError):
    """Leading eigenvalue is not real, positive and isolated within the margin."""


class QuadratureAliasing(GibbsTorusError):
    pass


class EmptyCut(GibbsTorusError):
    pass


class RefinementBlowup(GibbsTorusError):
    pass


class DivergingMass(GibbsTorusError):
    pass


class NotSameStableLeaf(GibbsTorusError):
    pass


class TailBoundExceeded(GibbsTorusError):
    pass


class GridTooCoarse(GibbsTorusError):
    pass


class OrbitEnumerationIncomplete(GibbsTorusError):
    pass


class InsufficientSurvivors(GibbsTorusError):
    pass


class ConfigError(GibbsTorusError):
    pass


class ProjectionLoss(UserWarning):
    """An observable has significant spectral content above the basis cutoff."""


class ChartOverlap(UserWarning):
    """Partition-of-unity weights do not sum to one."""
