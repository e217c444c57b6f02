"""Exception types shared across the gaplab modules."""


class GapLabError(Exception):
    """Base class for all gaplab errors."""


class NotPositiveDefinite(GapLabError):
    """A matrix that must be positive definite has a nonpositive pivot.

    Raised for degenerate mass matrices; usually means the mesh or the
    metric is invalid.
    """


class NoConvergence(GapLabError):
    """The eigensolver failed to converge; signals pathological conditioning."""


class QuadratureUnderResolved(GapLabError):
    """Doubling the sample count moved the curve endpoint by too much."""


class TubeSelfIntersection(GapLabError):
    """The strip of the requested width overlaps itself (1 - u*kappa <= 0)."""


class NonPositiveFactor(GapLabError):
    """A conformal factor must be strictly positive on the whole domain."""


class SupportTooLarge(GapLabError):
    """The perturbed region touches the boundary of the perturbed cell block."""


class HoleTooCoarse(GapLabError):
    """A hole large relative to the mesh spacing removed no element."""


class CutOffMeshLine(GapLabError):
    """A requested restriction cut does not coincide with a mesh line."""


class AmbiguousLevel(GapLabError):
    """An eigenvalue lies within the cluster tolerance of the query level.

    The caller must perturb the level before counting.
    """


class LevelNotInGap(GapLabError):
    """The query level does not lie inside the required gap interval."""


class GridTooCoarse(GapLabError):
    """Branch pairing stayed ambiguous after the maximum refinement depth."""


class NotEven(GapLabError):
    """The operation requires an even curvature profile."""


class SpectrumTruncated(GapLabError):
    """The requested level exceeds the largest converged eigenvalue."""


class ConfigError(GapLabError):
    """An experiment configuration is invalid."""
