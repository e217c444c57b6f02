"""gaplab: a numerical laboratory for spectral gaps of periodic strips.

Discretizes Laplacians of periodic and locally perturbed metrics
(flagship case: periodically curved quantum waveguides), computes
Floquet band structures and gap intervals, and verifies eigenvalue-in-gap
counting bounds along perturbation sweeps.
"""

from .errors import (
    AmbiguousLevel,
    ConfigError,
    CutOffMeshLine,
    GapLabError,
    GridTooCoarse,
    HoleTooCoarse,
    LevelNotInGap,
    NoConvergence,
    NonPositiveFactor,
    NotEven,
    NotPositiveDefinite,
    QuadratureUnderResolved,
    SpectrumTruncated,
    SupportTooLarge,
    TubeSelfIntersection,
)
from .geometry import (
    CurvatureProfile,
    GapInterval,
    MetricField,
    PerturbationFamily,
    Rectangle,
    conformal_metric,
    curve_from_curvature,
    make_family,
    supercell,
    waveguide_metric,
)
from .fem import BoundarySpec, Mesh, assemble, build_mesh, dirichlet_restrict
from .linalg import HermitianMatrix, Spectrum, cholesky, solve_gevp
from .spectra import (
    BandStructure,
    HillProblem,
    Resolution,
    band_structure,
    count_below,
    enclosure_check,
    gap_condition,
    hill_band_edges_even,
    weyl_check,
)
from .gapcount import (
    BranchTrace,
    CountingReport,
    common_gap_count,
    count_crossings,
    shrink_hole_sweep,
    sweep,
    thm1_bounds,
    verify_thm1,
    waveguide_asymptotics,
)

__version__ = "0.1.0"
