"""Floquet band structures, gap detection and eigenvalue counting.

A "cell" here is either a 2d MetricField on a parameter rectangle (the
waveguide case, Dirichlet walls in u) or a 1d HillProblem, the operator
-d^2/ds^2 - kappa^2/4 on the period interval.  Both are discretized by
the same finite-element path; the Hill potential is added to the
stiffness form, which makes that form indefinite, so eigenvalues may be
negative there.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import AmbiguousLevel, NotEven, SpectrumTruncated
from .fem import BoundarySpec, apply_bc, build_mesh, free_forms
from .geometry import PERIOD, CurvatureProfile, GapInterval, MetricField
from .linalg import Spectrum, solve_gevp

#: eigenvalues this close to a query level make counting ambiguous
def cluster_tolerance(level: float) -> float:
    return 1e-6 * (1.0 + abs(level))


#: gaps narrower than this are indistinguishable from round-off ties
GAP_MIN_WIDTH = 1e-9


@dataclass(frozen=True)
class HillProblem:
    """The periodic operator -d^2/ds^2 - kappa^2/4 on [0, 2*pi]."""

    profile: CurvatureProfile

    @property
    def interval(self) -> Tuple[float, float]:
        return (0.0, PERIOD)

    def potential(self, s):
        k = self.profile(s)
        return -0.25 * k * k

    @property
    def is_even(self) -> bool:
        return self.profile.is_even


Cell = Union[HillProblem, MetricField]


@dataclass(frozen=True)
class Resolution:
    """Element counts per direction; cells_u is ignored for 1d problems."""

    cells_s: int = 400
    cells_u: Optional[int] = None

    def scaled(self, factor: float) -> "Resolution":
        cu = self.cells_u
        return Resolution(
            max(4, round(self.cells_s * factor)),
            None if cu is None else max(2, round(cu * factor)),
        )

    def halved(self) -> "Resolution":
        return self.scaled(0.5)


def _boundary_spec(bc_s) -> BoundarySpec:
    if isinstance(bc_s, str):
        return BoundarySpec(bc_s, "dirichlet")
    return BoundarySpec.quasi_periodic(complex(bc_s))


class CellContext:
    """One cell problem meshed and pre-assembled for repeated solves.

    The free forms are assembled once; every boundary condition (all
    theta samples, Dirichlet, Neumann) is a fold/deletion of the same
    element integrals, which both saves work and makes the nested-space
    enclosure inequalities structural.
    """

    def __init__(self, cell: Cell, resolution: Resolution):
        self.cell = cell
        self.resolution = resolution
        if isinstance(cell, HillProblem):
            self.mesh = build_mesh(cell.interval, resolution.cells_s + 1)
            self.a0, self.b0 = free_forms(self.mesh, None, potential=cell.potential)
        else:
            if resolution.cells_u is None:
                raise ValueError("a 2d cell needs cells_u in the resolution")
            self.mesh = build_mesh(
                cell.domain, resolution.cells_s + 1, resolution.cells_u + 1
            )
            self.a0, self.b0 = free_forms(self.mesh, cell)

    def forms(self, bc_s):
        return apply_bc(self.mesh, self.a0, self.b0, _boundary_spec(bc_s))

    def spectrum(self, bc_s, count: int) -> Spectrum:
        f = self.forms(bc_s)
        return solve_gevp(f.stiffness, f.mass, count, keep_vectors=False)


def cell_forms(cell: Cell, bc_s, resolution: Resolution):
    """Assemble the forms of a cell problem for the given s-side condition.

    bc_s is 'dirichlet', 'neumann' or a unit-modulus complex theta.  For
    metric cells the u walls always carry the Dirichlet condition of the
    waveguide.
    """
    return CellContext(cell, resolution).forms(bc_s)


def cell_spectrum(cell: Cell, bc_s, resolution: Resolution, count: int) -> Spectrum:
    return CellContext(cell, resolution).spectrum(bc_s, count)


# ---------------------------------------------------------------------------
# band structures
# ---------------------------------------------------------------------------


@dataclass
class BandStructure:
    """Eigenvalue curves lambda_k(theta) over a finite theta grid.

    Bands are min/max over the grid, so every reported interval carries a
    grid-resolution caveat: edges between grid points are extrapolations.
    """

    thetas: np.ndarray
    table: np.ndarray  # (len(thetas), k_max)
    resolution: Resolution
    caveat: str = "band edges sampled on a finite theta grid"

    @property
    def k_max(self) -> int:
        return self.table.shape[1]

    def band(self, k: int) -> Tuple[float, float]:
        """The k-th band interval (1-indexed)."""
        col = self.table[:, k - 1]
        return float(col.min()), float(col.max())

    @property
    def bands(self) -> List[Tuple[float, float]]:
        return [self.band(k) for k in range(1, self.k_max + 1)]

    def band_gaps(self, min_width: float = GAP_MIN_WIDTH) -> List[dict]:
        """Open intervals between consecutive bands on the grid."""
        gaps = []
        bands = self.bands
        for k in range(1, len(bands)):
            lo = bands[k - 1][1]
            hi = bands[k][0]
            if hi - lo > min_width:
                gaps.append(
                    {
                        "k": k,
                        "lower": lo,
                        "upper": hi,
                        "source": "floquet-grid",
                        "caveat": self.caveat,
                    }
                )
        return gaps

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["l", "re_theta", "im_theta", "k", "lambda"])
            for l, th in enumerate(self.thetas):
                for k in range(1, self.k_max + 1):
                    writer.writerow(
                        [
                            l,
                            f"{th.real:.17g}",
                            f"{th.imag:.17g}",
                            k,
                            f"{self.table[l, k - 1]:.17g}",
                        ]
                    )


def theta_grid(theta_count: int) -> np.ndarray:
    """theta_l = exp(2*pi*i*l/L).  L must be even so that -1 is on the grid;
    band edges of real even problems sit at theta = +-1."""
    if theta_count < 8:
        raise ValueError("need at least 8 theta samples")
    if theta_count % 2:
        raise ValueError("theta_count must be even so the grid contains -1")
    l = np.arange(theta_count)
    return np.exp(2j * np.pi * l / theta_count)


def band_structure(
    cell: Cell,
    theta_count: int = 32,
    k_max: int = 6,
    resolution: Resolution = Resolution(),
    threads: int = 1,
) -> BandStructure:
    """Solve the theta-quasi-periodic cell problem over the full grid."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    thetas = theta_grid(theta_count)
    ctx = CellContext(cell, resolution)

    def solve_one(th: complex) -> np.ndarray:
        return ctx.spectrum(th, k_max).values

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(solve_one, thetas))
    else:
        rows = [solve_one(th) for th in thetas]
    return BandStructure(thetas=thetas, table=np.array(rows), resolution=resolution)


def gap_condition(
    cell: Cell,
    k_max: int = 6,
    resolution: Resolution = Resolution(),
    min_width: float = GAP_MIN_WIDTH,
) -> List[GapInterval]:
    """Certified-open intervals (lambda_k^D, lambda_{k+1}^N), k <= k_max.

    Requires a strict opening wider than `min_width` so that exact
    continuum ties (free problems) do not produce phantom gaps at
    round-off width.
    """
    ctx = CellContext(cell, resolution)
    dirichlet = ctx.spectrum("dirichlet", k_max + 1).values
    neumann = ctx.spectrum("neumann", k_max + 1).values
    gaps = []
    for k in range(1, k_max + 1):
        lo = dirichlet[k - 1]
        hi = neumann[k]
        if hi - lo > min_width:
            gaps.append(GapInterval(k, float(lo), float(hi)))
    return gaps


@dataclass
class HillEdgeReport:
    """Band edges of an even Hill cell versus its D/N cell eigenvalues."""

    k: int
    dirichlet: float
    neumann: float
    band_min: float
    band_max: float

    @property
    def set_distance(self) -> float:
        """Unordered distance between {band edges} and {D, N} as 2-sets."""
        a = sorted((self.band_min, self.band_max))
        b = sorted((self.dirichlet, self.neumann))
        return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def hill_band_edges_even(
    profile: CurvatureProfile,
    k: int,
    theta_count: int = 32,
    resolution: Resolution = Resolution(),
    bands: Optional[BandStructure] = None,
) -> HillEdgeReport:
    """For even curvature the k-th band edges coincide with the k-th
    Dirichlet and Neumann eigenvalues of the cell, as an unordered pair;
    which edge is which depends on k and is reported, not assumed."""
    if not profile.is_even:
        raise NotEven("curvature profile has nonzero sine coefficients")
    cell = HillProblem(profile)
    if bands is None:
        bands = band_structure(cell, theta_count, k, resolution)
    lo, hi = bands.band(k)
    d = cell_spectrum(cell, "dirichlet", resolution, k).values[k - 1]
    n = cell_spectrum(cell, "neumann", resolution, k).values[k - 1]
    return HillEdgeReport(k=k, dirichlet=float(d), neumann=float(n), band_min=lo, band_max=hi)


# ---------------------------------------------------------------------------
# counting
# ---------------------------------------------------------------------------


def count_below(spectrum: Spectrum, level: float, cluster_tol: Optional[float] = None) -> int:
    """Number of eigenvalues <= level, counting multiplicity.

    Raises AmbiguousLevel when an eigenvalue sits within the cluster
    tolerance of the level; the caller must perturb the level.
    """
    tol = cluster_tolerance(level) if cluster_tol is None else cluster_tol
    values = spectrum.values
    near = np.abs(values - level) < tol
    if np.any(near):
        raise AmbiguousLevel(
            f"{int(near.sum())} eigenvalue(s) within {tol:.3e} of level {level}"
        )
    return int(np.sum(values <= level))


def dirichlet_rectangle_spectrum(side_s: float, side_u: float, lam_max: float) -> Spectrum:
    """Exact Dirichlet spectrum of a flat rectangle up to lam_max."""
    vals = []
    m = 1
    while (np.pi * m / side_s) ** 2 < lam_max:
        n = 1
        while True:
            lam = (np.pi * m / side_s) ** 2 + (np.pi * n / side_u) ** 2
            if lam > lam_max:
                break
            vals.append(lam)
            n += 1
        m += 1
    vals.sort()
    arr = np.array(vals)
    return Spectrum(arr, np.zeros_like(arr), None)


@dataclass
class WeylReport:
    """Deviation of the counting function from the d = 2 Weyl term.

    rows hold (level, count, weyl term, deviation, deviation/sqrt(level));
    `fitted_constant` is the max of |deviation|/sqrt(level) over the grid
    and `trend_slope` the least-squares slope of that ratio against the
    level (bounded remainders show no increasing trend).
    """

    volume: float
    levels: np.ndarray
    counts: np.ndarray
    weyl_terms: np.ndarray

    @property
    def deviations(self) -> np.ndarray:
        return self.counts - self.weyl_terms

    @property
    def scaled_deviations(self) -> np.ndarray:
        return np.abs(self.deviations) / np.sqrt(self.levels)

    @property
    def fitted_constant(self) -> float:
        return float(np.max(self.scaled_deviations))

    @property
    def trend_slope(self) -> float:
        return float(np.polyfit(self.levels, self.scaled_deviations, 1)[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lambda", "count", "weyl_term", "deviation", "scaled_deviation"])
            for i in range(len(self.levels)):
                writer.writerow(
                    [
                        f"{self.levels[i]:.17g}",
                        int(self.counts[i]),
                        f"{self.weyl_terms[i]:.17g}",
                        f"{self.deviations[i]:.17g}",
                        f"{self.scaled_deviations[i]:.17g}",
                    ]
                )


def weyl_check(volume: float, spectrum: Spectrum, levels: Sequence[float]) -> WeylReport:
    """Compare N(lambda) against lambda * vol / (4*pi) on a level grid.

    d = 2 is hard-coded (omega_2 = pi).  The spectrum must contain every
    eigenvalue up to the largest level or the counts would silently
    truncate.
    """
    levels = np.asarray(sorted(float(l) for l in levels))
    if len(spectrum.values) == 0 or levels[-1] > spectrum.values[-1]:
        raise SpectrumTruncated(
            "spectrum does not certifiably cover the requested levels"
        )
    counts = np.array([count_below(spectrum, l) for l in levels], dtype=float)
    weyl_terms = levels * volume / (4.0 * np.pi)
    return WeylReport(volume=volume, levels=levels, counts=counts, weyl_terms=weyl_terms)


# ---------------------------------------------------------------------------
# enclosure
# ---------------------------------------------------------------------------


@dataclass
class EnclosureReport:
    """Margin table for lambda_k^N <= lambda_k^theta <= lambda_k^D."""

    thetas: np.ndarray
    table: np.ndarray  # (L, K) quasi-periodic values
    dirichlet: np.ndarray  # (K,)
    neumann: np.ndarray  # (K,)

    @property
    def worst_margin(self) -> float:
        """min over (k, theta) of both inequality slacks; >= 0 means pass."""
        lower = self.table - self.neumann[np.newaxis, :]
        upper = self.dirichlet[np.newaxis, :] - self.table
        return float(min(lower.min(), upper.min()))

    def passes(self, tolerance: float = 1e-9) -> bool:
        return self.worst_margin >= -tolerance

    def failures(self, tolerance: float = 1e-9) -> List[dict]:
        out = []
        for l in range(self.table.shape[0]):
            for k in range(self.table.shape[1]):
                lo = self.table[l, k] - self.neumann[k]
                hi = self.dirichlet[k] - self.table[l, k]
                if min(lo, hi) < -tolerance:
                    out.append({"l": l, "k": k + 1, "margin": float(min(lo, hi))})
        return out


def enclosure_check(
    cell: Cell,
    theta_count: int = 32,
    k_max: int = 20,
    resolution: Resolution = Resolution(),
    threads: int = 1,
) -> EnclosureReport:
    """Verify the Dirichlet-Neumann enclosure on the same mesh and metric.

    The three discrete form domains are nested (Dirichlet inside
    quasi-periodic inside Neumann), so the inequalities hold exactly up
    to eigensolver round-off.
    """
    thetas = theta_grid(theta_count)
    ctx = CellContext(cell, resolution)

    def solve_one(th: complex) -> np.ndarray:
        return ctx.spectrum(th, k_max).values

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(solve_one, thetas))
    else:
        rows = [solve_one(th) for th in thetas]
    dirichlet = ctx.spectrum("dirichlet", k_max).values
    neumann = ctx.spectrum("neumann", k_max).values
    return EnclosureReport(
        thetas=thetas, table=np.array(rows), dirichlet=dirichlet, neumann=neumann
    )


def gaps_to_json(gaps: Sequence[GapInterval], path) -> None:
    with open(path, "w") as fh:
        json.dump([g.as_dict() for g in gaps], fh, indent=2)
        fh.write("\n")
