import numpy as np
import pytest
from scipy.special import mathieu_a, mathieu_b

from gaplab.errors import AmbiguousLevel, NotEven, SpectrumTruncated
from gaplab.geometry import CurvatureProfile, waveguide_metric
from gaplab.linalg import Spectrum
from gaplab.spectra import (
    HillProblem,
    Resolution,
    band_structure,
    cell_spectrum,
    count_below,
    dirichlet_rectangle_spectrum,
    enclosure_check,
    gap_condition,
    hill_band_edges_even,
    theta_grid,
    weyl_check,
)

FREE = HillProblem(CurvatureProfile.zero())
COS = HillProblem(CurvatureProfile.from_cosines(1.0))
RES = Resolution(400)


def mathieu_gap_in_lambda(amplitude, gap_index):
    """Edges of the open Hill gaps for kappa = amplitude * cos(s).

    The potential -kappa^2/4 = -a^2/8 - (a^2/8) cos 2s maps to the Mathieu
    form y'' + (q_m - 2q cos 2x) y = 0 with q = -a^2/16, so the pi-periodic
    gap `gap_index` sits between the characteristic values of order
    `gap_index`, shifted back by the potential mean a^2/8.  In the 2*pi
    cell labelling that is the gap between bands 2*gap_index and
    2*gap_index + 1.
    """
    q = amplitude**2 / 16.0
    shift = amplitude**2 / 8.0
    if gap_index % 2:
        # odd orders swap parity for negative q
        lo, hi = mathieu_b(gap_index, q), mathieu_a(gap_index, q)
    else:
        lo, hi = sorted((mathieu_a(gap_index, q), mathieu_b(gap_index, q)))
    return lo - shift, hi - shift


class TestThetaGrid:
    def test_contains_plus_minus_one(self):
        g = theta_grid(32)
        assert np.isclose(g[0], 1.0)
        assert np.isclose(g[16], -1.0)

    def test_rejects_odd_and_tiny(self):
        with pytest.raises(ValueError):
            theta_grid(31)
        with pytest.raises(ValueError):
            theta_grid(4)


class TestBandStructure:
    def test_free_bands(self):
        bands = band_structure(FREE, 32, 2, RES)
        b1, b2 = bands.bands
        assert abs(b1[0] - 0.0) < 1e-3 and abs(b1[1] - 0.25) < 1e-3
        assert abs(b2[0] - 0.25) < 1e-3 and abs(b2[1] - 1.0) < 1e-3

    def test_table_sorted_per_theta(self):
        bands = band_structure(COS, 16, 4, Resolution(200))
        assert np.all(np.diff(bands.table, axis=1) >= 0.0)

    def test_time_reversal_symmetry(self):
        bands = band_structure(COS, 16, 3, Resolution(200))
        # theta_l and theta_{L-l} are conjugate; same eigenvalues
        for l in range(1, 8):
            assert np.max(np.abs(bands.table[l] - bands.table[16 - l])) < 1e-9

    def test_even_band_edges_stable_under_grid_refinement(self):
        coarse = band_structure(COS, 32, 3, Resolution(200))
        fine = band_structure(COS, 64, 3, Resolution(200))
        for k in range(1, 4):
            a, b = coarse.band(k)
            c, d = fine.band(k)
            assert abs(a - c) < 1e-8 and abs(b - d) < 1e-8

    def test_csv_export(self, tmp_path):
        bands = band_structure(FREE, 8, 2, Resolution(50))
        path = tmp_path / "bands.csv"
        bands.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "l,re_theta,im_theta,k,lambda"
        assert len(lines) == 1 + 8 * 2


class TestGapCondition:
    def test_free_cell_has_no_gap(self):
        assert gap_condition(FREE, 4, RES) == []

    def test_strong_cosine_cell_matches_mathieu(self):
        hill = HillProblem(CurvatureProfile.from_cosines(4.0))
        gaps = gap_condition(hill, 6, RES)
        assert [g.k for g in gaps] == [4]
        lo, hi = mathieu_gap_in_lambda(4.0, 2)
        assert gaps[0].lower == pytest.approx(lo, abs=1e-3)
        assert gaps[0].upper == pytest.approx(hi, abs=1e-3)

    def test_cos_cell_second_order_gap(self):
        gaps = gap_condition(COS, 6, RES)
        assert [g.k for g in gaps] == [4]
        lo, hi = mathieu_gap_in_lambda(1.0, 2)
        assert gaps[0].lower == pytest.approx(lo, abs=1e-3)
        assert gaps[0].upper == pytest.approx(hi, abs=1e-3)

    def test_gaps_disjoint_from_bands(self):
        hill = HillProblem(CurvatureProfile.from_cosines(4.0))
        gaps = gap_condition(hill, 6, Resolution(300))
        bands = band_structure(hill, 16, 7, Resolution(300))
        for g in gaps:
            for lo, hi in bands.bands:
                assert g.upper <= lo + 1e-9 or hi <= g.lower + 1e-9


class TestHillEdges:
    def test_free_cell_edges(self):
        for k in (1, 2, 3):
            rep = hill_band_edges_even(CurvatureProfile.zero(), k, 16, Resolution(300))
            expect = {((k - 1) / 2.0) ** 2, (k / 2.0) ** 2}
            got = {round(rep.band_min, 3), round(rep.band_max, 3)}
            assert got == {round(v, 3) for v in expect}
            assert rep.set_distance < 1e-3

    def test_first_band_edges_match_for_cos(self):
        rep = hill_band_edges_even(CurvatureProfile.from_cosines(1.0), 1, 32, RES)
        assert rep.set_distance < 1e-3

    def test_every_band_edge_is_a_dn_eigenvalue_for_even_cells(self):
        # the even-curvature structure theorem, stated correctly: each edge
        # of each band coincides with some Dirichlet or Neumann eigenvalue
        # of the cell (for generic odd curvature it would sit strictly
        # inside a gap instead)
        profile = CurvatureProfile((0.0, 1.0, -1.0))
        cell = HillProblem(profile)
        res = Resolution(400)
        bands = band_structure(cell, 32, 5, res)
        d = cell_spectrum(cell, "dirichlet", res, 7).values
        n = cell_spectrum(cell, "neumann", res, 7).values
        pool = np.concatenate([d, n])
        for k in range(1, 6):
            for edge in bands.band(k):
                assert np.min(np.abs(pool - edge)) < 2e-3

    def test_requires_even(self):
        with pytest.raises(NotEven):
            hill_band_edges_even(CurvatureProfile((0.0,), (1.0,)), 1)


class TestCountBelow:
    def test_simple_counts(self):
        spec = Spectrum(np.array([1.0, 2.0, 3.0]), np.zeros(3))
        assert count_below(spec, 2.5) == 2
        assert count_below(spec, 0.5) == 0

    def test_ambiguous_level(self):
        spec = Spectrum(np.array([1.0, 2.0]), np.zeros(2))
        with pytest.raises(AmbiguousLevel):
            count_below(spec, 2.0 + 1e-9)

    def test_square_lattice_oracle(self):
        # brute-force lattice enumeration against the counting path
        lam = 100.3
        spec = dirichlet_rectangle_spectrum(np.pi, np.pi, 130.0)
        brute = sum(
            1 for m in range(1, 12) for n in range(1, 12) if m * m + n * n <= lam
        )
        assert count_below(spec, lam) == brute


class TestWeyl:
    def test_square_weyl_term(self):
        spec = dirichlet_rectangle_spectrum(np.pi, np.pi, 130.0)
        rep = weyl_check(np.pi**2, spec, [100.5])
        assert rep.weyl_terms[0] == pytest.approx(100.5 * np.pi / 4.0)
        assert abs(rep.deviations[0]) <= rep.fitted_constant * np.sqrt(100.5)

    def test_rectangle_2x1(self):
        spec = dirichlet_rectangle_spectrum(2.0, 1.0, 500.0)
        levels = [101.3, 205.7, 401.1]
        rep = weyl_check(2.0, spec, levels)
        for i, lam in enumerate(levels):
            brute = sum(
                1
                for m in range(1, 40)
                for n in range(1, 40)
                if np.pi**2 * (m * m / 4.0 + n * n) <= lam
            )
            assert rep.counts[i] == brute

    def test_small_levels_count_zero(self):
        spec = dirichlet_rectangle_spectrum(np.pi, np.pi, 30.0)
        rep = weyl_check(np.pi**2, spec, [0.5, 1.5])
        assert rep.counts[0] == 0

    def test_truncated_spectrum_rejected(self):
        spec = dirichlet_rectangle_spectrum(np.pi, np.pi, 30.0)
        with pytest.raises(SpectrumTruncated):
            weyl_check(np.pi**2, spec, [100.0])


class TestEnclosure:
    def test_free_hill(self):
        rep = enclosure_check(FREE, 16, 8, Resolution(200))
        assert rep.passes(1e-9)
        assert rep.failures() == []

    def test_cos_hill(self):
        rep = enclosure_check(COS, 16, 8, Resolution(200))
        assert rep.worst_margin >= -1e-9

    def test_waveguide_cell(self):
        wg = waveguide_metric(CurvatureProfile.from_cosines(1.0), 0.2)
        rep = enclosure_check(wg, 8, 6, Resolution(32, 8))
        assert rep.worst_margin >= -1e-9
