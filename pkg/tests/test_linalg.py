import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaplab.errors import NotPositiveDefinite
from gaplab.linalg import HermitianMatrix, Spectrum, cholesky, richardson, solve_gevp


def random_spd(rng, n, complex_valued=True):
    m = rng.standard_normal((n, n))
    if complex_valued:
        m = m + 1j * rng.standard_normal((n, n))
    return m @ m.conj().T + n * np.eye(n)


def random_hermitian(rng, n, complex_valued=True):
    m = rng.standard_normal((n, n))
    if complex_valued:
        m = m + 1j * rng.standard_normal((n, n))
    return 0.5 * (m + m.conj().T)


class TestHermitianMatrix:
    def test_symmetrizes_and_zeroes_diagonal_imag(self):
        rng = np.random.default_rng(7)
        raw = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        h = HermitianMatrix(0.5 * (raw + raw.conj().T) + 1e-14 * raw)
        a = h.array
        assert np.array_equal(a, a.conj().T)
        assert np.all(a.diagonal().imag == 0.0)

    def test_real_input_stays_real(self):
        h = HermitianMatrix(np.array([[2.0, 1.0], [1.0, 3.0]]))
        assert h.is_real

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            HermitianMatrix(np.ones((2, 3)))


class TestCholesky:
    def test_identity(self):
        assert np.allclose(cholesky(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        l = cholesky(np.array([[4.0, 0.0], [0.0, 9.0]]))
        assert np.allclose(l, np.diag([2.0, 3.0]))

    def test_random_spd_reconstructs(self):
        rng = np.random.default_rng(11)
        b = random_spd(rng, 20)
        l = cholesky(b)
        err = np.max(np.abs(l @ l.conj().T - b))
        assert err <= 1e-12 * np.max(np.abs(b))

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky(np.array([[1.0, 0.0], [0.0, -1.0]]))


class TestSolveGevp:
    def test_diagonal_case(self):
        spec = solve_gevp(np.diag([1.0, 2.0, 3.0]), np.eye(3), 3)
        assert np.allclose(spec.values, [1.0, 2.0, 3.0])

    def test_reciprocal_scaling(self):
        spec = solve_gevp(np.eye(2), np.diag([1.0, 4.0]), 2)
        assert np.allclose(spec.values, [0.25, 1.0])

    def test_1d_dirichlet_laplacian_limit(self):
        # independent discretization written out by hand: consistent-mass
        # P1 chain on (0, 2*pi); lambda_k -> (k/2)^2
        for n in (100, 300):
            h = 2.0 * np.pi / n
            main = 2.0 * np.ones(n - 1)
            a = (np.diag(main) - np.diag(np.ones(n - 2), 1) - np.diag(np.ones(n - 2), -1)) / h
            b = (np.diag(4.0 * main / 2.0) + np.diag(np.ones(n - 2), 1) + np.diag(np.ones(n - 2), -1)) * h / 6.0
            spec = solve_gevp(a, b, 3)
            expect = np.array([0.25, 1.0, 2.25])
            assert np.max(np.abs(spec.values - expect)) < 20.0 / n**2

    def test_spectrum_contract(self):
        rng = np.random.default_rng(3)
        a = random_hermitian(rng, 30)
        b = random_spd(rng, 30)
        spec = solve_gevp(a, b, 8)
        assert np.all(np.diff(spec.values) >= 0.0)
        assert np.all(spec.residuals >= 0.0)
        gram = spec.vectors.conj().T @ b @ spec.vectors
        assert np.max(np.abs(gram - np.eye(8))) < 1e-8

    def test_subset_and_full_paths_agree(self):
        rng = np.random.default_rng(5)
        n = 160
        a = random_hermitian(rng, n)
        b = random_spd(rng, n)
        lo = solve_gevp(a, b, 4).values  # subset driver
        full = solve_gevp(a, b, n).values[:4]  # full driver
        assert np.max(np.abs(lo - full)) < 1e-9 * n

    def test_real_equals_complex_embedding(self):
        rng = np.random.default_rng(9)
        a = random_hermitian(rng, 16, complex_valued=False)
        b = random_spd(rng, 16, complex_valued=False)
        real = solve_gevp(a, b, 16).values
        embedded = solve_gevp(a.astype(complex), b.astype(complex), 16).values
        scale = np.max(np.abs(real))
        assert np.max(np.abs(real - embedded)) <= 1e-12 * scale

    @settings(max_examples=20, deadline=None)
    @given(st.floats(min_value=0.05, max_value=40.0))
    def test_stiffness_scaling_invariance(self, c):
        rng = np.random.default_rng(17)
        a = random_hermitian(rng, 12)
        b = random_spd(rng, 12)
        base = solve_gevp(a, b, 12).values
        scaled = solve_gevp((c * c) * a, b, 12).values / (c * c)
        assert np.max(np.abs(scaled - base)) <= 1e-12 * max(1.0, np.max(np.abs(base)))

    def test_dirichlet_deletion_interlacing(self):
        rng = np.random.default_rng(2026)
        for _ in range(5):
            a = random_hermitian(rng, 10)
            b = random_spd(rng, 10)
            lam = solve_gevp(a, b, 10).values
            keep = np.arange(1, 10)
            mu = solve_gevp(a[np.ix_(keep, keep)], b[np.ix_(keep, keep)], 9).values
            assert np.all(mu >= lam[:9] - 1e-10)
            assert np.all(mu <= lam[1:] + 1e-10)

    def test_count_bounds(self):
        with pytest.raises(ValueError):
            solve_gevp(np.eye(3), np.eye(3), 4)
        with pytest.raises(ValueError):
            solve_gevp(np.eye(3), np.eye(2), 2)

    def test_singular_mass_rejected(self):
        a = np.eye(3)
        b = np.diag([1.0, 1.0, 0.0])
        with pytest.raises(NotPositiveDefinite):
            solve_gevp(a, b, 2)


def test_richardson_removes_leading_order():
    # f(h) = 3 + 5 h^2 + h^4: the h^2 term cancels exactly, leaving the
    # combined quartic remainder (4 h_f^4 - h_c^4) / 3
    f = lambda h: 3.0 + 5.0 * h**2 + h**4
    extrap = richardson(f(0.2), f(0.1), 2.0)
    assert abs(extrap - 3.0) == pytest.approx(abs(4 * 0.1**4 - 0.2**4) / 3, rel=1e-9)
    assert abs(extrap - 3.0) < abs(f(0.1) - 3.0)
