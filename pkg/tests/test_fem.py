import numpy as np
import pytest

from gaplab.errors import CutOffMeshLine, HoleTooCoarse
from gaplab.fem import (
    BoundarySpec,
    assemble,
    build_mesh,
    dirichlet_restrict,
    export_triplets,
    free_forms,
    read_triplets,
)
from gaplab.geometry import (
    CurvatureProfile,
    EuclideanMetric,
    Rectangle,
    conformal_metric,
    supercell,
    waveguide_metric,
)
from gaplab.linalg import solve_gevp

COS = CurvatureProfile.from_cosines(1.0)


class TestBuildMesh:
    def test_1d_counts(self):
        mesh = build_mesh((0.0, 2 * np.pi), 5)
        assert mesh.elements.shape == (4, 2)
        lengths = np.diff(mesh.coords)
        assert np.allclose(lengths, np.pi / 2)

    def test_2d_counts(self):
        # a 4x3 grid of nodes carries 3*2 rectangular cells
        mesh = build_mesh(Rectangle(0, 3, 0, 2), 4, 3)
        assert mesh.elements.shape == (6, 4)
        assert mesh.node_count == 12

    def test_zero_radius_hole_is_noop(self):
        mesh = build_mesh(Rectangle(0, 1, 0, 1), 9, 9, hole=(0.5, 0.5, 0.0))
        assert mesh.elements.shape == (64, 4)
        assert not mesh.hole_dirichlet.any()

    def test_hole_removes_and_tags(self):
        mesh = build_mesh(Rectangle(0, 1, 0, 1), 17, 17, hole=(0.5, 0.5, 0.2))
        assert mesh.elements.shape[0] < 256
        assert mesh.hole_dirichlet.any()
        # kept elements never reference a dropped node
        assert mesh.active[mesh.elements.ravel()].all()

    def test_hole_too_coarse(self):
        # a large hole that the centroid test cannot see (outside the grid)
        with pytest.raises(HoleTooCoarse):
            build_mesh(Rectangle(0, 1, 0, 1), 5, 5, hole=(-5.0, 0.5, 3.0))

    def test_resolution_validation(self):
        with pytest.raises(ValueError):
            build_mesh((0, 1), 3)
        with pytest.raises(ValueError):
            build_mesh(Rectangle(0, 1, 0, 1), 4, 1)


class TestAssembly:
    def test_1d_free_spectrum(self):
        mesh = build_mesh((0.0, 2 * np.pi), 401)
        forms = assemble(mesh, None, BoundarySpec("dirichlet"))
        vals = solve_gevp(forms.stiffness, forms.mass, 3, keep_vectors=False).values
        assert abs(vals[0] - 0.25) < 1e-3
        assert abs(vals[1] - 1.0) < 1e-3

    def test_square_dirichlet_converges(self):
        exact = 2 * np.pi**2
        errs = []
        for n in (17, 33):
            mesh = build_mesh(Rectangle(0, 1, 0, 1), n, n)
            forms = assemble(mesh, EuclideanMetric(Rectangle(0, 1, 0, 1)),
                             BoundarySpec("dirichlet", "dirichlet"))
            v = solve_gevp(forms.stiffness, forms.mass, 1, keep_vectors=False).values[0]
            errs.append(abs(v - exact))
        assert errs[1] < 2e-2 * exact
        assert errs[0] / errs[1] > 3.0

    def test_flat_strip_periodic_ground_state(self):
        # theta = 1 on the flat strip: the ground state is constant along s,
        # so the 2d eigenvalue coincides with the discrete 1d transverse one
        eps = 0.5
        strip = Rectangle(0, 2 * np.pi, 0, eps)
        mesh = build_mesh(strip, 33, 9)
        forms = assemble(mesh, EuclideanMetric(strip), BoundarySpec.quasi_periodic(1.0))
        lam = solve_gevp(forms.stiffness, forms.mass, 1, keep_vectors=False).values[0]
        tmesh = build_mesh((0.0, eps), 9)
        tforms = assemble(tmesh, None, BoundarySpec("dirichlet"))
        lam_t = solve_gevp(tforms.stiffness, tforms.mass, 1, keep_vectors=False).values[0]
        assert lam == pytest.approx(lam_t, rel=1e-12)
        assert abs(lam - np.pi**2 / eps**2) < 0.6  # converging to pi^2/eps^2

    def test_theta_pm1_real_other_theta_hermitian(self):
        wg = waveguide_metric(COS, 0.2)
        mesh = build_mesh(wg.domain, 25, 7)
        for th in (1.0, -1.0):
            f = assemble(mesh, wg, BoundarySpec.quasi_periodic(th))
            assert f.stiffness.is_real and f.mass.is_real
        f = assemble(mesh, wg, BoundarySpec.quasi_periodic(np.exp(0.4j)))
        a = f.stiffness.array
        assert np.array_equal(a, a.conj().T)
        assert not f.stiffness.is_real
        # mass stays positive definite after folding
        assert np.all(np.linalg.eigvalsh(f.mass.array) > 0)

    def test_slave_phase_in_dof_map(self):
        wg = waveguide_metric(COS, 0.2)
        mesh = build_mesh(wg.domain, 25, 7)
        th = np.exp(0.4j)
        f = assemble(mesh, wg, BoundarySpec.quasi_periodic(th))
        nu = mesh.nodes_u
        slave = (mesh.nodes_s - 1) * nu + 3
        master = 3
        assert f.node_dof[slave] == f.node_dof[master] >= 0
        assert f.node_phase[slave] == pytest.approx(np.conj(th))

    def test_theta_modulus_validated(self):
        with pytest.raises(ValueError):
            BoundarySpec.quasi_periodic(2.0)

    def test_enclosure_on_same_forms(self):
        wg = waveguide_metric(COS, 0.2)
        mesh = build_mesh(wg.domain, 33, 7)
        a0, b0 = free_forms(mesh, wg)
        from gaplab.fem import apply_bc

        fn = apply_bc(mesh, a0, b0, BoundarySpec("neumann", "dirichlet"))
        fd = apply_bc(mesh, a0, b0, BoundarySpec("dirichlet", "dirichlet"))
        n_vals = solve_gevp(fn.stiffness, fn.mass, 8, keep_vectors=False).values
        d_vals = solve_gevp(fd.stiffness, fd.mass, 8, keep_vectors=False).values
        for th in (1.0, np.exp(0.7j), -1.0):
            ft = apply_bc(mesh, a0, b0, BoundarySpec.quasi_periodic(th))
            t_vals = solve_gevp(ft.stiffness, ft.mass, 8, keep_vectors=False).values
            assert np.all(n_vals <= t_vals + 1e-9)
            assert np.all(t_vals <= d_vals + 1e-9)

    def test_bracketing_across_a_split(self):
        # lambda_k^N(M1 (+) M2) <= lambda_k^N(M) <= lambda_k^D(M) <= lambda_k^D(M1 (+) M2)
        wg = waveguide_metric(COS, 0.2)
        mesh = build_mesh(wg.domain, 33, 7)
        cut = np.pi
        k = 8

        def piece_values(bc):
            vals = []
            for dom in (Rectangle(0, cut, 0, 0.2), Rectangle(cut, 2 * np.pi, 0, 0.2)):
                m = build_mesh(dom, 17, 7)
                f = assemble(m, wg, BoundarySpec(bc, "dirichlet"))
                vals.extend(solve_gevp(f.stiffness, f.mass, k, keep_vectors=False).values)
            return np.sort(vals)[:k]

        fn = assemble(mesh, wg, BoundarySpec("neumann", "dirichlet"))
        fd = assemble(mesh, wg, BoundarySpec("dirichlet", "dirichlet"))
        whole_n = solve_gevp(fn.stiffness, fn.mass, k, keep_vectors=False).values
        whole_d = solve_gevp(fd.stiffness, fd.mass, k, keep_vectors=False).values
        assert np.all(piece_values("neumann") <= whole_n + 1e-9)
        assert np.all(whole_n <= whole_d + 1e-9)
        assert np.all(whole_d <= piece_values("dirichlet") + 1e-9)

    def test_conformal_stiffness_bit_identical_mass_scales(self):
        wg = waveguide_metric(COS, 0.2)
        mesh = build_mesh(wg.domain, 25, 7)
        base = assemble(mesh, wg, BoundarySpec("dirichlet", "dirichlet"))
        scaled = assemble(mesh, conformal_metric(wg, 1.7), BoundarySpec("dirichlet", "dirichlet"))
        assert np.array_equal(base.stiffness.array, scaled.stiffness.array)
        assert np.allclose(scaled.mass.array, 1.7**2 * base.mass.array, rtol=1e-14)

    def test_constant_conformal_eigenvalue_scaling(self):
        wg = waveguide_metric(COS, 0.2)
        mesh = build_mesh(wg.domain, 25, 7)
        c = 2.3
        f1 = assemble(mesh, wg, BoundarySpec("dirichlet", "dirichlet"))
        f2 = assemble(mesh, conformal_metric(wg, c), BoundarySpec("dirichlet", "dirichlet"))
        v1 = solve_gevp(f1.stiffness, f1.mass, 10, keep_vectors=False).values
        v2 = solve_gevp(f2.stiffness, f2.mass, 10, keep_vectors=False).values
        assert np.max(np.abs(v2 * c**2 - v1) / np.abs(v1)) < 1e-12

    def test_mass_row_sums_partition_volume(self):
        wg = waveguide_metric(COS, 0.3)
        mesh = build_mesh(wg.domain, 41, 9)
        _, b0 = free_forms(mesh, wg)
        assert b0.sum() == pytest.approx(wg.volume(), rel=1e-4)

    def test_potential_only_in_1d(self):
        mesh = build_mesh(Rectangle(0, 1, 0, 1), 5, 5)
        with pytest.raises(ValueError):
            assemble(mesh, EuclideanMetric(Rectangle(0, 1, 0, 1)),
                     BoundarySpec("dirichlet", "dirichlet"), potential=lambda s: s)


class TestDirichletRestrict:
    def test_zero_cuts_identity(self):
        mesh = build_mesh((0.0, 2 * np.pi), 33)
        forms = assemble(mesh, None, BoundarySpec("neumann"))
        assert dirichlet_restrict(forms, []) is forms

    def test_supercell_cut_doubles_cell_spectrum(self):
        cell = waveguide_metric(COS, 0.2)
        sup = supercell(cell, 2)
        mesh = build_mesh(sup.domain, 49, 7)
        forms = assemble(mesh, sup, BoundarySpec("dirichlet", "dirichlet"))
        restricted = dirichlet_restrict(forms, [2 * np.pi])
        got = solve_gevp(restricted.stiffness, restricted.mass, 8, keep_vectors=False).values

        cmesh = build_mesh(cell.domain, 25, 7)
        cforms = assemble(cmesh, cell, BoundarySpec("dirichlet", "dirichlet"))
        cell_vals = solve_gevp(cforms.stiffness, cforms.mass, 4, keep_vectors=False).values
        doubled = np.sort(np.concatenate([cell_vals, cell_vals]))
        assert np.max(np.abs(got - doubled)) < 1e-10 * max(1.0, np.max(np.abs(doubled)))

    def test_cut_matches_separate_pieces(self):
        wg = waveguide_metric(COS, 0.2)
        mesh = build_mesh(wg.domain, 33, 7)
        forms = assemble(mesh, wg, BoundarySpec("dirichlet", "dirichlet"))
        cut = dirichlet_restrict(forms, [np.pi])
        got = solve_gevp(cut.stiffness, cut.mass, 8, keep_vectors=False).values
        vals = []
        for dom in (Rectangle(0, np.pi, 0, 0.2), Rectangle(np.pi, 2 * np.pi, 0, 0.2)):
            m = build_mesh(dom, 17, 7)
            f = assemble(m, wg, BoundarySpec("dirichlet", "dirichlet"))
            vals.extend(solve_gevp(f.stiffness, f.mass, 8, keep_vectors=False).values)
        expect = np.sort(vals)[:8]
        assert np.max(np.abs(got - expect)) < 1e-10 * max(1.0, np.max(np.abs(expect)))

    def test_cut_off_mesh_line(self):
        mesh = build_mesh((0.0, 2 * np.pi), 33)
        forms = assemble(mesh, None, BoundarySpec("neumann"))
        with pytest.raises(CutOffMeshLine):
            dirichlet_restrict(forms, [1.2345])


def test_triplet_export_roundtrip(tmp_path):
    wg = waveguide_metric(COS, 0.2)
    mesh = build_mesh(wg.domain, 9, 5)
    forms = assemble(mesh, wg, BoundarySpec.quasi_periodic(np.exp(0.3j)))
    path = tmp_path / "stiffness.txt"
    export_triplets(forms.stiffness, path)
    back = read_triplets(path, forms.order)
    assert np.max(np.abs(back - forms.stiffness.array)) == 0.0
