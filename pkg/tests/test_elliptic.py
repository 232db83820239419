import mpmath
import numpy as np
import pytest

from mspde import elliptic as ell
from mspde.errors import GeometryError, NumericalError, ParameterError
from mspde.linalg import RngStream

CONST = ell.MediaSpec.constant(1.0)


def patch_m3(m1=2, m2=2, h=1 / 30, buffer_factor=2.0):
    return ell.EllipticPatch(m1=m1, m2=m2, m_total=3, h=h,
                             buffer_factor=buffer_factor)


def unit_patch(n):
    return ell.EllipticPatch(m1=1, m2=1, m_total=1, h=1.0 / n,
                             buffer_factor=1.0)


def boundary_coords(grid):
    b = grid.boundary_flat
    return grid.x_nodes[b // (grid.ny + 1)], grid.y_nodes[b % (grid.ny + 1)]


class TestMedia:
    def test_oscillatory_at_origin(self):
        val = ell.media_eval(ell.MediaSpec.oscillatory(2 ** -4), 0.0, 0.0)
        assert val == pytest.approx(2.0 + 2 / 3.8 + 2 / 3.8, abs=1e-12)

    def test_constant(self):
        assert ell.media_eval(CONST, 0.31, 0.77) == 1.0

    def test_high_contrast_with_cos_oracle(self):
        # indicator at (0.5, 0.9): 0.5*cos(100*0.4) vs 0.4, high precision
        mpmath.mp.dps = 50
        lhs = 0.5 * mpmath.cos(mpmath.mpf(100) * mpmath.mpf("0.4"))
        assert lhs <= mpmath.mpf("0.4")
        assert ell.media_eval(ell.MediaSpec.high_contrast(), 0.5, 0.9) == 1001.0
        # a nearby point outside the region
        assert ell.media_eval(ell.MediaSpec.high_contrast(), 0.5, 0.1) == 1.0

    def test_oscillatory_positive_on_grid(self):
        spec = ell.MediaSpec.oscillatory(2 ** -4)
        x = np.linspace(0, 1, 101)
        vals = ell.media_eval(spec, x[:, None], x[None, :])
        assert vals.min() > 0.0

    def test_tabulated_lookup(self):
        spec = ell.MediaSpec.tabulated([[1.0, 2.0], [3.0, 4.0]])
        assert ell.media_eval(spec, 0.2, 0.2) == 1.0
        assert ell.media_eval(spec, 0.8, 0.9) == 4.0


class TestStiffness:
    def test_annihilates_constants(self):
        system = ell.assemble_p1_stiffness(patch_m3(), CONST)
        k = system.dense_stiffness()
        interior = system.interior
        assert np.max(np.abs(k[interior] @ np.ones(k.shape[1]))) <= 1e-12

    def test_symmetry(self):
        system = ell.assemble_p1_stiffness(patch_m3(), ell.MediaSpec.oscillatory(0.25))
        k = system.dense_stiffness()
        assert np.max(np.abs(k - k.T)) <= 1e-12

    def test_linear_in_media(self):
        k1 = ell.assemble_p1_stiffness(patch_m3(), CONST).dense_stiffness()
        k2 = ell.assemble_p1_stiffness(patch_m3(), ell.MediaSpec.constant(2.0)).dense_stiffness()
        assert np.max(np.abs(k2 - 2.0 * k1)) <= 1e-12

    def test_interior_block_spd(self):
        system = ell.assemble_p1_stiffness(unit_patch(8), ell.MediaSpec.oscillatory(0.5))
        k = system.dense_stiffness()
        kii = k[np.ix_(system.interior, system.interior)]
        assert np.linalg.eigvalsh(kii).min() > 0.0


class TestLocalSolve:
    @pytest.mark.parametrize("spec", [CONST, ell.MediaSpec.oscillatory(0.25),
                                      ell.MediaSpec.high_contrast()])
    def test_constant_preservation(self, spec):
        patch = patch_m3()
        g = patch.grid("core")
        field = ell.solve_local_elliptic(patch, spec, np.full(g.n_boundary, 4.2))
        assert np.max(np.abs(field.values - 4.2)) <= 1e-10

    @pytest.mark.parametrize("spec", [CONST, ell.MediaSpec.oscillatory(0.25)])
    def test_linearity(self, spec):
        patch = patch_m3()
        g = patch.grid("core")
        rng = RngStream(2)
        d1 = rng.substream(0).standard_normal(g.n_boundary)
        d2 = rng.substream(1).standard_normal(g.n_boundary)
        f1 = ell.solve_local_elliptic(patch, spec, d1)
        f2 = ell.solve_local_elliptic(patch, spec, d2)
        fc = ell.solve_local_elliptic(patch, spec, 1.5 * d1 - 2.0 * d2)
        assert np.max(np.abs(fc.values - 1.5 * f1.values + 2.0 * f2.values)) <= 1e-10

    def test_linear_fields_exact(self):
        patch = patch_m3()
        g = patch.grid("core")
        bx, by = boundary_coords(g)
        field = ell.solve_local_elliptic(patch, CONST, 3.0 * bx + 2.0 * by)
        xx, yy = np.meshgrid(g.x_nodes, g.y_nodes, indexing="ij")
        assert np.max(np.abs(field.values - (3.0 * xx + 2.0 * yy))) <= 1e-10

    def test_harmonic_benchmark_second_order(self):
        def exact(x, y):
            return np.sin(np.pi * x) * np.sinh(np.pi * y)

        def nodal_error(n):
            patch = unit_patch(n)
            g = patch.grid("core")
            bx, by = boundary_coords(g)
            field = ell.solve_local_elliptic(patch, CONST, exact(bx, by))
            xx, yy = np.meshgrid(g.x_nodes, g.y_nodes, indexing="ij")
            return np.abs(field.values - exact(xx, yy)).max()

        errs = [nodal_error(n) for n in (8, 16, 32)]
        for coarse, fine in zip(errs, errs[1:]):
            assert 3.2 <= coarse / fine <= 4.8

    def test_discrete_maximum_principle(self):
        patch = patch_m3()
        g = patch.grid("core")
        rng = RngStream(9)
        for trial in range(20):
            data = rng.substream(trial).uniform(g.n_boundary)
            field = ell.solve_local_elliptic(patch, CONST, data)
            assert field.values.min() >= -1e-10
            assert field.values.max() <= 1.0 + 1e-10

    def test_q1_element_constants_and_linears(self):
        patch = patch_m3()
        g = patch.grid("core")
        bx, by = boundary_coords(g)
        fc = ell.solve_local_elliptic(patch, CONST, np.full(g.n_boundary, 2.0),
                                      element="q1")
        assert np.max(np.abs(fc.values - 2.0)) <= 1e-10
        fl = ell.solve_local_elliptic(patch, CONST, bx - 0.5 * by, element="q1")
        xx, yy = np.meshgrid(g.x_nodes, g.y_nodes, indexing="ij")
        assert np.max(np.abs(fl.values - (xx - 0.5 * yy))) <= 1e-10


class TestTraces:
    def test_constant_field_zero_flux(self):
        patch = patch_m3()
        g = patch.grid("core")
        field = ell.solve_local_elliptic(patch, CONST, np.ones(g.n_boundary))
        for side in ("S", "E", "N", "W"):
            tr = ell.trace_elliptic(field, side)
            assert np.max(np.abs(tr.fluxes)) <= 1e-12
            assert np.allclose(tr.values, 1.0, atol=1e-12)

    def test_linear_field_unit_flux(self):
        patch = patch_m3()
        g = patch.grid("core")
        bx, _ = boundary_coords(g)
        field = ell.solve_local_elliptic(patch, CONST, bx)
        east = ell.trace_elliptic(field, "E")
        west = ell.trace_elliptic(field, "W")
        assert np.allclose(east.fluxes, 1.0, atol=1e-10)
        assert np.allclose(west.fluxes, -1.0, atol=1e-10)

    def test_opposing_fluxes_first_order(self):
        # sample an analytic harmonic field on two adjacent patches and
        # check the flux mismatch decays like O(h)
        def exact(x, y):
            return np.sin(np.pi * x) * np.sinh(np.pi * y)

        def mismatch(h):
            left = ell.EllipticPatch(m1=1, m2=1, m_total=2, h=h)
            right = ell.EllipticPatch(m1=2, m2=1, m_total=2, h=h)
            fields = []
            for patch in (left, right):
                g = patch.grid("core")
                xx, yy = np.meshgrid(g.x_nodes, g.y_nodes, indexing="ij")
                fields.append(ell.EllipticField(patch, "core", exact(xx, yy),
                                                media=CONST))
            fl = ell.trace_elliptic(fields[0], "E").fluxes
            fr = ell.trace_elliptic(fields[1], "W").fluxes
            return np.abs(fl + fr).max()

        m1, m2 = mismatch(1 / 16), mismatch(1 / 32)
        assert 1.4 <= m1 / m2 <= 3.0

    def test_unknown_edge_rejected(self):
        patch = patch_m3()
        g = patch.grid("core")
        field = ell.solve_local_elliptic(patch, CONST, np.ones(g.n_boundary))
        with pytest.raises(GeometryError):
            ell.trace_elliptic(field, "Q")


class TestMsfem:
    def test_constant_media_reproduces_bilinear(self):
        patch = patch_m3()
        g = patch.grid("core")
        fields = ell.msfem_basis(patch, CONST)
        x0, x1, y0, y1 = patch.core_bounds
        xx, yy = np.meshgrid(g.x_nodes, g.y_nodes, indexing="ij")
        xi = (xx - x0) / (x1 - x0)
        eta = (yy - y0) / (y1 - y0)
        expected = [(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta]
        for field, exp in zip(fields, expected):
            assert np.max(np.abs(field.values - exp)) <= 1e-10

    def test_partition_of_unity_high_contrast(self):
        patch = ell.EllipticPatch(m1=2, m2=2, m_total=5, h=0.02)
        fields = ell.msfem_basis(patch, ell.MediaSpec.high_contrast())
        total = sum(f.values for f in fields)
        assert np.max(np.abs(total - 1.0)) <= 1e-10

    def test_range_within_maximum_principle_slack(self):
        patch = ell.EllipticPatch(m1=2, m2=2, m_total=5, h=0.02)
        for field in ell.msfem_basis(patch, ell.MediaSpec.high_contrast()):
            assert field.values.min() >= -0.05
            assert field.values.max() <= 1.05


class TestGeometry:
    def test_buffer_concentric_and_clipped(self):
        inner = ell.EllipticPatch(m1=2, m2=2, m_total=5, h=0.02)
        assert inner.buffered_bounds == pytest.approx((0.1, 0.5, 0.1, 0.5))
        corner = ell.EllipticPatch(m1=1, m2=1, m_total=5, h=0.02)
        assert corner.buffered_bounds == pytest.approx((0.0, 0.3, 0.0, 0.3))

    def test_boundary_enumeration(self):
        g = ell.EllipticPatch(m1=1, m2=1, m_total=2, h=0.25).grid("core")
        assert g.n_boundary == 8
        b = g.boundary_flat
        assert len(np.unique(b)) == 8
        # starts at the lower-left corner and walks counterclockwise
        assert b[0] == g.flat(0, 0)
        assert b[g.nx] == g.flat(g.nx, 0)

    def test_non_dividing_mesh_rejected(self):
        with pytest.raises(GeometryError):
            ell.EllipticPatch(m1=1, m2=1, m_total=3, h=0.1)

    def test_non_spd_detection(self):
        with pytest.raises((NumericalError, ParameterError)):
            ell.assemble_p1_stiffness(patch_m3(), ell.MediaSpec.constant(-1.0))
