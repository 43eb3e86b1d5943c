import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varwave.assembly import (assemble_operators, boundary_force, boundary_norm,
                              grad_energy_seminorm)
from varwave.errors import DimensionMismatch
from varwave.geometry import CoefficientField
from varwave.model import DampingLaw, SourceLaw

from .helpers import interval_ops, square_ops


class TestHandAssembly:
    def setup_method(self):
        self.mesh, self.ops = interval_ops(cells=2)

    def test_stiffness(self):
        assert np.allclose(self.ops.K.toarray(), [[4.0, -2.0], [-2.0, 2.0]])

    def test_lumped_mass(self):
        assert np.allclose(self.ops.m_diag, [0.5, 0.25])

    def test_boundary_mass(self):
        assert np.allclose(self.ops.b_diag, [0.0, 1.0])


class TestSeminorm:
    def test_linear_interpolant(self):
        _, ops = interval_ops(cells=10)
        u = ops.interpolate(lambda x: x[:, 0])
        assert grad_energy_seminorm(ops, u) == pytest.approx(1.0, abs=1e-12)

    def test_zero(self):
        _, ops = interval_ops(cells=5)
        assert grad_energy_seminorm(ops, np.zeros(ops.n_free)) == 0.0

    def test_scaled_field(self):
        _, ops = interval_ops(cells=10, field=CoefficientField.constant([[4.0]]))
        u = ops.interpolate(lambda x: x[:, 0])
        assert grad_energy_seminorm(ops, u) == pytest.approx(4.0)

    def test_wrong_length(self):
        _, ops = interval_ops(cells=5)
        with pytest.raises(DimensionMismatch):
            grad_energy_seminorm(ops, np.zeros(3))

    def test_stiffness_symmetric_psd_2d(self):
        _, ops = square_ops(4, "remaining", CoefficientField.scalar_profile(2))
        K = ops.K.toarray()
        assert np.allclose(K, K.T)
        assert np.linalg.eigvalsh(K).min() > 0

    def test_mass_sums_to_area(self):
        mesh, _ = square_ops(4)
        ops = assemble_operators(mesh, CoefficientField.identity(2))
        full = np.zeros(mesh.n_nodes)
        full[ops.free] = ops.m_diag
        # lumped masses on Dirichlet nodes are dropped; the free part stays below the area
        assert 0.8 < full.sum() < 1.0

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.2, 5.0))
    def test_linear_in_field(self, c):
        _, ops1 = interval_ops(cells=6)
        _, opsc = interval_ops(cells=6, field=CoefficientField.constant([[c]]))
        assert np.allclose(opsc.K.toarray(), c * ops1.K.toarray())


class TestBoundaryNorm:
    def test_single_node(self):
        _, ops = interval_ops(cells=4)
        u = np.zeros(ops.n_free)
        u[ops.bnodes] = 2.0
        assert boundary_norm(ops, u, 4.0) == pytest.approx(2.0)

    def test_zero(self):
        _, ops = interval_ops(cells=4)
        assert boundary_norm(ops, np.zeros(ops.n_free), 3.0) == 0.0

    def test_square_right_edge(self):
        _, ops = square_ops(4, "right")
        u = np.zeros(ops.n_free)
        u[ops.bnodes] = 1.0
        assert boundary_norm(ops, u, 2.0) == pytest.approx(1.0)
        assert ops.b_diag.sum() == pytest.approx(1.0)


class TestBoundaryForce:
    def setup_method(self):
        _, self.ops = interval_ops(cells=4)
        self.b = self.ops.bnodes[0]

    def _vec(self, val):
        x = np.zeros(self.ops.n_free)
        x[self.b] = val
        return x

    def test_zero_state(self):
        out = boundary_force(self.ops, SourceLaw(2.0), DampingLaw("linear"), self._vec(0), self._vec(0))
        assert not out.any()

    def test_source_only(self):
        out = boundary_force(self.ops, SourceLaw(2.0), DampingLaw("linear"), self._vec(1.0), self._vec(0.0))
        assert out[self.b] == pytest.approx(1.0)
        assert np.count_nonzero(out) == 1

    def test_source_minus_damping(self):
        # rho = 0 keeps q(s) = s linear beyond |s| = 1 as well
        out = boundary_force(self.ops, SourceLaw(2.0), DampingLaw("linear", rho=0.0), self._vec(1.0), self._vec(2.0))
        assert out[self.b] == pytest.approx(-1.0)
