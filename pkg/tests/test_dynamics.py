import math

import numpy as np
import pytest

from varwave.diagnostics import energy, energy_identity_residual
from varwave.dynamics import (BLOWUP, HORIZON, STEP_FAILURE, MidpointStepper, RunControls, State,
                              estimate_blowup_time, run, step)
from varwave.errors import NewtonFailure
from varwave.model import ForcingLaw

from .helpers import conservative_laws, interval_ops, laws, sine_data, square_ops


def _zero(ops):
    return State(0.0, np.zeros(ops.n_free), np.zeros(ops.n_free))


class TestStep:
    def test_zero_is_fixed_point(self):
        _, ops = interval_ops(8)
        new = step(_zero(ops), 0.1, ops, laws())
        assert not new.u.any() and not new.v.any()
        assert new.t == pytest.approx(0.1)

    @pytest.mark.parametrize("dt", [1e-3, 1e-1])
    def test_one_step_conserves_energy(self, dt):
        _, ops = interval_ops(32)
        lw = conservative_laws()
        s = State(0.0, sine_data(ops, 1.0), np.zeros(ops.n_free))
        e0 = energy(ops, lw, s).E
        e1 = energy(ops, lw, step(s, dt, ops, lw)).E
        assert abs(e1 - e0) <= 1e-10 * e0

    def test_newton_failure_on_overflowing_boundary(self):
        _, ops = interval_ops(4)
        u = np.zeros(ops.n_free)
        u[ops.bnodes] = 1e110
        with pytest.raises(NewtonFailure):
            step(State(0.0, u, np.zeros(ops.n_free)), 1.0, ops, laws())

    def test_2d_boundary_solve_matches_residual(self):
        _, ops = square_ops(4, "remaining")
        lw = laws(family="polynomial", rho=1.0)
        rng = np.random.default_rng(3)
        s = State(0.0, 0.3 * rng.standard_normal(ops.n_free), 0.3 * rng.standard_normal(ops.n_free))
        dt = 0.05
        new, info = MidpointStepper(ops, lw).step(s, dt)
        # plug the midpoint values back into the discrete equations
        us, vs = 0.5 * (s.u + new.u), 0.5 * (s.v + new.v)
        b = ops.bnodes
        force = np.zeros(ops.n_free)
        force[b] = ops.b_diag[b] * (lw.source.h(us[b]) - lw.damping.q(vs[b]))
        lhs = ops.m_diag * (new.v - s.v) / dt
        rhs = -ops.K @ us + force
        assert np.allclose(lhs, rhs, atol=1e-8)
        assert np.allclose((new.u - s.u) / dt, vs)

    def test_time_reversal(self):
        _, ops = interval_ops(32)
        lw = conservative_laws()
        st = MidpointStepper(ops, lw)
        s0 = State(0.0, sine_data(ops, 0.7), 0.2 * sine_data(ops, 1.0))
        s = s0
        for _ in range(50):
            s, _ = st.step(s, 0.02)
        s = State(s.t, s.u, -s.v)
        for _ in range(50):
            s, _ = st.step(s, 0.02)
        assert np.linalg.norm(s.u - s0.u) <= 1e-8 * np.linalg.norm(s0.u)
        assert np.linalg.norm(-s.v - s0.v) <= 1e-8 * np.linalg.norm(s0.v)

    def test_dissipation_nonnegative(self):
        _, ops = interval_ops(16)
        lw = laws(family="polynomial", rho=1.0)
        traj = run(ops, lw, State(0.0, sine_data(ops, 0.4), np.zeros(ops.n_free)), RunControls(T=3, dt0=1e-2))
        assert all(r.dissipation_rate >= 0 for r in traj.records)


class TestRun:
    def test_conservative_horizon(self):
        _, ops = interval_ops(32)
        lw = conservative_laws()
        traj = run(ops, lw, State(0.0, sine_data(ops, 0.5), np.zeros(ops.n_free)), RunControls(T=10, dt0=1e-2))
        assert traj.termination == HORIZON
        E = traj.column("E")
        assert abs(E[-1] - E[0]) / E[0] <= 1e-8
        assert traj.records[-1].t == pytest.approx(10.0)
        assert np.all(np.diff(traj.times) > 0)

    def test_decay_nonincreasing(self):
        _, ops = interval_ops(32)
        lw = laws(family="linear", scale=0.3)
        traj = run(ops, lw, State(0.0, sine_data(ops, 0.3), np.zeros(ops.n_free)), RunControls(T=10, dt0=1e-2))
        assert np.all(np.diff(traj.column("E")) <= 1e-14)

    def test_energy_identity_with_forcing(self):
        _, ops = interval_ops(32)
        lw = laws(mode="relaxing", scale=0.5, strength=0.0,
                  forcing=ForcingLaw("gaussian_pulse", (0.4,), 0.1, 1.0, 0.5))
        traj = run(ops, lw, State(0.0, sine_data(ops, 0.3), np.zeros(ops.n_free)), RunControls(T=2, dt0=1e-3))
        res = energy_identity_residual(traj)
        assert np.max(np.abs(res)) <= 1e-6 * max(1.0, abs(traj.records[0].energy.E))

    def test_record_every(self):
        _, ops = interval_ops(8)
        traj = run(ops, conservative_laws(), _zero(ops), RunControls(T=1.0, dt0=0.1, record_every=3))
        assert traj.records[-1].t == pytest.approx(1.0)
        assert len(traj.records) == 1 + 3 + 1

    def test_blowup_detected(self):
        _, ops = interval_ops(16)
        lw = laws(mu0=2.0)
        u0 = 2.1 * ops.free_coords[:, 0]
        traj = run(ops, lw, State(0.0, u0, np.zeros(ops.n_free)), RunControls(T=5, dt0=1e-3))
        assert traj.termination == BLOWUP
        assert traj.T_est is not None and traj.records[-1].t < traj.T_est < 5
        assert traj.kappa > 0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_step_failure_without_growth(self):
        _, ops = interval_ops(8)
        lw = laws()
        u0 = np.zeros(ops.n_free)
        u0[ops.bnodes] = 1e110
        traj = run(ops, lw, State(0.0, u0, np.zeros(ops.n_free)),
                   RunControls(T=1, dt0=1e-2, dt_min=1e-4, amp_max=1e200))
        assert traj.termination == STEP_FAILURE


class TestBlowupTime:
    @pytest.mark.parametrize("kappa", [0.5, 1.0, 2.0])
    def test_power_law_recovered(self, kappa):
        T = 1.3
        ts = T - np.geomspace(1e-1, 1e-6, 20)
        amps = 3.0 * (T - ts) ** (-kappa)
        T_est, k_est = estimate_blowup_time(ts, amps)
        assert T_est == pytest.approx(T, rel=1e-6)
        assert k_est == pytest.approx(kappa, rel=1e-4)

    def test_not_enough_growth(self):
        assert estimate_blowup_time([0, 1, 2, 3], [1, 1, 1, 1]) == (None, None)
