"""Implicit-midpoint integration of M u'' + mu(t) K u = F + boundary force.

One step solves, with u* = (u^n + u^{n+1})/2 and v* = (v^n + v^{n+1})/2,

    M (v^{n+1} - v^n)/dt = -mu(t*) K u* + F(t*) + b(u*, v*),
    (u^{n+1} - u^n)/dt = v*.

Eliminating u* = u^n + dt/2 v* leaves S v* = r + b(v*) with the SPD matrix
S = 2M/dt + mu(t*) dt/2 K. Since b lives on the gamma1 nodes only, the
nonlinear part reduces to the m x m system w - C beta(w) = z on those nodes
(C = (S^{-1})_{gamma1, gamma1}); for m = 1 that is a scalar Newton solve.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import DiscreteOperators, interior_load
from .diagnostics import EnergyRecord, energy
from .errors import NewtonFailure
from .model import LawSet

log = logging.getLogger(__name__)

HORIZON = "HorizonReached"
BLOWUP = "BlowupDetected"
STEP_FAILURE = "StepFailure"


@dataclass
class State:
    t: float
    u: np.ndarray
    v: np.ndarray

    def copy(self) -> "State":
        return State(self.t, self.u.copy(), self.v.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)))


@dataclass
class StepInfo:
    newton_iters: int
    dissipation: float  # dt * sum B (q(v*) + eta v*) v*
    mu_work: float  # 1/2 mu'(t*) dt (a_n + a_{n+1})/2
    f_work: float  # dt F(t*) . v*
    dissipation_rate: float  # sum B q(v*) v*, >= 0 for monotone q


@dataclass
class Record:
    t: float
    dt: float
    u: np.ndarray
    v: np.ndarray
    energy: EnergyRecord
    newton_iters: int
    dissipation_cum: float
    mu_work_cum: float
    f_work_cum: float
    dissipation_rate: float = 0.0


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    termination: str = HORIZON
    T_est: Optional[float] = None
    kappa: Optional[float] = None
    steps: int = 0
    rejected: int = 0
    message: str = ""
    T_est_note: str = "heuristic: |u|_max ~ C (T - t)^(-kappa) fitted to the last accepted steps"

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r.energy, name) for r in self.records])


class MidpointStepper:
    """Implicit-midpoint stepper with cached factorizations of S."""

    def __init__(self, ops: DiscreteOperators, laws: LawSet, newton_tol: float = 1e-10,
                 newton_maxit: int = 50, cache_size: int = 8):
        self.ops = ops
        self.laws = laws
        self.tol = newton_tol
        self.maxit = newton_maxit
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self._M = sp.diags(ops.m_diag).tocsc()
        self._K = ops.K.tocsc()
        self._xf = ops.free_coords
        b = ops.bnodes
        self._b = b
        self._bw = ops.b_diag[b]

    # -- linear algebra -------------------------------------------------------
    def _factor(self, dt: float, mu: float):
        key = (dt, mu)
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        S = (2.0 / dt) * self._M + (0.5 * mu * dt) * self._K
        lu = spla.splu(S.tocsc())
        m = len(self._b)
        if m:
            E = np.zeros((self.ops.n_free, m))
            E[self._b, np.arange(m)] = 1.0
            W = lu.solve(E)
            C = W[self._b, :]
        else:
            W = np.zeros((self.ops.n_free, 0))
            C = np.zeros((0, 0))
        entry = (lu, W, C)
        self._cache[key] = entry
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return entry

    # -- boundary nonlinearity ------------------------------------------------
    def _beta(self, w, ub, dt):
        src, dmp, eta = self.laws.source, self.laws.damping, self.laws.eta
        ustar = ub + 0.5 * dt * w
        return self._bw * (src.h(ustar) - dmp.q(w) - eta * w)

    def _dbeta(self, w, ub, dt):
        src, dmp, eta = self.laws.source, self.laws.damping, self.laws.eta
        ustar = ub + 0.5 * dt * w
        return self._bw * (0.5 * dt * src.dh(ustar) - dmp.dq(w) - eta)

    def _solve_boundary(self, z, C, ub, w0, dt):
        def resid(w):
            return w - z - C @ self._beta(w, ub, dt)

        w = w0.copy()
        m = len(w)
        scale = lambda x: max(1.0, float(np.max(np.abs(x))))
        R = resid(w)
        for it in range(1, self.maxit + 1):
            Jm = np.eye(m) - C * self._dbeta(w, ub, dt)[None, :]
            try:
                dw = np.linalg.solve(Jm, -R)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(dw)):
                break
            # backtracking on |R|
            lam = 1.0
            nr = np.linalg.norm(R)
            while True:
                w_new = w + lam * dw
                R_new = resid(w_new)
                if np.all(np.isfinite(R_new)) and (np.linalg.norm(R_new) <= (1 - 1e-4 * lam) * nr
                                                   or np.linalg.norm(lam * dw) <= self.tol * scale(w)):
                    break
                lam *= 0.5
                if lam < 1e-8:
                    break
            if lam < 1e-8:
                break
            w, R = w_new, R_new
            if np.max(np.abs(lam * dw)) <= self.tol * scale(w):
                return w, it
        if m == 1:
            return self._bisect(resid, w0, z), self.maxit
        raise NewtonFailure("boundary Newton iteration did not converge")

    def _bisect(self, resid, w0, z):
        """Safeguarded scalar fallback: bracket a root nearest the guess, then bisect."""
        c = float(w0[0])
        f = lambda x: float(resid(np.array([x]))[0])
        step = max(1.0, abs(c), abs(float(z[0])))
        fc = f(c)
        if not math.isfinite(fc):
            raise NewtonFailure("boundary residual not finite at the initial guess")
        a = b = None
        for _ in range(60):
            lo, hi = c - step, c + step
            flo, fhi = f(lo), f(hi)
            if math.isfinite(flo) and flo * fc <= 0:
                a, b = lo, c
                break
            if math.isfinite(fhi) and fhi * fc <= 0:
                a, b = c, hi
                break
            step *= 2.0
        if a is None:
            raise NewtonFailure("no sign change found for the boundary residual")
        fa = f(a)
        for _ in range(200):
            mid = 0.5 * (a + b)
            fm = f(mid)
            if not math.isfinite(fm):
                raise NewtonFailure("boundary residual not finite during bisection")
            if fm == 0:
                return np.array([mid])
            if (fm > 0) == (fa > 0):
                a, fa = mid, fm
            else:
                b = mid
            if abs(b - a) <= 1e-15 * max(1.0, abs(a)):
                break
        return np.array([0.5 * (a + b)])

    # -- one step ---------------------------------------------------------------
    def step(self, state: State, dt: float) -> tuple[State, StepInfo]:
        if not dt > 0:
            raise ValueError("dt must be positive")
        # overflow near blow-up is detected from the result, not from warnings
        with np.errstate(over="ignore", invalid="ignore"):
            return self._step(state, dt)

    def _step(self, state: State, dt: float) -> tuple[State, StepInfo]:
        laws, ops = self.laws, self.ops
        tm = state.t + 0.5 * dt
        mu = float(laws.mu.mu(tm))
        lu, W, C = self._factor(dt, mu)
        u, v = state.u, state.v
        F = np.zeros(ops.n_free) if laws.forcing.is_zero else interior_load(ops, laws.forcing.f(self._xf, tm))
        r = (2.0 / dt) * (ops.m_diag * v) - mu * (self._K @ u) + F
        z = lu.solve(r)
        iters = 0
        if len(self._b):
            ub = u[self._b]
            w, iters = self._solve_boundary(z[self._b], C, ub, v[self._b].copy(), dt)
            bval = self._beta(w, ub, dt)
            vs = z + W @ bval
            vs[self._b] = w
        else:
            vs = z
        u_new = u + dt * vs
        v_new = 2.0 * vs - v
        new = State(state.t + dt, u_new, v_new)
        b = self._b
        qv = laws.damping.q(vs[b]) + laws.eta * vs[b]
        rate = float(np.sum(self._bw * laws.damping.q(vs[b]) * vs[b]))
        diss = dt * float(np.sum(self._bw * qv * vs[b]))
        a0 = float(u @ (self._K @ u))
        a1 = float(u_new @ (self._K @ u_new))
        mu_work = 0.5 * float(laws.mu.mu_prime(tm)) * dt * 0.5 * (a0 + a1)
        f_work = dt * float(F @ vs)
        return new, StepInfo(iters, diss, mu_work, f_work, rate)


def step(state: State, dt: float, ops: DiscreteOperators, laws: LawSet) -> State:
    """Single implicit-midpoint step (builds a throwaway stepper)."""
    return MidpointStepper(ops, laws).step(state, dt)[0]


@dataclass
class RunControls:
    T: float = 10.0
    dt0: float = 1e-2
    dt_min: float = 1e-12
    amp_max: float = 1e8
    record_every: int = 1
    grow_after: int = 20
    grow_factor: float = 1.2
    dt_max: Optional[float] = None  # defaults to dt0
    max_steps: int = 10_000_000
    amp_jump: float = 10.0
    tail_fit: int = 20
    # accuracy control near blow-up: keep the relative growth of |u|_max per step
    # below amp_rel_growth (active only when the boundary source is switched on)
    amp_rel_growth: Optional[float] = 0.02


def _amp(u) -> float:
    return float(np.max(np.abs(u))) if len(u) else 0.0


def estimate_blowup_time(ts, amps) -> tuple[Optional[float], Optional[float]]:
    """Fit |u|_max ~ C (T - t)^(-kappa); returns (T_est, kappa) or (None, None).

    Uses 1 / (d log|u| / dt) = (T - t) / kappa, linear in t, from the last
    samples, then refines with a nonlinear least-squares fit of the log model.
    """
    from scipy.optimize import least_squares

    ts = np.asarray(ts, dtype=float)
    amps = np.asarray(amps, dtype=float)
    ok = np.isfinite(amps) & (amps > 0)
    ts, amps = ts[ok], amps[ok]
    if len(ts) < 4:
        return None, None
    la = np.log(amps)
    tm = 0.5 * (ts[1:] + ts[:-1])
    rate = np.diff(la) / np.diff(ts)
    good = rate > 0
    if good.sum() < 3:
        return None, None
    y = 1.0 / rate[good]
    slope, icpt = np.polyfit(tm[good], y, 1)
    if slope >= 0:
        return None, None
    kappa0 = -1.0 / slope
    T0 = -icpt / slope
    t_last = ts[-1]
    if not T0 > t_last:
        T0 = t_last + 1e-3 * max(1e-300, ts[-1] - ts[0])

    def res(p):
        logC, kappa, logd = p
        T = t_last + math.exp(logd)
        return logC - kappa * np.log(T - ts) - la

    d0 = max(T0 - t_last, 1e-300)
    logC0 = float(np.mean(la + kappa0 * np.log(t_last + d0 - ts)))
    try:
        sol = least_squares(res, [logC0, kappa0, math.log(d0)], method="lm", max_nfev=2000)
        logC, kappa, logd = sol.x
        T_est = t_last + math.exp(logd)
        if math.isfinite(T_est) and kappa > 0:
            return float(T_est), float(kappa)
    except (ValueError, OverflowError):
        pass
    return float(T0), float(kappa0)


def run(ops: DiscreteOperators, laws: LawSet, initial: State,
        controls: Optional[RunControls] = None, stepper: Optional[MidpointStepper] = None) -> Trajectory:
    """Adaptive integration to the horizon with blow-up detection."""
    c = controls or RunControls()
    stepper = stepper or MidpointStepper(ops, laws)
    dt_max = c.dt_max if c.dt_max is not None else c.dt0
    traj = Trajectory()
    state = initial.copy()
    diss = muw = fw = 0.0

    def record(st, dt, iters, rate):
        e = energy(ops, laws, st)
        e.dissipation_cum = diss
        traj.records.append(Record(st.t, dt, st.u.copy(), st.v.copy(), e, iters, diss, muw, fw, rate))

    record(state, 0.0, 0, 0.0)
    tail = deque(maxlen=c.tail_fit)
    tail.append((state.t, _amp(state.u)))
    dt = c.dt0
    streak = 0
    accepted = 0
    eps_t = 1e-12 * max(1.0, c.T)
    last_recorded = True
    growth_on = c.amp_rel_growth is not None and laws.source.strength > 0
    cap = dt_max
    while state.t < c.T - eps_t:
        if accepted + traj.rejected >= c.max_steps:
            traj.termination = STEP_FAILURE
            traj.message = "maximum number of steps reached"
            break
        if cap < c.dt_min and _amp(state.u) > c.amp_max:
            traj.termination = BLOWUP
            traj.message = f"step cap {cap:.3e} < {c.dt_min:g} with |u|_max = {_amp(state.u):.3e}"
            traj.T_est, traj.kappa = estimate_blowup_time(*zip(*tail))
            break
        h = min(dt, max(cap, c.dt_min), c.T - state.t)
        try:
            new, info = stepper.step(state, h)
            ok = new.is_finite()
            a_old, a_new = _amp(state.u), _amp(new.u)
            if ok and a_new > c.amp_jump * max(a_old, 1.0):
                ok = False
        except NewtonFailure:
            ok = False
        if not ok:
            traj.rejected += 1
            streak = 0
            dt = 0.5 * h
            if dt < c.dt_min:
                amp = _amp(state.u)
                if amp > c.amp_max:
                    traj.termination = BLOWUP
                    traj.message = f"dt < {c.dt_min:g} with |u|_max = {amp:.3e}"
                    traj.T_est, traj.kappa = estimate_blowup_time(*zip(*tail))
                else:
                    traj.termination = STEP_FAILURE
                    traj.message = f"dt < {c.dt_min:g} without amplitude growth (|u|_max = {amp:.3e})"
                break
            continue
        if growth_on:
            rel = abs(a_new - a_old) / max(a_old, 1.0)
            cap = min(dt_max, 2.0 * h) if rel == 0 else min(dt_max, 2.0 * h, h * c.amp_rel_growth / rel)
        state = new
        last_h, last_info = h, info
        accepted += 1
        diss += info.dissipation
        muw += info.mu_work
        fw += info.f_work
        tail.append((state.t, _amp(state.u)))
        last_recorded = accepted % c.record_every == 0
        if last_recorded:
            record(state, h, info.newton_iters, info.dissipation_rate)
        streak += 1
        if streak >= c.grow_after:
            dt = min(dt * c.grow_factor, dt_max)
            streak = 0
    if not last_recorded:
        record(state, last_h, last_info.newton_iters, last_info.dissipation_rate)
    traj.steps = accepted
    return traj
