"""Energies, the energy-identity residual, blow-up functionals and decay fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import DiscreteOperators, boundary_power
from .errors import NegativeG, NonpositiveEnergy, TooFewRecords
from .model import BlowupParams, DampingLaw, LawSet


@dataclass
class EnergyRecord:
    t: float
    E: float
    kinetic: float
    elastic: float
    source_term: float
    grad_seminorm: float
    bdry_norm: float
    J: float
    I: float
    G: float = float("nan")
    N: float = float("nan")
    M: float = float("nan")
    dissipation_cum: float = 0.0


def energy(ops: DiscreteOperators, laws: LawSet, state) -> EnergyRecord:
    """Kinetic, elastic and source parts of E(t) plus the well functionals.

    ``grad_seminorm`` is the norm sqrt(u^T K u); ``bdry_norm`` is the
    L^{gamma+2}(gamma1) norm; the source part carries the source strength so
    the energy balances the scheme when the source is switched off.
    """
    u, v, t = state.u, state.v, state.t
    gamma = laws.gamma
    p = gamma + 2.0
    a = float(u @ (ops.K @ u))
    kin = 0.5 * float(np.sum(ops.m_diag * v * v))
    mu_t = float(laws.mu.mu(t))
    el = 0.5 * mu_t * a
    bp = boundary_power(ops, u, p)
    src = laws.source.strength * bp / p
    mu0 = laws.mu.mu0
    J = 0.5 * mu0 * a - bp / p
    I = mu0 * a - bp
    return EnergyRecord(t=t, E=kin + el - src, kinetic=kin, elastic=el, source_term=src,
                        grad_seminorm=math.sqrt(max(a, 0.0)), bdry_norm=bp ** (1.0 / p),
                        J=J, I=I, N=float(np.sum(ops.m_diag * v * u)))


def functionals_J_I(ops: DiscreteOperators, mu0: float, gamma: float, u) -> tuple[float, float]:
    a = float(u @ (ops.K @ u))
    bp = boundary_power(ops, u, gamma + 2.0)
    return 0.5 * mu0 * a - bp / (gamma + 2.0), mu0 * a - bp


# ---------------------------------------------------------------------------
# energy identity
# ---------------------------------------------------------------------------

def energy_identity_residual(trajectory) -> np.ndarray:
    """r_n = E_n + D_n - 1/2 sum mu' |grad u|^2 dt - sum (f, u_t) dt - E_0 per record."""
    recs = trajectory.records
    E0 = recs[0].energy.E
    return np.array([r.energy.E + r.dissipation_cum - r.mu_work_cum - r.f_work_cum - E0
                     for r in recs])


# ---------------------------------------------------------------------------
# blow-up functionals
# ---------------------------------------------------------------------------

@dataclass
class BlowupSeries:
    t: np.ndarray
    G: np.ndarray
    N: np.ndarray
    M: np.ndarray


def blowup_series(trajectory, params: BlowupParams, ops: Optional[DiscreteOperators] = None,
                  strict: bool = True) -> BlowupSeries:
    """G = E1 - E, N = (u_t, u) with the lumped mass, M = G^(1 - chi_bar) + tau N."""
    recs = trajectory.records
    t = np.array([r.t for r in recs])
    E = np.array([r.energy.E for r in recs])
    if ops is not None:
        N = np.array([float(np.sum(ops.m_diag * r.v * r.u)) for r in recs])
    else:
        N = np.array([r.energy.N for r in recs])
    G = params.E1 - E
    if strict and np.any(G <= 0):
        i = int(np.flatnonzero(G <= 0)[0])
        raise NegativeG(f"G(t) = {G[i]} <= 0 at record {i}; E1 is misconfigured")
    with np.errstate(invalid="ignore"):
        M = np.where(G > 0, np.abs(G) ** (1.0 - params.chi_bar), np.nan) + params.tau * N
    return BlowupSeries(t, G, N, M)


def tune_tau(trajectory, params: BlowupParams, ops: Optional[DiscreteOperators] = None,
             k_max: int = 40, window: int = 10) -> float:
    """Largest tau = 2^-k with M(0) > 0 and M nondecreasing over the first records."""
    for k in range(k_max + 1):
        tau = 2.0 ** (-k)
        s = blowup_series(trajectory, params.with_tau(tau), ops, strict=False)
        head = s.M[: window + 1]
        if np.all(np.isfinite(head)) and head[0] > 0 and np.all(np.diff(head) >= 0):
            return tau
    return 2.0 ** (-k_max)


def verify_M_growth(t, M, chi_bar: float) -> tuple[float, bool]:
    """Min over records of M'/M^(1/(1-chi_bar)); positive certifies superlinear growth."""
    t = np.asarray(t, dtype=float)
    M = np.asarray(M, dtype=float)
    if len(M) < 30:
        raise TooFewRecords(f"need at least 30 records, got {len(M)}")
    dM = np.gradient(M, t)
    inner = slice(1, len(M) - 1)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = dM[inner] / np.abs(M[inner]) ** (1.0 / (1.0 - chi_bar))
    if np.any(M[inner] <= 0) or not np.all(np.isfinite(ratio)):
        return float("nan"), False
    c_fit = float(np.min(ratio))
    return c_fit, c_fit > 0


def closed_form_M(t, M0: float, c: float, chi_bar: float) -> np.ndarray:
    """Solution of M' = c M^(1/(1-chi_bar)) with M(0) = M0."""
    k = chi_bar / (1.0 - chi_bar)
    return (M0 ** (-k) - c * k * np.asarray(t, dtype=float)) ** (-1.0 / k)


# ---------------------------------------------------------------------------
# decay laws
# ---------------------------------------------------------------------------

CASES = ("Exponential", "Polynomial", "General")


@dataclass
class DecayFitResult:
    case: str
    fitted_rate: float
    calibration_constant: float
    tail_window: tuple
    passed: bool
    residual_r2: float
    bound_ratio_max: float = float("nan")
    notes: list = field(default_factory=list)

    def as_row(self) -> dict:
        return {"case": self.case, "rate": self.fitted_rate, "constant": self.calibration_constant,
                "window_lo": self.tail_window[0], "window_hi": self.tail_window[1],
                "pass": int(self.passed), "r2": self.residual_r2}


def F_inverse(law: DampingLaw, y: float, iterations: int = 100) -> float:
    """Invert F(s) = s beta(s) on (0, 1] by bisection; y above F(1) clamps to 1."""
    lo, hi = 0.0, 1.0
    if y >= float(law.F(1.0)):
        return 1.0
    if y <= 0:
        return 0.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if float(law.F(mid)) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def general_decay_profile(law: DampingLaw, t) -> np.ndarray:
    """(F^{-1}(1/t))^2 for each t > 0."""
    return np.array([F_inverse(law, 1.0 / ti) ** 2 for ti in np.atleast_1d(t)])


def _linfit(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return coef[0], coef[1], r2


def fit_decay(t, E, case: str, *, rho: Optional[float] = None,
              damping: Optional[DampingLaw] = None, tail_fraction: float = 0.6,
              slack: float = 1.05, min_r2: float = 0.99) -> DecayFitResult:
    """Check one of the three decay laws on an energy time series.

    Exponential: regress log E on t over the tail, pass if rate > 0 and R^2 >= min_r2.
    Polynomial / General: calibrate the bound at the tail start and require
    E(t) <= slack * C * bound(t) on all later records (upper-bound semantics).
    """
    if case not in CASES:
        raise ValueError(f"unknown decay case {case!r}; expected one of {CASES}")
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    n0 = int(math.floor((1.0 - tail_fraction) * len(t)))
    tt, EE = t[n0:], E[n0:]
    if len(tt) < 2:
        raise TooFewRecords("tail window holds fewer than 2 records")
    if np.any(EE <= 0):
        raise NonpositiveEnergy("E <= 0 inside the tail window; decay fit undefined")
    window = (float(tt[0]), float(tt[-1]))
    logE = np.log(EE)

    if case == "Exponential":
        slope, icpt, r2 = _linfit(tt, logE)
        omega = -slope
        return DecayFitResult(case, float(omega), float(math.exp(icpt)), window,
                              bool(omega > 0 and r2 >= min_r2), float(r2))

    if case == "Polynomial":
        if rho is None or rho <= 0:
            raise ValueError("Polynomial case needs rho > 0")
        bound = (1.0 + tt) ** (-2.0 / rho)
    else:
        if damping is None:
            raise ValueError("General case needs the damping law")
        if np.any(tt <= 0):
            raise ValueError("General case needs t > 0 on the tail")
        bound = general_decay_profile(damping, tt)
    C = EE[0] / bound[0]
    ratio = EE / (C * bound)
    slope, _, r2 = _linfit(np.log1p(tt) if case == "Polynomial" else np.log(tt), logE)
    return DecayFitResult(case, float(-slope), float(C), window,
                          bool(np.all(ratio <= slack)), float(r2), float(ratio.max()))
