"""Potential-well constants, functionals and trapping monitors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import DiscreteOperators, boundary_norm, boundary_power
from .diagnostics import energy, functionals_J_I
from .errors import (SmallnessConditionViolated, DegenerateDenominator, EmptyWindow,
                     NoBoundaryNodes, NotInBlowupRegion)
from .model import (LawSet, blowup_smallness_bound, choose_E1, blowup_eps_window,
                    varrho_ell_zeta)

__all__ = [
    "WellConstants", "estimate_K0", "well_constants", "j_profile", "functionals_J_I",
    "classify_initial_data", "trapping_monitor", "rayleigh_ratio",
]

GLOBAL_UNCONDITIONAL = "GlobalUnconditional"
GLOBAL_WELL = "GlobalWell"
BLOWUP_CANDIDATE = "BlowupCandidate"
INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class WellConstants:
    K0: float
    lambda0: float
    d0: float
    gamma: float
    mu0: float


def well_constants(K0: float, mu0: float, gamma: float) -> WellConstants:
    if not (K0 > 0 and mu0 > 0 and gamma > 0):
        raise ValueError("K0, mu0 and gamma must be positive")
    lam = (mu0 / K0 ** (gamma + 2.0)) ** (1.0 / gamma)
    d0 = gamma * mu0 * lam**2 / (2.0 * (gamma + 2.0))
    return WellConstants(K0=K0, lambda0=lam, d0=d0, gamma=gamma, mu0=mu0)


def j_profile(c: WellConstants, lam: float) -> float:
    """j(lambda) = mu0/2 lambda^2 - K0^(gamma+2) lambda^(gamma+2) / (gamma+2)."""
    g = c.gamma
    return 0.5 * c.mu0 * lam**2 - c.K0 ** (g + 2.0) * lam ** (g + 2.0) / (g + 2.0)


def rayleigh_ratio(ops: DiscreteOperators, u, gamma: float) -> float:
    """||u||_{gamma+2, gamma1} / sqrt(u^T K u)."""
    a = float(u @ (ops.K @ u))
    if a <= 0:
        return 0.0
    return boundary_norm(ops, u, gamma + 2.0) / math.sqrt(a)


def _ascent(ops, solve, u, p, tol, window, max_iter):
    """Normalized gradient ascent of sum B|u|^p on the ellipsoid u^T K u = 1.

    The step u <- K^{-1} grad / ||K^{-1} grad||_K maximizes the linearization
    over the ellipsoid; since the objective is convex for p >= 2 every step
    is an ascent step.
    """
    b = ops.bnodes
    wts = ops.b_diag[b]

    def normalize(x):
        a = float(x @ (ops.K @ x))
        return x / math.sqrt(a) if a > 0 else x

    u = normalize(u)
    hist = [boundary_power(ops, u, p)]
    for _ in range(max_iter):
        g = np.zeros(ops.n_free)
        g[b] = p * wts * np.abs(u[b]) ** (p - 1.0) * np.sign(u[b])
        if not np.any(g):
            break
        u_new = normalize(solve(g))
        val = boundary_power(ops, u_new, p)
        if val < hist[-1]:
            break
        u = u_new
        hist.append(val)
        if len(hist) > window:
            old = hist[-window - 1]
            if (hist[-1] - old) <= tol * abs(hist[-1]):
                break
        elif len(hist) >= 2 and hist[-1] == hist[-2]:
            break
    return u, hist[-1] ** (1.0 / p)


def estimate_K0(ops: DiscreteOperators, gamma: float, restarts: int = 16, tol: float = 1e-10,
                seed: Optional[int] = 0, window: int = 50, max_iter: int = 5000,
                return_maximizer: bool = False):
    """Best discrete trace constant sup ||u||_{gamma+2, gamma1} / ||grad_g u||_2."""
    if len(ops.bnodes) == 0:
        raise NoBoundaryNodes("gamma1 has no free nodes; K0 is undefined")
    p = gamma + 2.0
    lu = spla.splu(ops.K.tocsc())
    rng = np.random.default_rng(seed)
    trace = np.zeros(ops.n_free)
    trace[ops.bnodes] = ops.b_diag[ops.bnodes]
    starts = [lu.solve(trace)] + [rng.standard_normal(ops.n_free) for _ in range(restarts)]
    best_val, best_u = -1.0, None
    for s in starts:
        u, val = _ascent(ops, lu.solve, s, p, tol, window, max_iter)
        if val > best_val:
            best_val, best_u = val, u
    if return_maximizer:
        return best_val, best_u
    return best_val


# ---------------------------------------------------------------------------
# initial-data classification
# ---------------------------------------------------------------------------

@dataclass
class Classification:
    regime: str
    evidence: dict = field(default_factory=dict)


def classify_initial_data(u0, u1, ops: DiscreteOperators, laws: LawSet,
                          constants: WellConstants, gamma1_measure: Optional[float] = None) -> Classification:
    """Place (u0, u1) relative to the potential well and the blow-up set."""
    from .dynamics import State

    rec = energy(ops, laws, State(0.0, np.asarray(u0, float), np.asarray(u1, float)))
    E0 = rec.E
    norm = rec.grad_seminorm
    gamma, rho = laws.gamma, laws.rho
    meas = gamma1_measure if gamma1_measure is not None else float(np.sum(ops.b_diag))
    ev = {"E0": E0, "grad_norm": norm, "lambda0": constants.lambda0, "d0": constants.d0,
          "K0": constants.K0, "rho": rho, "gamma": gamma,
          "forcing_zero": laws.forcing.is_zero,
          "beta_inverse_at_1": laws.damping.beta_inverse_at_1}
    E1 = None
    try:
        E1 = choose_E1(E0, constants.d0)
        ev["E1"] = E1
        ev["smallness_bound"] = blowup_smallness_bound(constants.mu0, constants.lambda0, gamma, E1, meas)
        varrho, ell, zeta = varrho_ell_zeta(constants.mu0, constants.lambda0, gamma, E1, meas,
                                            laws.damping.beta_inverse_at_1)
        ev.update(varrho=varrho, ell=ell, zeta=zeta)
        ev["eps_window"] = blowup_eps_window(varrho, ell, zeta, gamma)
    except (NotInBlowupRegion, DegenerateDenominator, SmallnessConditionViolated, EmptyWindow) as exc:
        ev.setdefault("smallness_bound", float("nan"))
        ev["eps_window"] = None
        ev["blowup_algebra"] = f"{type(exc).__name__}: {exc}"

    if rho >= gamma:
        regime = GLOBAL_UNCONDITIONAL
    elif E0 < constants.d0 and norm < constants.lambda0 and laws.forcing.is_zero:
        regime = GLOBAL_WELL
    elif (norm > constants.lambda0 and -1.0 < E0 < constants.d0 and laws.forcing.is_zero
          and math.isfinite(ev.get("smallness_bound", float("nan")))
          and laws.damping.beta_inverse_at_1 <= ev["smallness_bound"]):
        regime = BLOWUP_CANDIDATE
    else:
        regime = INDETERMINATE
    return Classification(regime, ev)


# ---------------------------------------------------------------------------
# trajectory monitors
# ---------------------------------------------------------------------------

@dataclass
class MonitorReport:
    mode: str
    passed: bool
    first_violation: Optional[int]
    extreme: float
    lambda0: float


def trapping_monitor(norms, lambda0: float, mode: str = "below") -> MonitorReport:
    """Check sqrt(u^T K u) < lambda0 (below) or > lambda0 (above) at every record.

    ``norms`` may be a Trajectory or an array of gradient norms.
    """
    if mode not in ("below", "above"):
        raise ValueError("mode must be 'below' or 'above'")
    if hasattr(norms, "records"):
        norms = [r.energy.grad_seminorm for r in norms.records]
    x = np.asarray(norms, dtype=float)
    bad = x >= lambda0 if mode == "below" else x <= lambda0
    idx = np.flatnonzero(bad)
    first = int(idx[0]) if len(idx) else None
    extreme = float(x.max() if mode == "below" else x.min()) if len(x) else float("nan")
    return MonitorReport(mode, first is None, first, extreme, lambda0)


def random_well_data(ops: DiscreteOperators, laws: LawSet, constants: WellConstants, rng,
                     radius: Optional[float] = None, energy_fraction: float = 0.9,
                     max_tries: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random (u0, u1) inside the well, on the free dofs.

    u0 is a Gaussian nodal vector rescaled so sqrt(u0^T K u0) = r lambda0,
    with r drawn from (0, 0.9) unless ``radius`` is given; u1 is rescaled so
    that E(0) lands below ``energy_fraction * d0``. Radii whose potential
    part alone exceeds that level are redrawn.
    """
    from .dynamics import State

    target_max = energy_fraction * constants.d0
    zero = np.zeros(ops.n_free)
    for _ in range(max_tries):
        r = radius if radius is not None else rng.uniform(0.05, 0.9)
        u0 = rng.standard_normal(ops.n_free)
        u0 *= r * constants.lambda0 / math.sqrt(float(u0 @ (ops.K @ u0)))
        potential = energy(ops, laws, State(0.0, u0, zero)).E
        if potential >= target_max:
            if radius is not None:
                radius = 0.9 * radius
            continue
        target = rng.uniform(max(potential, 0.0), target_max)
        u1 = rng.standard_normal(ops.n_free)
        kin = 0.5 * float(np.sum(ops.m_diag * u1 * u1))
        u1 *= math.sqrt(max(target - potential, 0.0) / kin)
        return u0, u1
    raise ValueError("could not place random data inside the well")
