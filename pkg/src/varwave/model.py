"""Scalar laws and parameter algebra.

Everything here is a pure function of scalars (or numpy arrays applied
elementwise): the time weight mu, the boundary damping q built from a
growth function beta, the boundary source |u|^gamma u, the interior
forcing, and the constants that enter the blow-up argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    SmallnessConditionViolated,
    DegenerateDenominator,
    DenominatorNonpositive,
    EmptyWindow,
    GammaOutOfRange,
    NotInBlowupRegion,
)


# ---------------------------------------------------------------------------
# time weight mu(t)
# ---------------------------------------------------------------------------

MU_MODES = ("constant", "relaxing")


@dataclass(frozen=True)
class TimeWeight:
    """Coefficient mu(t) in front of the elliptic operator.

    ``constant``: mu(t) = mu0.
    ``relaxing``: mu(t) = mu0 (1 + exp(-t)), decreasing towards mu0.
    """

    mu0: float
    mode: str = "constant"

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ValueError(f"mu0 must be positive, got {self.mu0}")
        if self.mode not in MU_MODES:
            raise ValueError(f"unknown mu mode {self.mode!r}; expected one of {MU_MODES}")

    def mu(self, t):
        if self.mode == "constant":
            return self.mu0 + 0.0 * np.asarray(t, dtype=float)
        return self.mu0 * (1.0 + np.exp(-np.asarray(t, dtype=float)))

    def mu_prime(self, t):
        if self.mode == "constant":
            return 0.0 * np.asarray(t, dtype=float)
        return -self.mu0 * np.exp(-np.asarray(t, dtype=float))


# ---------------------------------------------------------------------------
# damping q and its growth function beta
# ---------------------------------------------------------------------------

DAMPING_FAMILIES = ("zero", "linear", "polynomial", "flat")


def _flat_base(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    nz = s != 0
    sn = s[nz]
    out[nz] = sn * np.exp(1.0 - 1.0 / sn**2)
    return out


def _flat_base_prime(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    nz = s != 0
    sn = s[nz]
    out[nz] = np.exp(1.0 - 1.0 / sn**2) * (1.0 + 2.0 / sn**2)
    return out


def monotone_inverse(fn: Callable[[float], float], y: float, lo: float = 0.0,
                     hi: float = 1.0, iterations: int = 200) -> float:
    """Solve fn(s) = y for increasing fn by bisection, expanding hi as needed."""
    if y == 0.0:
        return 0.0
    sign = 1.0 if y > 0 else -1.0
    y = abs(y)
    while fn(hi) < y:
        hi *= 2.0
        if hi > 1e300:
            raise ValueError("target outside the range of the function")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if fn(mid) < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    return sign * 0.5 * (lo + hi)


@dataclass(frozen=True)
class DampingLaw:
    """Boundary damping q assembled from beta near zero and a power law beyond.

    ``beta`` is ``scale * base(s)`` with base one of
      linear      s
      polynomial  |s|^rho s
      flat        s exp(1 - 1/s^2)
    and q(s) = beta(s) for |s| <= 1, q(s) = beta(1) |s|^rho s for |s| > 1,
    so q is continuous with c3 = c4 = beta(1). ``zero`` gives q = 0 (not an
    admissible damping; used for conservative runs).
    """

    family: str = "linear"
    rho: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in DAMPING_FAMILIES:
            raise ValueError(f"unknown damping family {self.family!r}")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.family != "zero" and not self.scale > 0:
            raise ValueError("damping scale must be positive")

    # -- beta ---------------------------------------------------------------
    def beta(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "zero":
            return np.zeros_like(s)
        if self.family == "linear":
            return self.scale * s
        if self.family == "polynomial":
            return self.scale * np.abs(s) ** self.rho * s
        return self.scale * _flat_base(s)

    def beta_prime(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "zero":
            return np.zeros_like(s)
        if self.family == "linear":
            return self.scale + 0.0 * s
        if self.family == "polynomial":
            return self.scale * (self.rho + 1.0) * np.abs(s) ** self.rho
        return self.scale * _flat_base_prime(s)

    def beta_inverse(self, y: float) -> float:
        if self.family == "zero":
            return math.inf if y != 0 else 0.0
        if self.family == "linear":
            return y / self.scale
        if self.family == "polynomial":
            return math.copysign((abs(y) / self.scale) ** (1.0 / (self.rho + 1.0)), y)
        return monotone_inverse(lambda s: float(self.beta(s)), y)

    @property
    def beta_inverse_at_1(self) -> float:
        return self.beta_inverse(1.0)

    @property
    def beta_at_1(self) -> float:
        return float(self.beta(1.0))

    @property
    def c3(self) -> float:
        return self.beta_at_1

    @property
    def c4(self) -> float:
        return self.beta_at_1

    @property
    def linear_constants(self) -> Optional[tuple[float, float]]:
        """(c7, c8) with c7|s| <= |q(s)| <= c8|s| on |s| <= 1, linear beta only."""
        if self.family == "linear":
            return (self.scale, self.scale)
        return None

    # -- q ------------------------------------------------------------------
    def q(self, s):
        s = np.asarray(s, dtype=float)
        inner = np.abs(s) <= 1.0
        outer_s = np.where(inner, 0.0, s)
        outer = self.beta_at_1 * np.abs(outer_s) ** self.rho * outer_s
        return np.where(inner, self.beta(np.where(inner, s, 0.0)), outer)

    def dq(self, s):
        s = np.asarray(s, dtype=float)
        inner = np.abs(s) <= 1.0
        outer_s = np.where(inner, 1.0, s)
        outer = self.beta_at_1 * (self.rho + 1.0) * np.abs(outer_s) ** self.rho
        return np.where(inner, self.beta_prime(np.where(inner, s, 0.0)), outer)

    def F(self, s):
        """F(s) = s beta(s), the function driving the general decay law."""
        s = np.asarray(s, dtype=float)
        return s * self.beta(s)


def eval_damping(law: DampingLaw, s):
    out = law.q(s)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# source h(u) = |u|^gamma u
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceLaw:
    """Boundary source ``strength * |u|^gamma u``.

    ``strength`` is 1 for the model problem; 0 switches the source off while
    keeping gamma for the norms and the well constants.
    """

    gamma: float
    strength: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.strength < 0:
            raise ValueError("source strength must be nonnegative")

    def h(self, u):
        u = np.asarray(u, dtype=float)
        return self.strength * np.abs(u) ** self.gamma * u

    def dh(self, u):
        u = np.asarray(u, dtype=float)
        return self.strength * (self.gamma + 1.0) * np.abs(u) ** self.gamma

    def potential(self, u):
        u = np.asarray(u, dtype=float)
        return self.strength * np.abs(u) ** (self.gamma + 2.0) / (self.gamma + 2.0)


def eval_source(law: SourceLaw, u):
    out = law.h(u)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# interior forcing f(x, t)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForcingLaw:
    """Interior forcing: ``zero`` or a decaying Gaussian pulse

        f(x, t) = amplitude exp(-|x - center|^2 / (2 width^2)) exp(-decay_rate t).
    """

    mode: str = "zero"
    center: tuple = (0.5,)
    width: float = 0.1
    amplitude: float = 0.0
    decay_rate: float = 1.0

    def __post_init__(self):
        if self.mode not in ("zero", "gaussian_pulse"):
            raise ValueError(f"unknown forcing mode {self.mode!r}")
        if self.mode == "gaussian_pulse":
            if not self.width > 0:
                raise ValueError("pulse width must be positive")
            if not self.decay_rate > 0:
                raise ValueError("pulse decay_rate must be positive (time integrability)")

    @property
    def is_zero(self) -> bool:
        return self.mode == "zero" or self.amplitude == 0.0

    def f(self, x, t: float):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if self.mode == "zero":
            return np.zeros(x.shape[0])
        c = np.asarray(self.center, dtype=float)[: x.shape[1]]
        r2 = np.sum((x - c) ** 2, axis=1)
        return self.amplitude * np.exp(-r2 / (2 * self.width**2)) * math.exp(-self.decay_rate * t)


@dataclass(frozen=True)
class LawSet:
    mu: TimeWeight
    damping: DampingLaw
    source: SourceLaw
    forcing: ForcingLaw = field(default_factory=ForcingLaw)
    eta: float = 0.0

    @property
    def gamma(self) -> float:
        return self.source.gamma

    @property
    def rho(self) -> float:
        return self.damping.rho


# ---------------------------------------------------------------------------
# exponent algebra
# ---------------------------------------------------------------------------

def gamma_range(n: int) -> tuple[float, float]:
    """Open-closed interval (1/(n-2), (n-1)/(n-2)] of admissible gamma."""
    if n < 3:
        raise GammaOutOfRange(f"the supercritical range needs n >= 3, got n = {n}")
    return 1.0 / (n - 2), (n - 1.0) / (n - 2)


def gamma_in_range(gamma: float, n: int) -> bool:
    lo, hi = gamma_range(n)
    return lo < gamma <= hi


def min_rho(gamma: float, n: int) -> float:
    """Smallest damping exponent allowed for source exponent gamma in dimension n."""
    lo, hi = gamma_range(n)
    if not lo < gamma <= hi:
        raise GammaOutOfRange(f"gamma = {gamma} outside ({lo:g}, {hi:g}] for n = {n}")
    den = n - (n - 2) * gamma
    if den <= 0:
        raise DenominatorNonpositive(f"n - (n-2) gamma = {den} <= 0")
    return (2 * (n - 2) * gamma - 2) / den


# ---------------------------------------------------------------------------
# blow-up parameter algebra
# ---------------------------------------------------------------------------

def blowup_smallness_bound(mu0: float, lambda0: float, gamma: float, E1: float,
                           gamma1_measure: float) -> float:
    """Upper bound that beta^{-1}(1) must not exceed for finite-time blow-up."""
    den_core = mu0 * lambda0**2 - 2.0 * E1
    if den_core <= 0:
        raise DegenerateDenominator(f"mu0 lambda0^2 - 2 E1 = {den_core} <= 0")
    num = (gamma + 2.0) * (mu0 * gamma * lambda0**2 - 2.0 * (gamma + 2.0) * E1) ** 2
    den = 8.0 * (gamma + 1.0) * gamma1_measure * den_core
    return (num / den) ** ((gamma + 1.0) / (gamma + 2.0))


def varrho_ell_zeta(mu0: float, lambda0: float, gamma: float, E1: float,
                    gamma1_measure: float, beta_inv_1: float) -> tuple[float, float, float]:
    varrho = 0.5 * mu0 * lambda0**2 - E1
    ell = 0.5 * gamma * mu0 * lambda0**2 - (gamma + 2.0) * E1
    zeta = (gamma + 1.0) * gamma1_measure * beta_inv_1 ** ((gamma + 2.0) / (gamma + 1.0)) / (gamma + 2.0)
    return varrho, ell, zeta


def discriminant(varrho: float, ell: float, zeta: float) -> float:
    return ell * ell - 4.0 * varrho * zeta


def blowup_eps_raw_window(varrho: float, ell: float, zeta: float) -> tuple[float, float]:
    """Roots of varrho e^2 - ell e + zeta; raises when they are complex."""
    if not (varrho > 0 and ell > 0):
        raise DegenerateDenominator(f"need varrho > 0 and ell > 0, got {varrho}, {ell}")
    disc = discriminant(varrho, ell, zeta)
    if disc < 0:
        raise SmallnessConditionViolated(f"ell^2 - 4 varrho zeta = {disc} < 0")
    r = math.sqrt(disc)
    return (ell - r) / (2 * varrho), (ell + r) / (2 * varrho)


def blowup_eps_window(varrho: float, ell: float, zeta: float, gamma: float) -> tuple[float, float]:
    """Admissible blowup_eps interval intersected with (0, min(1, gamma))."""
    lo, hi = blowup_eps_raw_window(varrho, ell, zeta)
    cap = min(1.0, gamma)
    lo, hi = max(lo, 0.0), min(hi, cap)
    if lo >= hi:
        raise EmptyWindow(f"blowup_eps window empty after intersecting with (0, {cap})")
    return lo, hi


def choose_E1(E0: float, d0: float) -> float:
    if E0 >= d0 or E0 <= -1.0:
        raise NotInBlowupRegion(f"need -1 < E(0) < d0, got E(0) = {E0}, d0 = {d0}")
    if E0 < 0:
        return 0.0
    return E0 + min(0.5 * (d0 - E0), 0.5)


def default_chi(gamma: float, rho: float) -> float:
    return 0.5 * (gamma - rho) / ((rho + 2.0) * (gamma + 2.0))


def default_chi_bar(chi: float) -> float:
    return min(0.5 * chi, 0.5 * (1 - 1e-12))


@dataclass(frozen=True)
class BlowupParams:
    E1: float
    chi: float
    chi_bar: float
    tau: float
    theta: float
    blowup_eps: float
    varrho: float
    ell: float
    zeta: float

    def with_tau(self, tau: float) -> "BlowupParams":
        return BlowupParams(self.E1, self.chi, self.chi_bar, tau, self.theta,
                            self.blowup_eps, self.varrho, self.ell, self.zeta)


def make_blowup_params(*, gamma: float, rho: float, mu0: float, lambda0: float,
                       E0: float, d0: float, gamma1_measure: float, beta_inv_1: float,
                       E1: Optional[float] = None, chi: Optional[float] = None,
                       chi_bar: Optional[float] = None, tau: float = 1.0,
                       blowup_eps: Optional[float] = None) -> BlowupParams:
    """Assemble the blow-up constants, filling defaults for anything not given.

    Raises SmallnessConditionViolated / EmptyWindow when no admissible blowup_eps exists.
    """
    if E1 is None:
        E1 = choose_E1(E0, d0)
    chi_max = (gamma - rho) / ((rho + 2.0) * (gamma + 2.0))
    if chi is None:
        chi = default_chi(gamma, rho)
    if not 0 < chi < chi_max:
        raise ValueError(f"chi = {chi} outside (0, {chi_max})")
    if chi_bar is None:
        chi_bar = default_chi_bar(chi)
    if not 0 < chi_bar < min(0.5, chi):
        raise ValueError(f"chi_bar = {chi_bar} outside (0, {min(0.5, chi)})")
    varrho, ell, zeta = varrho_ell_zeta(mu0, lambda0, gamma, E1, gamma1_measure, beta_inv_1)
    lo, hi = blowup_eps_window(varrho, ell, zeta, gamma)
    if blowup_eps is None:
        blowup_eps = 0.5 * (lo + hi)
    elif not lo <= blowup_eps <= hi:
        raise ValueError(f"blowup_eps = {blowup_eps} outside the admissible window [{lo}, {hi}]")
    theta = gamma + 2.0 - blowup_eps
    return BlowupParams(E1=E1, chi=chi, chi_bar=chi_bar, tau=tau, theta=theta,
                        blowup_eps=blowup_eps, varrho=varrho, ell=ell, zeta=zeta)


def sample_law_checks(law: DampingLaw, points: int = 2001,
                      extent: float = 10.0) -> dict:
    """Sampled evidence for the damping hypotheses (monotone, odd, sandwich)."""
    s = np.linspace(-extent, extent, points)
    q = law.q(s)
    ev: dict = {}
    ev["q0"] = float(law.q(0.0))
    ev["monotone"] = bool(np.all(np.diff(q) >= -1e-14 * np.maximum(1.0, np.abs(q[1:]))))
    ev["odd"] = bool(np.allclose(law.q(-s), -q, rtol=1e-13, atol=1e-300))
    inner = s[np.abs(s) <= 1.0]
    qi = np.abs(law.q(inner))
    bi = np.abs(law.beta(inner))
    binv = np.array([abs(law.beta_inverse(x)) for x in inner]) if law.family != "zero" else np.full_like(inner, np.inf)
    tol = 1e-12
    ev["sandwich_lower"] = bool(np.all(bi <= qi + tol))
    ev["sandwich_upper"] = bool(np.all(qi <= binv + tol))
    outer = s[np.abs(s) > 1.0]
    qa = np.abs(law.q(outer))
    powr = np.abs(outer) ** (law.rho + 1.0)
    ev["growth_lower"] = bool(np.all(law.c3 * powr <= qa * (1 + 1e-12) + tol))
    ev["growth_upper"] = bool(np.all(qa <= law.c4 * powr * (1 + 1e-12) + tol))
    return ev
