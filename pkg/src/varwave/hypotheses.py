"""Hypothesis validation: one report entry per structural assumption.

Failures are encoded in the report rather than raised; runs outside the
theory (for instance 1D or 2D meshes) stay allowed and are flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import DiscreteOperators
from .errors import GammaOutOfRange
from .geometry import (CoefficientField, EscapeField, Mesh, boundary_measure,
                       check_escape_field)
from .model import LawSet, gamma_range, min_rho, sample_law_checks
from .well import BLOWUP_CANDIDATE, GLOBAL_WELL, WellConstants, classify_initial_data

PASS, FAIL, WARN = "pass", "fail", "warn"
HYPOTHESIS_IDS = ("H1", "H2", "H3", "H4", "compatibility", "smallness", "divergence")

REGIME_GLOBAL = "GlobalUnconditional"
REGIME_WELL = "PotentialWell"
REGIME_BLOWUP = "BlowupCandidate"
REGIME_OUTSIDE = "OutsideTheory"


@dataclass
class HypothesisEntry:
    id: str
    status: str
    detail: str
    evidence: dict = field(default_factory=dict)


@dataclass
class HypothesisReport:
    entries: list
    regime: str
    notes: list = field(default_factory=list)

    def entry(self, hid: str) -> HypothesisEntry:
        for e in self.entries:
            if e.id == hid:
                return e
        raise KeyError(hid)

    @property
    def all_pass(self) -> bool:
        return all(e.status == PASS for e in self.entries)

    def status(self, hid: str) -> str:
        return self.entry(hid).status

    def lines(self) -> list[str]:
        out = [f"regime = {self.regime}"]
        for e in self.entries:
            out.append(f"{e.id:5s} {e.status:4s}  {e.detail}")
        out.extend(f"note: {n}" for n in self.notes)
        return out


def conormal_flux(mesh: Mesh, field_: CoefficientField, u_full) -> np.ndarray:
    """Nodal A grad u . nu on gamma1 nodes (facet-averaged), zero elsewhere."""
    from .assembly import _p1_gradients

    flux = np.zeros(mesh.n_nodes)
    count = np.zeros(mesh.n_nodes)
    for fi in mesh.gamma1_facets:
        e = mesh.facet_elements[fi]
        verts = mesh.nodes[mesh.elements[e]]
        grads, _ = _p1_gradients(verts)
        gu = grads.T @ u_full[mesh.elements[e]]
        A = field_.at(verts.mean(axis=0)[None, :])[0]
        val = float((A @ gu) @ mesh.facet_normals[fi])
        for nd in mesh.facets[fi]:
            flux[nd] += val
            count[nd] += 1
    nz = count > 0
    flux[nz] /= count[nz]
    return flux


def validate_hypotheses(laws: LawSet, n: int, mesh: Mesh, initial_data=None, *,
                        ops: Optional[DiscreteOperators] = None,
                        field: Optional[CoefficientField] = None,
                        escape: Optional[EscapeField] = None,
                        constants: Optional[WellConstants] = None,
                        t_max: float = 1e3) -> HypothesisReport:
    """Check the structural hypotheses and classify the parameter regime.

    ``n`` is the dimension the theory is applied in; it may differ from the
    mesh dimension (desk-scale runs), which is reported as a warning.
    ``initial_data`` is an optional pair (u0, u1) of nodal vectors on all
    mesh nodes.
    """
    gamma, rho = laws.gamma, laws.rho
    entries: list = []
    notes: list = []
    field = field or CoefficientField.identity(mesh.dim)

    # H1: domain, boundary split, escape field
    ev = {"mesh_dim": mesh.dim, "n": n,
          "meas_gamma0": boundary_measure(mesh, "gamma0"),
          "meas_gamma1": boundary_measure(mesh, "gamma1")}
    status, detail = PASS, "gamma0 nonempty"
    if ev["meas_gamma0"] <= 0:
        status, detail = FAIL, "meas(gamma0) = 0"
    if escape is None and field.kind == "identity":
        # radial field centered on the clamped side
        x0 = 0.5 * (mesh.nodes.min(axis=0) + mesh.nodes.max(axis=0))
        x0[0] = mesh.nodes[:, 0].min()
        escape = EscapeField.radial(x0)
    if escape is not None:
        rep = check_escape_field(escape, field, mesh, gamma)
        ev.update(sigma=rep.sigma, delta=rep.delta, gamma0_max_flux=rep.gamma0_max_flux)
        if not (rep.sigma_ok and rep.flux_ok):
            status = FAIL if status == PASS else status
            detail = (f"escape field: sigma = {rep.sigma:.4g}, delta = {rep.delta:.4g}, "
                      f"max H.nu on gamma0 = {rep.gamma0_max_flux:.4g}")
        else:
            detail += f"; escape field sigma = {rep.sigma:.4g}, delta = {rep.delta:.4g}"
    else:
        rep = None
        if status == PASS:
            status = WARN
            detail += "; no escape field supplied"
    if mesh.dim < n:
        notes.append(f"mesh dimension {mesh.dim} below theory dimension {n}")
    if n < 3:
        notes.append(f"n = {n} < 3: the exponent hypotheses are stated for n >= 3")
    entries.append(HypothesisEntry("H1", status, detail, ev))

    # H2: mu, f
    ts = np.concatenate([[0.0], np.logspace(-6, math.log10(t_max), 200)])
    mu_v = np.asarray(laws.mu.mu(ts), dtype=float)
    mup = np.asarray(laws.mu.mu_prime(ts), dtype=float)
    h = 1e-6
    fd = (np.asarray(laws.mu.mu(ts + h)) - np.asarray(laws.mu.mu(np.maximum(ts - h, 0.0)))) / (
        (ts + h) - np.maximum(ts - h, 0.0))
    fd_ok = bool(np.all(np.abs(fd - mup) <= 1e-6 * np.maximum(1.0, np.abs(mup)) + 1e-6))
    ok = bool(np.all(mu_v >= laws.mu.mu0) and np.all(mup <= 0) and fd_ok)
    entries.append(HypothesisEntry(
        "H2", PASS if ok else FAIL,
        "mu >= mu0 > 0, mu' <= 0, f in H^1(0, inf; L^2)" if ok else "sampled mu is not a nonincreasing function bounded below by mu0",
        {"mu_min": float(mu_v.min()), "mu_prime_max": float(mup.max()), "fd_consistent": fd_ok,
         "forcing": laws.forcing.mode}))

    # H3: damping
    ev = sample_law_checks(laws.damping)
    status, detail = PASS, "q nondecreasing, q(0) = 0, sandwich and growth bounds hold"
    problems = [k for k in ("monotone", "odd", "sandwich_lower", "sandwich_upper",
                            "growth_lower", "growth_upper") if not ev[k]]
    if laws.damping.family == "zero":
        problems.append("q = 0 has no strictly increasing beta")
    if ev["q0"] != 0.0:
        problems.append("q(0) != 0")
    if problems:
        status, detail = FAIL, "damping violates: " + ", ".join(problems)
    try:
        rmin = min_rho(gamma, n)
        ev["min_rho"] = rmin
        if rho < rmin - 1e-12:
            status = FAIL
            msg = f"rho = {rho:g} below the floor {rmin:g}"
            if rho < gamma:
                msg += "; rho < gamma required by the blow-up theorem but rho below the (H3) floor"
            detail = msg if not problems else detail + "; " + msg
    except GammaOutOfRange as exc:
        ev["min_rho"] = None
        if status == PASS:
            status = WARN
        detail += f"; rho floor undefined ({exc})"
    entries.append(HypothesisEntry("H3", status, detail, ev))

    # H4: gamma range
    try:
        lo, hi = gamma_range(n)
        ok = lo < gamma <= hi
        entries.append(HypothesisEntry("H4", PASS if ok else FAIL,
                                       f"gamma = {gamma:g} {'in' if ok else 'outside'} ({lo:g}, {hi:g}]",
                                       {"lo": lo, "hi": hi}))
    except GammaOutOfRange as exc:
        entries.append(HypothesisEntry("H4", WARN, str(exc), {}))

    # compatibility of the data with the boundary condition at t = 0
    if initial_data is not None:
        u0, u1 = (np.asarray(a, dtype=float) for a in initial_data)
        flux = conormal_flux(mesh, field, u0)
        g1 = mesh.gamma1_nodes
        res = float(laws.mu.mu(0.0)) * flux[g1] + laws.damping.q(u1[g1]) - laws.source.h(u0[g1])
        rmax = float(np.max(np.abs(res))) if len(g1) else 0.0
        entries.append(HypothesisEntry("compatibility", PASS if rmax <= 1e-8 else WARN,
                                       f"max compatibility residual on gamma1 = {rmax:.3e}",
                                       {"max_residual": rmax}))
    else:
        entries.append(HypothesisEntry("compatibility", WARN, "no initial data supplied", {}))

    # regime via the well constants
    regime = REGIME_OUTSIDE
    cls = None
    if ops is not None and initial_data is not None and len(ops.bnodes):
        from .well import estimate_K0, well_constants

        if constants is None:
            constants = well_constants(estimate_K0(ops, gamma), laws.mu.mu0, gamma)
        cls = classify_initial_data(ops.restrict(initial_data[0]), ops.restrict(initial_data[1]),
                                    ops, laws, constants, boundary_measure(mesh, "gamma1"))
    if rho >= gamma:
        regime = REGIME_GLOBAL
    elif cls is not None and cls.regime == BLOWUP_CANDIDATE:
        regime = REGIME_BLOWUP
    elif cls is not None and cls.regime == GLOBAL_WELL:
        regime = REGIME_WELL

    # smallness of beta^{-1}(1): only binding for data on the blow-up side
    if cls is None:
        entries.append(HypothesisEntry("smallness", WARN, "needs operators and initial data", {}))
    else:
        b = cls.evidence.get("smallness_bound", float("nan"))
        bi = laws.damping.beta_inverse_at_1
        blowup_side = rho < gamma and cls.evidence["grad_norm"] > constants.lambda0
        if not blowup_side:
            entries.append(HypothesisEntry("smallness", PASS,
                                           "not required: damping dominates or data inside the well",
                                           cls.evidence))
        elif not math.isfinite(b):
            entries.append(HypothesisEntry("smallness", FAIL, "blow-up algebra undefined: " +
                                           cls.evidence.get("blowup_algebra", "no E1"), cls.evidence))
        else:
            ok = bi <= b
            entries.append(HypothesisEntry("smallness", PASS if ok else FAIL,
                                           f"beta^-1(1) = {bi:.4g} {'<=' if ok else '>'} bound {b:.4g}",
                                           cls.evidence))

    # divergence of the escape field
    if rep is None:
        entries.append(HypothesisEntry("divergence", WARN, "no escape field supplied", {}))
    else:
        entries.append(HypothesisEntry(
            "divergence", PASS if rep.divergence_ok else FAIL,
            f"div H in [{rep.div_min:.4g}, {rep.div_max:.4g}] vs [{rep.sigma:.4g}, {rep.div_upper_allowed:.4g}]",
            {"div_min": rep.div_min, "div_max": rep.div_max, "sigma": rep.sigma,
             "upper": rep.div_upper_allowed}))

    return HypothesisReport(entries, regime, notes)
