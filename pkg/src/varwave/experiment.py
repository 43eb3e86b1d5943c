"""Turn a validated configuration into meshes, operators, laws and data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import DiscreteOperators, assemble_operators
from .config import SimConfig
from .dynamics import RunControls, State
from .geometry import (CoefficientField, IntervalSpec, Mesh, RectangleSpec, boundary_measure,
                       build_mesh, rectangle_partition)
from .model import (BlowupParams, DampingLaw, ForcingLaw, LawSet, SourceLaw, TimeWeight,
                    make_blowup_params)
from .well import WellConstants, estimate_K0, random_well_data, well_constants


def build_field(cfg: SimConfig, dim: int) -> CoefficientField:
    c = cfg.coefficients
    if c.kind == "identity":
        return CoefficientField.identity(dim)
    if c.kind == "diagonal":
        return CoefficientField.diagonal(c.values)
    return CoefficientField.scalar_profile(dim, c.base, c.quad)


def build_mesh_from(cfg: SimConfig) -> Mesh:
    m = cfg.mesh
    if m.kind == "interval":
        return build_mesh(IntervalSpec(m.length, m.cells), {"left": m.left, "right": m.right})
    return build_mesh(RectangleSpec(m.lx, m.ly, m.nx, m.ny), rectangle_partition(m.gamma1))


def build_laws(cfg: SimConfig) -> LawSet:
    f = cfg.forcing
    return LawSet(
        mu=TimeWeight(cfg.mu.mu0, cfg.mu.mode),
        damping=DampingLaw(cfg.damping.family, cfg.damping.rho, cfg.damping.scale),
        source=SourceLaw(cfg.source.gamma, cfg.source.strength),
        forcing=ForcingLaw(f.mode, tuple(f.center), f.width, f.amplitude, f.decay_rate),
        eta=cfg.damping.eta,
    )


def build_controls(cfg: SimConfig) -> RunControls:
    r = cfg.run
    return RunControls(T=r.T, dt0=r.dt0, dt_min=r.dt_min, amp_max=r.amp_max,
                       record_every=r.record_every, max_steps=r.max_steps)


def _profile(kind: str, amp: float, x1: np.ndarray, length: float, center: float,
             width: float) -> np.ndarray:
    if kind == "zero":
        return np.zeros_like(x1)
    if kind == "linear":
        return amp * x1
    if kind == "sine":
        return amp * np.sin(0.5 * math.pi * x1 / length)
    if kind == "bump":
        return amp * np.exp(-((x1 - center * length) ** 2) / (2.0 * width**2))
    raise ValueError(f"unknown profile {kind!r}")


@dataclass
class Experiment:
    """Everything a run needs, built once from a configuration."""

    config: SimConfig
    mesh: Mesh
    field: CoefficientField
    ops: DiscreteOperators
    laws: LawSet
    rng: np.random.Generator
    _constants: Optional[WellConstants] = field(default=None, repr=False)
    _initial: Optional[State] = field(default=None, repr=False)

    @classmethod
    def from_config(cls, cfg: SimConfig) -> "Experiment":
        mesh = build_mesh_from(cfg)
        fld = build_field(cfg, mesh.dim)
        ops = assemble_operators(mesh, fld)
        return cls(cfg, mesh, fld, ops, build_laws(cfg), np.random.default_rng(cfg.run.seed))

    @property
    def gamma1_measure(self) -> float:
        return boundary_measure(self.mesh, "gamma1")

    @property
    def constants(self) -> WellConstants:
        if self._constants is None:
            K0 = estimate_K0(self.ops, self.laws.gamma, restarts=self.config.analysis.restarts,
                             seed=self.config.run.seed)
            self._constants = well_constants(K0, self.laws.mu.mu0, self.laws.gamma)
        return self._constants

    @property
    def initial(self) -> State:
        if self._initial is None:
            i = self.config.initial
            if i.u0 == "well_random":
                u0, u1_rand = random_well_data(self.ops, self.laws, self.constants, self.rng,
                                               i.radius, i.energy_fraction)
                u1 = u1_rand if i.u1 == "zero" else self._free_profile(i.u1, i.u1_amplitude)
                self._initial = State(0.0, u0, u1)
            else:
                self._initial = State(0.0, self._free_profile(i.u0, i.u0_amplitude),
                                      self._free_profile(i.u1, i.u1_amplitude))
        return self._initial

    def _free_profile(self, kind: str, amp: float) -> np.ndarray:
        i = self.config.initial
        x = self.ops.free_coords
        x1 = x[:, 0] - self.mesh.nodes[:, 0].min()
        length = float(np.ptp(self.mesh.nodes[:, 0]))
        return _profile(kind, amp, x1, length, i.bump_center, i.bump_width)

    def initial_full(self) -> tuple[np.ndarray, np.ndarray]:
        s = self.initial
        return self.ops.extend(s.u), self.ops.extend(s.v)

    def blowup_params(self, E0: float) -> BlowupParams:
        b = self.config.blowup
        c = self.constants
        return make_blowup_params(
            gamma=self.laws.gamma, rho=self.laws.rho, mu0=c.mu0, lambda0=c.lambda0, E0=E0,
            d0=c.d0, gamma1_measure=self.gamma1_measure,
            beta_inv_1=self.laws.damping.beta_inverse_at_1, E1=b.E1, chi=b.chi,
            chi_bar=b.chi_bar, tau=b.tau if b.tau is not None else 1.0, blowup_eps=b.blowup_eps)
