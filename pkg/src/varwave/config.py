"""Sectioned key-value configuration: parse, validate, serialize, build objects.

Format::

    # comment
    [section]
    key = value     # trailing comment

Unknown sections or keys are errors. Lists are comma separated.
"""

from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from typing import Optional

from .errors import ParseError, ValidationError


@dataclass
class MeshConfig:
    kind: str = "interval"
    length: float = 1.0
    cells: int = 32
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 8
    ny: int = 8
    left: str = "gamma0"
    right: str = "gamma1"
    gamma1: str = "remaining"  # rectangle layout: remaining | right


@dataclass
class CoefficientsConfig:
    kind: str = "identity"  # identity | diagonal | scalar_profile
    values: tuple = ()
    base: float = 1.0
    quad: float = 1.0


@dataclass
class MuConfig:
    mode: str = "constant"
    mu0: float = 1.0


@dataclass
class DampingConfig:
    family: str = "linear"
    rho: float = 1.0
    scale: float = 1.0
    eta: float = 0.0


@dataclass
class SourceConfig:
    gamma: float = 2.0
    strength: float = 1.0
    n: Optional[int] = None  # dimension the theory is applied in; defaults to the mesh


@dataclass
class ForcingConfig:
    mode: str = "zero"
    center: tuple = (0.5,)
    width: float = 0.1
    amplitude: float = 0.0
    decay_rate: float = 1.0


@dataclass
class InitialConfig:
    u0: str = "zero"  # zero | linear | sine | bump | well_random
    u0_amplitude: float = 0.0
    u1: str = "zero"  # zero | sine | bump
    u1_amplitude: float = 0.0
    bump_center: float = 0.5
    bump_width: float = 0.1
    radius: Optional[float] = None  # well_random: grad norm as a fraction of lambda0
    energy_fraction: float = 0.9  # well_random: E(0) < energy_fraction * d0


@dataclass
class RunConfig:
    T: float = 10.0
    dt0: float = 1e-2
    dt_min: float = 1e-12
    amp_max: float = 1e8
    record_every: int = 1
    seed: int = 0
    out_dir: str = "varwave_out"
    snapshots: tuple = ()
    max_steps: int = 10_000_000


@dataclass
class AnalysisConfig:
    well: bool = True
    fit: str = "none"  # none | Exponential | Polynomial | General
    blowup: bool = False
    tail_fraction: float = 0.6
    restarts: int = 16


@dataclass
class BlowupConfig:
    E1: Optional[float] = None
    chi: Optional[float] = None
    chi_bar: Optional[float] = None
    tau: Optional[float] = None
    blowup_eps: Optional[float] = None


@dataclass
class SimConfig:
    mesh: MeshConfig = field(default_factory=MeshConfig)
    coefficients: CoefficientsConfig = field(default_factory=CoefficientsConfig)
    mu: MuConfig = field(default_factory=MuConfig)
    damping: DampingConfig = field(default_factory=DampingConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    forcing: ForcingConfig = field(default_factory=ForcingConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    run: RunConfig = field(default_factory=RunConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    blowup: BlowupConfig = field(default_factory=BlowupConfig)

    @property
    def theory_dim(self) -> int:
        if self.source.n is not None:
            return self.source.n
        return 1 if self.mesh.kind == "interval" else 2


SECTIONS = [f.name for f in dataclasses.fields(SimConfig)]


# ---------------------------------------------------------------------------
# text <-> dataclass
# ---------------------------------------------------------------------------

def _hints(cls) -> dict:
    return typing.get_type_hints(cls)


def _convert(raw: str, hint, where: tuple[int, int], key: str):
    line, col = where
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union and type(None) in args:
        if raw.lower() in ("none", "auto", ""):
            return None
        hint = next(a for a in args if a is not type(None))
    try:
        if hint is bool:
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if hint is tuple:
            if raw.strip() == "":
                return ()
            return tuple(float(x) for x in raw.split(","))
        return raw
    except ValueError:
        raise ParseError(f"bad value {raw!r} for key {key!r}", line, col) from None


def parse_config(text: str) -> SimConfig:
    """Parse and validate configuration text."""
    cfg = SimConfig()
    section = None
    seen: set = set()
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped:
            continue
        indent = len(line) - len(line.lstrip())
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ParseError("unterminated section header", lineno, indent + 1)
            name = stripped[1:-1].strip()
            if name not in SECTIONS:
                raise ParseError(f"unknown section [{name}]", lineno, indent + 2)
            section = name
            continue
        if "=" not in stripped:
            raise ParseError("expected 'key = value'", lineno, indent + 1)
        if section is None:
            raise ParseError("key outside of any section", lineno, indent + 1)
        key, value = (s.strip() for s in stripped.split("=", 1))
        sub = getattr(cfg, section)
        hints = _hints(type(sub))
        if key not in hints:
            raise ParseError(f"unknown key {key!r} in [{section}]", lineno, indent + 1)
        if (section, key) in seen:
            raise ParseError(f"duplicate key {key!r} in [{section}]", lineno, indent + 1)
        seen.add((section, key))
        vcol = rawline.index("=") + 2
        setattr(sub, key, _convert(value, hints[key], (lineno, vcol), key))
    validate_config(cfg)
    return cfg


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def serialize_config(cfg: SimConfig) -> str:
    out = []
    for sec in SECTIONS:
        out.append(f"[{sec}]")
        sub = getattr(cfg, sec)
        for f in dataclasses.fields(sub):
            out.append(f"{f.name} = {_fmt(getattr(sub, f.name))}")
        out.append("")
    return "\n".join(out)


def load_config(path) -> SimConfig:
    with open(path) as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _require(cond: bool, msg: str):
    if not cond:
        raise ValidationError(msg)


def validate_config(cfg: SimConfig) -> None:
    m = cfg.mesh
    _require(m.kind in ("interval", "rectangle"), f"mesh kind {m.kind!r} not in interval|rectangle")
    if m.kind == "interval":
        _require(m.cells >= 2, "mesh cells must be >= 2")
        _require(m.length > 0, "mesh length must be positive")
        for side in (m.left, m.right):
            _require(side in ("gamma0", "gamma1"), f"interval end label {side!r} not gamma0|gamma1")
        _require("gamma0" in (m.left, m.right), "H1 violated: meas(gamma0) must be positive")
    else:
        _require(m.nx >= 2 and m.ny >= 2, "rectangle needs nx, ny >= 2")
        _require(m.lx > 0 and m.ly > 0, "rectangle sides must be positive")
        _require(m.gamma1 in ("remaining", "right"), f"gamma1 layout {m.gamma1!r} not remaining|right")
    c = cfg.coefficients
    _require(c.kind in ("identity", "diagonal", "scalar_profile"), f"coefficient kind {c.kind!r}")
    dim = 1 if m.kind == "interval" else 2
    if c.kind == "diagonal":
        _require(len(c.values) == dim, f"diagonal needs {dim} values")
        _require(all(v > 0 for v in c.values), "diagonal entries must be positive (ellipticity)")
    if c.kind == "scalar_profile":
        _require(c.base > 0 and c.quad >= 0, "scalar_profile needs base > 0 and quad >= 0")
    _require(cfg.mu.mode in ("constant", "relaxing"), f"mu mode {cfg.mu.mode!r}")
    _require(cfg.mu.mu0 > 0, "H2 violated: mu0 must be positive")
    d = cfg.damping
    _require(d.family in ("zero", "linear", "polynomial", "flat"), f"damping family {d.family!r}")
    _require(d.rho >= 0, "rho must be nonnegative")
    _require(d.scale > 0, "damping scale must be positive")
    _require(d.eta >= 0, "eta must be nonnegative")
    s = cfg.source
    _require(s.gamma > 0, "gamma must be positive")
    _require(s.strength >= 0, "source strength must be nonnegative")
    if s.n is not None:
        _require(s.n >= 1, "theory dimension n must be >= 1")
        if s.n >= 3:
            lo, hi = 1.0 / (s.n - 2), (s.n - 1.0) / (s.n - 2)
            _require(lo < s.gamma <= hi,
                     f"H4 violated: gamma = {s.gamma} outside ({lo:g}, {hi:g}] for n = {s.n}")
    f = cfg.forcing
    _require(f.mode in ("zero", "gaussian_pulse"), f"forcing mode {f.mode!r}")
    if f.mode == "gaussian_pulse":
        _require(f.width > 0 and f.decay_rate > 0, "pulse width and decay_rate must be positive")
    i = cfg.initial
    _require(i.u0 in ("zero", "linear", "sine", "bump", "well_random"), f"u0 kind {i.u0!r}")
    _require(i.u1 in ("zero", "sine", "bump"), f"u1 kind {i.u1!r}")
    if i.radius is not None:
        _require(0 < i.radius < 1, "radius must lie in (0, 1)")
    _require(0 < i.energy_fraction < 1, "energy_fraction must lie in (0, 1)")
    r = cfg.run
    _require(r.T > 0 and r.dt0 > 0 and r.dt_min > 0, "T, dt0, dt_min must be positive")
    _require(r.dt_min < r.dt0, "dt_min must be below dt0")
    _require(r.amp_max > 0, "amp_max must be positive")
    _require(r.record_every >= 1, "record_every must be >= 1")
    _require(r.max_steps >= 1, "max_steps must be >= 1")
    a = cfg.analysis
    _require(a.fit in ("none", "Exponential", "Polynomial", "General"), f"fit case {a.fit!r}")
    _require(0 < a.tail_fraction <= 1, "tail_fraction must lie in (0, 1]")
    _require(a.restarts >= 0, "restarts must be >= 0")
    b = cfg.blowup
    if b.tau is not None:
        _require(b.tau > 0, "tau must be positive")
    if b.chi is not None:
        chi_max = (s.gamma - d.rho) / ((d.rho + 2) * (s.gamma + 2))
        _require(0 < b.chi < chi_max, f"chi must lie in (0, {chi_max:g})")
    if b.chi_bar is not None:
        _require(0 < b.chi_bar < 0.5, "chi_bar must lie in (0, 1/2)")
    if b.E1 is not None:
        _require(b.E1 >= 0, "E1 must be nonnegative")
    _require(not math.isnan(r.T), "T is NaN")
