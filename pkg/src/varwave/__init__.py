"""Finite-element study of wave equations with supercritical boundary sources.

Setting VARWAVE_THREADS before import caps the BLAS/OpenMP thread pools.
"""

import os as _os

_threads = _os.environ.get("VARWAVE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .assembly import DiscreteOperators, assemble_operators  # noqa: E402
from .config import SimConfig, load_config, parse_config, serialize_config  # noqa: E402
from .diagnostics import energy, energy_identity_residual, fit_decay, verify_M_growth  # noqa: E402
from .dynamics import MidpointStepper, RunControls, State, Trajectory, run, step  # noqa: E402
from .errors import VarwaveError  # noqa: E402
from .geometry import CoefficientField, IntervalSpec, RectangleSpec, build_mesh  # noqa: E402
from .hypotheses import validate_hypotheses  # noqa: E402
from .model import DampingLaw, ForcingLaw, LawSet, SourceLaw, TimeWeight  # noqa: E402
from .well import estimate_K0, trapping_monitor, well_constants  # noqa: E402

__all__ = [
    "DiscreteOperators", "assemble_operators", "SimConfig", "load_config", "parse_config",
    "serialize_config", "energy", "energy_identity_residual", "fit_decay", "verify_M_growth",
    "MidpointStepper", "RunControls", "State", "Trajectory", "run", "step", "VarwaveError",
    "CoefficientField", "IntervalSpec", "RectangleSpec", "build_mesh", "validate_hypotheses",
    "DampingLaw", "ForcingLaw", "LawSet", "SourceLaw", "TimeWeight", "estimate_K0",
    "trapping_monitor", "well_constants",
]
