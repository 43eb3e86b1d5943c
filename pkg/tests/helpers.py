"""Small builders shared by the test modules."""

import numpy as np

from varwave.assembly import assemble_operators
from varwave.geometry import CoefficientField, IntervalSpec, RectangleSpec, build_mesh, rectangle_partition
from varwave.model import DampingLaw, ForcingLaw, LawSet, SourceLaw, TimeWeight


def interval_ops(cells=16, length=1.0, field=None, partition=None):
    mesh = build_mesh(IntervalSpec(length, cells), partition)
    return mesh, assemble_operators(mesh, field or CoefficientField.identity(1))


def square_ops(n=4, layout="right", field=None):
    mesh = build_mesh(RectangleSpec(1.0, 1.0, n, n), rectangle_partition(layout))
    return mesh, assemble_operators(mesh, field or CoefficientField.identity(2))


def laws(mu0=1.0, mode="constant", family="linear", rho=1.0, scale=1.0, gamma=2.0,
         strength=1.0, forcing=None, eta=0.0):
    return LawSet(TimeWeight(mu0, mode), DampingLaw(family, rho, scale),
                  SourceLaw(gamma, strength), forcing or ForcingLaw(), eta)


def conservative_laws(mu0=1.0):
    return laws(mu0=mu0, family="zero", strength=0.0)


def sine_data(ops, amp=0.3):
    x = ops.free_coords[:, 0]
    return amp * np.sin(0.5 * np.pi * x)
