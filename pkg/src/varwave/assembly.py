"""P1 Galerkin operators for the variable-coefficient wave problem.

All operators act on free dofs (nodes not clamped on gamma0). Interior and
boundary masses are lumped, so the boundary nonlinearities stay nodal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, SingularElement
from .geometry import CoefficientField, Mesh
from .model import DampingLaw, SourceLaw


@dataclass(frozen=True, eq=False)
class DiscreteOperators:
    """Assembled operators restricted to free dofs.

    M : lumped mass (diagonal, stored as a vector ``m_diag`` and a sparse matrix)
    K : stiffness, K_ij = int (A grad phi_i) . grad phi_j
    B : lumped gamma1 boundary mass (vector ``b_diag``; nonzero exactly on gamma1 nodes)
    """

    mesh: Mesh
    free: np.ndarray
    K: sp.csr_matrix
    m_diag: np.ndarray
    b_diag: np.ndarray
    bnodes: np.ndarray  # positions (within free dofs) of gamma1 nodes
    load_weights: np.ndarray  # lumped interior weights, same as m_diag

    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def M(self) -> sp.csr_matrix:
        return sp.diags(self.m_diag).tocsr()

    @property
    def B(self) -> sp.csr_matrix:
        return sp.diags(self.b_diag).tocsr()

    @property
    def trace_map(self) -> dict:
        """Free-dof index -> gamma1 nodal weight."""
        return {int(i): float(self.b_diag[i]) for i in self.bnodes}

    @property
    def free_coords(self) -> np.ndarray:
        return self.mesh.nodes[self.free]

    def restrict(self, nodal_full) -> np.ndarray:
        return np.asarray(nodal_full, dtype=float)[self.free]

    def extend(self, u_free) -> np.ndarray:
        full = np.zeros(self.mesh.n_nodes)
        full[self.free] = u_free
        return full

    def interpolate(self, fn) -> np.ndarray:
        """Nodal interpolant on free dofs of a function of coordinates (P, dim)."""
        return np.asarray(fn(self.free_coords), dtype=float).reshape(self.n_free)


def _p1_gradients(verts: np.ndarray) -> tuple[np.ndarray, float]:
    """Gradients of the barycentric basis on one simplex and its measure."""
    d = verts.shape[1]
    T = (verts[1:] - verts[0]).T  # (d, d)
    det = np.linalg.det(T)
    vol = abs(det) / math.factorial(d)
    diam = max(np.linalg.norm(a - b) for a in verts for b in verts)
    if not diam > 0 or vol <= 1e-12 * diam**d:
        raise SingularElement(f"degenerate element with measure {vol}")
    Tinv = np.linalg.inv(T)
    ref = np.vstack([-np.ones(d), np.eye(d)])  # (d+1, d) reference gradients
    return ref @ Tinv, vol


def assemble_operators(mesh: Mesh, field: CoefficientField) -> DiscreteOperators:
    """Assemble stiffness (midpoint rule in A), lumped mass and lumped gamma1 mass."""
    if field.dim != mesh.dim:
        raise DimensionMismatch(f"field dim {field.dim} != mesh dim {mesh.dim}")
    n = mesh.n_nodes
    d = mesh.dim
    elems = mesh.elements
    verts = mesh.nodes[elems]
    centroids = verts.mean(axis=1)
    A = field.at(centroids)
    rows, cols, vals = [], [], []
    mass = np.zeros(n)
    for e in range(len(elems)):
        grads, vol = _p1_gradients(verts[e])
        ke = vol * grads @ A[e] @ grads.T
        idx = elems[e]
        rows.append(np.repeat(idx, d + 1))
        cols.append(np.tile(idx, d + 1))
        vals.append(ke.ravel())
        mass[idx] += vol / (d + 1)
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    K = 0.5 * (K + K.T)

    bmass = np.zeros(n)
    for fi in mesh.gamma1_facets:
        nodes = mesh.facets[fi]
        bmass[nodes] += mesh.facet_measures[fi] / len(nodes)

    free = mesh.free_dofs
    Kf = K[free][:, free].tocsr()
    mf = mass[free]
    bf = bmass[free]
    bnodes = np.flatnonzero(bf > 0)
    return DiscreteOperators(mesh=mesh, free=free, K=Kf, m_diag=mf, b_diag=bf,
                             bnodes=bnodes, load_weights=mf.copy())


def _check(ops: DiscreteOperators, *vecs):
    for v in vecs:
        if np.shape(v) != (ops.n_free,):
            raise DimensionMismatch(f"vector of shape {np.shape(v)} but {ops.n_free} free dofs")


def grad_energy_seminorm(ops: DiscreteOperators, u) -> float:
    """u^T K u, the discrete squared L2 norm of the metric gradient."""
    u = np.asarray(u, dtype=float)
    _check(ops, u)
    return float(u @ (ops.K @ u))


def boundary_norm(ops: DiscreteOperators, u, p: float) -> float:
    """(sum over gamma1 nodes of B_ii |u_i|^p)^(1/p)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    u = np.asarray(u, dtype=float)
    _check(ops, u)
    b = ops.bnodes
    return float(np.sum(ops.b_diag[b] * np.abs(u[b]) ** p) ** (1.0 / p))


def boundary_power(ops: DiscreteOperators, u, p: float) -> float:
    """sum B_ii |u_i|^p, i.e. boundary_norm(u, p)**p without the root."""
    b = ops.bnodes
    return float(np.sum(ops.b_diag[b] * np.abs(np.asarray(u)[b]) ** p))


def boundary_force(ops: DiscreteOperators, source: SourceLaw, damping: DampingLaw,
                   u, v, eta: float = 0.0) -> np.ndarray:
    """Right-hand-side boundary contribution B (h(u) - q(v) - eta v) on gamma1 nodes."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check(ops, u, v)
    out = np.zeros(ops.n_free)
    b = ops.bnodes
    out[b] = ops.b_diag[b] * (source.h(u[b]) - damping.q(v[b]) - eta * v[b])
    return out


def interior_load(ops: DiscreteOperators, fvals) -> np.ndarray:
    """Lumped load vector int f phi_i ~ M_ii f(x_i)."""
    return ops.load_weights * np.asarray(fvals, dtype=float)
