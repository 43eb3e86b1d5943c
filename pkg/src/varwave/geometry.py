"""Meshes with a clamped/free boundary split, coefficient fields, escape fields."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

import numpy as np

from .errors import EmptyGamma0, NotPositiveDefinite

GAMMA0 = "gamma0"
GAMMA1 = "gamma1"
NEUMANN = "neumann"
LABELS = (GAMMA0, GAMMA1, NEUMANN)


# ---------------------------------------------------------------------------
# coefficient field A(x)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoefficientField:
    """Symmetric positive-definite matrix field A(x) and its metric G = A^{-1}.

    ``A`` maps an array of points of shape (P, dim) to matrices (P, dim, dim).
    ``c1`` is filled in by :func:`ellipticity_constant` and is ``None`` until
    then.
    """

    dim: int
    A: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"
    params: tuple = ()
    c1: Optional[float] = None

    def at(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim and x.shape[0] == self.dim and x.shape[1] == 1:
            x = x.T
        return np.asarray(self.A(x), dtype=float).reshape(x.shape[0], self.dim, self.dim)

    def G(self, x) -> np.ndarray:
        return np.linalg.inv(self.at(x))

    def scaled(self, c: float) -> "CoefficientField":
        base = self.A
        return CoefficientField(self.dim, lambda x: c * base(x), self.kind + "*c",
                                self.params + (c,), None if self.c1 is None else c * self.c1)

    def with_c1(self, c1: float) -> "CoefficientField":
        return CoefficientField(self.dim, self.A, self.kind, self.params, c1)

    @staticmethod
    def identity(dim: int) -> "CoefficientField":
        eye = np.eye(dim)
        return CoefficientField(dim, lambda x: np.broadcast_to(eye, (len(x), dim, dim)).copy(),
                                "identity", (), 1.0)

    @staticmethod
    def constant(matrix) -> "CoefficientField":
        m = np.array(matrix, dtype=float)
        dim = m.shape[0]
        return CoefficientField(dim, lambda x: np.broadcast_to(m, (len(x), dim, dim)).copy(),
                                "constant", tuple(m.ravel()))

    @staticmethod
    def diagonal(values) -> "CoefficientField":
        vals = tuple(float(v) for v in values)
        f = CoefficientField.constant(np.diag(vals))
        return CoefficientField(f.dim, f.A, "diagonal", vals)

    @staticmethod
    def scalar_profile(dim: int, base: float = 1.0, quad: float = 1.0) -> "CoefficientField":
        """A(x) = (base + quad |x|^2) I."""
        eye = np.eye(dim)

        def A(x):
            r2 = np.sum(np.asarray(x) ** 2, axis=1)
            return (base + quad * r2)[:, None, None] * eye

        return CoefficientField(dim, A, "scalar_profile", (base, quad))


# ---------------------------------------------------------------------------
# mesh
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntervalSpec:
    length: float = 1.0
    cells: int = 16


@dataclass(frozen=True)
class RectangleSpec:
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 8
    ny: int = 8


MeshSpec = Union[IntervalSpec, RectangleSpec]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial P1 mesh.

    Facets are boundary points (1D) or boundary segments (2D). Each facet
    carries a label in {gamma0, gamma1, neumann}, its outward unit normal,
    its measure (counting measure in 1D) and the element it belongs to.
    Nodes touching a gamma0 facet are clamped; all others are free dofs.
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    facets: np.ndarray
    facet_labels: tuple
    facet_normals: np.ndarray
    facet_measures: np.ndarray
    facet_elements: np.ndarray
    facet_sides: tuple = ()

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def facets_of(self, label: str) -> np.ndarray:
        return np.array([i for i, lab in enumerate(self.facet_labels) if lab == label], dtype=int)

    @property
    def gamma0_facets(self) -> np.ndarray:
        return self.facets_of(GAMMA0)

    @property
    def gamma1_facets(self) -> np.ndarray:
        return self.facets_of(GAMMA1)

    @property
    def dirichlet_nodes(self) -> np.ndarray:
        idx = self.gamma0_facets
        if len(idx) == 0:
            return np.zeros(0, dtype=int)
        return np.unique(self.facets[idx].ravel())

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.dirichlet_nodes] = False
        return np.flatnonzero(mask)

    @property
    def gamma1_nodes(self) -> np.ndarray:
        idx = self.gamma1_facets
        if len(idx) == 0:
            return np.zeros(0, dtype=int)
        nodes = np.unique(self.facets[idx].ravel())
        return np.setdiff1d(nodes, self.dirichlet_nodes)


_INTERVAL_DEFAULT = {"left": GAMMA0, "right": GAMMA1}
_RECT_DEFAULT = {"left": GAMMA0, "right": GAMMA1, "bottom": GAMMA1, "top": GAMMA1}


def rectangle_partition(gamma1: str = "remaining") -> dict:
    """Side labels for the two standard 2D setups.

    ``remaining``: gamma0 = left edge, gamma1 = the other three edges.
    ``right``: gamma0 = left, gamma1 = right, top/bottom homogeneous Neumann.
    """
    if gamma1 == "remaining":
        return dict(_RECT_DEFAULT)
    if gamma1 == "right":
        return {"left": GAMMA0, "right": GAMMA1, "bottom": NEUMANN, "top": NEUMANN}
    raise ValueError(f"unknown gamma1 layout {gamma1!r}")


def build_mesh(spec: MeshSpec, partition: Optional[Mapping[str, str]] = None) -> Mesh:
    """Build an interval or rectangle mesh and label its boundary sides."""
    if isinstance(spec, IntervalSpec):
        parts = dict(_INTERVAL_DEFAULT)
        if partition:
            parts.update(partition)
        mesh = _interval_mesh(spec, parts)
    elif isinstance(spec, RectangleSpec):
        parts = dict(_RECT_DEFAULT)
        if partition:
            parts.update(partition)
        mesh = _rectangle_mesh(spec, parts)
    else:
        raise TypeError(f"unsupported mesh spec {spec!r}")
    for lab in mesh.facet_labels:
        if lab not in LABELS:
            raise ValueError(f"unknown boundary label {lab!r}")
    if len(mesh.gamma0_facets) == 0:
        raise EmptyGamma0("no boundary facet is labeled gamma0; meas(gamma0) must be positive")
    return mesh


def _interval_mesh(spec: IntervalSpec, parts: Mapping[str, str]) -> Mesh:
    if spec.cells < 2:
        raise ValueError("an interval mesh needs at least 2 cells")
    if not spec.length > 0:
        raise ValueError("interval length must be positive")
    n = spec.cells
    nodes = np.linspace(0.0, spec.length, n + 1)[:, None]
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    facets = np.array([[0], [n]])
    labels = (parts["left"], parts["right"])
    normals = np.array([[-1.0], [1.0]])
    return Mesh(1, nodes, elements, facets, labels, normals, np.ones(2),
                np.array([0, n - 1]), ("left", "right"))


def _rectangle_mesh(spec: RectangleSpec, parts: Mapping[str, str]) -> Mesh:
    nx, ny = spec.nx, spec.ny
    if nx < 2 or ny < 2:
        raise ValueError("a rectangle mesh needs at least 2 cells per direction")
    xs = np.linspace(0.0, spec.lx, nx + 1)
    ys = np.linspace(0.0, spec.ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    elements = []
    cell_elem = {}
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            cell_elem[(i, j)] = (len(elements), len(elements) + 1)
            elements.append([a, b, c])
            elements.append([a, c, d])
    elements = np.array(elements, dtype=int)

    facets, labels, normals, measures, owners, sides = [], [], [], [], [], []
    hx, hy = spec.lx / nx, spec.ly / ny
    for i in range(nx):  # bottom: edge a-b belongs to triangle (a, b, c)
        facets.append([nid(i, 0), nid(i + 1, 0)])
        labels.append(parts["bottom"]); normals.append([0.0, -1.0]); measures.append(hx)
        owners.append(cell_elem[(i, 0)][0]); sides.append("bottom")
    for j in range(ny):  # right: edge b-c in triangle (a, b, c)
        facets.append([nid(nx, j), nid(nx, j + 1)])
        labels.append(parts["right"]); normals.append([1.0, 0.0]); measures.append(hy)
        owners.append(cell_elem[(nx - 1, j)][0]); sides.append("right")
    for i in range(nx):  # top: edge c-d in triangle (a, c, d)
        facets.append([nid(i + 1, ny), nid(i, ny)])
        labels.append(parts["top"]); normals.append([0.0, 1.0]); measures.append(hx)
        owners.append(cell_elem[(i, ny - 1)][1]); sides.append("top")
    for j in range(ny):  # left: edge d-a in triangle (a, c, d)
        facets.append([nid(0, j + 1), nid(0, j)])
        labels.append(parts["left"]); normals.append([-1.0, 0.0]); measures.append(hy)
        owners.append(cell_elem[(0, j)][1]); sides.append("left")
    return Mesh(2, nodes, elements, np.array(facets, dtype=int), tuple(labels),
                np.array(normals), np.array(measures), np.array(owners, dtype=int),
                tuple(sides))


def boundary_measure(mesh: Mesh, which: str) -> float:
    """Total measure of gamma0 or gamma1; 1D endpoints count 1 each."""
    idx = mesh.facets_of(which)
    return float(np.sum(mesh.facet_measures[idx])) if len(idx) else 0.0


def element_sample_points(mesh: Mesh, samples_per_element: int) -> np.ndarray:
    """Deterministic interior points per element (barycentric lattice + centroid)."""
    k = max(int(samples_per_element), 1)
    verts = mesh.nodes[mesh.elements]  # (E, d+1, d)
    d = mesh.dim
    if k == 1:
        bary = np.full((1, d + 1), 1.0 / (d + 1))
    else:
        pts = []
        m = k
        if d == 1:
            for a in range(m + 1):
                pts.append([a / m, 1 - a / m])
        else:
            for a in range(m + 1):
                for b in range(m + 1 - a):
                    pts.append([a / m, b / m, 1 - (a + b) / m])
        bary = np.array(pts)
    return np.einsum("pv,evd->epd", bary, verts).reshape(-1, d)


def ellipticity_constant(field: CoefficientField, mesh: Mesh, samples_per_element: int = 3) -> float:
    """Minimum over samples of the smallest eigenvalue of A(x)."""
    pts = element_sample_points(mesh, samples_per_element)
    A = field.at(pts)
    sym = 0.5 * (A + np.swapaxes(A, 1, 2))
    lam = np.linalg.eigvalsh(sym)[:, 0]
    lmin = float(lam.min())
    if lmin <= 0:
        raise NotPositiveDefinite(f"A(x) has eigenvalue {lmin} <= 0 at a sample point")
    return lmin


# ---------------------------------------------------------------------------
# escape vector field H
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EscapeField:
    """Vector field H with sampled estimates of sigma, delta and div H bounds."""

    H: Callable[[np.ndarray], np.ndarray]
    sigma_estimate: float = float("nan")
    delta_estimate: float = float("nan")
    div_bounds: tuple = (float("nan"), float("nan"))

    @staticmethod
    def radial(x0) -> "EscapeField":
        c = np.asarray(x0, dtype=float)
        return EscapeField(lambda x: np.asarray(x, dtype=float) - c)


@dataclass
class EscapeReport:
    sigma: float
    delta: float
    gamma0_max_flux: float
    div_min: float
    div_max: float
    div_upper_allowed: float
    sigma_ok: bool
    flux_ok: bool
    divergence_ok: bool
    sample_based: bool
    n_samples: int
    notes: list = field(default_factory=list)

    def as_field(self, H: EscapeField) -> EscapeField:
        return EscapeField(H.H, self.sigma, self.delta, (self.div_min, self.div_max))


def _jacobian(fn, pts: np.ndarray, h: float) -> np.ndarray:
    """Central-difference Jacobian J[p, i, k] = d fn_i / d x_k."""
    P, d = pts.shape
    f0 = np.asarray(fn(pts))
    out = np.zeros((P,) + f0.shape[1:] + (d,))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        out[..., k] = (np.asarray(fn(pts + e)) - np.asarray(fn(pts - e))) / (2 * h)
    return out


def check_escape_field(H: EscapeField, field: CoefficientField, mesh: Mesh, gamma: float,
                       samples_per_element: int = 2, fd_step: float = 1e-5) -> EscapeReport:
    """Sample the escape-field hypotheses on the mesh.

    sigma is the infimum over sample points of the smallest generalized
    eigenvalue of the symmetrized covariant derivative D_g H with respect to
    the metric G, i.e. inf over X != 0 of D_g H(X, X) / |X|_g^2. Christoffel
    symbols come from central differences of G, so for non-constant A the
    numbers are estimates. div H is the Euclidean divergence.
    """
    import scipy.linalg

    pts = element_sample_points(mesh, samples_per_element)
    d = mesh.dim
    Hv = np.asarray(H.H(pts), dtype=float).reshape(len(pts), d)
    DH = _jacobian(lambda x: np.asarray(H.H(x), dtype=float).reshape(len(x), d), pts, fd_step)
    G = field.G(pts)
    Ainv_is_const = field.kind in ("identity", "diagonal", "constant")
    if Ainv_is_const:
        Gamma = np.zeros((len(pts), d, d, d))
    else:
        dG = _jacobian(lambda x: field.G(x), pts, fd_step)  # dG[p, m, l, k] = d_k g_ml
        Ainv = field.at(pts)  # g^{im}
        # Gamma^i_{kl} = 1/2 g^{im} (d_k g_ml + d_l g_mk - d_m g_kl)
        t = (np.einsum("pmlk->pmkl", dG) + np.einsum("pmkl->pmkl", dG)
             - np.einsum("pklm->pmkl", dG))
        Gamma = 0.5 * np.einsum("pim,pmkl->pikl", Ainv, t)
    cov = DH + np.einsum("pikl,pl->pik", Gamma, Hv)  # (D_X H)^i = cov[i,k] X^k
    P = np.einsum("pij,pik->pjk", G, cov)
    Psym = 0.5 * (P + np.swapaxes(P, 1, 2))
    sig = np.array([scipy.linalg.eigh(Psym[p], G[p], eigvals_only=True)[0] for p in range(len(pts))])
    div = np.trace(DH, axis1=1, axis2=2)
    sigma = float(sig.min())

    fpts, fnorm, flab = [], [], []
    for fi in range(len(mesh.facets)):
        verts = mesh.nodes[mesh.facets[fi]]
        cand = [verts.mean(axis=0)] + list(verts)
        for c in cand:
            fpts.append(c)
            fnorm.append(mesh.facet_normals[fi])
            flab.append(mesh.facet_labels[fi])
    fpts = np.array(fpts)
    flux = np.sum(np.asarray(H.H(fpts), dtype=float).reshape(len(fpts), d) * np.array(fnorm), axis=1)
    flab = np.array(flab)
    g0 = flux[flab == GAMMA0]
    g1 = flux[flab == GAMMA1]
    g0max = float(g0.max()) if len(g0) else float("-inf")
    delta = float(g1.min()) if len(g1) else float("nan")
    upper = sigma * (gamma + 4.0) / (gamma + 2.0)
    tol = 1e-6
    divergence_ok_all = bool(np.all(div >= sigma - tol) and np.all(div <= upper + tol))
    notes = []
    if not Ainv_is_const:
        notes.append("non-constant A: covariant terms from finite differences; sample-based estimate")
    return EscapeReport(
        sigma=sigma, delta=delta, gamma0_max_flux=g0max,
        div_min=float(div.min()), div_max=float(div.max()), div_upper_allowed=upper,
        sigma_ok=sigma > 0, flux_ok=bool(g0max <= tol and delta > 0), divergence_ok=divergence_ok_all,
        sample_based=not Ainv_is_const, n_samples=len(pts), notes=notes,
    )


# ---------------------------------------------------------------------------
# mesh dump
# ---------------------------------------------------------------------------

def dump_mesh_lines(mesh: Mesh) -> list[str]:
    """Text records: counts, node coordinates, connectivity, facet labels."""
    lines = [f"nodes {mesh.n_nodes}"]
    for i, x in enumerate(mesh.nodes):
        lines.append("node " + str(i) + " " + " ".join(repr(float(c)) for c in x))
    lines.append(f"elements {len(mesh.elements)}")
    for i, e in enumerate(mesh.elements):
        lines.append("element " + str(i) + " " + " ".join(str(int(v)) for v in e))
    lines.append(f"facets {len(mesh.facets)}")
    for i, f in enumerate(mesh.facets):
        lines.append("facet " + str(i) + " " + " ".join(str(int(v)) for v in f) + " " + mesh.facet_labels[i])
    return lines


def write_mesh(mesh: Mesh, path, u=None, v=None) -> None:
    lines = dump_mesh_lines(mesh)
    if u is not None:
        lines.append(f"state {mesh.n_nodes}")
        for i in range(mesh.n_nodes):
            lines.append(f"value {i} {float(u[i])!r} {float(v[i])!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
