"""P1 finite element assembly for the Robin bilinear form.

Assembles the stiffness matrix A (grad-grad), the boundary mass matrix B
(optionally weighted per boundary edge), and the interior mass matrix M, all
by exact closed-form integration of piecewise-linear elements.  For any
coefficient vectors u, v the discrete form is ``u' A v - alpha * u' B v``.

Nodal functions are plain numpy arrays with one value per mesh vertex.

The module also provides exact integration of exponentials of linear
functions, ``exp(s * (x . d))``, over the mesh and its boundary.  These
integrals are evaluated per simplex via divided differences of exp, with a
series fallback at confluent exponents and factored log-scaling so that
arguments far beyond the overflow point remain usable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, Subdomain

__all__ = [
    "AssemblyError",
    "AssembledForms",
    "assemble",
    "apply_form",
    "integrate_exponential",
    "integrate_exponential_log",
    "integrate_exponential_flux",
    "lp_norm",
    "write_matrix_text",
    "read_matrix_text",
    "check_symmetric_matrix",
]

# exponent spread below which the divided difference switches to its series
_SERIES_SPREAD = 1e-8
# factored scaling kicks in beyond this exponent (spec overflow policy)
_OVERFLOW_EXPONENT = 700.0


class AssemblyError(ValueError):
    """Shape mismatch or invalid assembly input."""


@dataclass(frozen=True)
class AssembledForms:
    """Sparse matrices realizing the Robin form on a fixed mesh.

    A is positive semidefinite with nullspace spanned by constants (connected
    mesh), B is positive semidefinite, M is positive definite.  ``weight``
    holds the per-boundary-edge values of b (all ones by default).  ``mesh``
    may be None for matrix-only problems (e.g. explicit small pencils).
    """

    mesh: Optional[Mesh]
    A: sp.csr_matrix
    B: sp.csr_matrix
    M: sp.csr_matrix
    weight: np.ndarray

    @property
    def dimension(self):
        return self.A.shape[0]

    def form_matrix(self, alpha):
        """The pencil A - alpha * B as CSR."""
        return (self.A - alpha * self.B).tocsr()


def assemble(mesh: Mesh, weight=None) -> AssembledForms:
    """Assemble A, B, M on a mesh with an optional per-edge boundary weight.

    Element contributions use the exact closed forms for P1 elements, so A, B
    and M carry no quadrature error.  ``weight`` may be a scalar, an array
    with one value per boundary edge, or a callable evaluated at boundary
    edge midpoints.
    """
    nv = mesh.num_vertices
    tris = mesh.triangles
    verts = mesh.vertices

    p0 = verts[tris[:, 0]]
    p1 = verts[tris[:, 1]]
    p2 = verts[tris[:, 2]]
    areas = mesh.triangle_areas

    # gradients of barycentric coordinates: grad(lambda_i) = rot90(edge_i)/(2A)
    e0 = p2 - p1
    e1 = p0 - p2
    e2 = p1 - p0
    grads = np.stack([
        np.column_stack([-e0[:, 1], e0[:, 0]]),
        np.column_stack([-e1[:, 1], e1[:, 0]]),
        np.column_stack([-e2[:, 1], e2[:, 0]]),
    ], axis=1) / (2.0 * areas)[:, None, None]

    rows, cols, a_vals, m_vals = [], [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(tris[:, i])
            cols.append(tris[:, j])
            a_vals.append(areas * np.einsum("td,td->t", grads[:, i], grads[:, j]))
            m_vals.append(areas * ((2.0 if i == j else 1.0) / 12.0))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    A = sp.coo_matrix((np.concatenate(a_vals), (rows, cols)), shape=(nv, nv)).tocsr()
    m_vals = [np.broadcast_to(v, len(tris)) if np.isscalar(v) or v.ndim == 0 else v
              for v in m_vals]
    M = sp.coo_matrix((np.concatenate(m_vals), (rows, cols)), shape=(nv, nv)).tocsr()

    b_weight = _resolve_weight(mesh, weight)
    edges = mesh.boundary_edges
    lengths = mesh.boundary_lengths
    scale = b_weight * lengths / 6.0
    er, ec, ev = [], [], []
    for i in range(2):
        for j in range(2):
            er.append(edges[:, i])
            ec.append(edges[:, j])
            ev.append(scale * (2.0 if i == j else 1.0))
    B = sp.coo_matrix((np.concatenate(ev), (np.concatenate(er), np.concatenate(ec))),
                      shape=(nv, nv)).tocsr()

    A.sum_duplicates()
    B.sum_duplicates()
    M.sum_duplicates()
    A.eliminate_zeros()
    B.eliminate_zeros()
    M.eliminate_zeros()
    return AssembledForms(mesh=mesh, A=A, B=B, M=M, weight=b_weight)


def _resolve_weight(mesh, weight):
    nb = len(mesh.boundary_edges)
    if weight is None:
        return np.ones(nb)
    if callable(weight):
        mid = 0.5 * (mesh.vertices[mesh.boundary_edges[:, 0]]
                     + mesh.vertices[mesh.boundary_edges[:, 1]])
        return np.array([float(weight(x, y)) for x, y in mid])
    w = np.asarray(weight, dtype=float)
    if w.ndim == 0:
        return np.full(nb, float(w))
    if w.shape != (nb,):
        raise AssemblyError(f"weight length {w.shape} != boundary edge count {nb}")
    return w.copy()


def apply_form(forms: AssembledForms, alpha: float, u, v) -> float:
    """Evaluate the discrete Robin form  u' A v - alpha * u' B v."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = forms.dimension
    if u.shape != (n,) or v.shape != (n,):
        raise AssemblyError(f"nodal vectors must have shape ({n},)")
    return float(u @ (forms.A @ v) - alpha * (u @ (forms.B @ v)))


# ---------------------------------------------------------------------------
# exact integration of exp(s * x.d)

def integrate_exponential(mesh: Mesh, d, s: float):
    """Exact integrals of exp(s * x.d) over the domain and over its boundary.

    Returns ``(volume, boundary)``.  The computation is carried out with a
    factored exponential scale, so arbitrarily large ``s`` never overflows
    internally; the returned plain floats may still be ``inf`` when the true
    value exceeds the double range (use :func:`integrate_exponential_log`
    in that regime).
    """
    log_vol, log_bnd = integrate_exponential_log(mesh, d, s)
    return math.exp(log_vol) if log_vol < 709.0 else math.inf, \
        math.exp(log_bnd) if log_bnd < 709.0 else math.inf


def integrate_exponential_log(mesh: Mesh, d, s: float, triangles=None):
    """Log of the exact integrals of exp(s * x.d) (volume, boundary).

    ``triangles`` restricts the volume integral to a triangle index subset
    (the boundary integral is always over the full boundary).
    """
    d = _check_unit(d)
    if not math.isfinite(s):
        raise AssemblyError(f"exponent rate must be finite, got {s}")
    g = s * (mesh.vertices @ d)

    tris = mesh.triangles if triangles is None else mesh.triangles[triangles]
    areas = mesh.triangle_areas if triangles is None else mesh.triangle_areas[triangles]
    log_vol = _log_volume_integral(g, tris, areas)

    edges = mesh.boundary_edges
    lengths = mesh.boundary_lengths
    log_bnd = _log_boundary_integral(g, edges, lengths)
    return log_vol, log_bnd


def integrate_exponential_flux(mesh: Mesh, d, s: float) -> float:
    """Exact boundary integral of exp(s x.d) (nu . d), the divergence flux.

    For polygonal domains this equals s times the volume integral exactly
    (divergence theorem applied to the field d exp(s x.d)).
    """
    d = _check_unit(d)
    g = s * (mesh.vertices @ d)
    ge = g[mesh.boundary_edges]
    gmax = float(ge.max())
    dd = _exp_divided_diff2(ge[:, 0] - gmax, ge[:, 1] - gmax)
    nu_d = mesh.boundary_normals @ d
    return math.exp(gmax) * float(np.sum(mesh.boundary_lengths * nu_d * dd))


def _log_volume_integral(g, tris, areas):
    if len(tris) == 0:
        return -math.inf
    gt = g[tris]                       # (NT, 3)
    gmax = float(gt.max())
    dd = _exp_divided_diff3(gt - gmax)  # exp[g0,g1,g2] with factored scale
    total = float(np.sum(2.0 * areas * dd))
    return gmax + math.log(total)


def _log_boundary_integral(g, edges, lengths):
    ge = g[edges]                      # (NB, 2)
    gmax = float(ge.max())
    dd = _exp_divided_diff2(ge[:, 0] - gmax, ge[:, 1] - gmax)
    total = float(np.sum(lengths * dd))
    return gmax + math.log(total)


def _exp_divided_diff2(a, b):
    """First divided difference of exp: (e^a - e^b)/(a - b), stable."""
    diff = a - b
    small = np.abs(diff) < _SERIES_SPREAD
    safe = np.where(small, 1.0, diff)
    out = np.exp(b) * np.expm1(safe) / safe
    # centered two-term series at confluence
    mid = 0.5 * (a + b)
    series = np.exp(mid) * (1.0 + diff * diff / 24.0)
    return np.where(small, series, out)


def _exp_divided_diff3(g):
    """Second divided difference exp[g0, g1, g2], rows of g (already scaled).

    Uses the recursive formula with the middle node pivoting; switches to the
    centered series when the exponent spread on a simplex falls below the
    confluence threshold (removable singularity).
    """
    gs = np.sort(g, axis=1)            # ascending: c <= b <= a
    c, b, a = gs[:, 0], gs[:, 1], gs[:, 2]
    spread = a - c
    small = spread < _SERIES_SPREAD

    safe = np.where(small, 1.0, spread)
    upper = _exp_divided_diff2(a, b)
    lower = _exp_divided_diff2(b, c)
    out = (upper - lower) / safe

    mu = (a + b + c) / 3.0
    da, db, dc = a - mu, b - mu, c - mu
    # exp[g] = e^mu * sum_m h_m(centered) / (m+2)!, h_1 vanishes and terms
    # beyond h_2 are below machine precision at the confluence threshold
    h2 = da * da + db * db + dc * dc + da * db + da * dc + db * dc
    series = np.exp(mu) * (0.5 + h2 / 24.0)
    return np.where(small, series, out)


def _check_unit(d):
    d = np.asarray(d, dtype=float)
    if d.shape != (2,):
        raise AssemblyError("direction must be a 2-vector")
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise AssemblyError(f"direction must be a unit vector, |d| = {np.linalg.norm(d)}")
    return d


# ---------------------------------------------------------------------------
# Lp norms of P1 interpolants (order-4 rule, 6 points per triangle)

_TRI_QW = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)
_TRI_QP = np.array([
    [0.108103018168070, 0.445948490915965, 0.445948490915965],
    [0.445948490915965, 0.108103018168070, 0.445948490915965],
    [0.445948490915965, 0.445948490915965, 0.108103018168070],
    [0.816847572980459, 0.091576213509771, 0.091576213509771],
    [0.091576213509771, 0.816847572980459, 0.091576213509771],
    [0.091576213509771, 0.091576213509771, 0.816847572980459],
])


def lp_norm(forms: AssembledForms, u, p: float, region: Optional[Subdomain] = None) -> float:
    """(integral of |u|^p over the region)^(1/p) on the P1 interpolant.

    ``region`` defaults to the whole domain.  Uses the degree-4, 6-point
    triangle rule; exact for integer p <= 4 on P1 data.
    """
    return lp_norm_mesh(forms.mesh, u, p, region)


def lp_norm_mesh(mesh: Mesh, u, p: float, region: Optional[Subdomain] = None) -> float:
    if p < 1:
        raise AssemblyError(f"Lp norm needs p >= 1, got {p}")
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.num_vertices,):
        raise AssemblyError("nodal vector length mismatch")
    tri_idx = None if region is None else region.triangle_indices
    tris = mesh.triangles if tri_idx is None else mesh.triangles[tri_idx]
    areas = mesh.triangle_areas if tri_idx is None else mesh.triangle_areas[tri_idx]
    vals = u[tris] @ _TRI_QP.T          # (NT, 6)
    integrand = np.abs(vals) ** p
    return float(np.sum(areas * (integrand @ _TRI_QW))) ** (1.0 / p)


def quad_counts():
    """Quadrature rule summary (order, points per triangle)."""
    return 4, len(_TRI_QW)


# ---------------------------------------------------------------------------
# coordinate text export: "NROWS NNZ" then "row col value", lower triangle

def write_matrix_text(mat, path):
    coo = sp.coo_matrix(mat)
    keep = coo.row >= coo.col
    rows, cols, vals = coo.row[keep], coo.col[keep], coo.data[keep]
    order = np.lexsort((cols, rows))
    lines = [f"{mat.shape[0]} {len(vals)}"]
    lines.extend(f"{rows[k]} {cols[k]} {vals[k]:.16e}" for k in order)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_matrix_text(path):
    with open(path) as fh:
        tokens = fh.read().split()
    it = iter(tokens)
    n, nnz = int(next(it)), int(next(it))
    rows, cols, vals = [], [], []
    for _ in range(nnz):
        r, c, v = int(next(it)), int(next(it)), float(next(it))
        rows.append(r)
        cols.append(c)
        vals.append(v)
        if r != c:
            rows.append(c)
            cols.append(r)
            vals.append(v)
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def check_symmetric_matrix(mat, tol=1e-12):
    """Verify symmetry, finiteness, and absence of stored zeros."""
    csr = sp.csr_matrix(mat)
    if not np.all(np.isfinite(csr.data)):
        raise AssemblyError("matrix has non-finite entries")
    asym = abs(csr - csr.T)
    norm = sp.linalg.norm(csr) or 1.0
    if asym.data.size and asym.data.max() > tol * norm:
        raise AssemblyError("matrix is not symmetric")
    return True
