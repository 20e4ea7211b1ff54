"""Variational machinery: exponential probes, level-set caps, deflation bounds.

A direction probe is the normalized exponential ``u_d(x) = c exp(alpha x.d)``
whose exact Robin energy never exceeds ``-alpha^2``.  Deflating a probe
against the first n eigenvectors and evaluating its Rayleigh quotient yields
a computable upper bound for the (n+1)-st eigenvalue; the direction search
scans a grid of unit directions for one whose probe has small overlap with a
given eigenvector basis.

All probe normalizations and integrals are exact (closed-form exponential
integration), carried in log scale so that large alpha never overflows.
Overlaps against eigenvectors use the discrete M-inner product of the nodal
interpolant, which costs O(h^2) consistency; the discrete Rayleigh quotient
of the deflated probe is returned alongside every bound as a cross-check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .assembly import AssembledForms, apply_form, integrate_exponential_log, _check_unit
from .eigen import Spectrum
from .mesh import Mesh

__all__ = [
    "VariationalError",
    "DegenerateContactError",
    "SpanError",
    "DirectionProbe",
    "LevelSetCap",
    "DeflationBasis",
    "IndBound",
    "DirectionSearchResult",
    "make_probe",
    "probe_energy",
    "caps",
    "cap_disjointness",
    "mass_outside_cap",
    "deflate",
    "ind_bound",
    "direction_search",
    "write_bound_json",
]

_CONTACT_TOL = 1e-12


class VariationalError(ValueError):
    """Invalid input to a variational operation."""


class DegenerateContactError(VariationalError):
    """The maximizing vertex sets of two directions intersect (polygonal
    degeneracy: the same corner attains both maxima)."""


class SpanError(VariationalError):
    """Test vector lies (numerically) in the span of the deflation basis."""


@dataclass(frozen=True)
class DirectionProbe:
    """Normalized exponential test function for one direction and alpha.

    ``values`` holds the vertex values of c * exp(alpha x.d); the
    normalization constant is stored as ``log_c`` so the probe stays usable
    when exp(alpha x.d) spans hundreds of orders of magnitude.  The exact
    integrals of exp(2 alpha x.d) over the domain and boundary are kept in
    log scale.
    """

    d: np.ndarray
    alpha: float
    log_c: float
    values: np.ndarray
    log_volume: float
    log_boundary: float

    @property
    def volume_integral(self):
        return math.exp(self.log_volume) if self.log_volume < 709 else math.inf

    @property
    def boundary_integral(self):
        return math.exp(self.log_boundary) if self.log_boundary < 709 else math.inf


@dataclass(frozen=True)
class LevelSetCap:
    """Triangles fully inside the half-plane slab {x.d > kappa}.

    ``kappa_d`` is the maximum of x.d over the mesh and ``contact`` the
    vertex set attaining it (within 1e-12); the contact set always lies on
    the boundary.
    """

    d: np.ndarray
    kappa: float
    triangle_indices: np.ndarray
    kappa_d: float
    contact: np.ndarray


@dataclass(frozen=True)
class DeflationBasis:
    """M-orthonormal eigenvectors with their eigenvalues."""

    vectors: List[np.ndarray]
    eigenvalues: List[float]

    def __post_init__(self):
        if len(self.vectors) != len(self.eigenvalues):
            raise VariationalError("basis vectors and eigenvalues must pair up")

    def __len__(self):
        return len(self.vectors)

    @classmethod
    def from_spectrum(cls, spectrum: Spectrum, n: int, forms: AssembledForms):
        if n > len(spectrum.pairs):
            raise VariationalError(f"spectrum holds {len(spectrum.pairs)} pairs, need {n}")
        vecs = [spectrum.pairs[i].psi for i in range(n)]
        lams = [spectrum.pairs[i].lam for i in range(n)]
        basis = cls(vecs, lams)
        basis.check_gram(forms)
        return basis

    def check_gram(self, forms, tol=1e-8):
        if not self.vectors:
            return
        V = np.column_stack(self.vectors)
        gram = V.T @ (forms.M @ V)
        if np.abs(gram - np.eye(len(self.vectors))).max() > tol:
            raise VariationalError("deflation basis is not M-orthonormal")


@dataclass(frozen=True)
class IndBound:
    """Deflated upper bound for the next eigenvalue.

    ``value`` is the exact-energy bound
    ``(-alpha^2 - sum_i lambda_i o_i^2) / (1 - sum_i o_i^2)`` with overlaps
    ``o_i`` taken in the discrete M-inner product; ``rayleigh`` is the
    directly evaluated discrete Rayleigh quotient of the deflated probe.
    """

    alpha: float
    n: int
    d: np.ndarray
    overlaps: np.ndarray
    numerator: float
    denominator: float
    value: float
    rayleigh: float
    probe_energy_discrete: float
    probe_norm_discrete: float


@dataclass(frozen=True)
class DirectionSearchResult:
    d: np.ndarray
    index: int
    overlap_sum: float
    success: bool
    delta: float
    all_overlap_sums: np.ndarray


# ---------------------------------------------------------------------------

def make_probe(mesh: Mesh, alpha: float, d) -> DirectionProbe:
    """Build the L2-normalized exponential probe for a unit direction.

    The normalization uses the exact volume integral,
    c = (int exp(2 alpha x.d))^(-1/2), so the continuous L2 norm is exactly
    one; vertex values are evaluated in log space.
    """
    if not alpha > 0:
        raise VariationalError(f"alpha must be positive, got {alpha}")
    d = _check_unit(d)
    log_vol, log_bnd = integrate_exponential_log(mesh, d, 2.0 * alpha)
    log_c = -0.5 * log_vol
    values = np.exp(log_c + alpha * (mesh.vertices @ d))
    values.flags.writeable = False
    return DirectionProbe(d=d, alpha=float(alpha), log_c=log_c, values=values,
                          log_volume=log_vol, log_boundary=log_bnd)


def probe_energy(probe: DirectionProbe) -> float:
    """Exact Robin energy a(u_d, u_d) = alpha^2 - alpha * (boundary/volume).

    Uses the exact exponential integrals, not the finite element interpolant;
    the divergence theorem forces the result below -alpha^2 whenever the
    outward normals satisfy nu . d <= 1 (always).
    """
    a = probe.alpha
    ratio = math.exp(probe.log_boundary - probe.log_volume)
    return a * a - a * ratio


def caps(mesh: Mesh, d, kappas: Sequence[float]) -> List[LevelSetCap]:
    """Level-set caps of x.d at the requested thresholds.

    A triangle belongs to the cap at kappa when all of its vertices satisfy
    x.d >= kappa (its interior then lies in the open half-plane, since x.d
    cannot be constant on a positive-area triangle).  Caps are returned in
    input order; nesting across decreasing kappa is checked.
    """
    d = _check_unit(d)
    proj = mesh.vertices @ d
    kappa_d = float(proj.max())
    contact = np.flatnonzero(proj >= kappa_d - _CONTACT_TOL)
    if contact.size == 0 or not np.isin(contact, mesh.boundary_vertices).all():
        raise VariationalError("contact set must be nonempty and on the boundary")
    tri_min = proj[mesh.triangles].min(axis=1)

    out = []
    for kappa in kappas:
        inside = np.flatnonzero(tri_min >= kappa)
        out.append(LevelSetCap(d=d, kappa=float(kappa), triangle_indices=inside,
                               kappa_d=kappa_d, contact=contact))
    # nesting: smaller kappa gives a superset
    pairs = sorted(out, key=lambda c: c.kappa)
    for small, large in zip(pairs, pairs[1:]):
        if not np.isin(large.triangle_indices, small.triangle_indices).all():
            raise VariationalError("cap nesting violated")
    return out


def cap_disjointness(mesh: Mesh, d, e) -> float:
    """Largest epsilon from a decreasing search with disjoint near-top caps.

    Checks the triangles touching {x.d > kappa_d - eps} against those
    touching {x.e > kappa_e - eps} (outer approximation, so disjointness of
    the checked sets certifies disjointness of the continuum slabs).  Raises
    :class:`DegenerateContactError` when the two contact sets share a vertex.
    """
    d = _check_unit(d)
    e = _check_unit(e)
    if np.allclose(d, e, atol=1e-15):
        raise VariationalError("directions must be distinct")
    pd = mesh.vertices @ d
    pe = mesh.vertices @ e
    kd, ke = float(pd.max()), float(pe.max())
    contact_d = np.flatnonzero(pd >= kd - _CONTACT_TOL)
    contact_e = np.flatnonzero(pe >= ke - _CONTACT_TOL)
    if np.intersect1d(contact_d, contact_e).size:
        raise DegenerateContactError(
            "maximizing vertex sets intersect; the polygonal corner attains "
            "both directional maxima")

    tri_max_d = pd[mesh.triangles].max(axis=1)
    tri_max_e = pe[mesh.triangles].max(axis=1)
    eps = min(kd - float(pd.min()), ke - float(pe.min()))
    for _ in range(60):
        touch_d = tri_max_d > kd - eps
        touch_e = tri_max_e > ke - eps
        if not np.any(touch_d & touch_e):
            return eps
        eps *= 0.5
    raise DegenerateContactError("no positive disjointness margin found")


def mass_outside_cap(probe: DirectionProbe, cap: LevelSetCap, mesh: Mesh) -> float:
    """Exact probe mass outside the cap, c^2 int_{complement} exp(2 alpha x.d)."""
    if not np.allclose(probe.d, cap.d):
        raise VariationalError("cap was built for a different direction")
    nt = mesh.num_triangles
    complement = np.setdiff1d(np.arange(nt), cap.triangle_indices)
    if complement.size == 0:
        return 0.0
    log_out, _ = integrate_exponential_log(mesh, probe.d, 2.0 * probe.alpha,
                                           triangles=complement)
    return math.exp(log_out - probe.log_volume)


def deflate(v, basis: DeflationBasis, forms: AssembledForms):
    """Remove the M-projections onto the basis: v - sum <v, psi_i> psi_i.

    Raises :class:`SpanError` when the remainder is numerically zero (the
    excluded case where v lies in the span of the basis).
    """
    v = np.asarray(v, dtype=float)
    w = v.copy()
    for _ in range(2):  # second pass keeps orthogonality at 1e-10 even for tight spans
        for q in basis.vectors:
            w = w - (q @ (forms.M @ w)) * q
    norm_v = math.sqrt(v @ (forms.M @ v))
    norm_w = math.sqrt(max(w @ (forms.M @ w), 0.0))
    if norm_w < 1e-12 * max(norm_v, 1.0):
        raise SpanError("vector lies in the span of the deflation basis")
    return w


def ind_bound(probe: DirectionProbe, basis: DeflationBasis, forms: AssembledForms) -> IndBound:
    """Upper bound for lambda_{n+1} from the deflated exponential probe.

    Requires the overlap mass sum to stay below one (the delta < 1
    condition); raises :class:`SpanError` otherwise.
    """
    u = probe.values
    M = forms.M
    overlaps = np.array([q @ (M @ u) for q in basis.vectors])
    s2 = float(np.sum(overlaps ** 2))
    if s2 >= 1.0 - 1e-10:
        raise SpanError(f"probe inside span: overlap mass {s2:.6f} >= 1")

    lams = np.asarray(basis.eigenvalues)
    numerator = -probe.alpha ** 2 - float(np.sum(lams * overlaps ** 2))
    denominator = 1.0 - s2
    value = numerator / denominator

    energy = apply_form(forms, probe.alpha, u, u)
    norm2 = float(u @ (M @ u))
    rayleigh = (energy - float(np.sum(lams * overlaps ** 2))) / (norm2 - s2)

    return IndBound(alpha=probe.alpha, n=len(basis), d=probe.d, overlaps=overlaps,
                    numerator=numerator, denominator=denominator, value=value,
                    rayleigh=rayleigh, probe_energy_discrete=energy,
                    probe_norm_discrete=norm2)


def direction_search(mesh: Mesh, forms: AssembledForms, alpha: float,
                     basis: DeflationBasis, m: int, delta: float) -> DirectionSearchResult:
    """Scan m equispaced unit directions for minimal overlap with the basis.

    Returns the minimizing direction (ties broken by smallest index) and a
    success flag ``min <= delta``.  Failure is flagged, not raised: small
    overlaps are only guaranteed along subsequences of large alpha.
    """
    if m < 2:
        raise VariationalError(f"direction grid needs m >= 2, got {m}")
    M = forms.M
    sums = np.empty(m)
    for j in range(m):
        theta = 2.0 * math.pi * j / m
        d = np.array([math.cos(theta), math.sin(theta)])
        probe = make_probe(mesh, alpha, d)
        overlaps = np.array([q @ (M @ probe.values) for q in basis.vectors])
        sums[j] = float(np.sum(overlaps ** 2))
    j_star = int(np.argmin(sums))  # argmin takes the smallest index on ties
    theta = 2.0 * math.pi * j_star / m
    d_star = np.array([math.cos(theta), math.sin(theta)])
    return DirectionSearchResult(d=d_star, index=j_star,
                                 overlap_sum=float(sums[j_star]),
                                 success=bool(sums[j_star] <= delta),
                                 delta=float(delta), all_overlap_sums=sums)


def write_bound_json(bound: IndBound, path, lambda_next: Optional[float] = None):
    record = {
        "alpha": bound.alpha,
        "n": bound.n,
        "d": list(map(float, bound.d)),
        "overlaps": list(map(float, bound.overlaps)),
        "bound": bound.value,
        "rayleigh_cross_check": bound.rayleigh,
        "lambda_next": lambda_next,
        "margin": None if lambda_next is None else bound.value - lambda_next,
    }
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
