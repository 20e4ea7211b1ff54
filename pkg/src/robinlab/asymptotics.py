"""Parameter sweeps: eigenvalue ratios, concentration, and interior estimates.

Sweeps escalate the mesh by uniform refinement until alpha * h <= 0.5 (the
eigenfunctions live in a boundary layer of width ~ 1/alpha, so the mesh must
track it); the refinement level is recorded with every data point.  The 1D
interval is handled by the analytic branch equations and is restricted to
n <= 2: it has at most two negative eigenvalues for any alpha, so higher
ratio diagnostics are meaningless there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import reports
from .analytic import interval_negative_spectrum
from .assembly import AssembledForms, assemble, lp_norm_mesh
from .eigen import SolverError, SolverOptions, Spectrum, solve
from .mesh import DomainSpec, Mesh, generate_mesh, refine, shrink_subdomain

__all__ = [
    "SweepError",
    "SweepConfig",
    "SweepRecord",
    "SweepResult",
    "ConcentrationReport",
    "InteriorEstimate",
    "MeshEscalator",
    "run_sweep",
    "concentration",
    "interior_estimate",
    "weighted_limsup_check",
    "write_sweep_csv",
    "write_concentration_csv",
]

RESOLUTION_CONSTANT = 0.5  # alpha * h_max <= this


class SweepError(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    alphas: Tuple[float, ...]
    n_max: int
    p: float = 2.0
    q: float = 1.0
    r: float = 4.0
    margin: float = 0.25
    resolution: float = RESOLUTION_CONSTANT
    tolerance: float = 1e-8
    dense_threshold: int = 4000

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        object.__setattr__(self, "alphas", alphas)
        if not alphas or any(a <= 0 for a in alphas):
            raise SweepError("sweep alphas must be positive")
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise SweepError("sweep alphas must be strictly increasing")
        if self.n_max < 1:
            raise SweepError("n_max must be >= 1")

    def solver_options(self, count=None):
        return SolverOptions(count=count or self.n_max, tolerance=self.tolerance,
                             dense_threshold=self.dense_threshold)

    def to_dict(self):
        return {"alphas": list(self.alphas), "n_max": self.n_max, "p": self.p,
                "q": self.q, "r": self.r, "margin": self.margin,
                "resolution": self.resolution, "tolerance": self.tolerance,
                "dense_threshold": self.dense_threshold}


@dataclass(frozen=True)
class SweepRecord:
    alpha: float
    n: int
    lam: float
    ratio: float
    residual: float
    mesh_level: int


@dataclass
class SweepResult:
    records: List[SweepRecord]
    failures: List[Tuple[float, str]] = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures

    def ratios(self, n):
        return [(r.alpha, r.ratio) for r in self.records if r.n == n]


@dataclass(frozen=True)
class ConcentrationReport:
    alpha: float
    n: int
    p: float
    q: float
    r: float
    interior_p_norm: float
    global_q_norm: float
    global_r_norm: float


@dataclass(frozen=True)
class InteriorEstimate:
    alpha: float
    n: int
    p: float
    cutoff: str
    bound: float
    lam: float
    numerator: float
    denominator: float
    vacuous: bool
    holds: bool
    slack: float


class MeshEscalator:
    """Refinement-chain cache with the alpha * h <= resolution rule."""

    def __init__(self, spec: DomainSpec, resolution: float = RESOLUTION_CONSTANT):
        self.spec = spec
        self.resolution = resolution
        self._levels: List[Mesh] = [generate_mesh(spec)]
        self._forms: Dict[int, AssembledForms] = {}

    def level_for(self, alpha: float) -> int:
        # measured h_max per level: disk snapping keeps refined triangles
        # slightly above h/2, so predicted halving would overshoot the rule
        level = 0
        while alpha * self.mesh(level).h_max > self.resolution:
            level += 1
        return level

    def mesh(self, level: int) -> Mesh:
        while len(self._levels) <= level:
            self._levels.append(refine(self._levels[-1]))
        return self._levels[level]

    def forms(self, level: int, weight=None) -> AssembledForms:
        if weight is not None:
            return assemble(self.mesh(level), weight=weight)
        if level not in self._forms:
            self._forms[level] = assemble(self.mesh(level))
        return self._forms[level]

    def at(self, alpha: float):
        level = self.level_for(alpha)
        return level, self.mesh(level), self.forms(level)


def run_sweep(config: SweepConfig, domain: Union[DomainSpec, str],
              escalator: Optional[MeshEscalator] = None) -> SweepResult:
    """Solve the lowest n_max eigenpairs over the alpha grid.

    ``domain`` is a :class:`DomainSpec`, or the string ``"interval"`` for the
    1D analytic reference path (restricted to n_max <= 2).  Output records
    are ordered by (alpha, n); solver failures at an alpha are reported as
    failure entries without aborting the rest of the sweep.
    """
    if isinstance(domain, str):
        if domain != "interval":
            raise SweepError(f"unknown analytic domain {domain!r}")
        return _interval_sweep(config)

    esc = escalator or MeshEscalator(domain, config.resolution)
    records = []
    failures = []
    for alpha in config.alphas:
        level, _, forms = esc.at(alpha)
        try:
            spectrum = solve(forms, alpha, config.solver_options())
        except SolverError as exc:
            failures.append((alpha, str(exc)))
            continue
        for n, pair in enumerate(spectrum.pairs, start=1):
            records.append(SweepRecord(alpha=alpha, n=n, lam=pair.lam,
                                       ratio=pair.lam / (-alpha * alpha),
                                       residual=pair.residual, mesh_level=level))
    return SweepResult(records=records, failures=failures)


def _interval_sweep(config):
    if config.n_max > 2:
        raise SweepError(
            "the interval has at most two negative eigenvalues for any alpha; "
            "n_max must be <= 2 on the 1D analytic path")
    records = []
    for alpha in config.alphas:
        branches = interval_negative_spectrum(alpha)
        for n, b in enumerate(branches[:config.n_max], start=1):
            records.append(SweepRecord(alpha=alpha, n=n, lam=b.lam,
                                       ratio=b.lam / (-alpha * alpha),
                                       residual=0.0, mesh_level=-1))
    return SweepResult(records=records)


def concentration(spectrum: Spectrum, mesh: Mesh, p: float, q: float, r: float,
                  margin: float) -> List[ConcentrationReport]:
    """Interior/global norm diagnostics for each eigenfunction.

    Each eigenfunction is renormalized to unit L^p norm over the domain, then
    the interior L^p norm (over the margin-shrunk subdomain), the global L^q
    norm, and the global L^r norm are reported.  Requires 1 <= q < p < r.
    """
    if not (1.0 <= q < p < r):
        raise SweepError(f"exponents must satisfy 1 <= q < p < r, got q={q}, p={p}, r={r}")
    region = shrink_subdomain(mesh, margin)
    out = []
    for n, pair in enumerate(spectrum.pairs, start=1):
        scale = lp_norm_mesh(mesh, pair.psi, p)
        u = pair.psi / scale
        out.append(ConcentrationReport(
            alpha=spectrum.alpha, n=n, p=p, q=q, r=r,
            interior_p_norm=lp_norm_mesh(mesh, u, p, region),
            global_q_norm=lp_norm_mesh(mesh, u, q),
            global_r_norm=lp_norm_mesh(mesh, u, r)))
    return out


# quadrature data shared with assembly's 6-point rule
from .assembly import _TRI_QP, _TRI_QW  # noqa: E402


def interior_estimate(spectrum: Spectrum, mesh: Mesh, p: float,
                      margin: float) -> List[InteriorEstimate]:
    """Interior lower-bound check with a piecewise-linear tent cutoff.

    The cutoff phi rises linearly with boundary distance, reaching one at
    distance ``margin`` and vanishing on the boundary; the estimate
    ``lambda_n >= -(p-1)^{-1} int |psi|^p |grad phi|^2 / int |psi|^p phi^2``
    is evaluated by triangle quadrature.  Denominators below 1e-14 are
    flagged vacuous: at large alpha the eigenfunction mass has left the
    interior and the quotient carries no information.
    """
    if p < 2:
        raise SweepError(f"interior estimate requires p >= 2, got {p}")
    phi = np.clip(mesh.boundary_distances / margin, 0.0, 1.0)

    tris = mesh.triangles
    verts = mesh.vertices
    areas = mesh.triangle_areas
    # P1 gradient of phi per triangle
    p0, p1, p2 = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    f0, f1, f2 = phi[tris[:, 0]], phi[tris[:, 1]], phi[tris[:, 2]]
    inv2a = 1.0 / (2.0 * areas)
    gx = (f0 * (p1[:, 1] - p2[:, 1]) + f1 * (p2[:, 1] - p0[:, 1])
          + f2 * (p0[:, 1] - p1[:, 1])) * inv2a
    gy = (f0 * (p2[:, 0] - p1[:, 0]) + f1 * (p0[:, 0] - p2[:, 0])
          + f2 * (p1[:, 0] - p0[:, 0])) * inv2a
    grad2 = gx * gx + gy * gy
    phi_q = phi[tris] @ _TRI_QP.T      # (NT, 6)

    out = []
    for n, pair in enumerate(spectrum.pairs, start=1):
        psi_q = np.abs(pair.psi[tris] @ _TRI_QP.T) ** p
        num = float(np.sum(areas * grad2 * (psi_q @ _TRI_QW)))
        den = float(np.sum(areas * ((psi_q * phi_q ** 2) @ _TRI_QW)))
        vacuous = den < 1e-14
        if vacuous:
            bound = -math.inf
            holds = True
        else:
            bound = -num / den / (p - 1.0)
            tol = 1e-6 * max(1.0, abs(pair.lam), abs(bound))
            holds = pair.lam >= bound - tol
        out.append(InteriorEstimate(
            alpha=spectrum.alpha, n=n, p=p,
            cutoff=f"tent(margin={margin:g})", bound=bound, lam=pair.lam,
            numerator=num, denominator=den, vacuous=vacuous, holds=holds,
            slack=pair.lam - bound))
    return out


@dataclass(frozen=True)
class WeightedRecord:
    alpha: float
    n: int
    lam: float
    normalized_ratio: float
    mesh_level: int


@dataclass
class WeightedReport:
    records: List[WeightedRecord]
    max_weight: float
    tolerance: float
    passed: bool


def weighted_limsup_check(domain: DomainSpec, weight, alphas: Sequence[float],
                          n_max: int, tolerance: float = 0.05,
                          resolution: float = RESOLUTION_CONSTANT,
                          escalator: Optional[MeshEscalator] = None) -> WeightedReport:
    """Sweep the weighted problem and test lambda_n / (-alpha^2 (max b)^2) <= 1 + tol.

    ``weight`` is a scalar, a per-edge array (finest level), or a callable
    b(x, y) evaluated at boundary edge midpoints.  The limsup inequality is
    asserted at the largest alpha only; earlier values are recorded.
    """
    cfg = SweepConfig(alphas=tuple(alphas), n_max=n_max, resolution=resolution)
    esc = escalator or MeshEscalator(domain, resolution)
    records = []
    bmax = None
    for alpha in cfg.alphas:
        level = esc.level_for(alpha)
        mesh = esc.mesh(level)
        forms = assemble(mesh, weight=weight)
        if bmax is None or forms.weight.max() > bmax:
            bmax = float(forms.weight.max())
        if bmax <= 0:
            raise SweepError("weighted check requires max b > 0")
        spectrum = solve(forms, alpha, cfg.solver_options())
        for n, pair in enumerate(spectrum.pairs, start=1):
            records.append(WeightedRecord(
                alpha=alpha, n=n, lam=pair.lam,
                normalized_ratio=pair.lam / (-alpha * alpha * bmax * bmax),
                mesh_level=level))
    last = cfg.alphas[-1]
    passed = all(rec.normalized_ratio <= 1.0 + tolerance
                 for rec in records if rec.alpha == last)
    return WeightedReport(records=records, max_weight=bmax,
                          tolerance=tolerance, passed=passed)


# ---------------------------------------------------------------------------

def write_sweep_csv(result: SweepResult, path):
    reports.write_csv(path, ["alpha", "n", "lambda", "ratio", "residual", "mesh_level"],
                      [(r.alpha, r.n, r.lam, r.ratio, r.residual, r.mesh_level)
                       for r in result.records])


def write_concentration_csv(rows: List[ConcentrationReport], path):
    reports.write_csv(path, ["alpha", "n", "p", "q", "r",
                             "interior_p", "global_q", "global_r"],
                      [(x.alpha, x.n, x.p, x.q, x.r, x.interior_p_norm,
                        x.global_q_norm, x.global_r_norm) for x in rows])
