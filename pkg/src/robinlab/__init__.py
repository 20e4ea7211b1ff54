"""robinlab: a numerical laboratory for Robin Laplacian eigenvalue asymptotics.

Implements the eigenvalue problem -Lap u = lambda u with du/dnu = alpha u on
bounded 2D domains, together with the variational machinery (exponential test
functions, deflated upper bounds, level-set caps, direction search) needed to
verify that lambda_n(alpha) / (-alpha^2) -> 1 and that eigenfunctions
concentrate at the boundary as alpha grows.
"""

from .mesh import (DomainSpec, Mesh, MeshError, Subdomain, generate_mesh,
                   read_mesh_text, refine, shrink_subdomain, write_mesh_text)
from .assembly import (AssembledForms, AssemblyError, apply_form, assemble,
                       integrate_exponential, integrate_exponential_log, lp_norm,
                       read_matrix_text, write_matrix_text)
from .eigen import (EigenPair, SolverError, SolverOptions, Spectrum, gram_schmidt,
                    negative_count, solve, write_spectrum_json)
from .analytic import (AnalyticError, DiskBranch, HalfSpaceReference, IntervalBranch,
                       bessel_i, disk_negative_spectrum, halfspace_check,
                       interval_negative_spectrum)
from .variational import (DeflationBasis, DirectionProbe, DirectionSearchResult,
                          IndBound, LevelSetCap, SpanError, VariationalError, caps,
                          cap_disjointness, deflate, direction_search, ind_bound,
                          make_probe, mass_outside_cap, probe_energy)
from .asymptotics import (ConcentrationReport, InteriorEstimate, MeshEscalator,
                          SweepConfig, SweepRecord, SweepResult, concentration,
                          interior_estimate, run_sweep, weighted_limsup_check)

__version__ = "0.1.0"
