import math

import numpy as np
import pytest
import scipy.sparse as sp

from robinlab.assembly import AssembledForms, apply_form, assemble
from robinlab.eigen import (SolverError, SolverOptions, gram_schmidt,
                            negative_count, solve, write_spectrum_json)
from robinlab.mesh import DomainSpec, generate_mesh


def _matrix_forms(A, B, M):
    return AssembledForms(mesh=None, A=sp.csr_matrix(A), B=sp.csr_matrix(B),
                          M=sp.csr_matrix(M), weight=np.zeros(0))


def test_scalar_problem():
    forms = _matrix_forms([[2.0]], [[1.0]], [[1.0]])
    spectrum = solve(forms, 1.0, SolverOptions(count=1))
    assert abs(spectrum.pairs[0].lam - 1.0) <= 1e-12


def test_neumann_constant_mode(square16_forms):
    spectrum = solve(square16_forms, 0.0, SolverOptions(count=1))
    assert abs(spectrum.pairs[0].lam) <= 1e-8
    psi = spectrum.pairs[0].psi
    assert np.ptp(psi) / np.abs(psi).max() <= 1e-6


def test_neumann_square_oracle():
    # separation of variables: lambda = pi^2 (k^2 + l^2)
    mesh = generate_mesh(DomainSpec.unit_square(1 / 64))
    spectrum = solve(assemble(mesh), 0.0, SolverOptions(count=4))
    lams = spectrum.eigenvalues
    pi2 = math.pi ** 2
    assert abs(lams[1] - pi2) <= 0.01 * pi2
    assert abs(lams[2] - pi2) <= 0.01 * pi2
    assert abs(lams[3] - 2 * pi2) <= 0.01 * 2 * pi2


def test_rayleigh_consistency(square16_forms):
    spectrum = solve(square16_forms, 5.0, SolverOptions(count=4))
    for pair in spectrum.pairs:
        quotient = apply_form(square16_forms, 5.0, pair.psi, pair.psi)
        assert abs(quotient - pair.lam) <= 1e-6 * max(1.0, abs(pair.lam))


def test_m_orthonormality(square16_forms):
    spectrum = solve(square16_forms, 3.0, SolverOptions(count=5))
    V = np.column_stack([p.psi for p in spectrum.pairs])
    gram = V.T @ (square16_forms.M @ V)
    assert np.abs(gram - np.eye(5)).max() <= 1e-8


def test_sparse_dense_agree(square16):
    forms = assemble(square16)
    dense = solve(forms, 4.0, SolverOptions(count=3))
    sparse = solve(forms, 4.0, SolverOptions(count=3, dense_threshold=10))
    assert np.abs(dense.eigenvalues - sparse.eigenvalues).max() <= \
        1e-8 * np.abs(dense.eigenvalues).max()


def test_ground_state_simple_and_positive(square_escalator, disk_escalator):
    for esc in (square_escalator, disk_escalator):
        for alpha in (1.0, 5.0, 20.0):
            level, mesh, forms = esc.at(alpha)
            spectrum = solve(forms, alpha, SolverOptions(count=2))
            lams = spectrum.eigenvalues
            gap = lams[1] - lams[0]
            assert gap > 1e-10 * max(1.0, abs(lams[0]))
            assert spectrum.pairs[0].psi.min() > 0  # sign-constant after normalization


def test_alpha_monotonicity(square16_forms):
    grid = [0.0, 1.0, 2.0, 5.0, 10.0]
    values = [solve(square16_forms, a, SolverOptions(count=4)).eigenvalues
              for a in grid]
    for prev, cur in zip(values, values[1:]):
        assert np.all(cur <= prev + 1e-10)


def test_variational_dominance(square16_forms, rng):
    spectrum = solve(square16_forms, 7.0, SolverOptions(count=1))
    lam1 = spectrum.pairs[0].lam
    for _ in range(20):
        v = rng.standard_normal(square16_forms.dimension)
        v /= math.sqrt(v @ (square16_forms.M @ v))
        assert apply_form(square16_forms, 7.0, v, v) >= lam1 - 1e-8


def test_negative_count(square16_forms):
    spectrum = solve(square16_forms, 0.0, SolverOptions(count=3))
    assert negative_count(spectrum) == 0
    robin = solve(square16_forms, 1.0, SolverOptions(count=4))
    assert negative_count(robin) == 1


def test_negative_count_truncation_error(disk_escalator):
    level, mesh, forms = disk_escalator.at(5.0)
    spectrum = solve(forms, 5.0, SolverOptions(count=2))  # both negative
    with pytest.raises(SolverError, match="larger count"):
        negative_count(spectrum)


def test_strip_negative_counts_match_interval_oracle():
    # endpoint-weighted strip realizes the 1D interval problem in 2D
    from robinlab.analytic import interval_negative_spectrum
    h = 1 / 200
    mesh = generate_mesh(DomainSpec.rectangle((0, 0), (1, h), h, tag="strip"))
    weight = lambda x, y: 1.0 if (x < 1e-9 or x > 1 - 1e-9) else 0.0
    forms = assemble(mesh, weight=weight)
    for alpha in (1.0, 3.0):
        spectrum = solve(forms, alpha, SolverOptions(count=4))
        assert negative_count(spectrum) == len(interval_negative_spectrum(alpha))


def test_disk_cluster_structure(disk_escalator):
    level, mesh, forms = disk_escalator.at(4.5)
    spectrum = solve(forms, 4.5, SolverOptions(count=9))
    assert [len(g) for g in spectrum.clusters] == [1, 2, 2, 2, 2]
    assert spectrum.distinct_negative_count() == 5
    assert negative_count(solve(forms, 4.5, SolverOptions(count=10))) == 9


def test_requested_count_exceeds_dimension():
    forms = _matrix_forms([[2.0]], [[1.0]], [[1.0]])
    with pytest.raises(SolverError):
        solve(forms, 0.0, SolverOptions(count=2))


# ---------------------------------------------------------------------------
# Gram-Schmidt

def test_gram_schmidt_idempotent(square16_forms):
    spectrum = solve(square16_forms, 2.0, SolverOptions(count=3))
    vecs = [p.psi for p in spectrum.pairs]
    out = gram_schmidt(vecs, square16_forms.M)
    for a, b in zip(out, vecs):
        assert np.abs(a - b).max() <= 1e-12


def test_gram_schmidt_dependent_input(square16_forms, rng):
    v = rng.standard_normal(square16_forms.dimension)
    with pytest.raises(SolverError, match="span"):
        gram_schmidt([v, v.copy()], square16_forms.M)


def test_gram_schmidt_random(square16_forms, rng):
    vecs = [rng.standard_normal(square16_forms.dimension) for _ in range(3)]
    out = gram_schmidt(vecs, square16_forms.M)
    V = np.column_stack(out)
    gram = V.T @ (square16_forms.M @ V)
    assert np.abs(gram - np.eye(3)).max() <= 1e-10


def test_spectrum_json(tmp_path, square16_forms):
    spectrum = solve(square16_forms, 1.0, SolverOptions(count=2))
    path = tmp_path / "spectrum.json"
    write_spectrum_json(spectrum, path, eigenvector_dir=tmp_path / "vecs")
    import json
    record = json.loads(path.read_text())
    assert record["alpha"] == 1.0
    assert len(record["pairs"]) == 2
    assert (tmp_path / "vecs" / "psi_000.txt").exists()
    values = np.loadtxt(tmp_path / "vecs" / "psi_000.txt")
    assert len(values) == square16_forms.dimension
