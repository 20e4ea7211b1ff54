import math

import numpy as np
import pytest

from robinlab.analytic import interval_negative_spectrum
from robinlab.assembly import assemble
from robinlab.asymptotics import (MeshEscalator, SweepConfig, SweepError,
                                  concentration, interior_estimate, run_sweep,
                                  weighted_limsup_check, write_sweep_csv)
from robinlab.eigen import SolverOptions, solve
from robinlab.mesh import DomainSpec


def test_sweep_config_validation():
    with pytest.raises(SweepError):
        SweepConfig(alphas=(0.0, 1.0), n_max=2)
    with pytest.raises(SweepError):
        SweepConfig(alphas=(2.0, 1.0), n_max=2)
    with pytest.raises(SweepError):
        SweepConfig(alphas=(1.0,), n_max=0)


def test_interval_sweep_matches_branch_ratios():
    cfg = SweepConfig(alphas=(10.0, 50.0), n_max=2)
    result = run_sweep(cfg, "interval")
    assert result.ok
    for rec in result.records:
        branches = interval_negative_spectrum(rec.alpha)
        expected = (branches[rec.n - 1].mu / rec.alpha) ** 2
        assert abs(rec.ratio - expected) <= 1e-6
        assert rec.ratio > 0


def test_interval_sweep_caps_n():
    with pytest.raises(SweepError, match="at most two"):
        run_sweep(SweepConfig(alphas=(10.0,), n_max=3), "interval")


def test_sweep_records_ordered(square_escalator):
    cfg = SweepConfig(alphas=(1.0, 2.0), n_max=2)
    result = run_sweep(cfg, square_escalator.spec, escalator=square_escalator)
    keys = [(r.alpha, r.n) for r in result.records]
    assert keys == sorted(keys)
    levels = {r.alpha: r.mesh_level for r in result.records}
    for alpha, level in levels.items():
        assert alpha * square_escalator.mesh(level).h_max <= 0.5 + 1e-12


def test_escalator_levels_monotone(disk_escalator):
    levels = [disk_escalator.level_for(a) for a in (1.0, 3.0, 7.0, 15.0)]
    assert levels == sorted(levels)


def test_ratio_ceiling_ground_state(square_escalator):
    # lambda_1 <= -alpha^2 within mesh tolerance (exact in the continuum)
    cfg = SweepConfig(alphas=(5.0, 10.0), n_max=1)
    result = run_sweep(cfg, square_escalator.spec, escalator=square_escalator)
    for rec in result.records:
        assert rec.ratio >= 1.0 - 0.02


def test_concentration_exponent_validation(square16, square16_forms):
    spectrum = solve(square16_forms, 1.0, SolverOptions(count=1))
    with pytest.raises(SweepError):
        concentration(spectrum, square16, p=2.0, q=2.0, r=4.0, margin=0.25)
    with pytest.raises(SweepError):
        concentration(spectrum, square16, p=2.0, q=1.0, r=2.0, margin=0.25)


def test_concentration_constant_baseline(square16, square16_forms):
    # Neumann ground state is constant: interior norm is (|O0|/|O|)^(1/p)
    spectrum = solve(square16_forms, 0.0, SolverOptions(count=1))
    for p in (2.0, 4.0):
        rep = concentration(spectrum, square16, p=p, q=1.0, r=p + 1, margin=0.25)[0]
        assert abs(rep.interior_p_norm - 0.25 ** (1.0 / p)) <= 1e-10
        assert abs(rep.global_q_norm - 1.0) <= 1e-10
        assert abs(rep.global_r_norm - 1.0) <= 1e-10


def test_interior_estimate_square_alpha_one(square16, square16_forms):
    spectrum = solve(square16_forms, 1.0, SolverOptions(count=1))
    est = interior_estimate(spectrum, square16, p=2.0, margin=0.25)[0]
    assert not est.vacuous
    assert est.holds
    assert est.slack >= 0
    assert est.bound < est.lam


def test_interior_estimate_requires_p2(square16, square16_forms):
    spectrum = solve(square16_forms, 1.0, SolverOptions(count=1))
    with pytest.raises(SweepError):
        interior_estimate(spectrum, square16, p=1.5, margin=0.25)


def test_interior_estimate_scaling_consistency(square_escalator):
    # the bound stays below lambda along the sweep; for negative pairs the
    # quotient lam / bound sits in (0, 1]
    for alpha in (1.0, 5.0):
        level, mesh, forms = square_escalator.at(alpha)
        spectrum = solve(forms, alpha, SolverOptions(count=2))
        for est in interior_estimate(spectrum, mesh, p=2.0, margin=0.25):
            assert est.holds
            if not est.vacuous and est.lam < 0:
                assert 0 < est.lam / est.bound <= 1.0 + 1e-6


def test_weighted_unit_weight_reduces_to_sweep(disk_escalator):
    alphas = (2.0, 4.0)
    report = weighted_limsup_check(disk_escalator.spec, 1.0, alphas, n_max=2,
                                   escalator=disk_escalator)
    assert report.max_weight == 1.0
    cfg = SweepConfig(alphas=alphas, n_max=2)
    sweep = run_sweep(cfg, disk_escalator.spec, escalator=disk_escalator)
    plain = {(r.alpha, r.n): r.ratio for r in sweep.records}
    for rec in report.records:
        assert abs(rec.normalized_ratio - plain[(rec.alpha, rec.n)]) <= 1e-12


def test_weighted_scaling_absorption(disk_escalator):
    # b = 2 at alpha equals b = 1 at 2 alpha on the same mesh
    level, mesh, forms = disk_escalator.at(8.0)
    doubled = assemble(mesh, weight=2.0)
    sA = solve(doubled, 4.0, SolverOptions(count=3))
    sB = solve(forms, 8.0, SolverOptions(count=3))
    rel = np.abs(sA.eigenvalues - sB.eigenvalues) / np.abs(sB.eigenvalues)
    assert rel.max() <= 1e-8


def test_weighted_requires_positive_max(disk_escalator):
    with pytest.raises(SweepError, match="max b > 0"):
        weighted_limsup_check(disk_escalator.spec, -1.0, (2.0,), n_max=1,
                              escalator=disk_escalator)


def test_sweep_csv_deterministic(tmp_path):
    cfg = SweepConfig(alphas=(10.0, 50.0), n_max=2)
    result = run_sweep(cfg, "interval")
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_sweep_csv(result, p1)
    write_sweep_csv(result, p2)
    assert p1.read_bytes() == p2.read_bytes()
    header = p1.read_text().splitlines()[0]
    assert header == "alpha,n,lambda,ratio,residual,mesh_level"
