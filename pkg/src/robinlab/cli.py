"""Command-line surface binding the laboratory together.

Commands: mesh, solve, sweep, concentration, bound, analytic, verify.
Exit codes: 0 success, 2 validation error, 3 solver failure, 4 verification
failure.  The output directory comes from --out, falling back to the
ROBINLAB_OUT environment variable, then the working directory.  A JSON config
file may supply any flag value; explicit flags win.  Every report directory
gets a manifest embedding the computational config and its hash; verify
refuses to write into directories whose manifest carries a different hash.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import reports
from .analytic import (AnalyticError, disk_negative_spectrum,
                       interval_negative_spectrum, write_disk_csv,
                       write_interval_csv)
from .assembly import AssemblyError, assemble
from .asymptotics import (MeshEscalator, SweepConfig, SweepError, concentration,
                          interior_estimate, run_sweep, write_concentration_csv,
                          write_sweep_csv)
from .eigen import SolverError, SolverOptions, negative_count, solve, write_spectrum_json
from .mesh import (DomainSpec, MeshError, generate_mesh, read_mesh_text,
                   write_mesh_text)
from .variational import (DeflationBasis, SpanError, VariationalError, caps,
                          direction_search, ind_bound, make_probe, mass_outside_cap,
                          probe_energy, write_bound_json)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except (MeshError, AssemblyError, AnalyticError, VariationalError,
            SweepError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="robinlab",
        description="Robin eigenvalue laboratory: FEM spectra, analytic "
                    "references, and variational bound suites on 2D domains.")
    sub = parser.add_subparsers(dest="command")
    parser.set_defaults(command=None)

    def add_common(p):
        p.add_argument("--config", help="JSON file with default parameter values")
        p.add_argument("--out", help="output directory (default $ROBINLAB_OUT or .)")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for randomized test utilities")

    def add_domain(p):
        p.add_argument("--domain", choices=["square", "rectangle", "disk", "polygon"])
        p.add_argument("--h", type=float, default=0.25, help="target mesh size")
        p.add_argument("--segments", type=int, default=64,
                       help="disk boundary segment count")
        p.add_argument("--radius", type=float, default=1.0)
        p.add_argument("--center", default="0,0")
        p.add_argument("--corners", default="0,0;1,1",
                       help="rectangle corners 'x0,y0;x1,y1'")
        p.add_argument("--vertices", help="polygon vertices 'x,y;x,y;...'")

    p = sub.add_parser("mesh", help="generate and write a mesh")
    add_common(p)
    add_domain(p)
    p.add_argument("--out-file", default="mesh.txt")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("solve", help="solve the lowest eigenpairs at one alpha")
    add_common(p)
    add_domain(p)
    p.add_argument("--mesh", help="read mesh from file instead of generating")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--level", type=int, help="refinement level (default: alpha h <= 0.5)")
    p.add_argument("--eigenvectors", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="eigenvalue ratio sweep over alphas")
    add_common(p)
    add_domain(p)
    p.add_argument("--alphas", default="5,10,20,40")
    p.add_argument("--n", type=int, default=4)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("concentration", help="eigenfunction concentration diagnostics")
    add_common(p)
    add_domain(p)
    p.add_argument("--alphas", default="5,10,20,40")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--r", type=float, default=4.0)
    p.add_argument("--margin", type=float, default=0.25)
    p.set_defaults(func=cmd_concentration)

    p = sub.add_parser("bound", help="deflated upper bound at one alpha")
    add_common(p)
    add_domain(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--n", type=int, default=1, help="deflation basis size")
    p.add_argument("--m", type=int, default=16, help="direction grid size")
    p.add_argument("--delta", type=float, default=0.5)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("analytic", help="analytic reference branches")
    add_common(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--disk", action="store_true")
    group.add_argument("--interval", action="store_true")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--m-max", type=int, help="disk angular index cap (default ceil(alpha))")
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("verify", help="run the inequality suites")
    add_common(p)
    add_domain(p)
    p.add_argument("--alphas", default="5,10,20")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--m", type=int, default=16)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--margin", type=float, default=0.25)
    p.add_argument("--p", type=float, default=2.0)
    p.set_defaults(func=cmd_verify)

    return parser


# ---------------------------------------------------------------------------
# argument plumbing

def _merge_config(args):
    """Apply JSON config file values for any flag left at its default."""
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        file_values = json.load(fh)
    parser_defaults = _build_parser()
    for key, value in file_values.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ValueError(f"config file key {key!r} is not a known parameter")
        # explicit command line wins: only fill values still at their default
        if getattr(args, attr) == _default_of(args.command, attr):
            setattr(args, attr, value)
    return args


def _default_of(command, attr):
    probe = _build_parser().parse_args([command] + _required_stub(command))
    return getattr(probe, attr, None)


def _required_stub(command):
    if command == "solve":
        return ["--alpha", "1"]
    if command == "bound":
        return ["--alpha", "1"]
    if command == "analytic":
        return ["--disk", "--alpha", "1"]
    return []


def _outdir(args):
    out = args.out or os.environ.get("ROBINLAB_OUT") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _parse_points(text):
    return [tuple(float(t) for t in chunk.split(",")) for chunk in text.split(";")]


def _parse_alphas(text):
    return tuple(float(t) for t in str(text).split(","))


def _domain_spec(args):
    if args.domain is None:
        raise ValueError("--domain is required")
    if args.domain == "square":
        return DomainSpec.unit_square(args.h)
    if args.domain == "rectangle":
        c0, c1 = _parse_points(args.corners)
        return DomainSpec.rectangle(c0, c1, args.h)
    if args.domain == "disk":
        center = _parse_points(args.center)[0]
        return DomainSpec.disk(center=center, radius=args.radius,
                               segments=args.segments, h=args.h)
    if args.vertices is None:
        raise ValueError("--vertices is required for polygon domains")
    return DomainSpec.polygon(_parse_points(args.vertices), args.h)


def _domain_config(args):
    cfg = {"domain": args.domain, "h": args.h}
    if args.domain == "disk":
        cfg.update(segments=args.segments, radius=args.radius, center=args.center)
    elif args.domain == "rectangle":
        cfg.update(corners=args.corners)
    elif args.domain == "polygon":
        cfg.update(vertices=args.vertices)
    return cfg


# ---------------------------------------------------------------------------
# commands

def cmd_mesh(args):
    args = _merge_config(args)
    spec = _domain_spec(args)
    mesh = generate_mesh(spec)
    out = _outdir(args)
    path = os.path.join(out, args.out_file)
    write_mesh_text(mesh, path)
    print(f"mesh {mesh.domain_tag}: NV={mesh.num_vertices} NT={mesh.num_triangles} "
          f"NB={len(mesh.boundary_edges)} h_max={mesh.h_max:.6g} -> {path}")
    return EXIT_OK


def _mesh_for(args, alpha):
    """Mesh from file or generated at the resolution rule; returns (mesh, level)."""
    if getattr(args, "mesh", None):
        if not os.path.exists(args.mesh):
            raise FileNotFoundError(f"mesh file {args.mesh} does not exist")
        return read_mesh_text(args.mesh), 0
    spec = _domain_spec(args)
    esc = MeshEscalator(spec)
    if getattr(args, "level", None) is not None:
        return esc.mesh(args.level), args.level
    level = esc.level_for(alpha)
    return esc.mesh(level), level


def cmd_solve(args):
    args = _merge_config(args)
    mesh, level = _mesh_for(args, max(args.alpha, 1.0))
    forms = assemble(mesh)
    spectrum = solve(forms, args.alpha, SolverOptions(count=args.n))
    out = _outdir(args)
    path = os.path.join(out, "spectrum.json")
    vec_dir = os.path.join(out, "eigenvectors") if args.eigenvectors else None
    write_spectrum_json(spectrum, path, eigenvector_dir=vec_dir)
    lams = " ".join(f"{p.lam:.8g}" for p in spectrum.pairs)
    print(f"alpha={args.alpha} level={level} lambda: {lams} -> {path}")
    return EXIT_OK


def cmd_sweep(args):
    args = _merge_config(args)
    spec = _domain_spec(args)
    cfg = SweepConfig(alphas=_parse_alphas(args.alphas), n_max=args.n)
    result = run_sweep(cfg, spec)
    out = _outdir(args)
    write_sweep_csv(result, os.path.join(out, "sweep.csv"))
    config = {"command": "sweep", **_domain_config(args), **cfg.to_dict()}
    reports.write_manifest(os.path.join(out, "manifest.json"), config,
                           extra={"failures": result.failures})
    print(f"sweep: {len(result.records)} records, {len(result.failures)} failures "
          f"-> {out}/sweep.csv")
    return EXIT_OK if result.ok else EXIT_SOLVER


def cmd_concentration(args):
    args = _merge_config(args)
    spec = _domain_spec(args)
    cfg = SweepConfig(alphas=_parse_alphas(args.alphas), n_max=args.n,
                      p=args.p, q=args.q, r=args.r, margin=args.margin)
    esc = MeshEscalator(spec)
    rows = []
    for alpha in cfg.alphas:
        level, mesh, forms = esc.at(alpha)
        spectrum = solve(forms, alpha, cfg.solver_options())
        rows.extend(concentration(spectrum, mesh, cfg.p, cfg.q, cfg.r, cfg.margin))
    out = _outdir(args)
    write_concentration_csv(rows, os.path.join(out, "concentration.csv"))
    config = {"command": "concentration", **_domain_config(args), **cfg.to_dict()}
    reports.write_manifest(os.path.join(out, "manifest.json"), config)
    print(f"concentration: {len(rows)} records -> {out}/concentration.csv")
    return EXIT_OK


def cmd_bound(args):
    args = _merge_config(args)
    spec = _domain_spec(args)
    esc = MeshEscalator(spec)
    level, mesh, forms = esc.at(args.alpha)
    spectrum = solve(forms, args.alpha, SolverOptions(count=args.n + 1))
    basis = DeflationBasis.from_spectrum(spectrum, args.n, forms)
    search = direction_search(mesh, forms, args.alpha, basis, args.m, args.delta)
    probe = make_probe(mesh, args.alpha, search.d)
    bound = ind_bound(probe, basis, forms)
    lam_next = spectrum.pairs[args.n].lam
    out = _outdir(args)
    path = os.path.join(out, "bound.json")
    write_bound_json(bound, path, lambda_next=lam_next)
    print(f"bound={bound.value:.8g} lambda_{args.n + 1}={lam_next:.8g} "
          f"overlap={search.overlap_sum:.4g} success={search.success} -> {path}")
    return EXIT_OK


def cmd_analytic(args):
    args = _merge_config(args)
    out = _outdir(args)
    if args.disk:
        m_max = args.m_max if args.m_max is not None else math.ceil(args.alpha)
        branches = disk_negative_spectrum(args.alpha, m_max)
        path = os.path.join(out, "disk_branches.csv")
        write_disk_csv(branches, path)
        print(f"disk alpha={args.alpha}: {len(branches)} branches -> {path}")
    else:
        branches = interval_negative_spectrum(args.alpha)
        path = os.path.join(out, "interval_branches.csv")
        write_interval_csv(branches, path)
        print(f"interval alpha={args.alpha}: {len(branches)} branches -> {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify: the bundled inequality suites

def cmd_verify(args):
    args = _merge_config(args)
    spec = _domain_spec(args)
    alphas = _parse_alphas(args.alphas)
    cfg = SweepConfig(alphas=alphas, n_max=args.n, p=args.p, margin=args.margin)
    config = {"command": "verify", **_domain_config(args), **cfg.to_dict(),
              "m": args.m, "delta": args.delta, "seed": args.seed}

    out = _outdir(args)
    manifest_path = os.path.join(out, "manifest.json")
    if os.path.exists(manifest_path):
        previous = reports.read_manifest(manifest_path)
        if previous.get("config_hash") != reports.config_hash(config):
            print(f"error: {out} holds reports for a different config "
                  f"(hash {previous.get('config_hash')}); refusing to mix",
                  file=sys.stderr)
            return EXIT_VALIDATION

    rows = []
    esc = MeshEscalator(spec)
    rng = np.random.default_rng(args.seed)
    thetas = rng.uniform(0.0, 2.0 * math.pi, size=20)

    for alpha in alphas:
        level, mesh, forms = esc.at(alpha)
        spectrum = solve(forms, alpha, cfg.solver_options(count=args.n + 1))
        lams = spectrum.eigenvalues

        # Lemma 2.1 suite: exact probe energies stay below -alpha^2
        worst = max(probe_energy(make_probe(mesh, alpha, (math.cos(t), math.sin(t))))
                    for t in thetas)
        rows.append(("probe_energy", alpha, 0, worst, -alpha * alpha,
                     -alpha * alpha - worst,
                     "pass" if worst <= -alpha * alpha else "fail"))

        # Lemma 2.3 suite + subsequence sandwich, per basis size
        for nb in range(1, args.n + 1):
            basis = DeflationBasis.from_spectrum(spectrum, nb, forms)
            search = direction_search(mesh, forms, alpha, basis, args.m, args.delta)
            if not search.success:
                rows.append(("ind_bound", alpha, nb, search.overlap_sum, args.delta,
                             args.delta - search.overlap_sum, "skip"))
                continue
            probe = make_probe(mesh, alpha, search.d)
            bound = ind_bound(probe, basis, forms)
            lam_next = lams[nb]
            tol = 10.0 * cfg.tolerance * max(1.0, abs(lam_next))
            ok = bound.value >= lam_next - tol
            rows.append(("ind_bound", alpha, nb, lam_next, bound.value,
                         bound.value - lam_next, "pass" if ok else "fail"))
            # eq:subseqbound, term by term with the same overlaps
            a2 = alpha * alpha
            rhs = (1.0 - float(np.sum((np.asarray(basis.eigenvalues) / -a2)
                                      * bound.overlaps ** 2))) / bound.denominator
            r1 = lams[0] / -a2
            rn = lam_next / -a2
            ok2 = (r1 >= rn - 1e-12) and (rn >= rhs - tol / a2)
            rows.append(("subseq_sandwich", alpha, nb, rn, rhs, rn - rhs,
                         "pass" if ok2 else "fail"))

        # Lemma 3.1 suite: interior estimates for all computed pairs
        for est in interior_estimate(spectrum, mesh, cfg.p, cfg.margin):
            status = "skip" if est.vacuous else ("pass" if est.holds else "fail")
            rows.append(("interior_estimate", alpha, est.n, est.bound, est.lam,
                         est.slack, status))

    # Lemma 2.5 suite: probe mass outside a fixed cap decreases along alphas
    d = (0.0, 1.0)
    level0, mesh0, _ = esc.at(alphas[0])
    proj = mesh0.vertices @ np.asarray(d)
    kappa_prime = 0.5 if spec.kind == "rectangle" else float(np.median(proj))
    masses = []
    for alpha in alphas:
        _, mesh, _ = esc.at(alpha)
        cap = caps(mesh, d, [kappa_prime])[0]
        probe = make_probe(mesh, alpha, d)
        masses.append(mass_outside_cap(probe, cap, mesh))
    for (a0, m0), (a1, m1) in zip(zip(alphas, masses), zip(alphas[1:], masses[1:])):
        rows.append(("cap_mass_monotone", a1, 0, m1, m0, m0 - m1,
                     "pass" if m1 <= m0 * (1.0 + 1e-12) else "fail"))
    if spec.kind == "rectangle" and spec.corners == ((0.0, 0.0), (1.0, 1.0)):
        for alpha, m in zip(alphas, masses):
            exact = math.expm1(2 * alpha * kappa_prime) / math.expm1(2 * alpha)
            err = abs(m - exact)
            rows.append(("cap_mass_exact", alpha, 0, m, exact, err,
                         "pass" if err <= 1e-9 else "fail"))

    reports.write_csv(os.path.join(out, "verify.csv"),
                      ["check", "alpha", "n", "lhs", "rhs", "margin", "status"], rows)
    reports.write_manifest(manifest_path, config)

    failed = [r for r in rows if r[-1] == "fail"]
    for check, alpha, n, lhs, rhs, margin, status in rows:
        print(f"{status:>4}  {check:<20} alpha={alpha:<6g} n={n} "
              f"lhs={lhs:.6g} rhs={rhs:.6g} margin={margin:.3g}")
    print(f"verify: {len(rows) - len(failed)}/{len(rows)} checks passed -> {out}/verify.csv")
    return EXIT_OK if not failed else EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
