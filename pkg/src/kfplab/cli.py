"""Command-line entry point: one YAML config drives every subcommand.

Exit codes: 0 pass, 1 verdict failure, 2 configuration error, 3 numerical
failure. Subcommands: run, spectrum, certify, experiment <name>, report-data.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .evolve import evolve_forward, write_snapshot, PhaseField
from .experiments import EXPERIMENTS, run_ultracontractivity, ultra_result
from .spectral import NormPair, certificate, principal_triplet, verify_decay


def _out(cfg: RunConfig) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg.output_dir


def _cmd_run(cfg: RunConfig) -> int:
    block = cfg.block("run")
    T = float(block.get("T", 1.0))
    every = int(block.get("snapshot_every", 0))
    Lh = cfg.generator()
    rng = np.random.default_rng(cfg.seed)
    f0 = rng.random(cfg.grid.size)
    traj = evolve_forward(f0, Lh, T, cfg.scheme, snapshot_every=every)
    out = _out(cfg)
    for k, fld in enumerate(traj.fields):
        write_snapshot(os.path.join(out, f"run_{k:04d}.kfpf"), fld, cfg.grid,
                       timestamp=fld.t)
    print(f"run: {traj.n_steps} steps to T={traj.final.t:g}, "
          f"{len(traj.fields)} snapshots in {out}")
    return 0


def _cmd_spectrum(cfg: RunConfig) -> int:
    block = cfg.block("spectrum")
    T = float(block.get("T", 0.5))
    tol = float(block.get("tol", 1e-12))
    Lh = cfg.generator()
    trip = principal_triplet(Lh, T=T, scheme=cfg.scheme, tol=tol)
    out = _out(cfg)
    with open(os.path.join(out, "eigentriplet.json"), "w") as fh:
        json.dump({"lam1": trip.lam1, "rho": trip.rho, "T": trip.T,
                   "n_iter": trip.n_iter, "residual": trip.residual,
                   "conservative": trip.conservative}, fh, indent=2)
    write_snapshot(os.path.join(out, "eigenfield_f1.kfpf"),
                   PhaseField(values=trip.f1, kind="primal"), cfg.grid)
    write_snapshot(os.path.join(out, "eigenfield_phi1.kfpf"),
                   PhaseField(values=trip.phi1, kind="dual"), cfg.grid)
    _write_eigenfield_csv(os.path.join(out, "eigenfield.csv"), cfg, trip.f1)
    print(f"spectrum: lam1={trip.lam1:.6e} residual={trip.residual:.3e}")
    return 0


def _write_eigenfield_csv(path: str, cfg: RunConfig, f: np.ndarray) -> None:
    grid = cfg.grid
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("i", "j", "x", "v", "value"))
        vals = f.reshape(grid.Nx, grid.Nv)
        for i in range(grid.Nx):
            for j in range(grid.Nv):
                writer.writerow((i, j, grid.x_nodes[i], grid.v_nodes[j],
                                 vals[i, j]))


def _cmd_certify(cfg: RunConfig) -> int:
    block = cfg.block("certify")
    eps = float(block.get("eps", cfg.grid.L / 8.0))
    T0 = float(block.get("T0", 0.1))
    T1 = float(block.get("T1", 0.3))
    T = float(block.get("T", 0.5))
    samples = int(block.get("samples", 200))
    Lh = cfg.generator()
    pair = NormPair(grid=cfg.grid)
    trip = principal_triplet(Lh, T=T, scheme=cfg.scheme, norm_pair=pair)
    cert = certificate(Lh, eps, T0, T1, T, scheme=cfg.scheme,
                       norm_pair=pair, triplet=trip)
    report = verify_decay(Lh, trip, cert, n_samples=samples,
                          scheme=cfg.scheme, norm_pair=pair, seed=cfg.seed)
    out = _out(cfg)
    cert.to_json(os.path.join(out, "certificate.json"))
    _write_decay_csv(os.path.join(out, "decay.csv"), cfg, Lh, trip, cert)
    with open(os.path.join(out, "verify_decay.json"), "w") as fh:
        json.dump({"ok": report.ok,
                   "contraction_violations": report.contraction_violations,
                   "lyapunov_violations": report.lyapunov_violations,
                   "coupling_violations": report.coupling_violations,
                   "envelope_violations": report.envelope_violations,
                   "worst_contraction_ratio": report.worst_contraction_ratio,
                   "worst_envelope_ratio": report.worst_envelope_ratio},
                  fh, indent=2)
    print(f"certify: gamma={cert.gamma:.4f} lam1={cert.lam1:.4e} "
          f"lam2={cert.lam2:.4e} verify={'ok' if report.ok else 'FAIL'}")
    return 0 if (cert.valid and report.ok) else 1


def _write_decay_csv(path: str, cfg: RunConfig, Lh, trip, cert,
                     n_blocks: int = 10) -> None:
    """Measured d(nT) of one orthogonal sample against the certified envelope."""
    from .evolve import step_matrix
    grid = cfg.grid
    pair = NormPair(grid=grid)
    S_tilde = math.exp(-trip.lam1 * cert.T) * step_matrix(Lh, cert.T, cfg.scheme)
    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal(grid.size)
    h = x - (float(np.dot(trip.phi1, x)) * grid.cell_volume) * trip.f1
    d0 = pair.norm1(h)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("t", "distance", "envelope"))
        writer.writerow((0.0, d0, cert.C * d0))
        for n in range(1, n_blocks + 1):
            h = S_tilde @ h
            writer.writerow((n * cert.T, pair.norm1(h),
                             cert.C * cert.gamma ** n * d0))


def _cmd_experiment(cfg: RunConfig, name: str) -> int:
    if name not in EXPERIMENTS:
        print(f"unknown experiment {name!r}; known: {', '.join(sorted(EXPERIMENTS))}",
              file=sys.stderr)
        return 2
    result = EXPERIMENTS[name](cfg)
    result.write(_out(cfg))
    status = "pass" if result.passed else "FAIL"
    print(f"experiment {name}: {status} "
          + " ".join(f"{k}={v:.4g}" for k, v in result.metrics.items()))
    return 0 if result.passed else 1


def _cmd_report_data(cfg: RunConfig) -> int:
    """Produce the full artifact bundle consumed by the report package."""
    rc = _cmd_spectrum(cfg)
    rc = max(rc, _cmd_certify(cfg))
    if cfg.weight is not None and cfg.weight.strongly_confining:
        fit = run_ultracontractivity(cfg)
        ultra_result(cfg, fit).write(_out(cfg))
    rc = max(rc, _cmd_experiment(cfg, "duality"))
    return rc


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="kfplab",
        description="Kinetic Fokker-Planck slab laboratory")
    parser.add_argument("-c", "--config", required=True, help="YAML config file")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", help="evolve and snapshot a trajectory")
    sub.add_parser("spectrum", help="compute the first eigentriplet")
    sub.add_parser("certify", help="build and verify the spectral-gap certificate")
    p_exp = sub.add_parser("experiment", help="run a named experiment")
    p_exp.add_argument("name")
    sub.add_parser("report-data", help="emit the full artifact bundle for reporting")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "run":
            return _cmd_run(cfg)
        if args.command == "spectrum":
            return _cmd_spectrum(cfg)
        if args.command == "certify":
            return _cmd_certify(cfg)
        if args.command == "experiment":
            return _cmd_experiment(cfg, args.name)
        if args.command == "report-data":
            return _cmd_report_data(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 2


if __name__ == "__main__":
    sys.exit(main())
