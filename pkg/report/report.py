#!/usr/bin/env python3
"""Render publication-style figures from solver CSV/JSON artifacts.

Strict consumer of the documented output schemas: every annotated number is
read verbatim from an input JSON/CSV key, nothing is re-fitted or recomputed,
and identical inputs produce byte-identical figures.

Usage: report.py --input <dir> --out <dir>
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

FIGSIZE = (6.0, 4.0)
DPI = 150
# fixed metadata so a re-render of the same inputs is byte-identical
METADATA = {"Software": "kfp-report"}


@dataclass
class ReportBundle:
    """Discovered artifact files and where their figures go."""

    input_dir: str
    out_dir: str
    artifacts: dict[str, dict[str, str]] = field(default_factory=dict)


# artifact type -> {role: filename}; a type is rendered only when every
# required file is present
ARTIFACT_TYPES = {
    "decay": {"certificate": "certificate.json", "curve": "decay.csv"},
    "ultracontractivity": {"summary": "ultracontractivity.json",
                           "curve": "ultracontractivity_rho.csv"},
    "eigenfield": {"field": "eigenfield.csv"},
    "harnack": {"summary": "harnack.json", "ratios": "harnack_ratios.csv"},
}


def discover(input_dir: str, out_dir: str) -> ReportBundle:
    bundle = ReportBundle(input_dir=input_dir, out_dir=out_dir)
    for kind, files in ARTIFACT_TYPES.items():
        paths = {role: os.path.join(input_dir, name)
                 for role, name in files.items()}
        if all(os.path.isfile(p) for p in paths.values()):
            bundle.artifacts[kind] = paths
    return bundle


class SchemaMismatch(Exception):
    """An input file does not follow its documented header/keys."""


def _read_csv(path: str, expected_header: tuple[str, ...]) -> list[list[float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != expected_header:
            raise SchemaMismatch(
                f"{os.path.basename(path)}: header {header} != {expected_header}")
        return [[float(cell) for cell in row] for row in reader if row]


def _read_json(path: str, required: tuple[str, ...]) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    missing = [k for k in required if k not in data]
    if missing:
        raise SchemaMismatch(
            f"{os.path.basename(path)}: missing keys {missing}")
    return data


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=DPI, metadata=METADATA)
    plt.close(fig)
    return path


def render_decay(paths: dict[str, str], out_dir: str) -> tuple[str, dict]:
    cert = _read_json(paths["certificate"], ("lam2", "gamma", "C", "T"))
    rows = _read_csv(paths["curve"], ("t", "distance", "envelope"))
    t = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.semilogy(t, [r[1] for r in rows], "o-", label="measured distance")
    ax.semilogy(t, [r[2] for r in rows], "--", label="certified envelope")
    ax.set_xlabel("t")
    ax.set_ylabel("distance to equilibrium direction")
    ax.set_title("Certified decay envelope")
    annotations = {"lam2": cert["lam2"], "gamma": cert["gamma"], "C": cert["C"]}
    ax.annotate(f"lam2 = {cert['lam2']!r}\ngamma = {cert['gamma']!r}",
                xy=(0.02, 0.05), xycoords="axes fraction", fontsize=8)
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_dir, "decay_envelope.png"), annotations


def render_ultracontractivity(paths: dict[str, str],
                              out_dir: str) -> tuple[str, dict]:
    summary = _read_json(paths["summary"], ("metrics",))
    metrics = summary["metrics"]
    for key in ("theta_ultra", "kappa_envelope"):
        if key not in metrics:
            raise SchemaMismatch(
                f"{os.path.basename(paths['summary'])}: missing metric {key}")
    rows = _read_csv(paths["curve"], ("T", "rho", "in_window"))
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.loglog([r[0] for r in rows], [r[1] for r in rows], "o-", label="rho(T)")
    window = [r[0] for r in rows if r[2] > 0]
    if window:
        ax.axvspan(min(window), max(window), alpha=0.2,
                   label="fitted window")
    ax.set_xlabel("T")
    ax.set_ylabel("smoothing ratio rho(T)")
    ax.set_title("Small-time smoothing blow-up")
    annotations = {"theta_ultra": metrics["theta_ultra"],
                   "kappa_envelope": metrics["kappa_envelope"]}
    ax.annotate(f"theta = {metrics['theta_ultra']!r}\n"
                f"kappa = {metrics['kappa_envelope']!r}",
                xy=(0.02, 0.05), xycoords="axes fraction", fontsize=8)
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_dir, "ultracontractivity.png"), annotations


def render_eigenfield(paths: dict[str, str], out_dir: str) -> tuple[str, dict]:
    rows = _read_csv(paths["field"], ("i", "j", "x", "v", "value"))
    ni = int(max(r[0] for r in rows)) + 1
    nj = int(max(r[1] for r in rows)) + 1
    if len(rows) != ni * nj:
        raise SchemaMismatch(
            f"{os.path.basename(paths['field'])}: {len(rows)} rows for a "
            f"{ni}x{nj} field")
    grid = [[math.nan] * nj for _ in range(ni)]
    for r in rows:
        grid[int(r[0])][int(r[1])] = r[4]
    xs = sorted({r[2] for r in rows})
    vs = sorted({r[3] for r in rows})
    fig, ax = plt.subplots(figsize=FIGSIZE)
    im = ax.pcolormesh(xs, vs, list(map(list, zip(*grid))), shading="nearest")
    fig.colorbar(im, ax=ax, label="value")
    ax.set_xlabel("x")
    ax.set_ylabel("v")
    ax.set_title("Principal eigenfield")
    fig.tight_layout()
    return _save(fig, out_dir, "eigenfield.png"), {}


def render_harnack(paths: dict[str, str], out_dir: str) -> tuple[str, dict]:
    summary = _read_json(paths["summary"], ("metrics",))
    metrics = summary["metrics"]
    if "max_ratio" not in metrics:
        raise SchemaMismatch(
            f"{os.path.basename(paths['summary'])}: missing metric max_ratio")
    rows = _read_csv(paths["ratios"], ("sample", "ratio"))
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.bar([r[0] for r in rows], [r[1] for r in rows], label="sup/inf ratio")
    ax.axhline(metrics["max_ratio"], linestyle="--", color="k",
               label="reported max")
    ax.set_yscale("log")
    ax.set_xlabel("sample")
    ax.set_ylabel("sup/inf ratio on the core")
    ax.set_title("Harnack ratios per sample")
    annotations = {"max_ratio": metrics["max_ratio"]}
    ax.annotate(f"max ratio = {metrics['max_ratio']!r}",
                xy=(0.02, 0.92), xycoords="axes fraction", fontsize=8)
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_dir, "harnack.png"), annotations


RENDERERS = {
    "decay": render_decay,
    "ultracontractivity": render_ultracontractivity,
    "eigenfield": render_eigenfield,
    "harnack": render_harnack,
}


def render(bundle: ReportBundle) -> dict[str, dict]:
    """Render every discovered artifact; returns figure path -> annotations.

    A file that fails its schema check is skipped with a warning; the other
    artifacts still render.
    """
    os.makedirs(bundle.out_dir, exist_ok=True)
    results: dict[str, dict] = {}
    for kind, paths in bundle.artifacts.items():
        try:
            fig_path, annotations = RENDERERS[kind](paths, bundle.out_dir)
        except SchemaMismatch as exc:
            print(f"warning: skipping {kind}: {exc}", file=sys.stderr)
            continue
        results[fig_path] = annotations
    return results


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="report.py",
        description="Render figures from solver CSV/JSON artifacts")
    parser.add_argument("--input", required=True, help="artifact directory")
    parser.add_argument("--out", required=True, help="figure output directory")
    args = parser.parse_args(argv)

    if not os.path.isdir(args.input):
        print(f"error: input directory {args.input!r} not found",
              file=sys.stderr)
        return 1
    bundle = discover(args.input, args.out)
    if not bundle.artifacts:
        print(f"error: no recognized artifacts in {args.input!r}",
              file=sys.stderr)
        return 1
    results = render(bundle)
    if not results:
        print("error: every artifact failed its schema check", file=sys.stderr)
        return 1
    for path, annotations in sorted(results.items()):
        note = ", ".join(f"{k}={v}" for k, v in annotations.items())
        print(f"wrote {path}" + (f"  [{note}]" if note else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
