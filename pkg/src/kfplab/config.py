"""Run configuration: YAML schema, validation and object construction.

One config file drives every subcommand. Unknown keys are rejected with
their full key path, and all physical admissibility conditions are
re-checked at load time so a config that parses is a config that runs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import yaml

from .grid import PhaseGrid, make_grid
from .model import BoundaryModel, CoefficientModel, builtin_model
from .evolve import TimeScheme, default_dt
from .operator import GeneratorMatrix, assemble
from .weights import WeightSpec, exp_weight, poly_weight


class ConfigError(ValueError):
    """Schema or physics violation in a run configuration."""


_SCHEMA: dict[str, set[str]] = {
    "grid": {"L", "V", "Nx", "Nv"},
    "model": {"name", "gamma", "b0", "conservative"},
    "boundary": {"iota_s", "iota_d", "theta_left", "theta_right"},
    "weight": {"kind", "k", "zeta", "s", "p", "A"},
    "scheme": {"dt", "kind", "tol"},
    "operator": {"form"},
    "certify": {"eps", "T0", "T1", "T", "samples"},
    "spectrum": {"T", "tol"},
    "run": {"T", "snapshot_every"},
    "experiments": None,  # free-form per-experiment blocks, validated below
}
_TOP_KEYS = set(_SCHEMA) | {"output_dir", "seed"}

_EXPERIMENT_KEYS: dict[str, set[str]] = {
    "growth": {"T", "p", "samples"},
    "duality": {"T", "pairs"},
    "ultracontractivity": {"T_min", "T_max", "n_T", "nodes"},
    "harnack": {"T0", "T1", "eps", "samples"},
    "mass_balance": {"steps"},
    "equilibrium": {"T"},
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with every default filled in."""

    raw: dict = field(repr=False)
    grid: PhaseGrid
    model: CoefficientModel
    boundary: BoundaryModel
    weight: WeightSpec | None
    weight_p: float
    weight_A: float | str
    scheme: TimeScheme
    form: str
    output_dir: str
    seed: int

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def block(self, name: str) -> dict:
        return dict(self.raw.get(name) or {})

    def generator(self, omega_twist=None) -> GeneratorMatrix:
        return assemble(self.grid, self.model, self.boundary,
                        form=self.form, omega_twist=omega_twist)


def _reject_unknown(block: dict, allowed: set[str], path: str) -> None:
    for key in block:
        if key not in allowed:
            raise ConfigError(f"unknown key {path}.{key} "
                              f"(allowed: {', '.join(sorted(allowed))})")


def _require(block: dict, key: str, path: str) -> Any:
    if key not in block:
        raise ConfigError(f"missing required key {path}.{key}")
    return block[key]


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return parse_config(raw)


def parse_config(raw: dict | None) -> RunConfig:
    """Validate a parsed YAML tree into a RunConfig.

    Defaults: harmonic model, equilibrium walls (iota = 1, Theta = 1), flux
    form, implicit Euler with dt = min(dx, dv^2)/4, seed 0, output directory
    "out". Physics violations are reported with the violated condition.
    """
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown top-level key {key!r} "
                              f"(allowed: {', '.join(sorted(_TOP_KEYS))})")
    for name, allowed in _SCHEMA.items():
        block = raw.get(name)
        if block is None:
            continue
        if not isinstance(block, dict):
            raise ConfigError(f"config block {name!r} must be a mapping")
        if allowed is not None:
            _reject_unknown(block, allowed, name)
    exp_block = raw.get("experiments") or {}
    for exp_name, params in exp_block.items():
        if exp_name not in _EXPERIMENT_KEYS:
            raise ConfigError(f"unknown experiment {exp_name!r} "
                              f"(known: {', '.join(sorted(_EXPERIMENT_KEYS))})")
        _reject_unknown(params or {}, _EXPERIMENT_KEYS[exp_name],
                        f"experiments.{exp_name}")

    gblock = raw.get("grid") or {}
    grid = make_grid(
        L=float(gblock.get("L", 1.0)), V=float(gblock.get("V", 4.0)),
        Nx=int(gblock.get("Nx", 16)), Nv=int(gblock.get("Nv", 16)))

    mblock = raw.get("model") or {}
    try:
        model = builtin_model(
            mblock.get("name", "harmonic"),
            gamma=float(mblock.get("gamma", 3.0)),
            b0=float(mblock.get("b0", 1.0)),
            conservative=bool(mblock.get("conservative", True)))
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc

    bblock = raw.get("boundary") or {}
    iota_s = bblock.get("iota_s", 0.5)
    iota_d = bblock.get("iota_d", 0.5)
    if not isinstance(iota_s, (list, tuple)):
        iota_s = (iota_s, iota_s)
    if not isinstance(iota_d, (list, tuple)):
        iota_d = (iota_d, iota_d)
    theta = (float(bblock.get("theta_left", 1.0)),
             float(bblock.get("theta_right", 1.0)))
    try:
        boundary = BoundaryModel(iota_s=tuple(float(s) for s in iota_s),
                                 iota_d=tuple(float(d) for d in iota_d),
                                 theta=theta)
    except ValueError as exc:
        raise ConfigError(f"boundary: {exc} (condition iota_S + iota_D <= 1, "
                          "0 < Theta_* <= Theta <= Theta^*)") from exc

    wblock = raw.get("weight") or {}
    weight = None
    weight_p = float(wblock.get("p", 1.0))
    weight_A = wblock.get("A", "auto")
    if wblock:
        kind = _require(wblock, "kind", "weight")
        try:
            if kind == "poly":
                weight = poly_weight(float(_require(wblock, "k", "weight")), model)
            elif kind == "exp":
                weight = exp_weight(float(_require(wblock, "zeta", "weight")),
                                    float(_require(wblock, "s", "weight")),
                                    model, boundary)
            else:
                raise ConfigError(f"weight.kind must be 'poly' or 'exp', got {kind!r}")
        except ValueError as exc:
            raise ConfigError(f"weight: {exc}") from exc
        if weight_p not in (1.0, 2.0) and not 1.0 <= weight_p:
            raise ConfigError(f"weight.p must be >= 1, got {weight_p}")
        if weight_A != "auto":
            weight_A = float(weight_A)
            if weight_A < 1.0:
                raise ConfigError(f"weight.A must be >= 1 or 'auto', got {weight_A}")

    sblock = raw.get("scheme") or {}
    dt = float(sblock.get("dt", default_dt(grid)))
    kind = sblock.get("kind", "implicit_euler")
    try:
        scheme = TimeScheme(dt=dt, method=kind)
    except ValueError as exc:
        raise ConfigError(f"scheme: {exc}") from exc

    oblock = raw.get("operator") or {}
    form = oblock.get("form", "flux")
    if form not in ("flux", "advective"):
        raise ConfigError(f"operator.form must be 'flux' or 'advective', got {form!r}")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")

    return RunConfig(raw=raw, grid=grid, model=model, boundary=boundary,
                     weight=weight, weight_p=weight_p, weight_A=weight_A,
                     scheme=scheme, form=form,
                     output_dir=str(raw.get("output_dir", "out")),
                     seed=seed)
