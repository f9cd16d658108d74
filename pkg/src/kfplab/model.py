"""Coefficient fields, confinement parameters and the wall boundary model.

The drift/reaction pair (b, c) is supplied in closed form together with the
analytic velocity divergence of b, so no discretization error enters the
confinement quantity or the conservative assembly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import PhaseGrid, boundary_geometry

HALF_FLUX_TOL = 1e-14


@dataclass(frozen=True)
class CoefficientModel:
    """Closed-form drift b(x,v), reaction c(x,v) and confinement parameters.

    For |v| > R0 the confinement inequalities
        b0 |v|^gamma <= b(x,v) v <= b1 |v|^gamma
        c - (1/p) div_v b <= kstar(p) * b v / |v|^2
    hold; kstar maps the exponent p to its reaction-control constant.
    """

    name: str
    b: Callable[[np.ndarray, np.ndarray], np.ndarray]
    c: Callable[[np.ndarray, np.ndarray], np.ndarray]
    div_b: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gamma: float
    b0: float
    b1: float
    R0: float
    kstar: Callable[[float], float]
    d: int = 1


@dataclass(frozen=True)
class BoundaryModel:
    """Accommodation coefficients and wall temperatures for both walls."""

    iota_s: tuple[float, float]  # (left, right) specular coefficients
    iota_d: tuple[float, float]  # (left, right) diffusive coefficients
    theta: tuple[float, float]   # (left, right) wall temperatures

    def __post_init__(self):
        for s, dcoef in zip(self.iota_s, self.iota_d):
            if not (0.0 <= s <= 1.0 and 0.0 <= dcoef <= 1.0):
                raise ValueError("accommodation coefficients must lie in [0, 1]")
            if s + dcoef > 1.0 + 1e-15:
                raise ValueError(
                    f"iota_S + iota_D = {s + dcoef} > 1: mass would be added at the wall")
        for th in self.theta:
            if th <= 0:
                raise ValueError(f"wall temperature must be positive, got {th}")

    @property
    def theta_min(self) -> float:
        return min(self.theta)

    @property
    def theta_max(self) -> float:
        return max(self.theta)

    def wall_coeffs(self, wall_name: str) -> tuple[float, float, float]:
        k = 0 if wall_name == "left" else 1
        return self.iota_s[k], self.iota_d[k], self.theta[k]


@dataclass(frozen=True)
class WallMaxwellian:
    """Gaussian wall profile, renormalized so the discrete outgoing half-flux is 1.

    The continuous normalization (half-flux equal to one) cannot hold exactly
    on a finite grid; renormalizing the discrete half-flux instead makes
    diffuse reflection exactly mass-preserving in the discrete model.
    """

    theta: float
    values: np.ndarray = field(repr=False)  # on the velocity grid, after renormalization
    renorm: float = 1.0  # factor applied to the raw profile


def maxwellian_raw(theta: float, v: np.ndarray, d: int = 1) -> np.ndarray:
    """Raw wall Maxwellian (2 pi Theta)^{-(d-1)/2} exp(-|v|^2 / (2 Theta))."""
    pref = (2.0 * math.pi * theta) ** (-(d - 1) / 2.0)
    return pref * np.exp(-np.asarray(v) ** 2 / (2.0 * theta))


def wall_maxwellian(theta: float, grid: PhaseGrid, d: int = 1) -> WallMaxwellian:
    """Wall Maxwellian on the velocity grid with exact discrete half-flux.

    The half-flux sum_{v_j n > 0} M(v_j) (n v_j) dv is the same for both walls
    by the mirror symmetry of the grid, so a single renormalization serves both.
    """
    if theta <= 0:
        raise ValueError(f"wall temperature must be positive, got {theta}")
    raw = maxwellian_raw(theta, grid.v_nodes, d)
    pos = grid.v_nodes > 0
    half_flux = float(np.sum(raw[pos] * grid.v_nodes[pos]) * grid.dv)
    renorm = 1.0 / half_flux
    values = raw * renorm
    values.setflags(write=False)
    return WallMaxwellian(theta=float(theta), values=values, renorm=renorm)


def _harmonic_model(d: int) -> CoefficientModel:
    return CoefficientModel(
        name="harmonic",
        b=lambda x, v: np.broadcast_arrays(x, np.asarray(v, dtype=float))[1],
        c=lambda x, v: np.full(np.broadcast(x, v).shape, float(d)),
        div_b=lambda x, v: np.full(np.broadcast(x, v).shape, float(d)),
        gamma=2.0, b0=1.0, b1=1.0, R0=0.0,
        kstar=lambda p: d * (1.0 - 1.0 / p) if p != math.inf else float(d),
        d=d,
    )


def _power_model(gamma: float, b0: float, d: int, conservative: bool) -> CoefficientModel:
    # b = b0 v <v>^{gamma-2}; for |v| >= 1 the ratio (|v|/<v>)^{2-gamma}
    # is monotone between 2^{(gamma-2)/2} and 1, fixing (b0_eff, b1, R0=1).
    fac = 2.0 ** ((gamma - 2.0) / 2.0)
    b0_eff = b0 * min(1.0, fac)
    b1 = b0 * max(1.0, fac)

    def b_field(x, v):
        v = np.asarray(v, dtype=float)
        return b0 * v * (1.0 + v ** 2) ** ((gamma - 2.0) / 2.0)

    def div_b_field(x, v):
        v = np.asarray(v, dtype=float)
        ang = (1.0 + v ** 2) ** ((gamma - 2.0) / 2.0)
        return b0 * (ang + (gamma - 2.0) * v ** 2 * (1.0 + v ** 2) ** ((gamma - 4.0) / 2.0))

    if conservative:
        c_field = div_b_field
        # c - (1/p) div_b = (1 - 1/p) div_b <= (1 - 1/p) max(1, gamma-1) b0 <v>^{gamma-2}
        # and b.v/|v|^2 = b0 <v>^{gamma-2} (|v|/<v>)^{2-gamma}-corrected; the
        # worst factor over |v| >= 1 is absorbed into max(1, gamma-1) / min(1, fac^2).
        bound = max(1.0, gamma - 1.0) / min(1.0, fac * fac)

        def kstar(p):
            return bound if p == math.inf else (1.0 - 1.0 / p) * bound
    else:
        def c_field(x, v):
            return np.zeros(np.broadcast(x, v).shape)

        def kstar(p):
            # c = 0: need -(1/p) div_b <= kstar * b.v/|v|^2; div_b may dip
            # negative for gamma < 2, bounded by |gamma-2| b0 <v>^{gamma-2}.
            if p == math.inf:
                return 0.0
            return abs(gamma - 2.0) / min(1.0, fac * fac) / p

    return CoefficientModel(
        name=f"power(gamma={gamma}, b0={b0})",
        b=b_field, c=c_field, div_b=div_b_field,
        gamma=float(gamma), b0=b0_eff, b1=b1, R0=1.0,
        kstar=kstar, d=d,
    )


def builtin_model(name: str, d: int = 1, gamma: float = 3.0, b0: float = 1.0,
                  conservative: bool = True) -> CoefficientModel:
    """Built-in coefficient models.

    ``harmonic``: b = v, c = d (the harmonic Fokker-Planck operator, interior
    mass conservative). ``power``: b = b0 v <v>^{gamma-2} with c = div_v b
    (conservative) or c = 0.
    """
    if name == "harmonic":
        return _harmonic_model(d)
    if name == "power":
        if gamma <= 1:
            raise ValueError(f"confinement exponent gamma must exceed 1, got {gamma}")
        if b0 <= 0:
            raise ValueError(f"drift strength b0 must be positive, got {b0}")
        return _power_model(gamma, b0, d, conservative)
    raise ValueError(f"unknown model {name!r}; expected 'harmonic' or 'power'")


@dataclass(frozen=True)
class ConfinementCheck:
    ok: bool
    worst_lower_slack: float
    worst_upper_slack: float
    worst_reaction_slack: float
    offending_node: tuple[int, int] | None = None


def check_confinement(model: CoefficientModel, grid: PhaseGrid, p: float = 2.0,
                      tol: float = 1e-12) -> ConfinementCheck:
    """Verify the confinement inequalities at every grid node with |v| > R0.

    Reports the minimal slack of each inequality; a violation is returned in
    the report (ok=False with the offending node), not raised.
    """
    x = grid.x_nodes[:, None]
    v = grid.v_nodes[None, :]
    active = np.abs(grid.v_nodes) > model.R0
    if not active.any():
        return ConfinementCheck(True, math.inf, math.inf, math.inf)
    bv = (model.b(x, v) * v)[:, active]
    speed = np.abs(grid.v_nodes[active])
    lower = bv - model.b0 * speed ** model.gamma
    upper = model.b1 * speed ** model.gamma - bv
    pinv = 0.0 if p == math.inf else 1.0 / p
    lhs = (model.c(x, v) - pinv * model.div_b(x, v))[:, active]
    rhs = model.kstar(p) * bv / speed ** 2
    reaction = rhs - lhs
    slacks = (float(lower.min()), float(upper.min()), float(reaction.min()))
    ok = all(s >= -tol for s in slacks)
    node = None
    if not ok:
        stacked = np.minimum(np.minimum(lower, upper), reaction)
        ii, jj = np.unravel_index(np.argmin(stacked), stacked.shape)
        node = (int(ii), int(np.flatnonzero(active)[jj]))
    return ConfinementCheck(ok, *slacks, offending_node=node)


def wall_maxwellians(boundary: BoundaryModel, grid: PhaseGrid, d: int = 1
                     ) -> dict[str, WallMaxwellian]:
    """Renormalized wall Maxwellians for both walls, keyed by wall name."""
    return {
        "left": wall_maxwellian(boundary.theta[0], grid, d),
        "right": wall_maxwellian(boundary.theta[1], grid, d),
    }


def equilibrium_boundary(theta: float = 1.0) -> BoundaryModel:
    """Fully accommodating walls at a common temperature (iota = 1)."""
    return BoundaryModel(iota_s=(0.5, 0.5), iota_d=(0.5, 0.5), theta=(theta, theta))
