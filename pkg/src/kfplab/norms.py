"""Weighted norms, the wall budget functionals and interpolation constants.

The primal norms are node-additive quadrature sums, so every norm of a sum of
disjointly supported fields splits exactly — the spectral certificate relies
on this. The dual norm is the exact operator norm of the quadrature pairing
against the weighted L1 norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import PhaseGrid, boundary_geometry, core_region
from .model import BoundaryModel, wall_maxwellians
from .weights import WeightSpec, eval_weight, smooth_cutoff


def _weight_values(weight, grid: PhaseGrid) -> np.ndarray:
    """Flat weight values from a spec, an (Nx, Nv) array, or a flat array."""
    if weight is None:
        return np.ones(grid.size)
    if isinstance(weight, WeightSpec):
        w = eval_weight(weight, grid.v_nodes)
        return np.broadcast_to(w, (grid.Nx, grid.Nv)).reshape(-1)
    w = np.asarray(weight, dtype=float)
    if w.shape == (grid.Nx, grid.Nv):
        return w.reshape(-1)
    if w.shape == (grid.size,):
        return w
    if w.shape == (grid.Nv,):
        return np.broadcast_to(w, (grid.Nx, grid.Nv)).reshape(-1)
    raise ValueError(f"weight shape {w.shape} does not match the grid")


def _field_values(f) -> np.ndarray:
    return np.asarray(getattr(f, "values", f), dtype=float).reshape(-1)


def weighted_norm(f, weight, p: float, grid: PhaseGrid) -> float:
    """||f||_{L^p_omega} = (sum |f omega|^p dx dv)^{1/p}; p = inf is sup |f omega|."""
    vals = _field_values(f) * _weight_values(weight, grid)
    if p == math.inf:
        return float(np.max(np.abs(vals)))
    if p < 1:
        raise ValueError(f"norm exponent must be >= 1, got {p}")
    return float(np.sum(np.abs(vals) ** p * grid.cell_volume) ** (1.0 / p))


def dual_norm(phi, weight, grid: PhaseGrid) -> float:
    """Norm of phi dual to the weighted L1 norm: max |phi| / omega.

    With this pairing-exact choice, |<phi, f>_h| <= dual_norm(phi) * ||f||_1
    holds with no quadrature slack.
    """
    return float(np.max(np.abs(_field_values(phi)) / _weight_values(weight, grid)))


def bracket(phi, f, grid: PhaseGrid) -> float:
    """Quadrature duality pairing <phi, f>_h = sum phi f dx dv."""
    return float(np.dot(_field_values(phi), _field_values(f)) * grid.cell_volume)


@dataclass(frozen=True)
class WallBudget:
    """Boundary budget of one wall: incoming load K1 versus returns K2 + K0."""

    wall: str
    A: float
    K0: float
    K1: float
    K2: float

    @property
    def margin(self) -> float:
        return self.K1 - self.K2 - self.K0

    @property
    def ok(self) -> bool:
        return self.margin <= 0.0


@dataclass(frozen=True)
class BoundaryBudget:
    spec: WeightSpec
    p: float
    A: float
    walls: tuple[WallBudget, WallBudget]

    @property
    def ok(self) -> bool:
        return all(w.ok for w in self.walls)

    @property
    def worst_margin(self) -> float:
        return max(w.margin for w in self.walls)


def boundary_budget(spec: WeightSpec, p: float, A: float,
                    boundary: BoundaryModel, grid: PhaseGrid) -> BoundaryBudget:
    """Evaluate the wall budget K1 - K2 - K0 <= 0 for the matched weight.

    Only p = 1 and p = 2 carry budget formulas; the matched weight at the wall
    is omega_A^p = M^{1-p} chi_A + omega^p (1 - chi_A) with the renormalized
    wall Maxwellian, so at saturation (chi_A = 1) K1 = K2 = 1 exactly and the
    margin is -K0 < 0.
    """
    if p not in (1.0, 2.0):
        raise ValueError(f"boundary budget is defined for p in {{1, 2}}, got {p}")
    if A < 1.0:
        raise ValueError(f"truncation radius A must be >= 1, got {A}")
    v = grid.v_nodes
    av2 = 1.0 + v ** 2
    chi = smooth_cutoff(np.abs(v) / A)
    w = eval_weight(spec, v)
    maxw = wall_maxwellians(boundary, grid)
    geom = boundary_geometry(grid)
    budgets = []
    for wall in geom.walls:
        M = maxw[wall.name].values
        wA_p = M ** (1.0 - p) * chi + w ** p * (1.0 - chi)
        nv = wall.normal * v
        inc, out = wall.incoming, wall.outgoing
        K1 = float(np.sum((M ** p * wA_p * np.abs(nv))[inc]) * grid.dv)
        if p == 1.0:
            K2 = 1.0
            vhat = nv / np.sqrt(av2)
            K0 = 0.5 * float(np.sum((M * vhat ** 2 * wA_p)[out]) * grid.dv)
        else:
            wA2 = wA_p  # p = 2: wA_p already holds omega_A^2
            K2 = 1.0 / (float(np.sum((nv / wA2)[out]) * grid.dv))
            K0 = 1.0 / (2.0 * float(np.sum((av2 / wA2)[out]) * grid.dv))
        budgets.append(WallBudget(wall=wall.name, A=float(A), K0=K0, K1=K1, K2=K2))
    return BoundaryBudget(spec=spec, p=p, A=float(A), walls=tuple(budgets))


def find_A(spec: WeightSpec, p: float, boundary: BoundaryModel,
           grid: PhaseGrid, A0: float = 1.0) -> BoundaryBudget:
    """Double A from A0 until the budget closes at both walls.

    Once A >= V the cutoff saturates (chi_A = 1 on the whole velocity grid)
    and the margin is -K0 < 0, so the ladder always terminates; the 2V cap is
    a guard against a broken budget implementation, not a live failure mode.
    """
    A = float(A0)
    while A <= 2.0 * grid.V:
        budget = boundary_budget(spec, p, A, boundary, grid)
        if budget.ok:
            return budget
        A *= 2.0
    raise RuntimeError(
        f"no truncation radius up to {2.0 * grid.V} closes the wall budget; "
        "the saturated budget should always close — check weight compatibility")


@dataclass(frozen=True)
class InterpolationConstants:
    """Constants of the bound ||f||_{q, w_q} <= xi ||f||_{p, w_p} + Xi [f]_core."""

    eps: float
    p: float
    q: float
    theta: float
    xi: float
    Xi: float
    core_count: int


def interpolation_constants(eps: float, q: float, p: float, w_q, w_p,
                            grid: PhaseGrid) -> InterpolationConstants:
    """Interpolation constants between weighted L^p and L^q, 1 <= q < p.

    theta solves 1/q = theta/p + (1 - theta);
    xi = eps^{1/theta} + ||(w_q/w_p) 1_{core^c}||_{L^{r'q}} with r = p/q;
    Xi = eps^{1/(theta-1)} sup_core w_q.
    Requires w_q <= w_p nodewise and a nonempty core region.
    """
    if not (1.0 < q < p):
        raise ValueError(f"need 1 < q < p, got q={q}, p={p}")
    wq = _weight_values(w_q, grid)
    wp = _weight_values(w_p, grid)
    if np.any(wq > wp * (1.0 + 1e-12)):
        worst = int(np.argmax(wq / wp))
        raise ValueError(
            f"weight domination w_q <= w_p fails at flat node {worst} "
            f"(ratio {wq[worst] / wp[worst]:.4g})")
    core = core_region(grid, eps)
    if core.empty:
        raise ValueError(
            f"core region is empty for eps={eps} on this grid; decrease eps")
    theta = p * (q - 1.0) / (q * (p - 1.0))
    r = p / q
    rprime = r / (r - 1.0)
    off = ~core.mask
    tail = float(np.sum((wq[off] / wp[off]) ** (rprime * q)
                        * grid.cell_volume) ** (1.0 / (rprime * q)))
    xi = eps ** (1.0 / theta) + tail
    Xi = eps ** (1.0 / (theta - 1.0)) * float(np.max(wq[core.mask]))
    return InterpolationConstants(eps=float(eps), p=p, q=q, theta=theta,
                                  xi=xi, Xi=Xi, core_count=core.count)


def core_seminorm(f, eps: float, grid: PhaseGrid) -> float:
    """[f]_core = sum over the core region |f| dx dv (restricted L1 mass)."""
    core = core_region(grid, eps)
    vals = np.abs(_field_values(f))
    return float(np.sum(vals[core.mask]) * grid.cell_volume)
