"""Admissible weight functions and the velocity-confinement machinery.

Weights are either polynomial <v>^k or exponential exp(zeta <v>^s), with the
parameter restrictions that make the collision operator dissipative in the
corresponding weighted space. The confinement quantity varpi, its negative
envelope at large speeds, and the boundary-corrected (twisted) weights are
all evaluated from closed-form derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import PhaseGrid
from .model import BoundaryModel, CoefficientModel, maxwellian_raw, wall_maxwellians


def smooth_cutoff(r: np.ndarray | float) -> np.ndarray:
    """Bump chi with chi=1 on [0,1], chi=0 on [2,inf), cubic smoothstep between."""
    r = np.asarray(r, dtype=float)
    t = np.clip(r - 1.0, 0.0, 1.0)
    return 1.0 - 3.0 * t ** 2 + 2.0 * t ** 3


@dataclass(frozen=True)
class WeightSpec:
    """An admissible weight function with cached confinement parameters.

    kind is "poly" (omega = <v>^k, s = 0) or "exp" (omega = exp(zeta <v>^s)).
    varsigma = gamma + s - 2 decides strong confinement.
    """

    kind: str
    k: float = 0.0
    zeta: float = 0.0
    s: float = 0.0
    gamma: float = 2.0
    varsigma: float = 0.0
    strongly_confining: bool = False
    k_star: float = 0.0  # admissibility threshold, polynomial case only

    def label(self) -> str:
        if self.kind == "poly":
            return f"poly(k={self.k})"
        return f"exp(zeta={self.zeta}, s={self.s})"


def _poly_threshold(model: CoefficientModel) -> float:
    k1 = max(model.kstar(1.0), model.d + 2)
    k1p = k1 + model.d / 2.0 + max(1.0, model.gamma / 2.0 - 1.0)
    return max(k1p, model.kstar(math.inf))


def poly_weight(k: float, model: CoefficientModel) -> WeightSpec:
    """Polynomial weight <v>^k; requires k above the model's threshold k_*."""
    k_star = _poly_threshold(model)
    if k <= k_star:
        raise ValueError(
            f"polynomial weight needs k > k_* = {k_star:.3g} for this model, got k={k}")
    varsigma = model.gamma - 2.0
    return WeightSpec(kind="poly", k=float(k), gamma=model.gamma,
                      varsigma=varsigma, strongly_confining=varsigma > 0,
                      k_star=k_star)


def exp_weight(zeta: float, s: float, model: CoefficientModel,
               boundary: BoundaryModel) -> WeightSpec:
    """Exponential weight exp(zeta <v>^s) under the four-case admissibility table."""
    gamma = model.gamma
    theta_max = boundary.theta_max
    if zeta <= 0:
        raise ValueError(f"exponential weight needs zeta > 0, got {zeta}")
    if s <= 0:
        raise ValueError(f"exponential weight needs s > 0, got {s}")
    if s < min(gamma, 2.0):
        pass  # any zeta > 0
    elif s == gamma and gamma < 2.0:
        if not zeta < model.b0 / 2.0:
            raise ValueError(
                f"s = gamma < 2 requires zeta in (0, b0/2) = (0, {model.b0 / 2}), got {zeta}")
    elif s == gamma == 2.0:
        bound = min(1.0 / theta_max, model.b0) / 2.0
        if not zeta < bound:
            raise ValueError(
                f"s = gamma = 2 requires zeta in (0, {bound}), got {zeta}")
    elif s == 2.0 and gamma > 2.0:
        bound = 1.0 / (2.0 * theta_max)
        if not zeta < bound:
            raise ValueError(
                f"s = 2 < gamma requires zeta in (0, {bound}), got {zeta}")
    else:
        raise ValueError(
            f"(zeta={zeta}, s={s}) outside the admissible set for gamma={gamma}")
    varsigma = gamma + s - 2.0
    return WeightSpec(kind="exp", zeta=float(zeta), s=float(s), gamma=gamma,
                      varsigma=varsigma, strongly_confining=varsigma > 0)


def eval_weight(spec: WeightSpec, v: np.ndarray | float) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    av2 = 1.0 + v ** 2
    if spec.kind == "poly":
        return av2 ** (spec.k / 2.0)
    return np.exp(spec.zeta * av2 ** (spec.s / 2.0))


def eval_grad(spec: WeightSpec, v: np.ndarray | float) -> np.ndarray:
    """Analytic d(omega)/dv."""
    v = np.asarray(v, dtype=float)
    av2 = 1.0 + v ** 2
    if spec.kind == "poly":
        return spec.k * v * av2 ** (spec.k / 2.0 - 1.0)
    u1 = spec.zeta * spec.s * v * av2 ** (spec.s / 2.0 - 1.0)
    return u1 * eval_weight(spec, v)


def eval_laplacian(spec: WeightSpec, v: np.ndarray | float) -> np.ndarray:
    """Analytic d2(omega)/dv2 (slab geometry, d = 1)."""
    v = np.asarray(v, dtype=float)
    av2 = 1.0 + v ** 2
    if spec.kind == "poly":
        k = spec.k
        return k * av2 ** (k / 2.0 - 1.0) + k * (k - 2.0) * v ** 2 * av2 ** (k / 2.0 - 2.0)
    z, s = spec.zeta, spec.s
    u1 = z * s * v * av2 ** (s / 2.0 - 1.0)
    u2 = z * s * av2 ** (s / 2.0 - 1.0) + z * s * (s - 2.0) * v ** 2 * av2 ** (s / 2.0 - 2.0)
    return (u2 + u1 ** 2) * eval_weight(spec, v)


def varpi(spec: WeightSpec, p: float, model: CoefficientModel,
          x: np.ndarray | float, v: np.ndarray | float) -> np.ndarray:
    """Confinement quantity for the collision operator in the weighted L^p space.

    varpi = 2(1-1/p)|w'|^2/w^2 + (2/p-1) w''/w - b w'/w + c - (1/p) div_v b.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    w = eval_weight(spec, v)
    g = eval_grad(spec, v) / w
    lap = eval_laplacian(spec, v) / w
    pinv = 0.0 if p == math.inf else 1.0 / p
    return (2.0 * (1.0 - pinv) * g ** 2 + (2.0 * pinv - 1.0) * lap
            - model.b(x, v) * g + model.c(x, v) - pinv * model.div_b(x, v))


def varpi_dual(spec: WeightSpec, q: float, model: CoefficientModel,
               x: np.ndarray | float, v: np.ndarray | float) -> np.ndarray:
    """Dual confinement quantity for m = omega^{-1} in L^q.

    Computed from its own formula (derivatives of m and the adjoint operator
    coefficients); equals varpi(omega, p) with 1/p + 1/q = 1, which the tests
    use as a cross-check.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    w = eval_weight(spec, v)
    gw = eval_grad(spec, v) / w
    lw = eval_laplacian(spec, v) / w
    # m = 1/omega: m'/m = -w'/w, m''/m = 2(w'/w)^2 - w''/w.
    gm = -gw
    lm = 2.0 * gw ** 2 - lw
    qinv = 0.0 if q == math.inf else 1.0 / q
    # adjoint operator: drift -b, reaction c - div b.
    return (2.0 * (1.0 - qinv) * gm ** 2 + (2.0 * qinv - 1.0) * lm
            + model.b(x, v) * gm + (model.c(x, v) - model.div_b(x, v))
            + qinv * model.div_b(x, v))


def b0_sharp(spec: WeightSpec, p: float, model: CoefficientModel) -> float:
    """Envelope coefficient in varpi_sharp = -b0_sharp <v>^varsigma, by case."""
    if spec.kind == "poly":
        return (spec.k - model.kstar(p)) * model.b0
    if spec.s == model.gamma:
        return model.b0 * spec.s * spec.zeta - (spec.s * spec.zeta) ** 2
    return model.b0 * spec.s * spec.zeta


@dataclass(frozen=True)
class ConfinementReport:
    """Nodewise varpi, its large-speed envelope and the fitted cutoff constants."""

    spec: WeightSpec
    p: float
    values: np.ndarray = field(repr=False)        # shape (Nx, Nv)
    envelope: np.ndarray = field(repr=False)      # varpi_sharp on the velocity grid
    b0_sharp: float = 0.0
    vartheta: float = 0.5
    kappa_prime: float = 0.0
    R_prime: float = 0.0
    strongly_confining: bool = False


def classify(spec: WeightSpec, model: CoefficientModel, grid: PhaseGrid,
             p: float = 1.0, vartheta: float = 0.5) -> ConfinementReport:
    """Compute varpi nodewise and fit (kappa', R') so that

        sup_x varpi <= kappa' chi_{R'} + (1 - chi_{R'}) vartheta varpi_sharp

    holds at every velocity node. Raises if no R' on the grid satisfies the
    tail part of the inequality (velocity box too small or bad parameters).
    """
    x = grid.x_nodes[:, None]
    v = grid.v_nodes[None, :]
    values = varpi(spec, p, model, x, v)
    b0s = b0_sharp(spec, p, model)
    envelope = -b0s * (1.0 + grid.v_nodes ** 2) ** (spec.varsigma / 2.0)
    sup_x = values.max(axis=0)

    speeds = np.abs(grid.v_nodes)
    fitted = None
    # only radii whose cutoff vanishes somewhere on the grid are admissible:
    # otherwise the tail condition would never be exercised and kappa' could
    # absorb an anti-confining varpi.
    candidates = np.unique(np.concatenate([[1.0, 2.0], speeds]))
    candidates = candidates[(candidates >= 1.0)
                            & (2.0 * candidates <= speeds.max())]
    for R in candidates:
        chi = smooth_cutoff(speeds / R)
        tail = chi < 1.0
        # where chi = 0 the inequality has no free constant left
        hard = chi <= 0.0
        if np.any(sup_x[hard] > vartheta * envelope[hard]):
            continue
        need = sup_x - (1.0 - chi) * vartheta * envelope
        active = chi > 0.0
        kappa = float(np.max(need[active] / chi[active])) if active.any() else 0.0
        kappa = max(kappa, 0.0)
        if np.all(sup_x <= kappa * chi + (1.0 - chi) * vartheta * envelope + 1e-12):
            fitted = (kappa, float(R))
            break
    if fitted is None:
        worst = int(np.argmax(sup_x - vartheta * envelope))
        raise ValueError(
            "envelope inequality unsatisfiable on this grid "
            f"(worst velocity node v={grid.v_nodes[worst]:.4g}); "
            "enlarge V or revisit the weight parameters")
    kappa, R = fitted
    return ConfinementReport(spec=spec, p=p, values=values, envelope=envelope,
                             b0_sharp=b0s, vartheta=vartheta,
                             kappa_prime=kappa, R_prime=R,
                             strongly_confining=spec.strongly_confining)


@dataclass(frozen=True)
class CompatibilityReport:
    """Quadrature + tail check of the weight/boundary compatibility condition."""

    ok: bool
    quad_M_omega: float      # sup over walls of sum M omega <v> dv
    quad_inv_L1: float       # sum omega^{-1} <v> dv
    quad_inv_L2: float
    tail_ok: bool
    reason: str = ""


def check_compatibility(spec: WeightSpec, boundary: BoundaryModel,
                        grid: PhaseGrid) -> CompatibilityReport:
    """Check M omega <v> in L1 cap Linf and omega^{-1} <v> in L1 cap L2.

    Grid quadrature alone cannot witness tail divergence, so the analytic
    tail criterion is applied on top of the truncated sums.
    """
    v = grid.v_nodes
    av = np.sqrt(1.0 + v ** 2)
    w = eval_weight(spec, v)
    quad = 0.0
    for th in boundary.theta:
        quad = max(quad, float(np.sum(maxwellian_raw(th, v) * w * av) * grid.dv))
    inv1 = float(np.sum(av / w) * grid.dv)
    inv2 = float(np.sum((av / w) ** 2) * grid.dv)

    if spec.kind == "poly":
        tail_ok = spec.k > 2.0  # <v>^{1-k} integrable in d = 1
        reason = "" if tail_ok else "omega^{-1}<v> not integrable (k too small)"
    else:
        if spec.s < 2.0:
            tail_ok = True
            reason = ""
        else:
            tail_ok = spec.zeta < 1.0 / (2.0 * boundary.theta_max)
            reason = "" if tail_ok else "M omega <v> unbounded (zeta >= 1/(2 Theta*))"
    return CompatibilityReport(ok=tail_ok, quad_M_omega=quad, quad_inv_L1=inv1,
                               quad_inv_L2=inv2, tail_ok=tail_ok, reason=reason)


@dataclass(frozen=True)
class TwistedWeight:
    """Boundary-corrected weights omega_A / omega-tilde (or their duals).

    All arrays have shape (Nx, Nv). ``base`` holds the plain weight omega
    (dual: m) on the velocity grid broadcast over x, ``wA`` the matched
    weight and ``twisted`` the sign-corrected one. c_A records the
    equivalence constant between omega and the corrected weights.
    """

    spec: WeightSpec
    p: float
    A: float
    dual: bool
    base: np.ndarray = field(repr=False)
    wA: np.ndarray = field(repr=False)
    twisted: np.ndarray = field(repr=False)
    chi_A: np.ndarray = field(repr=False)
    c_A: float = 1.0
    m_scale: float = 1.0  # rescaling applied to m in the dual construction


def _maxwellian_field(boundary: BoundaryModel, grid: PhaseGrid) -> np.ndarray:
    """Renormalized wall Maxwellian extended inward from the nearest wall."""
    mw = wall_maxwellians(boundary, grid)
    left = grid.x_nodes < grid.L / 2
    out = np.empty((grid.Nx, grid.Nv))
    out[left, :] = mw["left"].values
    out[~left, :] = mw["right"].values
    return out


def twist(spec: WeightSpec, p: float, A: float, boundary: BoundaryModel,
          grid: PhaseGrid) -> TwistedWeight:
    """Primal twisted weight: omega_A^p = M^{1-p} chi_A + omega^p (1 - chi_A),
    omega-tilde^p = (1 + (1/2) n_x v / <v>^4) omega_A^p."""
    if A < 1.0:
        raise ValueError(f"truncation radius A must be >= 1, got {A}")
    v = grid.v_nodes
    chi = smooth_cutoff(np.abs(v) / A)
    M = _maxwellian_field(boundary, grid)
    w = eval_weight(spec, v)
    base = np.broadcast_to(w, (grid.Nx, grid.Nv)).copy()
    wA_p = M ** (1.0 - p) * chi + w ** p * (1.0 - chi)
    n_x = grid.normal_extension(grid.x_nodes)[:, None]
    corr = 1.0 + 0.5 * n_x * v / (1.0 + v ** 2) ** 2
    twisted_p = corr * wA_p
    wA = wA_p ** (1.0 / p)
    tw = twisted_p ** (1.0 / p)
    c_A = float(max(np.max(2.0 * base / wA), np.max(1.5 * wA / base)))
    return TwistedWeight(spec=spec, p=p, A=float(A), dual=False, base=base,
                         wA=wA, twisted=tw, chi_A=chi, c_A=c_A)


def dual_twist(spec: WeightSpec, q: float, A: float, boundary: BoundaryModel,
               grid: PhaseGrid) -> TwistedWeight:
    """Dual twisted weight for m = omega^{-1}:
    m_A^q = chi_A M + (1 - chi_A) m^q, m-tilde^q = (1 - (1/2) n_x v/<v>^4) m_A^q.

    m is rescaled by a constant so that m^q >= M nodewise, matching the
    rescaling freedom used to compare m_A with m.
    """
    if A < 1.0:
        raise ValueError(f"truncation radius A must be >= 1, got {A}")
    v = grid.v_nodes
    chi = smooth_cutoff(np.abs(v) / A)
    M = _maxwellian_field(boundary, grid)
    m = 1.0 / eval_weight(spec, v)
    m = np.broadcast_to(m, (grid.Nx, grid.Nv)).copy()
    scale = float(max(1.0, np.max(M ** (1.0 / q) / m)))
    m = m * scale
    mA_q = chi * M + (1.0 - chi) * m ** q
    n_x = grid.normal_extension(grid.x_nodes)[:, None]
    corr = 1.0 - 0.5 * n_x * v / (1.0 + v ** 2) ** 2
    mt_q = corr * mA_q
    mA = mA_q ** (1.0 / q)
    mt = mt_q ** (1.0 / q)
    c_A = float(max(np.max(2.0 * m / mA), np.max(1.5 * mA / m)))
    return TwistedWeight(spec=spec, p=q, A=float(A), dual=True, base=m,
                         wA=mA, twisted=mt, chi_A=chi, c_A=c_A, m_scale=scale)
