"""First eigentriplet and the constructive Doblin-Harris spectral-gap certificate.

The certification norm ||.||_1 is a weighted node-additive cell sum, so it
splits exactly over the disjointly supported basis fields e_j. Columnwise
bounds on the rescaled flow map S-tilde_T = exp(-lambda_1 T) S_T are then
*exact* inequalities for every field, not sampled ones: the minorization
constant, the Lyapunov pair (gamma_L, K) and the coupling factor gamma_H all
come from single passes over the columns, and the certified contraction
factor gamma assembles from them by the two-case triple-norm argument.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .grid import PhaseGrid, core_region
from .evolve import TimeScheme, _Stepper, default_dt, step_matrix
from .operator import GeneratorMatrix


@dataclass(frozen=True)
class NormPair:
    """The certification norm pair: weighted cell-sum ||.||_1 and its dual.

    ||f||_1 = sum |f| omega_1 dxdv is node-additive; the dual norm
    ||phi||_0 = max |phi|/omega_1 makes |<phi, f>_h| <= ||phi||_0 ||f||_1
    exact. omega_1 = None means unit weight.
    """

    grid: PhaseGrid
    omega1: np.ndarray | None = field(default=None, repr=False)

    def _w(self) -> np.ndarray:
        if self.omega1 is None:
            return np.ones(self.grid.size)
        return np.asarray(self.omega1, dtype=float).reshape(-1)

    def norm1(self, f: np.ndarray) -> float:
        return float(np.sum(np.abs(f) * self._w()) * self.grid.cell_volume)

    def norm0(self, phi: np.ndarray) -> float:
        return float(np.max(np.abs(phi) / self._w()))

    def label(self) -> str:
        return "unit" if self.omega1 is None else "weighted"


@dataclass(frozen=True)
class EigenTriplet:
    """Principal eigenvalue with its primal/dual eigenvectors.

    Normalized so that ||phi_1||_0 = 1 and <phi_1, f_1>_h = 1; lambda_1 is
    log of the Rayleigh growth factor of the flow map over [0, T], divided
    by T, so it is exactly the rate the certificate rescales with.
    """

    lam1: float
    f1: np.ndarray = field(repr=False)
    phi1: np.ndarray = field(repr=False)
    rho: float = 1.0          # Rayleigh growth factor of S_T
    T: float = 0.0
    n_iter: int = 0
    residual: float = 0.0     # generator residual |L f1 - mu f1| / |f1|
    conservative: bool = False


def _seminorm(f: np.ndarray, phi1: np.ndarray, grid: PhaseGrid) -> float:
    """[f]_{phi_1} = <|f|, phi_1>_h, the phi_1-weighted cell sum."""
    return float(np.sum(np.abs(f) * phi1) * grid.cell_volume)


def is_conservative(Lh: GeneratorMatrix, tol: float = 1e-10) -> bool:
    """True when the quadrature column sums of the generator vanish.

    1^T D L = 0 means the flow preserves mass exactly, which pins
    lambda_1 = 0 and phi_1 = const without iteration.
    """
    colsum = np.asarray(Lh.matrix.sum(axis=0)).reshape(-1)
    scale = max(1.0, float(np.abs(Lh.matrix).max()))
    return bool(np.max(np.abs(colsum)) <= tol * scale)


def principal_triplet(Lh: GeneratorMatrix, T: float = 0.5,
                      scheme: TimeScheme | None = None, tol: float = 1e-12,
                      max_iter: int = 5000,
                      norm_pair: NormPair | None = None) -> EigenTriplet:
    """Power iteration on the flow map and its transpose.

    The dual iteration produces phi_1 (sup-normalized against omega_1), the
    primal iteration with the renormalization <phi_1, g_k> = 1 produces f_1,
    and lambda_1 = log(rho)/T from the converged Rayleigh ratio
    <phi, S_T f>/<phi, f>. In the conservative case phi_1 and lambda_1 are
    set exactly instead of iterated.
    """
    grid = Lh.grid
    pair = norm_pair or NormPair(grid=grid)
    scheme = scheme or TimeScheme(dt=default_dt(grid))
    stepper = _Stepper(Lh, scheme)
    n_steps = int(round(T / scheme.dt))
    if n_steps < 1 or not np.isclose(n_steps * scheme.dt, T, rtol=1e-9):
        raise ValueError(f"horizon T={T} must be a multiple of dt={scheme.dt}")

    def flow(f):
        for _ in range(n_steps):
            f = stepper.forward(f)
        return f

    def flow_T(g):
        for _ in range(n_steps):
            g = stepper.backward_dual(g)
        return g

    quad = grid.cell_volume
    conservative = is_conservative(Lh)
    if conservative:
        phi1 = np.ones(grid.size) / pair.norm0(np.ones(grid.size))
        n_dual = 0
    else:
        phi = np.ones(grid.size)
        for n_dual in range(1, max_iter + 1):
            nxt = flow_T(phi)
            nxt /= pair.norm0(nxt)
            if np.max(np.abs(nxt - phi)) < tol:
                phi = nxt
                break
            phi = nxt
        else:
            raise RuntimeError(f"dual power iteration did not converge in {max_iter} sweeps")
        phi1 = phi

    f = np.ones(grid.size)
    f /= np.dot(phi1, f) * quad
    rho = 1.0
    for n_iter in range(1, max_iter + 1):
        Sf = flow(f)
        rho = float(np.dot(phi1, Sf) / np.dot(phi1, f))
        nxt = Sf / (np.dot(phi1, Sf) * quad)
        drift = _seminorm(nxt - f, phi1, grid) + pair.norm1(nxt - f)
        f = nxt
        if drift < tol:
            break
    else:
        raise RuntimeError(f"primal power iteration did not converge in {max_iter} sweeps")

    lam1 = 0.0 if conservative else math.log(rho) / T
    Lf = Lh.matrix @ f
    mu = float(np.dot(phi1, Lf) / np.dot(phi1, f))
    residual = float(np.max(np.abs(Lf - mu * f)) / np.max(np.abs(f)))
    return EigenTriplet(lam1=lam1, f1=f, phi1=phi1, rho=rho, T=float(T),
                        n_iter=n_iter, residual=residual,
                        conservative=conservative)


def minorization_eta(S_T: np.ndarray, S_T0: np.ndarray, core_mask: np.ndarray,
                     quad_weight: float) -> float:
    """Columnwise minorization constant of the flow map over the core region.

    eta = min over columns j and core nodes i of
          (S_T e_j)_i / <1_core, S_T0 e_j>_h,
    so that S_T f >= eta 1_core <1_core, S_T0 f>_h holds for every f >= 0 by
    columnwise linearity. Columns whose denominator vanishes impose no
    constraint and are skipped.
    """
    core = np.asarray(core_mask, dtype=bool)
    if not core.any():
        raise ValueError("core region is empty; decrease eps")
    denom = quad_weight * S_T0[core, :].sum(axis=0)
    numer = S_T[core, :].min(axis=0)
    live = denom > 0.0
    if not live.any():
        raise ValueError("flow map carries no mass into the core region")
    return float(np.min(numer[live] / denom[live]))


def minorization_for(Lh: GeneratorMatrix, eps: float, T0: float, T: float,
                     scheme: TimeScheme | None = None) -> float:
    """Minorization constant from freshly built flow maps at horizons T0, T."""
    S_T = step_matrix(Lh, T, scheme)
    S_T0 = step_matrix(Lh, T0, scheme)
    core = core_region(Lh.grid, eps)
    return minorization_eta(S_T, S_T0, core.mask, Lh.grid.cell_volume)


@dataclass(frozen=True)
class HarrisCertificate:
    """All constants of the constructive spectral-gap certificate.

    gamma < 1 certifies the triple-norm contraction
    |||S~_T f||| <= gamma |||f||| on {<phi_1, f> = 0}, with
    |||f||| = [f]_{phi_1} + beta ||f||_1, hence the decay rate
    lambda_2 = lambda_1 + log(gamma)/T with prefactor C = (1+beta)/beta.
    """

    eps: float
    T0: float
    T1: float
    T: float
    norm_label: str
    eta: float
    c: float
    gamma_H: float
    gamma_L: float
    K: float
    beta: float
    delta0: float
    A_cond: float
    gamma1: float
    gamma2: float
    gamma: float
    lam1: float
    lam2: float
    C: float
    beta_grid: tuple[float, ...] = ()
    delta0_grid: tuple[float, ...] = ()
    gammaL_grid: tuple[float, ...] = ()
    A_factors: tuple[float, ...] = ()

    @property
    def valid(self) -> bool:
        return 0.0 < self.gamma < 1.0 and self.lam2 < self.lam1

    def to_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path: str) -> "HarrisCertificate":
        with open(path) as fh:
            raw = json.load(fh)
        for key in ("beta_grid", "delta0_grid", "gammaL_grid", "A_factors"):
            raw[key] = tuple(raw.get(key, ()))
        return cls(**raw)


DEFAULT_BETA_GRID = tuple(float(b) for b in np.geomspace(1e-3, 10.0, 25))
DEFAULT_DELTA0_GRID = tuple(float(d) for d in np.linspace(0.01, 0.9, 30))
DEFAULT_GAMMAL_GRID = tuple(float(g) for g in np.linspace(0.05, 0.95, 19))
DEFAULT_A_FACTORS = (2.0, 5.0, 10.0, 100.0, 1000.0)


def certificate_from_matrices(S_tilde: np.ndarray, phi1: np.ndarray,
                              core_mask: np.ndarray, quad_weight: float,
                              omega1: np.ndarray | None = None,
                              norm_label: str = "unit",
                              eta: float = math.nan,
                              eps: float = math.nan, T0: float = math.nan,
                              T1: float = math.nan, T: float = 1.0,
                              lam1: float = 0.0,
                              beta_grid=DEFAULT_BETA_GRID,
                              delta0_grid=DEFAULT_DELTA0_GRID,
                              gammaL_grid=DEFAULT_GAMMAL_GRID,
                              A_factors=DEFAULT_A_FACTORS) -> HarrisCertificate:
    """Assemble the certificate from the rescaled flow map, columnwise.

    Each basis field e_j is supported on one node, so the weighted cell-sum
    norms of a combination split exactly: the per-column constants below are
    tight bounds for all fields, and the search over (gamma_L, beta, delta0,
    A_cond) only tunes how they combine into gamma.
    """
    quad = float(quad_weight)
    n = S_tilde.shape[0]
    w1 = (np.ones(n) if omega1 is None
          else np.asarray(omega1, dtype=float).reshape(-1))
    core = np.asarray(core_mask, dtype=bool)
    if not core.any():
        raise ValueError("core region is empty; decrease eps")

    # per-column quantities: e_j has [e_j]_{phi_1} = phi_1(j) quad and
    # ||e_j||_1 = omega_1(j) quad.
    sem_ej = phi1 * quad
    nrm_ej = w1 * quad
    col_norm1 = quad * (np.abs(S_tilde) * w1[:, None]).sum(axis=0)
    col_sem = quad * (np.abs(S_tilde) * phi1[:, None]).sum(axis=0)

    # unconditional Doblin-Harris constant and the coupling factor
    if np.any(sem_ej <= 0):
        raise ValueError("phi_1 must be strictly positive for the certificate")
    c = float(np.min(S_tilde[core, :].min(axis=0) / sem_ej))
    sem_core = float(np.sum(phi1[core]) * quad)  # [1_core]_{phi_1}
    gamma_H = 1.0 - c * sem_core
    if not 0.0 < gamma_H < 1.0:
        raise RuntimeError(
            f"coupling factor gamma_H = {gamma_H:.4g} outside (0,1); "
            "the flow map does not couple through the core at this horizon")

    best = None
    for gamma_L in gammaL_grid:
        K = float(np.max(np.clip(col_norm1 - gamma_L * nrm_ej, 0.0, None) / sem_ej))
        if K == 0.0:
            K = 1e-300  # degenerate: ||.||_1 already contracts columnwise
        for Af in A_factors:
            A_cond = Af * K / (1.0 - gamma_L)
            base = gamma_L + K / A_cond
            if base >= 1.0:
                continue
            for beta in beta_grid:
                if beta * K >= 1.0 - gamma_H:
                    continue
                gamma1 = max(gamma_H + beta * K, gamma_L)
                for delta0 in delta0_grid:
                    if base + delta0 >= 1.0:
                        continue
                    gamma2 = max(1.0 - beta * delta0, base + delta0)
                    gamma = max(gamma1, gamma2)
                    if gamma < 1.0 and (best is None or gamma < best[0]):
                        best = (gamma, gamma1, gamma2, gamma_L, K, beta,
                                delta0, A_cond)
    if best is None:
        raise RuntimeError(
            "no admissible (gamma_L, beta, delta0, A_cond) on the search grids "
            "yields gamma < 1; enlarge the grids or the horizon T")
    gamma, gamma1, gamma2, gamma_L, K, beta, delta0, A_cond = best
    lam2 = lam1 + math.log(gamma) / T
    return HarrisCertificate(
        eps=eps, T0=T0, T1=T1, T=float(T), norm_label=norm_label,
        eta=eta, c=c, gamma_H=gamma_H, gamma_L=gamma_L, K=K, beta=beta,
        delta0=delta0, A_cond=A_cond, gamma1=gamma1, gamma2=gamma2,
        gamma=gamma, lam1=lam1, lam2=lam2, C=(1.0 + beta) / beta,
        beta_grid=tuple(beta_grid), delta0_grid=tuple(delta0_grid),
        gammaL_grid=tuple(gammaL_grid), A_factors=tuple(A_factors))


def certificate(Lh: GeneratorMatrix, eps: float, T0: float, T1: float, T: float,
                scheme: TimeScheme | None = None,
                norm_pair: NormPair | None = None,
                triplet: EigenTriplet | None = None,
                beta_grid=DEFAULT_BETA_GRID,
                delta0_grid=DEFAULT_DELTA0_GRID,
                gammaL_grid=DEFAULT_GAMMAL_GRID,
                A_factors=DEFAULT_A_FACTORS) -> HarrisCertificate:
    """Full certificate pipeline for an assembled generator."""
    grid = Lh.grid
    triplet = triplet or principal_triplet(Lh, T=T, scheme=scheme,
                                           norm_pair=norm_pair)
    S_T = step_matrix(Lh, T, scheme)
    S_T0 = step_matrix(Lh, T0, scheme)
    core = core_region(grid, eps)
    eta = minorization_eta(S_T, S_T0, core.mask, grid.cell_volume)
    if eta <= 0:
        raise RuntimeError(f"minorization constant eta = {eta:.4g} is not positive")
    S_tilde = math.exp(-triplet.lam1 * T) * S_T
    pair = norm_pair or NormPair(grid=grid)
    return certificate_from_matrices(
        S_tilde, triplet.phi1, core.mask, grid.cell_volume,
        omega1=pair.omega1, norm_label=pair.label(),
        eta=eta, eps=eps, T0=T0, T1=T1, T=T, lam1=triplet.lam1,
        beta_grid=beta_grid, delta0_grid=delta0_grid,
        gammaL_grid=gammaL_grid, A_factors=A_factors)


@dataclass(frozen=True)
class DecayReport:
    """Sampled validation of the certified contraction and decay envelope."""

    n_samples: int
    n_blocks: int
    contraction_violations: int
    lyapunov_violations: int
    coupling_violations: int
    envelope_violations: int
    worst_contraction_ratio: float
    worst_envelope_ratio: float

    @property
    def ok(self) -> bool:
        return (self.contraction_violations == 0
                and self.lyapunov_violations == 0
                and self.coupling_violations == 0
                and self.envelope_violations == 0)


def verify_decay(Lh: GeneratorMatrix, triplet: EigenTriplet,
                 cert: HarrisCertificate, n_samples: int = 1000,
                 T_max: float | None = None,
                 scheme: TimeScheme | None = None,
                 norm_pair: NormPair | None = None,
                 seed: int = 0, slack: float = 1e-10) -> DecayReport:
    """Check the certified inequalities on random phi_1-orthogonal fields.

    Per sample h with <phi_1, h> = 0 and per T-block:
      triple norm    |||S~_T h||| <= gamma |||h|||,
      Lyapunov       ||S~_T h||_1 <= gamma_L ||h||_1 + K [h]_{phi_1},
      coupling       ||h||_1 <= A [h]_{phi_1}  =>  [S~_T h] <= gamma_H [h],
      envelope       ||S~_{nT} h||_1 <= C gamma^n ||h||_1,
    each up to the relative slack.
    """
    grid = Lh.grid
    pair = norm_pair or NormPair(grid=grid)
    rng = np.random.default_rng(seed)
    S_tilde = math.exp(-triplet.lam1 * cert.T) * step_matrix(Lh, cert.T, scheme)
    n_blocks = max(1, int(round((T_max or 2.0 * cert.T) / cert.T)))
    quad = grid.cell_volume

    def triple(h):
        return _seminorm(h, triplet.phi1, grid) + cert.beta * pair.norm1(h)

    viol = {"contraction": 0, "lyapunov": 0, "coupling": 0, "envelope": 0}
    worst_c = 0.0
    worst_e = 0.0
    for _ in range(n_samples):
        x = rng.standard_normal(grid.size)
        h = x - (np.dot(triplet.phi1, x) * quad) * triplet.f1
        h0_norm1 = pair.norm1(h)
        for n in range(1, n_blocks + 1):
            t_before = triple(h)
            if t_before == 0.0:
                break
            sem_before = _seminorm(h, triplet.phi1, grid)
            n1_before = pair.norm1(h)
            h_next = S_tilde @ h
            ratio = triple(h_next) / t_before
            worst_c = max(worst_c, ratio)
            if ratio > cert.gamma * (1.0 + slack):
                viol["contraction"] += 1
            if pair.norm1(h_next) > (cert.gamma_L * n1_before
                                     + cert.K * sem_before) * (1.0 + slack):
                viol["lyapunov"] += 1
            if n1_before <= cert.A_cond * sem_before:
                if _seminorm(h_next, triplet.phi1, grid) > \
                        cert.gamma_H * sem_before * (1.0 + slack):
                    viol["coupling"] += 1
            env = cert.C * cert.gamma ** n * h0_norm1
            e_ratio = pair.norm1(h_next) / env if env > 0 else math.inf
            worst_e = max(worst_e, e_ratio)
            if e_ratio > 1.0 + slack:
                viol["envelope"] += 1
            h = h_next
    return DecayReport(n_samples=n_samples, n_blocks=n_blocks,
                       contraction_violations=viol["contraction"],
                       lyapunov_violations=viol["lyapunov"],
                       coupling_violations=viol["coupling"],
                       envelope_violations=viol["envelope"],
                       worst_contraction_ratio=worst_c,
                       worst_envelope_ratio=worst_e)


def replay(cert_path: str, Lh: GeneratorMatrix,
           n_samples: int = 1000, seed: int = 0) -> DecayReport:
    """Re-verify a serialized certificate against a freshly built flow map."""
    cert = HarrisCertificate.from_json(cert_path)
    triplet = principal_triplet(Lh, T=cert.T)
    if abs(triplet.lam1 - cert.lam1) > 1e-8 + 1e-6 * abs(cert.lam1):
        raise RuntimeError(
            f"replayed lambda_1 = {triplet.lam1:.6g} disagrees with the "
            f"certificate value {cert.lam1:.6g}")
    return verify_decay(Lh, triplet, cert, n_samples=n_samples, seed=seed)
