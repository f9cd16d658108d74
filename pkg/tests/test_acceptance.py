"""End-to-end acceptance suite.

Each test covers one headline property of the solver/certificate pipeline at
desk scale and prints a single PASS/FAIL line with the measured numbers so the
run log doubles as an acceptance report.
"""

import math
import time

import numpy as np
import pytest

from kfplab.config import parse_config
from kfplab.evolve import TimeScheme, _Stepper, mass, step_matrix
from kfplab.experiments import (run_duality, run_equilibrium, run_growth,
                                run_harnack, run_ultracontractivity)
from kfplab.grid import core_region, make_grid
from kfplab.model import builtin_model, equilibrium_boundary
from kfplab.operator import GeneratorMatrix, assemble
from kfplab.spectral import (certificate, minorization_eta, principal_triplet,
                             verify_decay)
from kfplab.weights import classify, exp_weight, poly_weight, smooth_cutoff
from kfplab.norms import find_A, boundary_budget

HARMONIC = builtin_model("harmonic")
EQWALLS = equilibrium_boundary()


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_duality_identity():
    # primal/dual pairing on a fine grid: the transpose time stepper keeps
    # <f(t), g(t)>_h constant to solver roundoff
    t0 = time.monotonic()
    cfg = parse_config({"grid": {"L": 1.0, "V": 4.0, "Nx": 32, "Nv": 64},
                        "experiments": {"duality": {"pairs": 20, "T": 0.5}}})
    res = run_duality(cfg)
    elapsed = time.monotonic() - t0
    ok = res.metrics["max_defect"] <= 1e-10 and elapsed < 60.0
    _report("duality identity (32x64, 20 pairs)", ok,
            f"max relative defect {res.metrics['max_defect']:.3e} "
            f"(<= 1e-10), {elapsed:.1f}s")


def test_exact_conservation():
    # conservative closure (full accommodation, c = div b, flux form):
    # column sums of the generator vanish, so implicit Euler conserves mass
    g = make_grid(1.0, 4.0, 16, 16)
    Lh = assemble(g, HARMONIC, EQWALLS, form="flux")
    stepper = _Stepper(Lh, TimeScheme(dt=0.01))
    rng = np.random.default_rng(7)
    f = rng.random(g.size)
    m0 = mass(f, g)
    drift = 0.0
    for _ in range(1000):
        f = stepper.forward(f)
        drift = max(drift, abs(mass(f, g) - m0) / m0)
    _report("exact conservation (1000 implicit steps)", drift <= 1e-12,
            f"relative mass drift {drift:.3e} (<= 1e-12)")


def test_positivity():
    # Metzler generator + implicit Euler: nonnegative data stay nonnegative
    # up to linear-solver roundoff
    g = make_grid(1.0, 4.0, 12, 16)
    Lh = assemble(g, HARMONIC, EQWALLS)
    stepper = _Stepper(Lh, TimeScheme(dt=0.01))
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        f = rng.random(g.size) * np.power(10.0, rng.uniform(-3, 3))
        scale = float(np.max(f))
        for _ in range(30):
            f = stepper.forward(f)
            worst = max(worst, -float(np.min(f)) / scale)
    _report("positivity (100 random trajectories)", worst <= 1e-13,
            f"worst normalized undershoot {worst:.3e} (<= 1e-13)")


def test_equilibrium_eigentriplet():
    # detailed balance: lambda_1 = 0, f_1 -> wall Maxwellian under refinement
    # (first-order transport needs a moderately fine base grid before the
    # error-halving factor settles near 2)
    cfg = parse_config({"grid": {"L": 1.0, "V": 4.0, "Nx": 16, "Nv": 24},
                        "scheme": {"dt": 0.0125}})
    res = run_equilibrium(cfg)
    m = res.metrics
    ok = (abs(m["lam1"]) <= 1e-8 and m["refinement_factor"] >= 1.8
          and m["phi1_flatness"] <= 1e-8 and res.verdicts["normalization"])
    _report("equilibrium eigentriplet", ok,
            f"|lam1| {abs(m['lam1']):.1e} (<= 1e-8), refinement factor "
            f"{m['refinement_factor']:.3f} (>= 1.8), phi1 flatness "
            f"{m['phi1_flatness']:.1e} (<= 1e-8), normalization to 1e-12")


def test_boundary_budget():
    # the truncation-radius ladder closes the wall budget for both weight
    # families; at saturation the renormalized wall Maxwellian makes the
    # leading constants equal 1 up to quadrature error
    g = make_grid(1.0, 4.0, 4, 48)
    poly = poly_weight(5.0, HARMONIC)
    expw = exp_weight(0.2, 2.0, HARMONIC, EQWALLS)
    margins, k_errs = [], []
    for spec in (poly, expw):
        for p in (1.0, 2.0):
            budget = find_A(spec, p, EQWALLS, g)
            margins.append(budget.worst_margin)
            sat = boundary_budget(spec, p, 2.0 * g.V, EQWALLS, g)
            for w in sat.walls:
                k_errs.append(max(abs(w.K1 - 1.0), abs(w.K2 - 1.0)))
    ok = max(margins) <= 0.0 and max(k_errs) <= 0.02
    _report("boundary budget", ok,
            f"worst margin {max(margins):.3e} (<= 0), saturation "
            f"|K1,K2 - 1| {max(k_errs):.3e} (<= 2%)")


def test_confinement_classifier():
    # polynomial weights are weakly confining (varsigma = 0), exponential
    # s = 2 weights with small zeta are strongly confining (varsigma = 2);
    # the fitted envelope inequality holds at every velocity node
    g = make_grid(1.0, 6.0, 4, 48)
    poly = poly_weight(5.0, HARMONIC)
    expw = exp_weight(0.3, 2.0, HARMONIC, EQWALLS)
    ok = poly.varsigma == 0.0 and not poly.strongly_confining
    ok = ok and expw.varsigma == 2.0 and expw.strongly_confining
    worst = -math.inf
    for spec in (poly, expw):
        rep = classify(spec, HARMONIC, g, vartheta=0.5)
        chi = smooth_cutoff(np.abs(g.v_nodes) / rep.R_prime)
        bound = rep.kappa_prime * chi + (1.0 - chi) * 0.5 * rep.envelope
        worst = max(worst, float(np.max(rep.values.max(axis=0) - bound)))
        ok = ok and np.all(rep.values.max(axis=0) <= bound + 1e-12)
    _report("confinement classifier", ok,
            f"poly varsigma 0 / exp varsigma 2, envelope slack {worst:.3e} "
            "(<= 1e-12) at vartheta = 1/2")


def test_doblin_harris_minorization():
    # columnwise minorization constant of the flow map, then the pointwise
    # lower bound S_T f >= eta 1_core <1_core, S_T0 f>_h on random fields
    g = make_grid(1.0, 4.0, 24, 48)
    Lh = assemble(g, HARMONIC, EQWALLS)
    sch = TimeScheme(dt=0.0125)
    S_T = step_matrix(Lh, 0.5, sch)
    S_T0 = step_matrix(Lh, 0.1, sch)
    core = core_region(g, g.L / 8.0)
    eta = minorization_eta(S_T, S_T0, core.mask, g.cell_volume)
    rng = np.random.default_rng(3)
    F = rng.random((g.size, 1000))
    lhs = (S_T @ F)[core.mask]
    denom = np.sum((S_T0 @ F)[core.mask], axis=0) * g.cell_volume
    floor = 1e-13 * lhs.max(axis=0)
    violations = int(np.sum(np.any(lhs < eta * denom - floor, axis=0)))
    ok = eta > 0 and violations == 0
    _report("Doblin-Harris minorization (24x48)", ok,
            f"eta {eta:.3e} (> 0), violations {violations}/1000 over random "
            "nonnegative fields")


def test_certificate_validity():
    # the certified triple-norm contraction and coupling bound hold on
    # phi_1-orthogonal samples with only roundoff slack
    g = make_grid(1.0, 4.0, 10, 12)
    Lh = assemble(g, HARMONIC, EQWALLS)
    sch = TimeScheme(dt=0.0125)
    trip = principal_triplet(Lh, T=0.5, scheme=sch)
    cert = certificate(Lh, eps=g.L / 8.0, T0=0.1, T1=0.3, T=0.5,
                       scheme=sch, triplet=trip)
    rep = verify_decay(Lh, trip, cert, n_samples=1000, scheme=sch,
                       seed=5, slack=1e-10)
    ok = (0.0 < cert.gamma < 1.0 and cert.lam2 < cert.lam1
          and rep.contraction_violations == 0 and rep.coupling_violations == 0)
    _report("certificate validity", ok,
            f"gamma {cert.gamma:.6f} in (0,1), lam2 {cert.lam2:.4f} < lam1 "
            f"{cert.lam1:.4f}, contraction/coupling violations "
            f"{rep.contraction_violations}/{rep.coupling_violations} of 1000")


def test_certificate_conservativeness():
    # dense eigensolver oracle: the certified decay rate never exceeds the
    # true spectral gap, and the C gamma^n envelope dominates measured decay
    g = make_grid(1.0, 4.0, 16, 16)
    Lh = assemble(g, HARMONIC, EQWALLS)
    sch = TimeScheme(dt=0.0125)
    trip = principal_triplet(Lh, T=0.5, scheme=sch)
    cert = certificate(Lh, eps=g.L / 8.0, T0=0.1, T1=0.3, T=0.5,
                       scheme=sch, triplet=trip)
    S = step_matrix(Lh, 0.5, sch)
    mus = np.sort(np.abs(np.linalg.eigvals(S)))[::-1]
    true_gap = -math.log(mus[1] / mus[0]) / 0.5
    rep = verify_decay(Lh, trip, cert, n_samples=20, scheme=sch, seed=9)
    ok = (abs(cert.lam1 - cert.lam2) <= true_gap + 1e-12
          and rep.envelope_violations == 0)
    _report("certificate conservativeness (16x16 dense oracle)", ok,
            f"certified gap {abs(cert.lam1 - cert.lam2):.4f} <= true gap "
            f"{true_gap:.4f}, envelope violations {rep.envelope_violations}/20")


def test_ultracontractivity():
    # L1_w -> Linf_w smoothing from delta data: positive fitted blow-up
    # exponent, stable across resolutions, large-T growth within the
    # measured exponential envelope rate
    t0 = time.monotonic()
    thetas = {}
    fits = {}
    for n in (16, 24):
        cfg = parse_config({"grid": {"L": 1.0, "V": 4.0, "Nx": n, "Nv": n},
                            "weight": {"kind": "exp", "zeta": 0.2, "s": 2.0},
                            "experiments": {"ultracontractivity":
                                            {"T_min": 0.01, "T_max": 1.5,
                                             "n_T": 20}}})
        fits[n] = run_ultracontractivity(cfg)
        thetas[n] = fits[n].theta_ultra
    spread = abs(thetas[16] - thetas[24]) / thetas[24]
    growth = run_growth(parse_config(
        {"grid": {"L": 1.0, "V": 4.0, "Nx": 16, "Nv": 16},
         "weight": {"kind": "exp", "zeta": 0.2, "s": 2.0},
         "experiments": {"growth": {"T": 1.0, "samples": 6}}}))
    kappa = max(growth.metrics["kappa_p1"], growth.metrics["kappa_p2"])
    env_ok = all(f.kappa_envelope <= kappa + 0.05 for f in fits.values())
    elapsed = time.monotonic() - t0
    ok = (all(t > 0 for t in thetas.values()) and spread <= 0.20
          and env_ok and elapsed < 300.0)
    _report("ultracontractivity", ok,
            f"theta {thetas[16]:.3f}/{thetas[24]:.3f} (> 0), spread "
            f"{100 * spread:.1f}% (<= 20%), tail rate <= growth kappa "
            f"{kappa:.3f} + 0.05, {elapsed:.1f}s (< 300s)")


def test_harnack():
    # sup/inf ratio on the core over 50 physically matched samples; the
    # refinement comparison uses the same time step and the same physical
    # initial data on both grids
    ratios = {}
    for nx, nv in ((16, 24), (32, 48)):
        cfg = parse_config({"grid": {"L": 1.0, "V": 4.0, "Nx": nx, "Nv": nv},
                            "scheme": {"dt": 0.01},
                            "experiments": {"harnack":
                                            {"T0": 0.2, "T1": 0.8,
                                             "eps": 0.4, "samples": 50}}})
        ratios[(nx, nv)] = run_harnack(cfg).metrics["max_ratio"]
    coarse, fine = ratios[(16, 24)], ratios[(32, 48)]
    factor = max(coarse / fine, fine / coarse)
    ok = all(math.isfinite(r) for r in ratios.values()) and factor <= 2.0
    _report("Harnack ratio", ok,
            f"max ratio {coarse:.1f} -> {fine:.1f} under refinement, "
            f"stability factor {factor:.3f} (<= 2)")


def test_toy_oracles():
    # hand-checkable 2-state problems: exact minorization constant and the
    # exact flat eigentriplet of a symmetric conservative generator
    import scipy.sparse as sparse
    S_T = np.array([[0.6, 0.2], [0.4, 0.8]])
    eta = minorization_eta(S_T, np.eye(2), np.array([True, True]), 1.0)

    g = make_grid(2.0, 0.5, 1, 2)  # unit cell volume
    L = sparse.csr_matrix(np.array([[-1.0, 1.0], [1.0, -1.0]]))
    Lh = GeneratorMatrix(matrix=L, grid=g, model=HARMONIC, boundary=EQWALLS)
    trip = principal_triplet(Lh, T=0.5, scheme=TimeScheme(dt=0.1))
    ok = (eta == 0.2 and trip.lam1 == 0.0
          and np.array_equal(trip.phi1, [1.0, 1.0])
          and np.allclose(trip.f1, [0.5, 0.5], atol=1e-12))
    _report("toy oracles", ok,
            f"2x2 minorization eta = {eta} (exactly 0.2), symmetric generator "
            f"lam1 = {trip.lam1}, uniform f1 and phi1")
