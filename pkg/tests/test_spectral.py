import math

import numpy as np
import pytest

from kfplab.evolve import TimeScheme, step_matrix
from kfplab.grid import core_region, make_grid
from kfplab.model import BoundaryModel, builtin_model, equilibrium_boundary
from kfplab.operator import assemble
from kfplab.spectral import (HarrisCertificate, NormPair, certificate,
                             certificate_from_matrices, is_conservative,
                             minorization_eta, minorization_for,
                             principal_triplet, replay, verify_decay)

HARMONIC = builtin_model("harmonic")
EQWALLS = equilibrium_boundary()


def _toy_grid():
    # 1x2 cells with unit cell volume: flat vectors of length 2, quadrature
    # weight exactly 1
    return make_grid(2.0, 0.5, 1, 2)


def test_toy_minorization_oracle():
    # hand oracle: S_T columns [0.6, 0.4] and [0.2, 0.8], S_T0 = I, full
    # core, unit quadrature -> eta = min(0.6, 0.4, 0.2, 0.8)/1 = 0.2 exactly
    S_T = np.array([[0.6, 0.2], [0.4, 0.8]])
    eta = minorization_eta(S_T, np.eye(2), np.array([True, True]), 1.0)
    assert eta == 0.2


def test_toy_minorization_skips_dead_columns():
    S_T = np.array([[0.5, 0.0], [0.5, 0.0]])
    S_T0 = np.diag([1.0, 0.0])  # second column never reaches the core
    eta = minorization_eta(S_T, S_T0, np.array([True, True]), 1.0)
    assert eta == 0.5


def test_toy_certificate_oracle():
    # 2x2 doubly stochastic flow map: phi_1 = 1, [e_j]_{phi_1} = 1,
    # c = 0.25, [1_core]_{phi_1} = 2 -> gamma_H = 0.5; the true subdominant
    # eigenvalue is 0.5, so any certified gamma must be >= 0.5 and < 1
    S = np.array([[0.75, 0.25], [0.25, 0.75]])
    cert = certificate_from_matrices(S, np.ones(2), np.array([True, True]),
                                     1.0, T=1.0, lam1=0.0)
    assert cert.c == pytest.approx(0.25)
    assert cert.gamma_H == pytest.approx(0.5)
    assert 0.5 <= cert.gamma < 1.0
    assert cert.lam2 < cert.lam1


def test_symmetric_generator_toy_triplet():
    # symmetric 2x2 Metzler generator with zero column sums: lambda_1 = 0,
    # uniform primal and dual eigenvectors
    import scipy.sparse as sparse
    from kfplab.operator import GeneratorMatrix
    g = _toy_grid()
    L = sparse.csr_matrix(np.array([[-1.0, 1.0], [1.0, -1.0]]))
    Lh = GeneratorMatrix(matrix=L, grid=g, model=HARMONIC, boundary=EQWALLS)
    assert is_conservative(Lh)
    trip = principal_triplet(Lh, T=0.5, scheme=TimeScheme(dt=0.1))
    assert trip.lam1 == 0.0
    np.testing.assert_allclose(trip.phi1, [1.0, 1.0])
    np.testing.assert_allclose(trip.f1, [0.5, 0.5], atol=1e-12)
    assert trip.conservative


def _small_problem(Nx=10, Nv=12, boundary=EQWALLS):
    g = make_grid(1.0, 4.0, Nx, Nv)
    Lh = assemble(g, HARMONIC, boundary)
    sch = TimeScheme(dt=0.0125)
    return g, Lh, sch


def test_principal_triplet_equilibrium():
    g, Lh, sch = _small_problem()
    trip = principal_triplet(Lh, T=0.5, scheme=sch)
    assert trip.conservative and trip.lam1 == 0.0
    assert np.max(np.abs(trip.phi1 - trip.phi1.mean())) <= 1e-12
    assert float(np.dot(trip.phi1, trip.f1) * g.cell_volume) == \
        pytest.approx(1.0, abs=1e-12)
    assert trip.residual <= 1e-9
    assert trip.f1.min() > 0


def test_principal_triplet_lossy_walls():
    # partially absorbing walls: mass decays, lambda_1 < 0, phi_1 not flat
    lossy = BoundaryModel(iota_s=(0.4, 0.4), iota_d=(0.3, 0.3),
                          theta=(1.0, 1.0))
    g, Lh, sch = _small_problem(boundary=lossy)
    trip = principal_triplet(Lh, T=0.5, scheme=sch)
    assert not trip.conservative
    assert trip.lam1 < -1e-3
    assert trip.residual <= 1e-7
    # lambda_1 from the Rayleigh growth agrees with the generator eigenvalue
    # through the implicit-Euler spectral map rho = (1 - dt mu)^{-n_steps}
    Lf = Lh.matrix @ trip.f1
    mu = float(np.dot(trip.phi1, Lf) / np.dot(trip.phi1, trip.f1))
    n = round(0.5 / sch.dt)
    rho_expected = (1.0 - sch.dt * mu) ** (-n)
    assert trip.rho == pytest.approx(rho_expected, rel=1e-9)


def test_minorization_positive_on_solver():
    g, Lh, sch = _small_problem()
    eta = minorization_for(Lh, eps=g.L / 8.0, T0=0.1, T=0.5, scheme=sch)
    assert eta > 0


def test_minorization_bound_random_fields():
    g, Lh, sch = _small_problem(8, 8)
    eps = g.L / 8.0
    S_T = step_matrix(Lh, 0.5, sch)
    S_T0 = step_matrix(Lh, 0.1, sch)
    core = core_region(g, eps)
    eta = minorization_eta(S_T, S_T0, core.mask, g.cell_volume)
    rng = np.random.default_rng(0)
    for _ in range(100):
        f = rng.random(g.size)
        lhs = S_T @ f
        rhs = eta * float(np.sum((S_T0 @ f)[core.mask]) * g.cell_volume)
        assert np.all(lhs[core.mask] >= rhs * (1 - 1e-12) - 1e-13 * lhs.max())


def test_certificate_and_verify_roundtrip(tmp_path):
    g, Lh, sch = _small_problem()
    trip = principal_triplet(Lh, T=0.5, scheme=sch)
    cert = certificate(Lh, eps=g.L / 8.0, T0=0.1, T1=0.3, T=0.5,
                       scheme=sch, triplet=trip)
    assert 0 < cert.gamma < 1
    assert cert.lam2 < cert.lam1
    assert cert.eta > 0 and cert.c > 0
    assert cert.C == pytest.approx((1 + cert.beta) / cert.beta)
    rep = verify_decay(Lh, trip, cert, n_samples=100, scheme=sch, seed=1)
    assert rep.ok

    path = str(tmp_path / "cert.json")
    cert.to_json(path)
    back = HarrisCertificate.from_json(path)
    assert back == cert
    rep2 = replay(path, Lh, n_samples=20)
    assert rep2.ok


def test_certificate_conservative_vs_true_gap():
    # dense oracle: the certified gap never exceeds the true spectral gap
    g, Lh, sch = _small_problem(8, 8)
    trip = principal_triplet(Lh, T=0.5, scheme=sch)
    cert = certificate(Lh, eps=g.L / 8.0, T0=0.1, T1=0.3, T=0.5,
                       scheme=sch, triplet=trip)
    S = step_matrix(Lh, 0.5, sch)
    mus = np.sort(np.abs(np.linalg.eigvals(S)))[::-1]
    true_gap = -math.log(mus[1] / mus[0]) / 0.5
    assert abs(cert.lam1 - cert.lam2) <= true_gap + 1e-12


def test_certificate_lyapunov_columnwise_exact():
    # the columnwise (gamma_L, K) pair bounds every field, by construction
    g, Lh, sch = _small_problem(6, 8)
    trip = principal_triplet(Lh, T=0.5, scheme=sch)
    cert = certificate(Lh, eps=g.L / 8.0, T0=0.1, T1=0.3, T=0.5,
                       scheme=sch, triplet=trip)
    S_tilde = math.exp(-trip.lam1 * 0.5) * step_matrix(Lh, 0.5, sch)
    pair = NormPair(grid=g)
    rng = np.random.default_rng(3)
    for _ in range(200):
        f = rng.standard_normal(g.size)
        lhs = pair.norm1(S_tilde @ f)
        sem = float(np.sum(np.abs(f) * trip.phi1) * g.cell_volume)
        assert lhs <= (cert.gamma_L * pair.norm1(f) + cert.K * sem) * (1 + 1e-12)


def test_empty_core_rejected():
    S = np.eye(2)
    with pytest.raises(ValueError, match="core region is empty"):
        minorization_eta(S, S, np.array([False, False]), 1.0)
