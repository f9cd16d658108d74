import math

import numpy as np
import pytest

from kfplab.grid import core_region, make_grid
from kfplab.model import BoundaryModel, builtin_model, equilibrium_boundary
from kfplab.norms import (boundary_budget, bracket, core_seminorm, dual_norm,
                          find_A, interpolation_constants, weighted_norm)
from kfplab.weights import eval_weight, exp_weight, poly_weight

HARMONIC = builtin_model("harmonic")
EQWALLS = equilibrium_boundary()


def test_weighted_norm_hand_values():
    g = make_grid(2.0, 1.0, 2, 2)  # cell volume 1.0
    f = np.array([1.0, -2.0, 3.0, -4.0])
    assert weighted_norm(f, None, 1.0, g) == pytest.approx(10.0)
    assert weighted_norm(f, None, 2.0, g) == pytest.approx(math.sqrt(30.0))
    assert weighted_norm(f, None, math.inf, g) == pytest.approx(4.0)
    w = 2.0 * np.ones(4)
    assert weighted_norm(f, w, 1.0, g) == pytest.approx(20.0)
    with pytest.raises(ValueError, match=">= 1"):
        weighted_norm(f, None, 0.5, g)


def test_dual_norm_pairing_exact():
    # |<phi, f>_h| <= ||phi||_0 ||f||_1 with equality for aligned sign pattern
    g = make_grid(1.0, 4.0, 4, 4)
    rng = np.random.default_rng(0)
    w = 1.0 + rng.random(g.size)
    f = rng.standard_normal(g.size)
    phi = rng.standard_normal(g.size)
    assert abs(bracket(phi, f, g)) <= dual_norm(phi, w, g) \
        * weighted_norm(f, w, 1.0, g) * (1 + 1e-12)
    aligned = np.sign(f) * w
    assert bracket(aligned, f, g) == pytest.approx(
        dual_norm(aligned, w, g) * weighted_norm(f, w, 1.0, g))


def test_budget_saturation_exact():
    # A >= V saturates the cutoff: omega_A matches the wall Maxwellian and
    # K1 = K2 = 1 exactly (discrete renormalization), margin = -K0 < 0
    g = make_grid(1.0, 4.0, 4, 16)
    spec = poly_weight(5.0, HARMONIC)
    for p in (1.0, 2.0):
        bud = boundary_budget(spec, p, 8.0, EQWALLS, g)
        for w in bud.walls:
            assert w.K1 == pytest.approx(1.0, abs=1e-13)
            assert w.K2 == pytest.approx(1.0, abs=1e-13)
            assert w.K0 > 0
            assert w.margin == pytest.approx(-w.K0)
        assert bud.ok


def test_budget_p1_K2_is_one():
    g = make_grid(1.0, 4.0, 4, 16)
    spec = poly_weight(5.0, HARMONIC)
    bud = boundary_budget(spec, 1.0, 2.0, EQWALLS, g)
    assert all(w.K2 == 1.0 for w in bud.walls)


def test_budget_rejects_bad_p_and_A():
    g = make_grid(1.0, 4.0, 4, 8)
    spec = poly_weight(5.0, HARMONIC)
    with pytest.raises(ValueError, match="p in"):
        boundary_budget(spec, 3.0, 2.0, EQWALLS, g)
    with pytest.raises(ValueError, match="A must be"):
        boundary_budget(spec, 1.0, 0.5, EQWALLS, g)


def test_find_A_terminates_and_closes():
    g = make_grid(1.0, 4.0, 4, 24)
    cases = [(poly_weight(5.0, HARMONIC), 1.0),
             (poly_weight(5.0, HARMONIC), 2.0),
             (exp_weight(0.3, 2.0, HARMONIC, EQWALLS), 1.0),
             (exp_weight(0.3, 2.0, HARMONIC, EQWALLS), 2.0)]
    for spec, p in cases:
        bud = find_A(spec, p, EQWALLS, g)
        assert bud.ok
        assert bud.worst_margin <= 0.0
        assert 1.0 <= bud.A <= 2.0 * g.V


def test_find_A_asymmetric_walls():
    g = make_grid(1.0, 4.0, 4, 24)
    walls = BoundaryModel(iota_s=(0.3, 0.6), iota_d=(0.6, 0.2),
                          theta=(0.8, 1.3))
    bud = find_A(poly_weight(5.0, HARMONIC), 1.0, walls, g)
    assert bud.ok


def test_interpolation_inequality_exact_in_quadrature():
    # the bound ||f||_{q,wq} <= xi ||f||_{p,wp} + Xi [f]_core comes from
    # Hoelder + Young applied to the same quadrature sums, so it holds for
    # every field with no discretization slack
    g = make_grid(1.0, 4.0, 8, 16)
    p, q = 4.0, 2.0
    wp = eval_weight(poly_weight(5.0, HARMONIC), g.v_nodes)
    wq = np.ones(g.Nv)
    eps = g.L / 8.0
    cst = interpolation_constants(eps, q, p, wq, wp, g)
    assert 0 < cst.theta < 1
    assert cst.theta == pytest.approx(p * (q - 1) / (q * (p - 1)))
    rng = np.random.default_rng(7)
    for _ in range(200):
        f = rng.standard_normal(g.size) * rng.random() * 10
        lhs = weighted_norm(f, wq, q, g)
        rhs = cst.xi * weighted_norm(f, wp, p, g) \
            + cst.Xi * core_seminorm(f, eps, g)
        assert lhs <= rhs * (1 + 1e-12)


def test_interpolation_validation():
    g = make_grid(1.0, 4.0, 8, 16)
    wp = eval_weight(poly_weight(5.0, HARMONIC), g.v_nodes)
    with pytest.raises(ValueError, match="1 < q < p"):
        interpolation_constants(0.1, 4.0, 2.0, np.ones(g.Nv), wp, g)
    with pytest.raises(ValueError, match="domination"):
        interpolation_constants(0.1, 2.0, 4.0, wp, np.ones(g.Nv), g)
    with pytest.raises(ValueError, match="core region is empty"):
        interpolation_constants(10.0, 2.0, 4.0, np.ones(g.Nv), wp, g)


def test_core_seminorm_restricted_mass():
    g = make_grid(1.0, 4.0, 8, 8)
    eps = g.L / 8.0
    core = core_region(g, eps)
    f = np.ones(g.size)
    assert core_seminorm(f, eps, g) == pytest.approx(core.count * g.cell_volume)
