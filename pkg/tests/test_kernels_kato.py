import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from stablegauge import kernels_kato as kk
from stablegauge import spectral as sp
from stablegauge.geometry import Ball, Box
from stablegauge.potential import Constant, RadialPower
from stablegauge.stable_mc import RngStream


def test_stable_constant_values():
    assert kk.stable_constant(2, 1.0) == pytest.approx(1 / (2 * math.pi), abs=1e-10)
    assert kk.stable_constant(3, 1.0) == pytest.approx(1 / math.pi**2, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(0.05, 1.95), n=st.integers(2, 4))
def test_stable_constant_formula(alpha, n):
    a = alpha * 2 ** (alpha - 1) * special.gamma((alpha + n) / 2) / (
        math.pi ** (n / 2) * special.gamma(1 - alpha / 2))
    assert kk.stable_constant(n, alpha) == pytest.approx(a, rel=1e-12)


@pytest.mark.parametrize("n,alpha", [(1, 1.0), (2, 0.0), (2, 2.0)])
def test_stable_constant_rejects(n, alpha):
    with pytest.raises(ValueError):
        kk.stable_constant(n, alpha)


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(0.1, 1.9), r=st.floats(0.01, 10), k=st.floats(0.1, 10))
def test_free_green_power_law(alpha, r, k):
    g1 = kk.free_green(2, alpha, (0, 0), (r, 0))
    g2 = kk.free_green(2, alpha, (1, 1), (1, 1 + k * r))
    assert g2 / g1 == pytest.approx(k ** (alpha - 2), rel=1e-12)


def test_free_green_diagonal_raises():
    with pytest.raises(ValueError):
        kk.free_green(2, 1.0, (0, 0), (0, 0))


@pytest.mark.parametrize("beta", [0.0, 0.5, 0.9])
def test_riesz_integral_radial_closed_form(beta):
    # int_{|y|<r} |y|^-beta |y|^(alpha-2) dy = 2 pi r^(alpha-beta) / (alpha-beta)
    alpha, r = 1.0, 0.1
    full, _ = kk.riesz_ball_integral(RadialPower(beta=beta), np.zeros((1, 2)), r, alpha)
    assert full[0] == pytest.approx(2 * math.pi * r ** (alpha - beta) / (alpha - beta), rel=1e-8)


def test_riesz_integral_off_center_bounded_by_center():
    q = RadialPower(beta=0.5)
    full, _ = kk.riesz_ball_integral(q, np.array([[0.0, 0.0], [0.05, 0.0], [0.5, 0.0]]), 0.1, 1.0)
    assert full[0] > full[1] > full[2]


def test_kato_modulus_kato_potential_vanishes():
    rep = kk.kato_modulus(RadialPower(beta=0.5), [1e-1, 1e-3, 1e-5], np.zeros((1, 2)), 1.0)
    assert rep.in_kato
    assert np.all(np.diff(rep.moduli) < 0)
    assert rep.moduli[-1] == pytest.approx(4 * math.pi * 1e-5**0.5, rel=1e-6)


def test_kato_modulus_non_kato_potential():
    rep = kk.kato_modulus(RadialPower(beta=1.5), [1e-1, 1e-2], np.zeros((1, 2)), 1.0)
    assert not rep.in_kato
    assert np.all(np.isinf(rep.moduli))


def test_kato_radii_must_decrease():
    with pytest.raises(ValueError):
        kk.kato_modulus(Constant(1.0), [0.01, 0.1], np.zeros((1, 2)))


def test_kato_decompose_bounded(ball_grid):
    q1, q2 = kk.kato_decompose(Constant(2.0), 0.1, ball_grid)
    assert q1 == Constant(2.0) and q2 == Constant(0.0)


def test_kato_decompose_meets_eps(ball_grid):
    q = RadialPower(center=(0.3, 0.0), beta=0.5)
    q1, q2 = kk.kato_decompose(q, 0.05, ball_grid)
    assert q1.bounded
    rep = kk.kato_modulus(q2, [10.0], np.array([[0.3, 0.0], [0.3 + q2.cutoff, 0.0]]), 1.0)
    assert rep.moduli[0] <= 0.05
    x = np.array([[0.31, 0.0], [0.5, 0.2]])
    assert np.allclose(q1(x) + q2(x), q(x))


def test_annulus_membership_and_gap():
    a = kk.Annulus((0.0, 0.0), 2.0, 3.0)
    assert list(a.contains(np.array([[2.5, 0.0], [1.0, 0.0], [3.5, 0.0]]))) == [True, False, False]
    assert a.gap_to(Ball()) == pytest.approx(1.0)


def test_region_union_and_complement():
    u = kk.Union((kk.Annulus((0, 0), 2.0, 3.0), kk.Complement(Box((-5, -5), (5, 5)))))
    assert list(u.contains(np.array([[2.5, 0], [4, 0], [6, 0]]))) == [True, False, True]


def test_harmonic_measure_ball_center():
    # alpha=1 from the centre: P(|X_tau| > 2) = 1/3
    hm = kk.harmonic_measure(Ball(), 1.0, (0, 0), kk.Annulus((0, 0), 2.0), 40_000, RngStream(0, 11))
    assert abs(hm.probability - 1 / 3) <= 3 * hm.stderr


def test_poisson_identity_small_residual(ball_model):
    res = kk.poisson_identity_residual(Ball(), 1.0, (0, 0), kk.Annulus((0, 0), 2.0, 3.0), ball_model,
                                       paths=40_000, rng=RngStream(0, 12))
    assert res.residual < 0.1


def test_poisson_identity_rejects_near_target(ball_model):
    with pytest.raises(ValueError):
        kk.poisson_identity_residual(Ball(), 1.0, (0, 0), kk.Annulus((0, 0), 1.01, 2.0), ball_model, 100)


def test_poisson_kernel_matrix_positive(ball_model):
    k = kk.poisson_kernel_matrix(ball_model, np.array([[2.0, 0.0], [0.0, -3.0]]))
    assert np.all(k > 0)


def test_martin_ratios_converge(ball_model):
    z = np.array([1.0, 0.0])
    # approach points stay at least two cells inside
    ys = np.array([[1 - 2.0**-k, 0.0] for k in (1, 2, 3)])
    seq = kk.martin_estimate(Ball(), 1.0, (0.0, 0.5), (0.0, 0.0), z, ys, ball_model)
    exact = kk.ball_martin_kernel(Ball(), 1.0, (0.0, 0.5), z)[0]
    assert exact == pytest.approx(0.75**0.5 / 1.25)
    assert np.all(seq.ratios > 0)
    assert abs(seq.ratios[-1] - exact) < abs(seq.ratios[0] - exact)
    assert seq.ratios[-1] == pytest.approx(exact, rel=0.12)


def test_martin_column_normalised(ball_model):
    col = kk.martin_column(ball_model, (0.0, 0.0), (1.0, 0.0))
    i0 = ball_model.grid.nearest_cell(np.zeros(2))[0]
    assert col[i0] == pytest.approx(1.0)


def test_superharmonic_green_and_constant(ball_model):
    g = kk.green_column_function(ball_model, (0.4, 0.0))
    balls = [((-0.4, 0.0), 0.2), ((0.0, 0.4), 0.2)]
    rng = RngStream(0, 13)
    assert all(v.passed for v in kk.superharmonic_check(Ball(), 1.0, g, balls, 20_000, rng.child(0)))
    one = lambda p: np.ones(len(np.atleast_2d(p)))  # noqa: E731
    assert all(v.passed for v in kk.superharmonic_check(Ball(), 1.0, one, balls, 20_000, rng.child(1)))


def test_superharmonic_negated_green_fails(ball_model):
    neg = kk.green_column_function(ball_model, (0.4, 0.0), sign=-1.0)
    res = kk.superharmonic_check(Ball(), 1.0, neg, [((0.4, 0.0), 0.3)], 20_000, RngStream(0, 14))
    assert not res[0].passed


def test_superharmonic_ball_must_fit():
    with pytest.raises(ValueError):
        kk.superharmonic_check(Ball(), 1.0, lambda p: p[:, 0], [((0.9, 0.0), 0.2)], 10, RngStream(0, 0))


def test_mc_green_row_sums_to_exit_time():
    grid = sp.assemble(Ball(), sp.grid_spacing(Ball(), 16), 1.0)
    res = kk.mc_green(Ball(), 1.0, (0.0, 0.0), grid, 20_000, 2e-3, RngStream(0, 15))
    total = res.values.sum() * grid.cell_area
    assert total == pytest.approx(2 / math.pi, rel=0.05)


def test_ball_martin_kernel_is_one_at_centre():
    assert kk.ball_martin_kernel(Ball((1.0, 1.0), 2.0), 0.7, (1.0, 1.0), (3.0, 1.0))[0] == pytest.approx(1.0)
