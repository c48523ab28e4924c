import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from stablegauge import spectral as sp
from stablegauge.geometry import Ball, Box, l_shape
from stablegauge.potential import Constant
from stablegauge.stable_mc import ExitSample


def direct_lattice_sum(s, radius=400):
    """Punctured sum of |k|^-2s over a disk plus the continuum tail 2 pi R^(2-2s)/(2s-2)."""
    k = np.arange(-radius, radius + 1)
    r2 = k[:, None] ** 2 + k[None, :] ** 2
    mask = (r2 > 0) & (r2 <= radius**2)
    return float(np.sum(r2[mask] ** -s)) + 2 * math.pi * radius ** (2 - 2 * s) / (2 * s - 2)


@pytest.mark.parametrize("s", [1.25, 1.5, 1.75])
def test_lattice_zeta_matches_direct_sum(s):
    assert sp.lattice_zeta(s) == pytest.approx(direct_lattice_sum(s), rel=1e-4)


def test_lattice_zeta_continuation_negative():
    for s in (0.25, 0.5, 0.75):
        assert sp.lattice_zeta(s) < 0


def test_grid_spacing():
    assert sp.grid_spacing(Ball(), 32) == pytest.approx(2 / 32)
    assert sp.grid_spacing(Box(), 10) == pytest.approx(0.1)


def test_assemble_structure(ball_grid):
    k = ball_grid.stiffness0
    assert np.allclose(k, k.T)
    off = k - np.diag(np.diag(k))
    assert np.all(off <= 0)
    assert np.all(ball_grid.killing > 0)
    assert ball_grid.n_cells == 740 and ball_grid.excluded == 72
    # row sums of -L are the killing rates
    assert np.allclose(k.sum(axis=1), ball_grid.killing)


def test_excluded_cells_respect_half_cell_rule(ball_grid):
    d = Ball().dist_to_boundary(ball_grid.centers)
    assert np.all(d >= 0.5 * ball_grid.h * (1 - 1e-9))


def test_box_tiles_exactly():
    g = sp.assemble(Box(), 0.1, 1.0)
    assert g.n_cells == 100 and g.excluded == 0


def test_killing_matches_exterior_quadrature():
    g = sp.assemble(Ball(), sp.grid_spacing(Ball(), 16), 1.0, local_correction=False)
    kq = sp.exterior_killing_quadrature(g, radius=20.0)
    assert np.allclose(g.killing, kq, rtol=1e-4)


def test_assemble_rejects_bad_input():
    with pytest.raises(ValueError):
        sp.assemble(Ball(), 0.1, 2.0)
    with pytest.raises(ValueError):
        sp.assemble(Ball(), 0.5, 1.0)


def test_local_correction_default_follows_alpha():
    h = sp.grid_spacing(Ball(), 12)
    assert not sp.assemble(Ball(), h, 1.0).local_correction
    assert sp.assemble(Ball(), h, 1.5).local_correction


def test_eigenpairs_orthonormal_and_positive(ball_model):
    phi = ball_model.eigenfunctions
    gram = phi.T @ phi * ball_model.grid.cell_area
    assert np.allclose(gram, np.eye(len(gram)), atol=1e-9)
    assert np.all(ball_model.ground_state > 0)
    assert np.all(np.diff(ball_model.eigenvalues) <= 0)
    # rotational symmetry of the disk makes the second level (numerically) double
    assert ball_model.eigenvalues[1] == pytest.approx(ball_model.eigenvalues[2], rel=1e-10)


def test_truncated_solve_agrees_with_full(ball_grid, ball_model):
    part = sp.eigensolve(ball_grid, 5)
    assert not part.complete
    assert np.allclose(part.eigenvalues, ball_model.eigenvalues[:5])


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_exact_discrete_scaling(alpha):
    h = sp.grid_spacing(Ball(), 16)
    a = sp.eigensolve(sp.assemble(Ball(), h, alpha), 1).lambda0
    b = sp.eigensolve(sp.assemble(Ball(radius=2.0), 2 * h, alpha), 1).lambda0
    assert b == pytest.approx(2**-alpha * a, rel=1e-10)


def test_mu0_converges_to_disk_value():
    # unit disk, alpha=1: mu0 is about -2.006
    lam = [sp.eigensolve(sp.assemble(Ball(), sp.grid_spacing(Ball(), m), 1.0), 1).lambda0 for m in (24, 48)]
    assert abs(lam[1] + 2.006) < abs(lam[0] + 2.006) + 1e-3
    assert lam[1] == pytest.approx(-2.006, rel=0.01)


def test_green_is_inverse(ball_model):
    g = ball_model.green_matrix()
    k = ball_model.grid.stiffness
    assert np.allclose(k @ g * ball_model.grid.cell_area, np.eye(len(g)), atol=1e-9)
    assert np.allclose(g, g.T)
    assert np.all(g > 0)


def test_exit_time_from_green(ball_model):
    i0 = ball_model.grid.nearest_cell(np.zeros(2))[0]
    et = ball_model.green_matrix()[i0].sum() * ball_model.grid.cell_area
    assert et == pytest.approx(2 / math.pi, rel=0.01)


def test_heat_kernel_semigroup(ball_model):
    a = ball_model.grid.cell_area
    p1, p2, p3 = (ball_model.heat_kernel(t) for t in (0.3, 0.5, 0.8))
    assert np.allclose(p1 @ p2 * a, p3, rtol=1e-8, atol=1e-12)


def test_heat_kernel_integrates_to_green(small_ball_model):
    # int_0^inf e^(lam t) dt = -1/lam term by term
    lam = small_ball_model.eigenvalues
    phi = small_ball_model.eigenfunctions
    g = (phi / -lam) @ phi.T
    assert np.allclose(g, small_ball_model.green_matrix(), rtol=1e-8)


def test_truncated_heat_kernel_warns(ball_grid):
    part = sp.eigensolve(ball_grid, 3)
    with pytest.warns(RuntimeWarning):
        part.heat_kernel(0.01)


def test_not_gaugeable_raises(ball_grid, ball_model):
    m = sp.constant_potential_model(ball_model, -ball_model.lambda0 + 0.1)
    with pytest.raises(sp.NotGaugeableError):
        m.green_matrix()


def test_constant_potential_shift(ball_grid, ball_model):
    c = 0.7
    shifted = sp.constant_potential_model(ball_model, c)
    direct = sp.eigensolve(ball_grid.with_potential(Constant(c)), 3)
    assert np.allclose(shifted.eigenvalues[:3], direct.eigenvalues)


def test_potential_raises_eigenvalue(ball_model, ball_model_q):
    assert ball_model_q.lambda0 > ball_model.lambda0


def synthetic_sample(rate, n, t_max, dt, seed=0):
    gen = np.random.default_rng(seed)
    t = np.ceil(gen.exponential(1 / rate, n) / dt) * dt
    exited = t <= t_max
    return ExitSample(dt, t_max, np.where(exited, t, np.nan), exited, np.zeros(n), np.full((n, 2), np.nan))


def test_survival_decay_fit_recovers_rate():
    fit = sp.fit_survival_decay(synthetic_sample(2.0, 400_000, 3.0, 1e-3))
    assert fit.rate == pytest.approx(-2.0, abs=4 * fit.stderr + 1e-3)
    assert fit.window == (1.5, 3.0)


def test_survival_decay_needs_survivors():
    with pytest.raises(ValueError):
        sp.fit_survival_decay(synthetic_sample(50.0, 1000, 3.0, 1e-3))


def test_iu_closed_form_against_quadrature():
    # M(t) is the running mean of A over (0, t)
    for t in (0.3, 1.0, 2.5):
        num = integrate.quad(lambda e: float(sp.iu_A(e, 1.0, 1.0)), 0, t, points=[1.0], limit=200)[0] / t
        assert sp.iu_M(t, 1.0, 1.0) == pytest.approx(num, rel=1e-9)


def test_iu_M_at_one():
    # (n/2alpha)(1 - log 1) + 1.5 c1 + c2 with n = 2, alpha = 1
    assert sp.iu_M(1.0, 1.0, 1.0, 2, 1.0) == pytest.approx(3.5, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(1e-3, 50), c1=st.floats(0, 5), c2=st.floats(0, 5))
def test_iu_M_positive_and_decreasing_in_t(t, c1, c2):
    assert sp.iu_M(t, c1, c2) > 0
    assert sp.iu_M(t * 1.5, c1, c2) <= sp.iu_M(t, c1, c2) + 1e-12


def test_iu_ratio_check_fits(ball_model):
    t = np.geomspace(0.1 / abs(ball_model.lambda0), 10 / ball_model.gap, 12)
    res = sp.iu_ratio_check(ball_model, t)
    assert res.passed and res.params is not None
    assert np.all(res.sup_ratio >= 1.0 - 1e-12)
    assert res.tail_monotone


def test_ratio_sup_is_max_over_all_pairs(small_ball_model):
    t = 0.4
    p = small_ball_model.heat_kernel(t) * math.exp(-small_ball_model.lambda0 * t)
    phi = small_ball_model.ground_state
    brute = float(np.max(p / np.outer(phi, phi)))
    assert sp.ground_state_ratio_sup(small_ball_model, t) == pytest.approx(brute, rel=1e-10)


def test_gap_convergence_rate(ball_model):
    t = np.linspace(3 / ball_model.gap, 10 / ball_model.gap, 12)
    fit = sp.gap_convergence(ball_model, t)
    assert fit.passed


def test_dirichlet_form_is_stiffness_quadratic_form(ball_model):
    phi = ball_model.ground_state
    assert sp.dirichlet_form(ball_model.grid, phi) == pytest.approx(-ball_model.lambda0, rel=1e-10)


def test_log_sobolev_stat_finite(ball_model):
    f = ball_model.eigenfunctions[:, :3] @ np.array([1.0, 0.3, -0.2])
    a = sp.log_sobolev_stat(ball_model.grid, f, 0.1)
    b = sp.log_sobolev_stat(ball_model.grid, 2.0 * f, 0.1)
    assert math.isfinite(a)
    assert a == pytest.approx(b, abs=1e-9)  # homogeneous of degree zero


def test_ground_state_envelope_and_harnack(ball_model):
    from stablegauge.geometry import whitney_decompose

    fit = sp.ground_state_envelope(ball_model, whitney_decompose(Ball(), 8), np.zeros(2))
    assert 0 <= fit.C2 < 5
    assert sp.harnack_ratio(ball_model, (-0.25, -0.25), (0.25, 0.25)) < 1.5


def test_l_shape_model_builds():
    g = sp.assemble(l_shape(), sp.grid_spacing(l_shape(), 16), 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        m = sp.eigensolve(g)
    assert m.lambda0 < 0 and np.all(m.ground_state > 0)


def test_stable_constant_enters_rates():
    g = sp.assemble(Box(), 0.1, 1.0)
    a = special.gamma(1.5) * 2**0 / (math.pi * special.gamma(0.5))
    i, j = 0, 1
    r = np.linalg.norm(g.centers[i] - g.centers[j])
    assert -g.stiffness0[i, j] == pytest.approx(a * 0.1**2 * r**-3, rel=1e-12)
