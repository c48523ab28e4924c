import math

import numpy as np
import pytest

from stablegauge import gauge as gg
from stablegauge import spectral as sp
from stablegauge.geometry import Ball
from stablegauge.potential import Constant
from stablegauge.stable_mc import RngStream


@pytest.fixture(scope="module")
def exterior_points():
    xs = np.array([[0.0, 0.0], [0.3, 0.2], [-0.4, 0.1]])
    ws = np.array([[1.5, 0.0], [0.0, -2.0], [2.5, 2.5]])
    return xs, ws


def test_gaugeability_follows_sign(ball_model, ball_model_q):
    assert gg.gaugeability(ball_model) and gg.gaugeability(ball_model_q)
    bad = sp.constant_potential_model(ball_model, -ball_model.lambda0 + 0.5)
    assert not gg.gaugeability(bad)


def test_zero_potential_gauge_is_exactly_one(ball_model):
    assert np.all(gg.spectral_gauge(ball_model) == 1.0)


def test_constant_gauge_closed_form(ball_model):
    # q = c: g = 1 + c E tau, and the Green row sum is E tau
    c = 0.5
    m = sp.constant_potential_model(ball_model, c)
    g = gg.spectral_gauge(m)
    et = ball_model.green_matrix().sum(axis=1) * ball_model.grid.cell_area
    # resolvent: V 1 = G 1 + c G V 1, so g = 1 + c V 1
    v1 = m.green_matrix().sum(axis=1) * m.grid.cell_area
    assert np.allclose(g, 1 + c * v1)
    assert np.all(g > 1 + c * et - 1e-12)


def test_gauge_monotone_in_constant(ball_model):
    gs = [gg.spectral_gauge(sp.constant_potential_model(ball_model, c)) for c in (0.2, 0.8, 1.5)]
    assert np.all(gs[1] >= gs[0]) and np.all(gs[2] >= gs[1])


def test_gauge_flip_at_mu0(ball_grid, ball_model):
    below, above = gg.gauge_flip(ball_grid, ball_model.lambda0)
    assert below and not above


def test_gauge_blowup_reaches_limit(ball_model):
    study = gg.gauge_blowup(ball_model)
    assert study.reached and study.sup_g[-1] > 1e6
    assert np.all(np.diff(study.sup_g) > 0)


def test_gauge_blowup_needs_full_spectrum(ball_grid):
    with pytest.raises(ValueError):
        gg.gauge_blowup(sp.eigensolve(ball_grid, 3))


def test_gauge_mc_route_agrees(ball_model_q):
    rep = gg.gauge_function(ball_model_q, [(0.0, 0.0)], 20_000, 2e-3, RngStream(0, 21))
    assert rep.max_rel_gap < 0.08
    assert rep.inf_g >= 1.0


def test_interior_q0_table_is_one(ball_model):
    t = gg.cond_gauge_interior(ball_model, ball_model)
    assert t.sup == 1.0 and t.inf == 1.0


def test_exterior_and_boundary_q0_are_one(ball_model, exterior_points):
    xs, ws = exterior_points
    t = gg.cond_gauge_exterior(ball_model, ball_model, xs, ws)
    assert np.all(t.values == 1.0)
    ys = np.array([[0.0, 0.5], [0.0, 0.75]])
    b = gg.cond_gauge_boundary(ball_model, ball_model, (0.0, -0.3), (0.0, 1.0), ys)
    assert np.all(b.sequence == 1.0) and b.martin_value == pytest.approx(1.0, abs=1e-14)


def test_interior_routes_agree(ball_model, ball_model_q):
    t = gg.cond_gauge_interior(ball_model_q, ball_model)
    assert t.route_disagreement <= 1e-8
    assert 1.0 < t.inf <= t.sup < math.inf


def test_common_bracket(ball_model, ball_model_q, exterior_points):
    xs, ws = exterior_points
    inner = gg.cond_gauge_interior(ball_model_q, ball_model)
    ext = gg.cond_gauge_exterior(ball_model_q, ball_model, xs, ws)
    assert ext.route_disagreement <= 0.01
    c = max(inner.bracket, ext.bracket)
    for t in (inner, ext):
        assert 1 / c <= t.inf and t.sup <= c


def test_boundary_route_agreement(ball_model, ball_model_q):
    ys = np.array([[0.0, 0.5], [0.0, 0.75], [0.0, 0.875]])
    b = gg.cond_gauge_boundary(ball_model_q, ball_model, (0.0, -0.3), (0.0, 1.0), ys)
    assert b.final_gap <= 0.01


def test_boundary_rejects_near_pairs(ball_model, ball_model_q):
    with pytest.raises(ValueError):
        gg.cond_gauge_boundary(ball_model_q, ball_model, (0.0, 0.5), (0.0, 1.0), [(0.0, 0.52)])


def test_resolvent_identities(ball_model, ball_model_q):
    g, v = ball_model.green_matrix(), ball_model_q.green_matrix()
    q = ball_model_q.grid.potential
    a = ball_model.grid.cell_area
    assert np.max(np.abs(v - g - (v * q) @ g * a)) <= 1e-8 * np.max(v)
    assert np.max(np.abs(v - g - (g * q) @ v * a)) <= 1e-8 * np.max(v)


def test_conditional_gauge_monotone_in_constant(ball_model):
    vals = [gg.cond_gauge_interior(sp.constant_potential_model(ball_model, c), ball_model).values
            for c in (0.3, 0.9)]
    assert np.all(vals[1] >= vals[0])


def test_lifetime_of_ground_state(ball_model):
    res = gg.conditional_lifetime(ball_model, ball_model.ground_state)
    assert np.allclose(res.per_x, -1 / ball_model.lambda0, rtol=1e-10)


def test_lifetime_rejects_negative(ball_model):
    with pytest.raises(ValueError):
        gg.conditional_lifetime(ball_model, -np.ones(ball_model.grid.n_cells))


def test_lifetime_family_bounded(ball_model):
    fam = gg.sh_plus_family(ball_model, rng=RngStream(0, 22))
    assert "one" in fam and any(k.startswith("martin") for k in fam)
    sup, name = gg.family_lifetime_sup(ball_model, fam)
    assert name in fam
    assert 0 < sup * abs(ball_model.lambda0) < 10


def test_lifetime_decay_limit(ball_model):
    t = np.array([1.0, 5.0, 10.0]) / ball_model.gap
    res = gg.lifetime_decay(ball_model, np.ones(ball_model.grid.n_cells), t)
    assert res.passed and np.all(np.diff(res.gaps) < 0)


def test_three_g_scan_reuses_triples(ball_grid, ball_model):
    pts = gg.sample_triples(Ball(), 2000, 2 * ball_grid.h, RngStream(0, 23))
    d = np.linalg.norm(pts[:, 0] - pts[:, 1], axis=1)
    assert np.all(d >= 2 * ball_grid.h)
    scan = gg.three_g_scan(ball_model.green_matrix(), ball_grid, pts)
    assert np.array_equal(scan.triples, pts)
    assert 0 < scan.sup_constant < math.inf


def test_smallness_precondition(ball_model):
    tiny = sp.eigensolve(ball_model.grid.with_potential(Constant(0.01)))
    res = gg.smallness_bound_check(tiny, ball_model)
    assert res.precondition_ok and res.verdict == "pass" and res.violations == 0
    big = sp.eigensolve(ball_model.grid.with_potential(Constant(1.5)))
    assert gg.smallness_bound_check(big, ball_model).verdict == "precondition_failed"


def test_eigen_comparison(ball_model, ball_model_q):
    t = [1.0 / abs(ball_model.lambda0)]
    res = gg.eigen_comparison(ball_model_q, ball_model, t)
    assert 1.0 <= res.c_eig < 3.0
    assert all(1.0 <= v < 10.0 for v in res.c_kernel.values())


def test_uniform_integrability_decays(ball_grid, ball_model, ball_model_q):
    curve = gg.uniform_integrability_diag(ball_model.green_matrix(), ball_model_q.grid.potential,
                                          [1.0, 100.0, 1e4], ball_grid, rng=RngStream(0, 24))
    assert np.all(np.diff(curve.values) <= 0)
    assert curve.values[-1] < 0.05


def test_uniform_integrability_separates_kato_from_non_kato(ball_grid, ball_model):
    from stablegauge.potential import RadialPower

    vals = {}
    for beta in (0.5, 1.5):
        q = ball_grid.with_potential(RadialPower(center=(0.3, 0.0), beta=beta, scale=0.5)).potential
        vals[beta] = gg.uniform_integrability_diag(ball_model.green_matrix(), q, [1e3], ball_grid,
                                                   rng=RngStream(0, 25)).values[0]
    assert vals[0.5] < 0.05 < vals[1.5]
