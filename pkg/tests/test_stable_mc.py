import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from stablegauge import stable_mc as mc
from stablegauge.geometry import Ball, Box

alphas = st.sampled_from([0.3, 0.5, 1.0, 1.5, 1.9])


def mean_exit_time_ball(alpha, r=1.0):
    """E^0 tau for B(0, r) in the plane."""
    return r**alpha / (2**alpha * special.gamma(1 + alpha / 2) ** 2)


def test_stream_identity_is_reproducible():
    a = mc.RngStream(7, 3).child(2).generator().random(5)
    b = mc.RngStream(7, 3).child(2).generator().random(5)
    c = mc.RngStream(7, 3).child(1).generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("STABLEGAUGE_THREADS", "3")
    assert mc.worker_count() == 3
    assert mc.worker_count(5) == 5
    monkeypatch.delenv("STABLEGAUGE_THREADS")
    assert mc.worker_count() == 1


@pytest.mark.parametrize("alpha", [0.0, 2.0, -1.0, 2.5])
def test_alpha_out_of_range(alpha):
    with pytest.raises(ValueError):
        mc.sample_increment(alpha, 1.0, 2, np.random.default_rng(0))


def test_increment_shapes(gen):
    assert mc.sample_increment(1.0, 0.1, 2, gen).shape == (2,)
    assert mc.sample_increment(1.0, 0.1, 2, gen, size=7).shape == (7, 2)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_characteristic_function(alpha):
    for k, xi in enumerate((0.5, 1.0, 2.0)):
        r = mc.characteristic_function_test(alpha, xi, mc.RngStream(1, k), draws=200_000)
        assert r.passed, r


def test_self_similarity(gen):
    # X_t has the law of t^(1/alpha) X_1: compare quartiles of |X|
    alpha = 1.5
    a = np.linalg.norm(mc.sample_increment(alpha, 0.2, 2, gen, size=200_000), axis=1)
    b = np.linalg.norm(mc.sample_increment(alpha, 1.0, 2, gen, size=200_000), axis=1) * 0.2 ** (1 / alpha)
    assert np.allclose(np.quantile(a, [0.25, 0.5, 0.75]), np.quantile(b, [0.25, 0.5, 0.75]), rtol=0.02)


@settings(max_examples=40, deadline=None)
@given(alpha=alphas, u=st.floats(1e-6, 1 - 1e-6))
def test_exit_radius_inverse_cdf_round_trip(alpha, u):
    # R near 1 is ill-conditioned as a function of u, so compare radii
    r = mc.ball_exit_radius_from_uniform(alpha, u)
    assert r >= 1.0
    assert mc.ball_exit_radius_from_uniform(alpha, mc.ball_exit_radius_cdf(alpha, r)) == pytest.approx(r, rel=1e-9)


def test_exit_radius_alpha_one_closed_form():
    # P(R > 2) = 1 - (2/pi) arccos(1/2) = 1/3
    assert 1 - mc.ball_exit_radius_cdf(1.0, 2.0) == pytest.approx(1 / 3, abs=1e-12)
    r = mc.ball_exit_tail_test(mc.RngStream(0, 1), draws=200_000)
    assert r.passed


def test_laplace_transform_of_subordinator():
    for k, lam in enumerate((0.5, 1.0, 2.0)):
        assert mc.laplace_transform_test(1.0, lam, mc.RngStream(2, k), draws=200_000).passed


def test_wos_single_step_from_ball_center(gen):
    tr = mc.wos_exit(Ball(), 1.0, (0.0, 0.0), gen)
    assert tr.steps == 1
    assert np.linalg.norm(tr.exit_position) > 1.0


def test_wos_exits_leave_domain():
    exits, steps = mc.wos_exit_batch(Box(), 1.2, (0.3, 0.6), 5000, mc.RngStream(3, 0))
    assert not np.any(Box().contains(exits))
    assert np.all(steps >= 1)


def test_wos_thread_count_independent():
    a, _ = mc.wos_exit_batch(Box(), 0.8, (0.5, 0.5), 20_000, mc.RngStream(4, 0), threads=1)
    b, _ = mc.wos_exit_batch(Box(), 0.8, (0.5, 0.5), 20_000, mc.RngStream(4, 0), threads=4)
    assert np.array_equal(a, b)


def test_killed_walk_single_path(gen):
    p = mc.killed_walk(Ball(), 1.0, (0.0, 0.0), 1e-3, None, 50.0, gen)
    assert p.exited and p.exit_time > 0
    assert not Ball().contains(p.exit_position)
    assert mc.feynman_kac_weight(p) == 1.0


def test_killed_batch_thread_independent():
    args = (Ball(), 1.0, (0.2, 0.0), 2e-3, 2.0, 20_000)
    a = mc.killed_walk_batch(*args, mc.RngStream(5, 0), threads=1)
    b = mc.killed_walk_batch(*args, mc.RngStream(5, 0), threads=3)
    assert np.array_equal(a.exit_time, b.exit_time, equal_nan=True)
    assert np.array_equal(a.fk_integral, b.fk_integral)


@pytest.mark.parametrize("alpha", [1.0, 1.5])
def test_mean_exit_time_matches_closed_form(alpha):
    s = mc.killed_walk_batch(Ball(), alpha, (0.0, 0.0), 5e-4, 20.0, 20_000, mc.RngStream(6, 0))
    assert s.censored_fraction == 0.0
    est = s.exit_time.mean()
    se = s.exit_time.std() / math.sqrt(s.paths)
    # discrete monitoring can only delay detection, by at most a few steps on average
    assert abs(est - mean_exit_time_ball(alpha)) <= 4 * se + 3 * s.dt


def test_survival_is_nonincreasing():
    s = mc.killed_walk_batch(Ball(), 1.0, (0.0, 0.0), 2e-3, 1.0, 5000, mc.RngStream(7, 0))
    surv = s.survival(np.linspace(0, 1, 50))
    assert surv[0] == 1.0
    assert np.all(np.diff(surv) <= 0)


def test_run_selftests_pass_small_budget():
    res = mc.run_selftests(seed=3, draws=100_000)
    assert len(res) == 19
    assert sum(not r.passed for r in res) <= 1  # 19 tests at 3 sigma
