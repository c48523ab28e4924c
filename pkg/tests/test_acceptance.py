"""Acceptance suite at desk scale: unit ball and box, n=2, grids up to 64x64, up to 1e6 paths.

Every criterion prints one line ``[PASS]`` or ``[FAIL]`` with the numbers behind it.
Tolerances are fixed here and are not tuned to make a run pass.
"""
import pytest

from stablegauge import spectral as sp
from stablegauge.checks import REGISTRY, Context
from stablegauge.cli import DEFAULT_CONFIG, run_checks
from stablegauge.config import parse_config

pytestmark = pytest.mark.acceptance

SEED = 0
BOX = {"shape": "box", "lo": [-1.0, -1.0], "hi": [1.0, 1.0]}
L_SHAPE = {"shape": "polygon", "vertices": [[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]]}


def config(**patch):
    return parse_config({**DEFAULT_CONFIG, "seed": SEED, **patch}, list(REGISTRY))


@pytest.fixture(scope="module")
def ctx():
    """Default unit-ball context: alpha=1, 64 cells per side, 1e6 Monte Carlo paths."""
    return Context(config())


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}")
        assert ok, detail
    return emit


def run(ctx, *names):
    return {n: REGISTRY[n].run(ctx) for n in names}


def fmt(metrics, *keys):
    return ", ".join(f"{k}={metrics[k]:.4g}" if isinstance(metrics[k], float) else f"{k}={metrics[k]}"
                     for k in keys)


def test_01_constants_and_kernels(ctx, report):
    out = run(ctx, "stable_constant")["stable_constant"]
    report(1, "constants and kernels", out.status == "pass", fmt(out.metrics, "A(2,1)", "G(1)/G(2)"))


def test_02_sampler_fidelity(ctx, report):
    out = run(ctx, "selftest")["selftest"]
    report(2, "sampler fidelity", out.status == "pass",
           fmt(out.metrics, "tests", "failed", "max_abs_z") + " (3 sigma)")


def test_03_spectral_monte_carlo(ctx, report):
    out = run(ctx, "survival_decay", "exit_time", "scaling")
    d, e, s = (out[k].metrics for k in ("survival_decay", "exit_time", "scaling"))
    ok = d["relative_gap"] <= 0.02 and e["relative_gap"] <= 0.05 and s["relative_error"] <= 1e-6
    report(3, "spectral vs Monte Carlo", ok,
           f"decay gap={d['relative_gap']:.3%} (<=2%), exit-time gap={e['relative_gap']:.3%} (<=5%), "
           f"scaling error={s['relative_error']:.2e} (<=1e-6)")


def test_04_poisson_identity(ctx, report):
    m = run(ctx, "poisson_identity")["poisson_identity"].metrics
    ok = m["residual_h"] <= 0.1 and m["residual_h"] < m["residual_2h"]
    report(4, "Poisson identity", ok, f"residual 64x64={m['residual_h']:.4f}, 32x32={m['residual_2h']:.4f}")


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
@pytest.mark.parametrize("shape", ["ball", "box"])
def test_05_three_g_stability(shape, alpha, report):
    domain = DEFAULT_CONFIG["domain"] if shape == "ball" else BOX
    c = Context(config(domain=domain, alpha=alpha))
    m = run(c, "three_g")["three_g"].metrics
    report(5, f"3G stability ({shape}, alpha={alpha})", m["relative_change"] <= 0.15,
           f"sup 32x32={m['sup_2h']:.4f}, 64x64={m['sup_h']:.4f}, change={m['relative_change']:.2%} (<=15%)")


def test_06_gauge_dichotomy(ctx, report):
    out = run(ctx, "gauge_dichotomy")["gauge_dichotomy"]
    report(6, "gauge dichotomy", out.status == "pass", str(out.metrics))


def test_07_conditional_gauge(ctx, report):
    out = run(ctx, "cond_gauge_interior", "cond_gauge_exterior", "cond_gauge_boundary", "resolvent")
    ok = all(o.status == "pass" for o in out.values())
    detail = "; ".join(f"{k}: {o.status}" for k, o in out.items())
    i, x, b = (out[k].metrics for k in ("cond_gauge_interior", "cond_gauge_exterior", "cond_gauge_boundary"))
    detail += (f"; interior bracket=[{i['inf']:.4f}, {i['sup']:.4f}], exterior=[{x['inf']:.4f}, {x['sup']:.4f}], "
               f"boundary route gap={b['final_gap']:.2e}")
    report(7, "conditional gauge", ok, detail)


def test_08_green_comparability(ctx, report):
    out = run(ctx, "green_comparability", "smallness")
    g, s = out["green_comparability"], out["smallness"]
    ok = g.status == "pass" and s.status == "pass"
    report(8, "V_q comparable to G_D", ok,
           f"bracket h={g.metrics['bracket_h']}, 2h={g.metrics['bracket_2h']}; smallness {s.status} "
           f"(violations={s.metrics.get('violations')})")


def test_09_iu_and_gap(ctx, report):
    out = run(ctx, "iu_ratio", "gap_convergence")
    m1 = sp.iu_M(1.0, 1.0, 1.0, 2, 1.0)
    closed_form_ok = abs(m1 - 3.0) <= 1e-10
    ok = out["iu_ratio"].status == "pass" and out["gap_convergence"].status == "pass" and closed_form_ok
    report(9, "IU and gap", ok,
           f"iu_ratio {out['iu_ratio'].status}, gap fit "
           f"{out['gap_convergence'].metrics['fitted_rate']:.4f} vs "
           f"{out['gap_convergence'].metrics['lambda1_minus_lambda0']:.4f}; M(1) at c1=c2=1 is {m1!r}, target 3.0")


def test_10_lifetimes(ctx, report):
    out = run(ctx, "lifetime_ground_state", "lifetime_family", "lifetime_decay")
    ok = all(o.status == "pass" for o in out.values())
    f = out["lifetime_family"].metrics
    report(10, "lifetimes", ok,
           f"ground-state error={out['lifetime_ground_state'].metrics['max_relative_error']:.2e}, "
           f"family sup h={f['sup_h']:.4f} 2h={f['sup_2h']:.4f}, "
           f"decay gaps={[round(g, 6) for g in out['lifetime_decay'].metrics['gaps']]}")


def test_11_geometry(ctx, report):
    lines, ok = [], True
    for name, domain in (("ball", DEFAULT_CONFIG["domain"]), ("box", BOX), ("L-shape", L_SHAPE)):
        out = run(Context(config(domain=domain, grid={"cells": 32})), "whitney", "holder0")
        ok &= all(o.status == "pass" for o in out.values())
        lines.append(f"{name}: whitney {out['whitney'].status}, "
                     f"holder0 violation={out['holder0'].metrics['max_violation']}")
    env = run(ctx, "ground_state_envelope")["ground_state_envelope"]
    ok &= env.status == "pass"
    lines.append(f"envelope C2 h={env.metrics['C2_h']:.4f} 2h={env.metrics['C2_2h']:.4f}")
    report(11, "geometry", ok, "; ".join(lines))


def test_12_determinism(tmp_path, report):
    cfg = config(grid={"cells": 24}, mc={"paths": 20_000, "selftest_draws": 50_000, "gauge_paths": 2000},
                 checks=["selftest", "exit_time", "survival_decay", "gauge_mc", "three_g", "superharmonic"])
    reports = [run_checks(cfg, threads=t).to_json() for t in (1, 1, 4)]
    ok = reports[0] == reports[1] == reports[2]
    report(12, "determinism", ok, f"3 runs (threads 1, 1, 4), {len(reports[0])} bytes each, identical={ok}")
