"""Registered numerical checks and the lazily built models they share.

Each check returns a :class:`CheckOutcome`.  Refinement studies compare the
configured spacing ``h`` with the coarser ``2h``.  Random streams are keyed by
check name, so a check's result does not depend on which other checks run.
"""
from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import gauge as gg
from . import kernels_kato as kk
from . import spectral as sp
from . import stable_mc as mc
from .config import ExperimentConfig
from .geometry import Ball, Domain, holder0_fit, whitney_decompose
from .potential import Potential

PASS, FAIL, SKIPPED, DIAGNOSTIC = "pass", "fail", "skipped", "diagnostic"


@dataclass
class CheckOutcome:
    status: str
    metrics: dict[str, Any] = field(default_factory=dict)
    error_bars: dict[str, Any] = field(default_factory=dict)
    tables: dict[str, tuple[list[str], list[list[Any]]]] = field(default_factory=dict)
    note: str = ""


def verdict(ok: bool) -> str:
    return PASS if bool(ok) else FAIL


class Context:
    """Configuration plus cached grids and spectral models."""

    def __init__(self, config: ExperimentConfig, threads: int | None = None):
        self.config = config
        self.threads = threads
        self.domain: Domain = config.domain_object()
        self.alpha = config.alpha
        self.q: Potential = config.potential_object()
        self.h = config.spacing()
        self.x0 = self.domain.x0
        self._cache: dict[Any, Any] = {}

    def rng(self, name: str) -> mc.RngStream:
        return mc.RngStream(self.config.seed, zlib.crc32(name.encode()))

    def cached(self, key, build: Callable[[], Any]):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def grid0(self, level: int = 0) -> sp.GridModel:
        h = self.h * 2**level
        return self.cached(("grid0", level), lambda: sp.assemble(
            self.domain, h, self.alpha, None, self.config.local_correction))

    def model0(self, level: int = 0) -> sp.SpectralModel:
        return self.cached(("model0", level), lambda: sp.eigensolve(self.grid0(level)))

    def grid_q(self, level: int = 0, q: Potential | None = None, tag: str = "q") -> sp.GridModel:
        q = self.q if q is None else q
        return self.cached(("grid", tag, level), lambda: self.grid0(level).with_potential(q))

    def model_q(self, level: int = 0, q: Potential | None = None, tag: str = "q") -> sp.SpectralModel:
        return self.cached(("model", tag, level), lambda: sp.eigensolve(self.grid_q(level, q, tag)))

    def complete_level(self) -> int:
        """Finest refinement level whose full spectrum is computed."""
        for level in (0, 1, 2, 3):
            if self.grid0(level).n_cells <= sp.DENSE_CAP:
                return level
        raise ValueError("no grid level fits the dense eigensolve cap")

    def exit_sample(self) -> mc.ExitSample:
        c = self.config.mc
        return self.cached("exit_sample", lambda: mc.killed_walk_batch(
            self.domain, self.alpha, self.x0, c.dt, c.t_max, c.paths, self.rng("exit_sample"),
            threads=self.threads))

    def boundary_point(self, direction=(1.0, 0.0)) -> np.ndarray:
        """First boundary point on the ray from x0 (bisection on membership)."""
        e = np.asarray(direction, float) / np.linalg.norm(direction)
        lo, hi = 0.0, 2 * self.domain.max_distance_from(self.x0)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.domain.contains(self.x0 + mid * e):
                lo = mid
            else:
                hi = mid
        return self.x0 + hi * e


def rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


# -- sampler and kernels ------------------------------------------------------------


def check_selftest(ctx: Context) -> CheckOutcome:
    res = mc.run_selftests(ctx.config.seed, ctx.config.mc.selftest_draws)
    rows = [[r.name, r.estimate, r.expected, r.sigma, r.z, r.passed] for r in res]
    return CheckOutcome(
        verdict(all(r.passed for r in res)),
        {"tests": len(res), "failed": sum(not r.passed for r in res),
         "max_abs_z": max(abs(r.z) for r in res)},
        {"sigma": {r.name: r.sigma for r in res}},
        {"selftest": (["test", "estimate", "expected", "sigma", "z", "passed"], rows)},
    )


def check_stable_constant(ctx: Context) -> CheckOutcome:
    a21 = kk.stable_constant(2, 1.0)
    a31 = kk.stable_constant(3, 1.0)
    g1 = kk.free_green(2, 1.0, (0, 0), (1, 0))
    g2 = kk.free_green(2, 1.0, (0, 0), (2, 0))
    ok = abs(a21 - 1 / (2 * math.pi)) < 1e-10 and abs(a31 - 1 / math.pi**2) < 1e-10 and abs(g1 / g2 - 2) < 1e-12
    return CheckOutcome(verdict(ok), {"A(2,1)": a21, "A(3,1)": a31, "G(1)/G(2)": g1 / g2,
                                      "A(2,alpha)": kk.stable_constant(2, ctx.alpha)})


def check_kato(ctx: Context) -> CheckOutcome:
    radii = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    probes = ctx.grid0(1).centers
    rep = kk.kato_modulus(ctx.q, radii, probes, ctx.alpha, tolerance=0.1)
    rows = [[r, m] for r, m in zip(rep.radii, rep.moduli)]
    return CheckOutcome(DIAGNOSTIC, {"in_kato": rep.in_kato, "moduli": rep.moduli.tolist(),
                                     "unconverged_probes": len(rep.unconverged)},
                        tables={"kato_modulus": (["radius", "modulus"], rows)},
                        note="finite probe set: numerically consistent with Kato, not a proof")


# -- geometry ------------------------------------------------------------------------


def whitney_properties(graph) -> dict[str, Any]:
    cubes = graph.cubes
    ratio = np.array([graph.clearance[k] / c.diam for k, c in enumerate(cubes)])
    prop3 = bool(np.all((ratio >= 1.0) & (ratio <= 4.0)))
    sides = np.array([c.side for c in cubes])
    adj = np.array(graph.adjacency) if graph.adjacency else np.zeros((0, 2), int)
    side_ratio = sides[adj[:, 0]] / sides[adj[:, 1]] if len(adj) else np.ones(1)
    prop2 = bool(np.all((side_ratio >= 0.25) & (side_ratio <= 4.0)))
    # dyadic squares are either nested or interior-disjoint, so disjointness is the absence of an ancestor
    keys = set(graph.index)
    nested = 0
    for d, i, j in keys:
        for up in range(1, d + 1):
            if (d - up, i >> up, j >> up) in keys:
                nested += 1
                break
    connected = bool(np.all(graph.bfs(graph.root) >= 0))
    return {"cubes": len(cubes), "property1": nested == 0, "property2": prop2, "property3": prop3,
            "connected": connected, "uncovered_fraction": graph.uncovered_fraction,
            "min_dist_over_diam": float(ratio.min()), "max_dist_over_diam": float(ratio.max())}


def check_whitney(ctx: Context) -> CheckOutcome:
    graph = whitney_decompose(ctx.domain, 8, x0=ctx.x0)
    m = whitney_properties(graph)
    return CheckOutcome(verdict(m["property1"] and m["property2"] and m["property3"] and m["connected"]), m)


def check_holder0(ctx: Context) -> CheckOutcome:
    fit = holder0_fit(ctx.domain, ctx.x0, 10_000, ctx.rng("holder0"))
    return CheckOutcome(verdict(fit.max_violation == 0.0),
                        {"C1": fit.C1, "C2": fit.C2, "C2_raw": fit.C2_raw, "max_violation": fit.max_violation,
                         "depth": fit.depth, "samples": fit.samples,
                         "holdout_violation": fit.holdout_violation})


def check_ground_state_envelope(ctx: Context) -> CheckOutcome:
    graph = whitney_decompose(ctx.domain, 8, x0=ctx.x0)
    fits = [sp.ground_state_envelope(ctx.model0(level), graph, ctx.x0) for level in (0, 1)]
    c_fine, c_coarse = fits[0].C2, fits[1].C2
    stable = math.isfinite(c_fine) and rel(c_fine, c_coarse) <= 0.2 if c_coarse > 0 else c_fine == 0
    return CheckOutcome(verdict(stable), {"C2_h": c_fine, "C2_2h": c_coarse,
                                          "uncovered_cells": fits[0].uncovered_cells})


def check_harnack(ctx: Context) -> CheckOutcome:
    half = 0.25 * float(ctx.domain.dist_to_boundary(ctx.x0))
    lo, hi = ctx.x0 - half, ctx.x0 + half
    r = [sp.harnack_ratio(ctx.model0(level), lo, hi) for level in (0, 1)]
    return CheckOutcome(verdict(math.isfinite(r[0]) and rel(r[0], r[1]) <= 0.2),
                        {"ratio_h": r[0], "ratio_2h": r[1], "box_half_width": half})


# -- spectral / Monte Carlo cross checks ---------------------------------------------------


def check_spectrum(ctx: Context) -> CheckOutcome:
    m = ctx.model0(0)
    phi = m.eigenfunctions
    gram = phi.T @ phi * m.grid.cell_area
    ortho = float(np.max(np.abs(gram - np.eye(len(gram)))))
    ok = ortho < 1e-8 and np.min(m.ground_state) > 0 and m.lambda0 < 0 and m.lambda1 < m.lambda0
    rows = [[k, v] for k, v in enumerate(m.eigenvalues)]
    phi_rows = [[c[0], c[1], v] for c, v in zip(m.grid.centers, m.ground_state)]
    return CheckOutcome(verdict(ok), {"cells": m.grid.n_cells, "excluded_cells": m.grid.excluded,
                                      "mu0": m.lambda0, "mu1": m.lambda1, "orthonormality_error": ortho,
                                      "complete": m.complete},
                        tables={"eigenvalues": (["k", "lambda"], rows),
                                "phi0": (["x", "y", "phi0"], phi_rows)})


def check_scaling(ctx: Context) -> CheckOutcome:
    base = sp.eigensolve(ctx.grid0(0), 1).lambda0
    scaled = sp.assemble(ctx.domain.scaled(2.0), 2 * ctx.h, ctx.alpha, None, ctx.config.local_correction)
    big = sp.eigensolve(scaled, 1).lambda0
    err = rel(big, 2 ** -ctx.alpha * base)
    return CheckOutcome(verdict(err <= 1e-6), {"lambda0_D": base, "lambda0_2D": big, "relative_error": err})


def check_exit_time(ctx: Context) -> CheckOutcome:
    m = ctx.model0(0)
    g = m.green_matrix()
    i0 = int(m.grid.nearest_cell(ctx.x0)[0])
    spectral = float(g[i0].sum() * m.grid.cell_area)
    s = ctx.exit_sample()
    t = np.where(s.exited, s.exit_time, s.t_max)
    est, se = float(t.mean()), float(t.std(ddof=1) / math.sqrt(len(t)))
    err = rel(est, spectral)
    return CheckOutcome(verdict(err <= 0.05), {"spectral": spectral, "mc": est, "relative_gap": err,
                                               "censored_fraction": s.censored_fraction}, {"mc_sigma": se})


def check_survival_decay(ctx: Context) -> CheckOutcome:
    fit = sp.fit_survival_decay(ctx.exit_sample())
    mu0 = ctx.model0(0).lambda0
    err = rel(fit.rate, mu0)
    return CheckOutcome(verdict(err <= 0.02), {"mu0": mu0, "mc_slope": fit.rate, "relative_gap": err,
                                               "window": list(fit.window), "survivors": fit.survivors},
                        {"mc_sigma": fit.stderr})


def check_poisson_identity(ctx: Context) -> CheckOutcome:
    rmax = ctx.domain.max_distance_from(ctx.x0)
    target = kk.Annulus(tuple(ctx.x0), 2 * rmax, 3 * rmax)
    paths = ctx.config.mc.paths
    out = [kk.poisson_identity_residual(ctx.domain, ctx.alpha, ctx.x0, target, ctx.model0(level), paths,
                                        ctx.rng("poisson_identity"), ctx.threads) for level in (0, 1)]
    fine, coarse = out
    ok = fine.residual <= 0.1 and fine.residual < coarse.residual
    return CheckOutcome(verdict(ok), {"residual_h": fine.residual, "residual_2h": coarse.residual,
                                      "lhs_h": fine.lhs, "lhs_2h": coarse.lhs, "harmonic_measure": fine.rhs},
                        {"harmonic_measure_sigma": fine.rhs_stderr})


def _approach(ctx: Context, level: int = 0):
    z = ctx.boundary_point()
    e = (z - ctx.x0) / np.linalg.norm(z - ctx.x0)
    dist = np.linalg.norm(z - ctx.x0)
    h = ctx.grid0(level).h
    # z comes from bisection, so allow rounding at the 2h cut-off
    ks = [k for k in range(1, 12) if dist * 2.0**-k >= 2 * h * (1 - 1e-9)]
    return z, np.array([z - dist * 2.0**-k * e for k in ks])


def check_martin(ctx: Context) -> CheckOutcome:
    z, ys = _approach(ctx)
    x = ctx.x0 + 0.5 * float(ctx.domain.dist_to_boundary(ctx.x0)) * np.array([0.0, 1.0])
    seq = kk.martin_estimate(ctx.domain, ctx.alpha, x, ctx.x0, z, ys, ctx.model0(0))
    metrics = {"ratios": seq.ratios.tolist(), "gaps": seq.gaps.tolist()}
    ok = bool(np.all(np.isfinite(seq.ratios)) and np.all(seq.ratios > 0))
    if isinstance(ctx.domain, Ball):
        exact = float(kk.ball_martin_kernel(ctx.domain, ctx.alpha, x, z)[0])
        metrics.update(closed_form=exact, relative_gap=rel(float(seq.ratios[-1]), exact))
        ok = ok and metrics["relative_gap"] <= 0.1
    else:
        ok = ok and seq.gaps[-1] < seq.gaps[0]
    return CheckOutcome(verdict(ok), metrics)


def check_superharmonic(ctx: Context) -> CheckOutcome:
    m = ctx.model0(0)
    d0 = float(ctx.domain.dist_to_boundary(ctx.x0))
    y0 = ctx.x0 + 0.4 * d0 * np.array([1.0, 0.0])
    far = [(ctx.x0 + 0.4 * d0 * np.array([-1.0, 0.0]), 0.2 * d0),
           (ctx.x0 + 0.4 * d0 * np.array([0.0, 1.0]), 0.2 * d0),
           (ctx.x0 + 0.4 * d0 * np.array([0.0, -1.0]), 0.2 * d0)]
    near = [(y0, 0.3 * d0), (y0 + 0.1 * d0 * np.array([0.0, 1.0]), 0.3 * d0)]
    paths = min(ctx.config.mc.paths, 50_000)
    rng = ctx.rng("superharmonic")
    green = kk.superharmonic_check(ctx.domain, ctx.alpha, kk.green_column_function(m, y0), far, paths, rng.child(0))
    one = kk.superharmonic_check(ctx.domain, ctx.alpha, lambda p: np.ones(len(np.atleast_2d(p))), far + near,
                                 paths, rng.child(1))
    neg = kk.superharmonic_check(ctx.domain, ctx.alpha, kk.green_column_function(m, y0, -1.0), near, paths,
                                 rng.child(2))
    ok = all(v.passed for v in green) and all(v.passed for v in one) and not any(v.passed for v in neg)
    return CheckOutcome(verdict(ok), {"green_pass": [v.passed for v in green], "one_pass": [v.passed for v in one],
                                      "negated_green_pass": [v.passed for v in neg]},
                        {"green_sigma": [v.stderr for v in green]})


def check_three_g(ctx: Context) -> CheckOutcome:
    coarse, fine = ctx.grid0(1), ctx.grid0(0)
    pts = gg.sample_triples(ctx.domain, 10_000, 2 * coarse.h, ctx.rng("three_g"))
    s_c = gg.three_g_scan(ctx.model0(1).green_matrix(), coarse, pts)
    s_f = gg.three_g_scan(ctx.model0(0).green_matrix(), fine, pts)
    change = rel(s_f.sup_constant, s_c.sup_constant)
    counts, edges = s_f.histogram
    rows = [[edges[k], edges[k + 1], int(counts[k])] for k in range(len(counts))]
    return CheckOutcome(verdict(change <= 0.15), {"sup_h": s_f.sup_constant, "sup_2h": s_c.sup_constant,
                                                  "relative_change": change},
                        tables={"three_g_histogram": (["log10_lo", "log10_hi", "count"], rows)})


# -- gauge ----------------------------------------------------------------------------


def check_gauge_dichotomy(ctx: Context) -> CheckOutcome:
    level = ctx.complete_level()
    m0 = ctx.model0(level)
    below, above = gg.gauge_flip(m0.grid, m0.lambda0)
    study = gg.gauge_blowup(m0)
    g_zero = gg.spectral_gauge(m0)
    exact_one = bool(np.all(g_zero == 1.0))
    ok = below and not above and study.reached and exact_one
    rows = [[c, s] for c, s in zip(study.c, study.sup_g)]
    return CheckOutcome(verdict(ok), {"mu0": m0.lambda0, "gaugeable_below": below, "gaugeable_above": above,
                                      "max_sup_g": float(study.sup_g.max()), "q0_gauge_is_one": exact_one},
                        tables={"gauge_blowup": (["c", "sup_g"], rows)})


def check_gauge_mc(ctx: Context) -> CheckOutcome:
    m = ctx.model_q(0)
    if not gg.gaugeability(m):
        return CheckOutcome(FAIL, {"lambda0": m.lambda0}, note="configured potential is not gaugeable")
    d0 = float(ctx.domain.dist_to_boundary(ctx.x0))
    probes = [ctx.x0, ctx.x0 + 0.5 * d0 * np.array([1.0, 0.0]), ctx.x0 + 0.5 * d0 * np.array([0.0, -1.0])]
    c = ctx.config.mc
    rep = gg.gauge_function(m, probes, c.gauge_paths, c.dt, ctx.rng("gauge_mc"), threads=ctx.threads)
    rows = [[p[0], p[1], s, v, e, cf] for p, s, v, e, cf in
            zip(rep.mc_probes, rep.spectral_at_probes, rep.mc_mean, rep.mc_stderr, rep.mc_censored)]
    return CheckOutcome(verdict(rep.max_rel_gap <= 0.05),
                        {"lambda0": m.lambda0, "sup_g": rep.sup_g, "inf_g": rep.inf_g,
                         "max_relative_gap": rep.max_rel_gap},
                        {"mc_sigma": rep.mc_stderr.tolist()},
                        {"gauge": (["x", "y", "spectral", "mc", "mc_sigma", "censored"], rows)})


def check_cond_gauge_interior(ctx: Context) -> CheckOutcome:
    m0 = ctx.model0(0)
    t0 = gg.cond_gauge_interior(m0, m0)
    tq = gg.cond_gauge_interior(ctx.model_q(0), m0)
    tc = gg.cond_gauge_interior(ctx.model_q(1), ctx.model0(1))
    ok = t0.sup == 1.0 and t0.inf == 1.0 and tq.route_disagreement <= 1e-8
    return CheckOutcome(verdict(ok), {"q0_all_one": t0.sup == 1.0 and t0.inf == 1.0, "sup": tq.sup, "inf": tq.inf,
                                      "sup_2h": tc.sup, "inf_2h": tc.inf,
                                      "route_disagreement": tq.route_disagreement})


def _exterior_pairs(ctx: Context):
    d0 = float(ctx.domain.dist_to_boundary(ctx.x0))
    rmax = ctx.domain.max_distance_from(ctx.x0)
    ang = np.linspace(0, 2 * np.pi, 5, endpoint=False)
    dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    xs = ctx.x0 + 0.5 * d0 * dirs[[0, 1, 2, 3, 4]] * np.array([0.0, 0.5, 0.8, 0.3, 0.6])[:, None]
    ws = ctx.x0 + (rmax + 4 * ctx.grid0(1).h + 0.25 * rmax * np.arange(5))[:, None] * dirs
    return xs, ws


def check_cond_gauge_exterior(ctx: Context) -> CheckOutcome:
    m0, mq = ctx.model0(0), ctx.model_q(0)
    xs, ws = _exterior_pairs(ctx)
    ext = gg.cond_gauge_exterior(mq, m0, xs, ws)
    ext0 = gg.cond_gauge_exterior(m0, m0, xs, ws)
    inner = gg.cond_gauge_interior(mq, m0)
    lo, hi = inner.inf / 1.1, inner.sup * 1.1
    ok = (ext0.sup == 1.0 and ext0.inf == 1.0 and ext.route_disagreement <= 0.01
          and lo <= ext.inf and ext.sup <= hi)
    rows = [[xs[i][0], xs[i][1], ws[j][0], ws[j][1], a, b] for (i, j), a, b in
            zip(ext.pairs, ext.values, ext.route_values)]
    return CheckOutcome(verdict(ok), {"sup": ext.sup, "inf": ext.inf, "interior_sup": inner.sup,
                                      "interior_inf": inner.inf, "route_disagreement": ext.route_disagreement},
                        tables={"cond_gauge_exterior": (["x", "y", "w_x", "w_y", "route1", "route2"], rows)})


def check_cond_gauge_boundary(ctx: Context) -> CheckOutcome:
    m0, mq = ctx.model0(0), ctx.model_q(0)
    z, ys = _approach(ctx)
    far = np.linalg.norm(ys - ctx.x0, axis=1) >= 2 * ctx.grid0(0).h
    b = gg.cond_gauge_boundary(mq, m0, ctx.x0, z, ys[far])
    b0 = gg.cond_gauge_boundary(m0, m0, ctx.x0, z, ys[far])
    inner = gg.cond_gauge_interior(mq, m0)
    inside = bool(np.all((b.sequence >= inner.inf) & (b.sequence <= inner.sup)))
    ok = bool(np.all(b0.sequence == 1.0)) and b.final_gap <= 0.01 and inside
    return CheckOutcome(verdict(ok), {"sequence": b.sequence.tolist(), "martin_value": float(b.martin_value),
                                      "final_gap": float(b.final_gap), "within_interior_bracket": inside,
                                      "differences_shrinking": b.stabilizing})


def check_resolvent(ctx: Context) -> CheckOutcome:
    m0, mq = ctx.model0(0), ctx.model_q(0)
    g, v = m0.green_matrix(), mq.green_matrix()
    grid = mq.grid
    a = grid.cell_area
    left = g + (v * grid.potential) @ g * a
    right = g + (g * grid.potential) @ v * a
    scale = float(np.max(np.abs(v)))
    e1 = float(np.max(np.abs(v - left))) / scale
    e2 = float(np.max(np.abs(v - right))) / scale
    inv = (grid.stiffness @ v) * a  # -(L + q) V = I / h^2
    e3 = float(np.max(np.abs(inv - np.eye(grid.n_cells))))
    return CheckOutcome(verdict(max(e1, e2, e3) <= 1e-8), {"V=G+VqG": e1, "V=G+GqV": e2, "inverse": e3})


def check_green_comparability(ctx: Context) -> CheckOutcome:
    t = [gg.cond_gauge_interior(ctx.model_q(level), ctx.model0(level)) for level in (0, 1)]
    ok = all(math.isfinite(x.sup) and x.inf > 0 for x in t) and rel(t[0].sup, t[1].sup) <= 0.15 \
        and rel(t[0].inf, t[1].inf) <= 0.15
    return CheckOutcome(verdict(ok), {"bracket_h": [t[0].inf, t[0].sup], "bracket_2h": [t[1].inf, t[1].sup]})


def check_smallness(ctx: Context) -> CheckOutcome:
    grid0 = ctx.grid0(0)
    m0 = ctx.model0(0)
    eps = 0.3
    for _ in range(12):
        _, q2 = kk.kato_decompose(ctx.q, eps, grid0)
        mq2 = sp.eigensolve(grid0.with_potential(q2), 1)
        res = gg.smallness_bound_check(mq2, m0)
        if res.precondition_ok:
            break
        eps /= 2
    status = {"pass": PASS, "fail": FAIL, "precondition_failed": SKIPPED}[res.verdict]
    return CheckOutcome(status, {"eps": eps, "precondition_value": res.precondition_value,
                                 "violations": res.violations, "checked_pairs": res.checked,
                                 "ratio_range": [res.lower_ratio, res.upper_ratio]})


def check_eigen_comparison(ctx: Context) -> CheckOutcome:
    level = ctx.complete_level()
    cs = [gg.eigen_comparison(ctx.model_q(lv), ctx.model0(lv)).c_eig for lv in (level, level + 1)]
    mq, m0 = ctx.model_q(level), ctx.model0(level)
    ts = [1.0 / abs(m0.lambda0), 5.0 / abs(m0.lambda0)]
    ck = gg.eigen_comparison(mq, m0, ts).c_kernel
    ok = all(math.isfinite(c) for c in cs) and rel(cs[0], cs[1]) <= 0.2 and all(math.isfinite(v) for v in ck.values())
    return CheckOutcome(verdict(ok), {"c_eig": cs[0], "c_eig_coarse": cs[1],
                                      "c_kernel": {f"{k:.6g}": v for k, v in ck.items()}})


# -- intrinsic ultracontractivity ---------------------------------------------------------


def iu_times(model: sp.SpectralModel, count: int = 16) -> np.ndarray:
    return np.geomspace(0.1 / abs(model.lambda0), 10.0 / model.gap, count)


def check_iu_ratio(ctx: Context) -> CheckOutcome:
    m = ctx.model_q(ctx.complete_level())
    t = iu_times(m)
    res = sp.iu_ratio_check(m, t)
    end = float(sp.ground_state_ratio_sup(m, 10.0 / m.gap))
    ok = res.passed and abs(end - 1.0) <= 1e-3 and res.tail_monotone
    rows = [[a, b, c] for a, b, c in zip(res.t, res.sup_ratio, res.bound)]
    return CheckOutcome(verdict(ok), {"c1": res.params.c1, "c2": res.params.c2, "R_at_10_over_gap": end,
                                      "tail_monotone": res.tail_monotone},
                        tables={"iu_ratio": (["t", "R", "bound"], rows)},
                        note="c1, c2 are empirical stand-ins for unquantified constants")


def check_gap_convergence(ctx: Context) -> CheckOutcome:
    m = ctx.model_q(ctx.complete_level())
    fit = sp.gap_convergence(m, np.linspace(3.0 / m.gap, 10.0 / m.gap, 12))
    return CheckOutcome(verdict(fit.passed), {"fitted_rate": fit.rate, "lambda1_minus_lambda0": fit.expected})


def check_log_sobolev(ctx: Context) -> CheckOutcome:
    m = ctx.model0(ctx.complete_level())
    gen = ctx.rng("log_sobolev").generator()
    k = min(12, m.eigenfunctions.shape[1])
    coef = gen.standard_normal((1000, k)) * np.exp(-0.5 * np.arange(k))
    fs = coef @ m.eigenfunctions[:, :k].T
    eta = 0.1
    s1 = max(sp.log_sobolev_stat(m.grid, f, eta) for f in fs)
    s4 = max(sp.log_sobolev_stat(m.grid, f, eta / 4) for f in fs)
    bound = (2 / (2 * ctx.alpha)) * math.log(4) + 0.5
    return CheckOutcome(verdict(s4 - s1 <= bound), {"sup_eta": s1, "sup_eta_over_4": s4, "difference": s4 - s1,
                                                    "bound": bound})


def check_heat_kernel_bounds(ctx: Context) -> CheckOutcome:
    m = ctx.model0(ctx.complete_level())
    ts = np.linspace(1.0, 20.0 / m.gap, 40)
    phi = m.ground_state
    mins = np.array([float(np.min(m.heat_kernel(t) * math.exp(-m.lambda0 * t) / np.outer(phi, phi)))
                     for t in ts])
    ratios = np.array([sp.ground_state_ratio_sup(m, t) for t in ts])
    # two-sided comparability with phi0(x) phi0(y) from some time on: lower constant 1/2 after t_star
    low = mins >= 0.5
    after = np.flatnonzero(np.logical_and.accumulate(low[::-1])[::-1])
    t_star = float(ts[after[0]]) if len(after) else math.inf
    ok = math.isfinite(t_star) and bool(np.all(np.diff(ratios) <= 1e-12 * ratios[:-1]))
    rows = [[t, lo, hi] for t, lo, hi in zip(ts, mins, ratios)]
    return CheckOutcome(verdict(ok), {"t_star": t_star, "min_ratio_final": float(mins[-1]),
                                      "max_ratio_t1": float(ratios[0])},
                        tables={"heat_kernel_bounds": (["t", "min_ratio", "max_ratio"], rows)})


# -- lifetimes ---------------------------------------------------------------------------


def check_lifetime_ground_state(ctx: Context) -> CheckOutcome:
    m = ctx.model0(0)
    res = gg.conditional_lifetime(m, m.ground_state)
    err = float(np.max(np.abs(res.per_x + 1.0 / m.lambda0))) * abs(m.lambda0)
    return CheckOutcome(verdict(err <= 1e-8), {"mu0": m.lambda0, "max_relative_error": err})


def check_lifetime_family(ctx: Context) -> CheckOutcome:
    sups = []
    for level in (0, 1):
        fam = gg.sh_plus_family(ctx.model0(level), rng=ctx.rng("lifetime_family"))
        sups.append(gg.family_lifetime_sup(ctx.model0(level), fam))
    (s_f, n_f), (s_c, n_c) = sups
    ok = math.isfinite(s_f) and rel(s_f, s_c) <= 0.2
    return CheckOutcome(verdict(ok), {"sup_h": s_f, "argmax_h": n_f, "sup_2h": s_c, "argmax_2h": n_c,
                                      "sup_times_abs_mu0": s_f * abs(ctx.model0(0).lambda0)},
                        note="sup over a finite surrogate family is a lower bound on the sup over all h")


def check_lifetime_decay(ctx: Context) -> CheckOutcome:
    m = ctx.model0(0)
    ts = np.array([1.0, 2.0, 5.0, 10.0]) / m.gap
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = gg.lifetime_decay(m, np.ones(m.grid.n_cells), ts)
        phi_res = gg.lifetime_decay(m, m.ground_state, ts)
    ok = res.passed and bool(np.all(np.diff(res.gaps) < 0)) and float(np.max(phi_res.gaps)) <= 1e-8
    return CheckOutcome(verdict(ok), {"gaps": res.gaps.tolist(), "phi0_gaps": phi_res.gaps.tolist()})


def check_uniform_integrability(ctx: Context) -> CheckOutcome:
    m = ctx.model0(0)
    grid = m.grid
    q = grid.with_potential(ctx.q).potential
    thr = np.geomspace(1.0, 1e4, 9)
    curve = gg.uniform_integrability_diag(m.green_matrix(), q, thr, grid, rng=ctx.rng("uniform_integrability"))
    rows = [[a, b] for a, b in zip(curve.thresholds, curve.values)]
    return CheckOutcome(DIAGNOSTIC, {"final_value": float(curve.values[-1]),
                                     "decays_below_0.05": bool(curve.values[-1] < 0.05)},
                        tables={"uniform_integrability": (["threshold", "value"], rows)})


@dataclass(frozen=True)
class RegisteredCheck:
    name: str
    anchor: str
    modules: tuple[str, ...]
    run: Callable[[Context], CheckOutcome]


REGISTRY: dict[str, RegisteredCheck] = {}


def _reg(name, anchor, modules, fn):
    REGISTRY[name] = RegisteredCheck(name, anchor, tuple(modules), fn)


_reg("selftest", "§1 characteristic function", ["stable_mc"], check_selftest)
_reg("stable_constant", "Eq 2.1", ["kernels_kato"], check_stable_constant)
_reg("kato", "Def 1.1", ["kernels_kato"], check_kato)
_reg("whitney", "Thm 3.4 proof, properties (1)-(3)", ["geometry"], check_whitney)
_reg("holder0", "Def 3.2", ["geometry"], check_holder0)
_reg("spectrum", "§2 discrete spectrum", ["spectral"], check_spectrum)
_reg("scaling", "Cor 2.2 scaling property", ["spectral"], check_scaling)
_reg("exit_time", "§1 Green function occupation identity", ["spectral", "stable_mc"], check_exit_time)
_reg("survival_decay", "Thm 4.1(3)", ["spectral", "stable_mc"], check_survival_decay)
_reg("poisson_identity", "Eq 2.2", ["kernels_kato", "spectral", "stable_mc"], check_poisson_identity)
_reg("martin", "Eq 1.2", ["kernels_kato", "spectral"], check_martin)
_reg("superharmonic", "Def 1.2", ["kernels_kato", "spectral", "stable_mc"], check_superharmonic)
_reg("three_g", "Thm 2.3", ["gauge", "spectral"], check_three_g)
_reg("gauge_dichotomy", "§1 gaugeability criterion", ["gauge", "spectral"], check_gauge_dichotomy)
_reg("gauge_mc", "§1 gauge function", ["gauge", "spectral", "stable_mc"], check_gauge_mc)
_reg("cond_gauge_interior", "Thm 5.6", ["gauge", "spectral"], check_cond_gauge_interior)
_reg("cond_gauge_exterior", "Thm 5.9", ["gauge", "kernels_kato", "spectral"], check_cond_gauge_exterior)
_reg("cond_gauge_boundary", "Thm 5.10", ["gauge", "kernels_kato", "spectral"], check_cond_gauge_boundary)
_reg("resolvent", "Thm 5.3", ["gauge", "spectral"], check_resolvent)
_reg("green_comparability", "Thm 5.7", ["gauge", "spectral"], check_green_comparability)
_reg("smallness", "Thm 5.1", ["gauge", "kernels_kato", "spectral"], check_smallness)
_reg("eigen_comparison", "Thm 5.12", ["gauge", "spectral"], check_eigen_comparison)
_reg("iu_ratio", "Thm 3.6", ["spectral"], check_iu_ratio)
_reg("gap_convergence", "Thm 3.7", ["spectral"], check_gap_convergence)
_reg("log_sobolev", "Thm 3.2", ["spectral"], check_log_sobolev)
_reg("heat_kernel_bounds", "Thm 4.1(1)", ["spectral"], check_heat_kernel_bounds)
_reg("ground_state_envelope", "Thm 3.4", ["geometry", "spectral"], check_ground_state_envelope)
_reg("harnack", "Thm 2.8", ["spectral"], check_harnack)
_reg("lifetime_ground_state", "Thm 4.1(2)", ["gauge", "spectral"], check_lifetime_ground_state)
_reg("lifetime_family", "Corollary (Conditional Lifetimes)", ["gauge", "spectral"], check_lifetime_family)
_reg("lifetime_decay", "Thm 4.1(3) limit", ["gauge", "spectral"], check_lifetime_decay)
_reg("uniform_integrability", "§5 closing Remark", ["gauge", "spectral"], check_uniform_integrability)

PRESETS: dict[str, list[str]] = {
    "spectrum": ["spectrum", "scaling", "iu_ratio", "gap_convergence", "heat_kernel_bounds", "log_sobolev"],
    "gauge": ["gauge_dichotomy", "gauge_mc", "resolvent", "smallness", "eigen_comparison"],
    "cond-gauge": ["cond_gauge_interior", "cond_gauge_exterior", "cond_gauge_boundary", "green_comparability"],
    "lifetime": ["lifetime_ground_state", "lifetime_family", "lifetime_decay", "exit_time", "survival_decay"],
    "verify3g": ["three_g"],
    "geometry": ["whitney", "holder0", "ground_state_envelope", "harnack"],
}
