"""Gauge, conditional gauge, conditional lifetime and kernel-comparison checks.

Every quantity is computed from the grid matrices of a q = 0 model (Green
function G_D, heat kernel p^D) and a model with potential q (V_q, u_q).
Kernel ratios are only taken over well-separated cell pairs, |x - y| > 2h.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .geometry import sample_uniform
from .kernels_kato import martin_column, poisson_kernel_matrix, stable_constant
from .potential import Constant, GridPotential
from .spectral import NotGaugeableError, SpectralModel, eigensolve
from .stable_mc import RngStream, killed_walk_batch


def _separated(grid, sep: float | None = None) -> np.ndarray:
    sep = 2.0 * grid.h if sep is None else sep
    return cdist(grid.centers, grid.centers) > sep * (1 + 1e-9)


# -- gauge -------------------------------------------------------------------------


def gaugeability(model: SpectralModel) -> bool:
    """(D, q) is gaugeable iff lambda_0 < 0."""
    if abs(model.lambda0) < 1e-8:
        warnings.warn("lambda_0 is within 1e-8 of zero: borderline gaugeability", RuntimeWarning)
    return model.lambda0 < 0


@dataclass
class GaugeReport:
    lambda0: float
    gaugeable: bool
    values: np.ndarray = field(repr=False)
    sup_g: float
    inf_g: float
    mc_probes: np.ndarray
    mc_mean: np.ndarray
    mc_stderr: np.ndarray
    mc_censored: np.ndarray
    spectral_at_probes: np.ndarray
    max_rel_gap: float


def spectral_gauge(model: SpectralModel) -> np.ndarray:
    """g = 1 + V_q q, i.e. 1 + stiffness^-1 q on the grid."""
    if model.lambda0 >= 0:
        raise NotGaugeableError(f"not gaugeable: lambda_0 = {model.lambda0:.6g} >= 0")
    grid = model.grid
    return 1.0 + model.green_matrix() @ grid.potential * grid.cell_area


def _grid_potential(grid):
    if grid.q is not None:
        return grid.q
    return GridPotential(grid.centers, grid.h, grid.potential)


def gauge_function(model: SpectralModel, mc_probes=(), mc_budget: int = 0, dt: float = 1e-3,
                   rng: RngStream | None = None, t_max: float | None = None,
                   threads: int | None = None) -> GaugeReport:
    """Gauge by the spectral route and, at ``mc_probes``, by Feynman-Kac path averages."""
    grid = model.grid
    g = spectral_gauge(model)
    probes = np.atleast_2d(np.asarray(mc_probes, float)) if len(mc_probes) else np.zeros((0, 2))
    mean = np.zeros(len(probes))
    se = np.zeros(len(probes))
    cens = np.zeros(len(probes))
    at = g[grid.nearest_cell(probes)] if len(probes) else np.zeros(0)
    if len(probes) and mc_budget > 0:
        rng = rng if rng is not None else RngStream(0, 0x6A6)
        t_max = t_max if t_max is not None else 20.0 / abs(model.lambda0)
        q = _grid_potential(grid)
        for k, x in enumerate(probes):
            s = killed_walk_batch(grid.domain, grid.alpha, x, dt, t_max, mc_budget, rng.child(k), q=q,
                                  threads=threads)
            w = np.where(s.exited, np.exp(s.fk_integral), np.nan)
            mean[k] = np.nanmean(w)
            se[k] = np.nanstd(w, ddof=1) / math.sqrt(np.sum(s.exited))
            cens[k] = s.censored_fraction
    gap = float(np.max(np.abs(mean - at) / at)) if len(probes) and mc_budget > 0 else 0.0
    return GaugeReport(model.lambda0, True, g, float(g.max()), float(g.min()), probes, mean, se, cens,
                       at, gap)


@dataclass
class BlowupStudy:
    c: np.ndarray
    sup_g: np.ndarray
    mu0: float
    reached: bool


def gauge_blowup(model0: SpectralModel, limit: float = 1e6, max_steps: int = 60) -> BlowupStudy:
    """sup g for q = c on the geometric grid c_k = -mu_0 (1 - 2^-k), until sup g > ``limit``."""
    if not model0.complete:
        raise ValueError("blow-up study needs the full spectrum")
    grid = model0.grid
    phi = model0.eigenfunctions
    mass = phi.T @ np.ones(grid.n_cells) * grid.cell_area
    mu = model0.eigenvalues
    cs, sups = [], []
    for k in range(1, max_steps + 1):
        c = -mu[0] * (1.0 - 2.0**-k)
        # g = 1 + c sum_k <phi_k, 1> phi_k / (-(mu_k + c))
        g = 1.0 + c * phi @ (mass / (-(mu + c)))
        cs.append(c)
        sups.append(float(g.max()))
        if sups[-1] > limit:
            break
    return BlowupStudy(np.array(cs), np.array(sups), float(mu[0]), sups[-1] > limit)


def gauge_flip(grid0, mu0: float, delta: float = 1e-6) -> tuple[bool, bool]:
    """Gaugeability just below and just above c = -mu_0, from fresh eigensolves."""
    below = eigensolve(grid0.with_potential(Constant(-mu0 - delta)), 1)
    above = eigensolve(grid0.with_potential(Constant(-mu0 + delta)), 1)
    return below.lambda0 < 0, above.lambda0 < 0


# -- conditional gauges -------------------------------------------------------------


@dataclass
class ConditionalGaugeTable:
    kind: str
    pairs: np.ndarray
    values: np.ndarray
    route_values: np.ndarray
    sup: float
    inf: float
    route_disagreement: float

    @property
    def bracket(self) -> float:
        """Smallest c with all values in [1/c, c]."""
        return float(max(self.sup, 1.0 / self.inf))


def _table(kind, pairs, a, b) -> ConditionalGaugeTable:
    a, b = np.asarray(a, float), np.asarray(b, float)
    dis = float(np.max(np.abs(a - b) / np.abs(a))) if a.size else 0.0
    return ConditionalGaugeTable(kind, np.asarray(pairs), a, b, float(a.max()), float(a.min()), dis)


def cond_gauge_interior(model: SpectralModel, model0: SpectralModel, sep: float | None = None
                        ) -> ConditionalGaugeTable:
    """E^x_y[e_q(zeta)] = V_q(x,y)/G_D(x,y) over well-separated cell pairs.

    The second route is 1 + G_D(x,y)^-1 int V_q(x,w) q(w) G_D(w,y) dw.
    """
    grid = model.grid
    v, g = model.green_matrix(), model0.green_matrix()
    mask = _separated(grid, sep)
    iu = np.argwhere(np.triu(mask))
    route_a = v[iu[:, 0], iu[:, 1]] / g[iu[:, 0], iu[:, 1]]
    vqg = (v * grid.potential) @ g * grid.cell_area
    route_b = 1.0 + vqg[iu[:, 0], iu[:, 1]] / g[iu[:, 0], iu[:, 1]]
    return _table("interior", iu, route_a, route_b)


def interior_ratio_matrix(model: SpectralModel, model0: SpectralModel) -> np.ndarray:
    return model.green_matrix() / model0.green_matrix()


def cond_gauge_exterior(model: SpectralModel, model0: SpectralModel, xs, ws) -> ConditionalGaugeTable:
    """E^x_w[e_q(zeta)] for x in D and w outside D, all pairs of ``xs`` x ``ws``.

    Route 1: 1 + K_D(x,w)^-1 int V_q(x,y) q(y) K_D(y,w) dy.
    Route 2: interior conditional gauges averaged against G_D(x,v) |v-w|^-(2+alpha).
    """
    grid = model.grid
    dom = grid.domain
    ws = np.atleast_2d(np.asarray(ws, float))
    xs = np.atleast_2d(np.asarray(xs, float))
    if np.any(dom.contains(ws)) or np.any(dom.dist_to_boundary(ws) < 2 * grid.h):
        raise ValueError("exterior targets must lie at least 2h outside the domain")
    ix = grid.nearest_cell(xs)
    k = poisson_kernel_matrix(model0, ws)  # K_D(y, w) for all cells y
    v = model.green_matrix()
    corr = (v[ix] * grid.potential) @ k * grid.cell_area
    route1 = 1.0 + corr / k[ix]
    # route 2: average of V_q/G_D over v with weights G_D(x, v) J(v, w)
    g = model0.green_matrix()
    d = cdist(grid.centers, ws)
    jump = stable_constant(2, grid.alpha) * d ** (-(2.0 + grid.alpha))
    ratio = v[ix] / g[ix]
    wts = g[ix][:, :, None] * jump[None, :, :]
    route2 = np.einsum("xv,xvw->xw", ratio, wts) / wts.sum(axis=1)
    pairs = np.array([(i, j) for i in range(len(xs)) for j in range(len(ws))])
    return _table("exterior", pairs, route1.ravel(), route2.ravel())


@dataclass
class BoundaryGauge:
    sequence: np.ndarray
    martin_value: float
    gaps: np.ndarray
    final_gap: float

    @property
    def stabilizing(self) -> bool:
        return bool(np.all(np.diff(self.gaps) <= 1e-15))


def cond_gauge_boundary(model: SpectralModel, model0: SpectralModel, x, z, approach,
                        x0=None) -> BoundaryGauge:
    """E^x_{y_k}[e_q(zeta)] along y_k -> z and the Martin-kernel value at z."""
    grid = model.grid
    x = np.asarray(x, float)
    ys = np.atleast_2d(np.asarray(approach, float))
    if np.any(np.linalg.norm(ys - x, axis=1) < 2 * grid.h):
        raise ValueError("approach points within two cells of x")
    ix = int(grid.nearest_cell(x)[0])
    iy = grid.nearest_cell(ys)
    v, g = model.green_matrix(), model0.green_matrix()
    seq = v[ix, iy] / g[ix, iy]
    x0 = grid.domain.x0 if x0 is None else np.asarray(x0, float)
    m_hat = martin_column(model0, x0, z)
    martin = 1.0 + float((v[ix] * grid.potential) @ m_hat * grid.cell_area) / m_hat[ix]
    return BoundaryGauge(seq, martin, np.abs(np.diff(seq)), abs(seq[-1] - martin) / martin)


# -- conditional lifetimes ---------------------------------------------------------------


@dataclass
class LifetimeResult:
    per_x: np.ndarray
    sup: float
    excluded: int


def conditional_lifetime(model0: SpectralModel, h) -> LifetimeResult:
    """E^x_h[tau_D] = (G_D h)(x) / h(x) on cells with h(x) > 0."""
    grid = model0.grid
    h = np.asarray(h, float)
    if np.any(h < 0) or not np.any(h > 0):
        raise ValueError("h must be nonnegative and not identically zero")
    pos = h > 0
    out = np.full(grid.n_cells, np.nan)
    out[pos] = (model0.green_matrix() @ h)[pos] * grid.cell_area / h[pos]
    return LifetimeResult(out, float(np.nanmax(out)), int(np.sum(~pos)))


def boundary_cells(grid, count: int, x0=None) -> np.ndarray:
    """One cell closest to the boundary in each of ``count`` angular sectors around x0."""
    x0 = grid.domain.x0 if x0 is None else np.asarray(x0, float)
    rel = grid.centers - x0
    sector = np.floor((np.arctan2(rel[:, 1], rel[:, 0]) + np.pi) / (2 * np.pi) * count).astype(int) % count
    delta = grid.domain.dist_to_boundary(grid.centers)
    out = []
    for s in range(count):
        idx = np.flatnonzero(sector == s)
        if len(idx):
            out.append(idx[np.lexsort((idx, delta[idx]))[0]])
    return np.array(out)


def sh_plus_family(model0: SpectralModel, n_green: int = 20, n_martin: int = 8,
                   rng: RngStream | None = None) -> dict[str, np.ndarray]:
    """Finite surrogate for nonnegative superharmonic functions: the constant 1,
    Green columns at random interior points and Martin columns at boundary cells."""
    grid = model0.grid
    rng = rng if rng is not None else RngStream(0, 0x5A)
    g = model0.green_matrix()
    fam = {"one": np.ones(grid.n_cells)}
    pts = sample_uniform(grid.domain, n_green, rng.generator())
    for k, i in enumerate(grid.nearest_cell(pts)):
        fam[f"green_{k}"] = g[:, i]
    x0 = grid.domain.x0
    i0 = int(grid.nearest_cell(x0)[0])
    for k, i in enumerate(boundary_cells(grid, n_martin, x0)):
        fam[f"martin_{k}"] = g[:, i] / g[i0, i]
    return fam


def family_lifetime_sup(model0: SpectralModel, family: dict[str, np.ndarray]) -> tuple[float, str]:
    best, name = -np.inf, ""
    for key, h in family.items():
        s = conditional_lifetime(model0, h).sup
        if s > best:
            best, name = s, key
    return float(best), name


@dataclass
class LifetimeDecay:
    t: np.ndarray
    values: np.ndarray  # (len(t), cells)
    limit: np.ndarray
    gaps: np.ndarray  # max relative gap per t
    passed: bool


def lifetime_decay(model0: SpectralModel, h, t_list, tol: float = 1e-3) -> LifetimeDecay:
    """e^(-mu_0 t) P^x_h(tau_D > t) against its limit phi_0(x) <phi_0, h> / h(x)."""
    grid = model0.grid
    h = np.asarray(h, float)
    pos = h > 0
    phi = model0.eigenfunctions
    coef = phi.T @ h * grid.cell_area
    t = np.asarray(t_list, float)
    if not model0.complete and math.exp((model0.eigenvalues[-1] - model0.lambda0) * t.min()) > 1e-12:
        warnings.warn("heat kernel truncated: last computed mode is not negligible", RuntimeWarning)
    vals = np.empty((len(t), int(pos.sum())))
    for k, s in enumerate(t):
        w = np.exp((model0.eigenvalues - model0.lambda0) * s)
        vals[k] = (phi[pos] @ (w * coef)) / h[pos]
    limit = phi[pos, 0] * coef[0] / h[pos]
    gaps = np.max(np.abs(vals - limit) / np.abs(limit), axis=1)
    return LifetimeDecay(t, vals, limit, gaps, bool(gaps[np.argmax(t)] <= tol))


# -- 3G and smallness ---------------------------------------------------------------------


@dataclass
class ThreeGScan:
    sup_constant: float
    values: np.ndarray = field(repr=False)
    histogram: tuple[np.ndarray, np.ndarray] = field(repr=False)
    triples: np.ndarray = field(repr=False)


def three_g_ratio(green: np.ndarray, grid, ix, iy, iw) -> np.ndarray:
    """[G(x,y) G(y,w) / G(x,w)] |x-y|^(2-a) |y-w|^(2-a) / |x-w|^(2-a) on cell indices."""
    c, p = grid.centers, 2.0 - grid.alpha
    dxy = np.linalg.norm(c[ix] - c[iy], axis=-1)
    dyw = np.linalg.norm(c[iy] - c[iw], axis=-1)
    dxw = np.linalg.norm(c[ix] - c[iw], axis=-1)
    return green[ix, iy] * green[iy, iw] / green[ix, iw] * (dxy * dyw / dxw) ** p


def sample_triples(domain, count: int, min_sep: float, rng: RngStream) -> np.ndarray:
    """``count`` random triples of points in D with all pairwise distances >= min_sep."""
    gen = rng.generator()
    out = []
    drawn = 0
    while len(out) < count:
        if drawn >= 10 * count:
            raise RuntimeError("could not find enough well-separated triples within 10x budget")
        batch = sample_uniform(domain, 3 * count, gen).reshape(count, 3, 2)
        drawn += count
        d = np.stack([np.linalg.norm(batch[:, i] - batch[:, j], axis=1) for i, j in ((0, 1), (1, 2), (0, 2))])
        out.extend(batch[np.all(d >= min_sep, axis=0)])
    return np.array(out[:count])


def three_g_scan(green: np.ndarray, grid, triples: int | np.ndarray, rng: RngStream | None = None,
                 min_sep: float | None = None, bins: int = 40) -> ThreeGScan:
    """Empirical 3G constant over random well-separated triples (x, y, w).

    Passing the same point triples to two resolutions compares like with like.
    """
    if isinstance(triples, (int, np.integer)):
        rng = rng if rng is not None else RngStream(0, 0x36)
        sep = 2 * grid.h if min_sep is None else min_sep
        pts = sample_triples(grid.domain, int(triples), sep, rng)
    else:
        pts = np.asarray(triples, float)
    idx = grid.nearest_cell(pts.reshape(-1, 2)).reshape(-1, 3)
    distinct = (idx[:, 0] != idx[:, 1]) & (idx[:, 1] != idx[:, 2]) & (idx[:, 0] != idx[:, 2])
    idx = idx[distinct]
    vals = three_g_ratio(green, grid, idx[:, 0], idx[:, 1], idx[:, 2])
    hist = np.histogram(np.log10(vals), bins=bins)
    return ThreeGScan(float(vals.max()), vals, hist, pts)


@dataclass
class SmallnessCheck:
    precondition_value: float
    precondition_ok: bool
    violations: int
    checked: int
    verdict: str
    lower_ratio: float
    upper_ratio: float


def smallness_bound_check(model_q2: SpectralModel, model_q0: SpectralModel, sep: float | None = None
                          ) -> SmallnessCheck:
    """Check e^(-1/2) G_D <= V_q2 <= 2 G_D off the diagonal.

    Gated on sup_{x,y} int G(x,w) |q2(w)| G(w,y) dw / G(x,y) <= 1/2.
    """
    grid = model_q2.grid
    g = model_q0.green_matrix()
    q = np.abs(grid.potential)
    pre = float(np.max((g * q) @ g * grid.cell_area / g))
    mask = _separated(grid, sep)
    ratio = model_q2.green_matrix()[mask] / g[mask]
    viol = int(np.sum((ratio < math.exp(-0.5)) | (ratio > 2.0)))
    ok = pre <= 0.5
    verdict = "precondition_failed" if not ok else ("pass" if viol == 0 else "fail")
    return SmallnessCheck(pre, ok, viol, int(mask.sum()), verdict, float(ratio.min()), float(ratio.max()))


# -- eigenfunction and kernel comparison ------------------------------------------------------


@dataclass
class EigenComparison:
    c_eig: float
    c_kernel: dict[float, float]


def eigen_comparison(model_q: SpectralModel, model_q0: SpectralModel, t_list=()) -> EigenComparison:
    """Two-sided constants between ground states and between normalised heat kernels."""
    psi, phi = model_q.ground_state, model_q0.ground_state
    r = psi / phi
    c_eig = float(max(r.max(), (1 / r).max()))
    ck = {}
    for t in t_list:
        u = model_q.heat_kernel(t) * math.exp(-model_q.lambda0 * t)
        p = model_q0.heat_kernel(t) * math.exp(-model_q0.lambda0 * t)
        rr = u / p
        ck[float(t)] = float(max(rr.max(), (1 / rr).max()))
    return EigenComparison(c_eig, ck)


# -- uniform integrability ---------------------------------------------------------------


@dataclass
class UICurve:
    thresholds: np.ndarray
    values: np.ndarray


def uniform_integrability_diag(green: np.ndarray, q, thresholds, grid, pairs: int = 200,
                               rng: RngStream | None = None) -> UICurve:
    """sup over sampled separated pairs of the mass of G(x,w)|q(w)|G(w,y)/G(x,y)
    carried by cells where that density exceeds each threshold."""
    q = np.abs(np.asarray(q, float))
    rng = rng if rng is not None else RngStream(0, 0x01)
    gen = rng.generator()
    sep = _separated(grid)
    cand = np.argwhere(np.triu(sep))
    pick = cand[gen.choice(len(cand), size=min(pairs, len(cand)), replace=False)]
    dens = green[pick[:, 0]] * q[None, :] * green[:, pick[:, 1]].T / green[pick[:, 0], pick[:, 1]][:, None]
    thr = np.asarray(thresholds, float)
    vals = np.array([float(np.max(np.where(dens > m, dens, 0.0).sum(axis=1) * grid.cell_area)) for m in thr])
    return UICurve(thr, vals)
