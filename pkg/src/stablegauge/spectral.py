"""Nonlocal cell-centred discretisation of the killed generator plus a potential.

The lattice is aligned with the domain's bounding box: cell centres sit at
``lo + (i + 1/2) h``.  Cells whose centre is closer than ``h/2`` to the
boundary are dropped.  Jump rates between kept cells are ``A h^2 |x_i - x_j|^-(2+alpha)``
and every jump to a lattice site outside the kept set is a killing jump.
Because the lattice is translation invariant, the total jump rate out of a
cell is the same for all cells, ``A h^-alpha Z`` with ``Z`` the punctured
lattice sum of ``|k|^-(2+alpha)``; the killing rate is that total minus the
rates to other kept cells.

With ``local_correction`` (default for alpha > 1) a nearest-neighbour rate
``-A Z_reg h^-alpha / 4`` is added, where ``Z_reg`` is the analytically
continued lattice sum at exponent ``alpha``.  This cancels the leading
lattice-sum error on smooth functions (the "self-cell" mass) and removes
an O(h^(2-alpha)) bias that is severe for alpha near 2.  For alpha <= 1 that
bias is no larger than the boundary error and the plain scheme is used.

Matrix conventions: ``stiffness = -(L + diag q)`` acts on cell values.
Eigenfunctions are normalised in the cell-area inner product, so kernel
matrices (heat kernel, Green matrix) are densities: ``G = stiffness^-1 / h^2``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import mpmath
import numpy as np
from scipy import linalg, optimize
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .geometry import Domain, WhitneyGraph
from .kernels_kato import stable_constant
from .potential import Constant, Potential
from .stable_mc import killed_walk_batch

DENSE_CAP = 3000
ITERATIVE_K = 11
MIN_CELLS = 50


class NotGaugeableError(ValueError):
    """Raised when lambda_0 >= 0, so the gauge and V_q are infinite."""


@lru_cache(maxsize=None)
def lattice_zeta(s: float) -> float:
    """Sum over nonzero k in Z^2 of |k|^(-2s), analytically continued for s < 1.

    Uses sum' (a^2+b^2)^-s = 4 zeta(s) beta(s) with the Dirichlet beta function.
    """
    s = mpmath.mpf(s)
    beta = mpmath.mpf(4) ** (-s) * (mpmath.zeta(s, 0.25) - mpmath.zeta(s, 0.75))
    return float(4 * mpmath.zeta(s) * beta)


def grid_spacing(domain: Domain, cells_per_side: int) -> float:
    lo, hi = domain.bounding_box
    return float(np.max(hi - lo)) / int(cells_per_side)


def _lattice(domain: Domain, h: float):
    lo, hi = domain.bounding_box
    counts = np.ceil((hi - lo) / h - 1e-9).astype(int)
    i, j = np.meshgrid(np.arange(counts[0]), np.arange(counts[1]), indexing="xy")
    ij = np.column_stack([i.ravel(), j.ravel()])
    centers = lo + (ij + 0.5) * h
    return lo, counts, ij, centers


@dataclass(eq=False)
class GridModel:
    """Kept cells, killing rates and stiffness of ``-(L^D + q)`` on one lattice."""

    domain: Domain
    h: float
    alpha: float
    centers: np.ndarray
    lattice_ij: np.ndarray
    origin: np.ndarray
    counts: np.ndarray
    killing: np.ndarray
    potential: np.ndarray
    stiffness0: np.ndarray = field(repr=False)
    excluded: int
    local_correction: bool
    q: Potential | None = None

    @property
    def n_cells(self) -> int:
        return len(self.centers)

    @property
    def cell_area(self) -> float:
        return self.h**2

    @cached_property
    def stiffness(self) -> np.ndarray:
        if not np.any(self.potential):
            return self.stiffness0
        s = self.stiffness0.copy()
        s[np.diag_indices_from(s)] -= self.potential
        return s

    def generator(self) -> np.ndarray:
        """Matrix of L^D (without the potential) acting on cell values."""
        return -self.stiffness0

    def with_potential(self, q: Potential | np.ndarray | None) -> "GridModel":
        """Same lattice and killing with a different potential (shares stiffness0)."""
        vals, qq = _potential_values(q, self.centers, self.h)
        return GridModel(self.domain, self.h, self.alpha, self.centers, self.lattice_ij,
                         self.origin, self.counts, self.killing, vals, self.stiffness0,
                         self.excluded, self.local_correction, qq)

    @cached_property
    def _lookup(self) -> np.ndarray:
        table = np.full(tuple(self.counts[::-1]), -1, dtype=np.int64)
        table[self.lattice_ij[:, 1], self.lattice_ij[:, 0]] = np.arange(self.n_cells)
        return table

    def cell_index(self, pts) -> np.ndarray:
        """Kept cell containing each point, -1 if the point is in no kept cell."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ij = np.floor((pts - self.origin) / self.h).astype(np.int64)
        ok = np.all((ij >= 0) & (ij < self.counts), axis=1)
        out = np.full(len(pts), -1, dtype=np.int64)
        out[ok] = self._lookup[ij[ok, 1], ij[ok, 0]]
        return out

    @cached_property
    def _tree(self) -> cKDTree:
        return cKDTree(self.centers)

    def nearest_cell(self, pts) -> np.ndarray:
        """Kept cell whose centre is nearest to each point."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        idx = self.cell_index(pts)
        miss = idx < 0
        if np.any(miss):
            idx[miss] = self._tree.query(pts[miss])[1]
        return idx


def _potential_values(q, centers, h) -> tuple[np.ndarray, Potential | None]:
    if q is None:
        return np.zeros(len(centers)), None
    if isinstance(q, Potential):
        return np.asarray(q.cell_values(centers, h), dtype=float), q
    vals = np.asarray(q, dtype=float)
    if vals.shape != (len(centers),):
        raise ValueError("potential vector must have one value per cell")
    return vals.copy(), None


def assemble(domain: Domain, h: float, alpha: float, q: Potential | np.ndarray | None = None,
             local_correction: bool | None = None) -> GridModel:
    """Build the grid model of ``L^D + q`` on the box-aligned lattice of spacing ``h``.

    ``local_correction=None`` applies the correction only for alpha > 1, where
    the O(h^(2-alpha)) consistency error it removes dominates the boundary error.
    """
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    if local_correction is None:
        local_correction = alpha > 1.0
    if not h > 0:
        raise ValueError("h must be positive")
    origin, counts, ij, centers = _lattice(domain, h)
    inside = domain.contains(centers)
    clear = np.zeros(len(centers), dtype=bool)
    clear[inside] = domain.dist_to_boundary(centers[inside]) >= 0.5 * h * (1 - 1e-9)
    excluded = int(np.sum(inside & ~clear))
    centers, ij = centers[clear], ij[clear]
    n = len(centers)
    if n < MIN_CELLS:
        raise ValueError(f"only {n} cells fit in the domain; need at least {MIN_CELLS}")

    const = stable_constant(2, alpha)
    r = cdist(centers, centers)
    np.fill_diagonal(r, 1.0)
    rates = const * h**2 * r ** (-(2.0 + alpha))
    np.fill_diagonal(rates, 0.0)
    total = const * h ** (-alpha) * lattice_zeta(1.0 + alpha / 2.0)
    if local_correction:
        nn_rate = -const * lattice_zeta(alpha / 2.0) / 4.0 * h ** (-alpha)
        nn = np.abs(r - h) <= 1e-9 * h
        np.fill_diagonal(nn, False)
        rates[nn] += nn_rate
        total += 4.0 * nn_rate
    del r
    killing = total - rates.sum(axis=1)
    stiffness0 = -rates
    stiffness0[np.diag_indices(n)] = total
    vals, qq = _potential_values(q, centers, h)
    return GridModel(domain, float(h), float(alpha), centers, ij, origin, counts, killing,
                     vals, stiffness0, excluded, bool(local_correction), qq)


def exterior_killing_quadrature(grid: GridModel, radius: float | None = None) -> np.ndarray:
    """Killing rates by direct summation: lattice cells outside the kept set out to
    ``radius`` plus the exterior tail ``A 2 pi radius^-alpha / alpha``.

    Independent of the closed-form lattice identity used in :func:`assemble`;
    it omits the nearest-neighbour correction.
    """
    h, a = grid.h, grid.alpha
    const = stable_constant(2, a)
    lo, hi = grid.domain.bounding_box
    if radius is None:
        radius = 4.0 * float(np.linalg.norm(hi - lo))
    span = int(math.ceil(radius / h)) + 1
    lo_ij = grid.lattice_ij.min(axis=0) - span
    hi_ij = grid.lattice_ij.max(axis=0) + span
    gi, gj = np.meshgrid(np.arange(lo_ij[0], hi_ij[0] + 1), np.arange(lo_ij[1], hi_ij[1] + 1))
    pts_ij = np.column_stack([gi.ravel(), gj.ravel()])
    kept = set(map(tuple, grid.lattice_ij.tolist()))
    outside = np.array([tuple(p) not in kept for p in pts_ij.tolist()])
    ext = grid.origin + (pts_ij[outside] + 0.5) * h
    out = np.empty(grid.n_cells)
    for k, x in enumerate(grid.centers):
        d = np.linalg.norm(ext - x, axis=1)
        d = d[d < radius]
        out[k] = const * h**2 * np.sum(d ** (-(2.0 + a)))
    return out + const * 2.0 * np.pi * radius ** (-a) / a


# -- spectral model --------------------------------------------------------------


@dataclass(eq=False)
class SpectralModel:
    """Eigenpairs of ``L^D + q`` (eigenvalues nonincreasing, phi_0 > 0)."""

    grid: GridModel
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray = field(repr=False)
    complete: bool

    @property
    def lambda0(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def ground_state(self) -> np.ndarray:
        return self.eigenfunctions[:, 0]

    @property
    def gap(self) -> float:
        return self.lambda0 - self.lambda1

    def heat_kernel(self, t: float) -> np.ndarray:
        return heat_kernel(self, t)

    def green_matrix(self) -> np.ndarray:
        return green_matrix(self)

    @cached_property
    def _green(self) -> np.ndarray:
        if self.lambda0 >= 0:
            raise NotGaugeableError(f"not gaugeable: lambda_0 = {self.lambda0:.6g} >= 0")
        s = self.grid.stiffness
        inv = linalg.cho_solve(linalg.cho_factor(s, lower=True), np.eye(len(s)))
        inv = 0.5 * (inv + inv.T)
        return inv / self.grid.cell_area


def eigensolve(grid: GridModel, k: int | None = None) -> SpectralModel:
    """Top ``k`` eigenpairs of ``L^D + q``; all of them by default below the dense cap."""
    n = grid.n_cells
    if k is None:
        k = n if n <= DENSE_CAP else min(ITERATIVE_K, n)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    s = grid.stiffness
    if k == n:
        vals, vecs = linalg.eigh(s)
    else:
        vals, vecs = linalg.eigh(s, subset_by_index=[0, k - 1])
    phi = vecs / grid.h
    if phi[:, 0].sum() < 0:
        phi[:, 0] = -phi[:, 0]
    lam = -vals
    if k > 1 and abs(lam[0] - lam[1]) < 1e-10:
        warnings.warn("lambda_0 appears degenerate (splitting below 1e-10)", RuntimeWarning)
    if np.min(phi[:, 0]) <= 0:
        warnings.warn("ground state is not strictly positive on every cell", RuntimeWarning)
    return SpectralModel(grid, lam, phi, complete=(k == n))


def heat_kernel(model: SpectralModel, t: float) -> np.ndarray:
    """Density ``u_q(t, x_i, x_j)`` from the spectral sum."""
    if not t > 0:
        raise ValueError("t must be positive")
    lam = model.eigenvalues
    if not model.complete and math.exp((lam[-1] - lam[0]) * t) > 1e-12:
        warnings.warn("heat kernel truncated: last computed mode is not negligible", RuntimeWarning)
    w = np.exp(lam * t)
    phi = model.eigenfunctions
    u = (phi * w) @ phi.T
    return 0.5 * (u + u.T)


def green_matrix(model: SpectralModel) -> np.ndarray:
    """Density ``V_q = stiffness^-1 / h^2``; the Green function ``G_D`` when q = 0."""
    return model._green


# -- Monte Carlo decay rate ------------------------------------------------------


@dataclass
class DecayFit:
    rate: float
    stderr: float
    window: tuple[float, float]
    survivors: int
    sample: object = field(default=None, repr=False)

    def __float__(self) -> float:
        return self.rate


def fit_survival_decay(sample, min_survivors: int = 100) -> DecayFit:
    """Least-squares slope of log P(tau > t) over the widest dyadic window [T/2, T]
    whose right end still has ``min_survivors`` paths alive."""
    t_max, dt = sample.t_max, sample.dt
    alive_at = lambda t: int(np.sum(~sample.exited | (sample.exit_time > t + 1e-12)))  # noqa: E731
    if alive_at(t_max / 4) < min_survivors:
        raise ValueError(f"fewer than {min_survivors} paths survive past t_max/4")
    right = t_max
    while alive_at(right) < min_survivors:
        right /= 2.0
    left = right / 2.0
    steps = np.arange(math.ceil(left / dt - 1e-9), math.floor(right / dt + 1e-9) + 1) * dt
    surv = sample.survival(steps)
    slope = np.polyfit(steps, np.log(surv), 1)[0]
    n_left, n_right = alive_at(left), alive_at(right)
    stderr = math.sqrt(max(1.0 / n_right - 1.0 / n_left, 0.0)) / (right - left)
    return DecayFit(float(slope), stderr, (float(left), float(right)), n_right, sample)


def survival_decay_rate(domain: Domain, alpha: float, x, paths: int, t_max: float, dt: float,
                        rng, threads: int | None = None) -> DecayFit:
    """Monte Carlo estimate of mu_0 from the exponential tail of P^x(tau_D > t)."""
    sample = killed_walk_batch(domain, alpha, x, dt, t_max, paths, rng, threads=threads)
    return fit_survival_decay(sample)


# -- log-Sobolev statistic -----------------------------------------------------------


def dirichlet_form(grid: GridModel, f: np.ndarray) -> float:
    """Discrete form <f, -L^D f> in the cell-area inner product (killing included)."""
    f = np.asarray(f, dtype=float)
    return float(grid.cell_area * f @ (grid.stiffness0 @ f))


def log_sobolev_stat(grid: GridModel, f, eta: float) -> float:
    """[int f^2 log|f| - eta E(f,f) - ||f||^2 log ||f||] / ||f||^2."""
    f = np.asarray(f, dtype=float)
    w = grid.cell_area
    norm2 = w * float(f @ f)
    if norm2 == 0:
        raise ValueError("f must not vanish identically")
    nz = f != 0
    ent = w * float(np.sum(f[nz] ** 2 * np.log(np.abs(f[nz]))))
    return (ent - eta * dirichlet_form(grid, f) - 0.5 * norm2 * math.log(norm2)) / norm2


# -- intrinsic ultracontractivity ---------------------------------------------------


def iu_A(eps, c1: float, c2: float, n: int = 2, alpha: float = 1.0):
    """-(n/2alpha) log eps + c1 eps^(-1/3) + c2 for eps <= 1, c1 + c2 beyond."""
    eps = np.asarray(eps, dtype=float)
    small = -(n / (2 * alpha)) * np.log(np.minimum(eps, 1.0)) + c1 * np.minimum(eps, 1.0) ** (-1 / 3) + c2
    return np.where(eps <= 1.0, small, c1 + c2)


def _iu_M_coefficients(t, n: int, alpha: float):
    """(a, b, c) with M(t) = (n/2alpha) a + c1 b + c2 c."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    tc = np.minimum(t, 1.0)
    a = np.where(t <= 1, 1.0 - np.log(tc), 1.0 / t)
    b = np.where(t <= 1, 1.5 * tc ** (-1 / 3), (1.5 + (t - 1.0)) / t)
    return a, b, np.ones_like(t)


def iu_M(t, c1: float, c2: float, n: int = 2, alpha: float = 1.0):
    """Running mean (1/t) int_0^t A(eps) d eps in closed form."""
    a, b, c = _iu_M_coefficients(t, n, alpha)
    return (n / (2 * alpha)) * a + c1 * b + c2 * c


@dataclass(frozen=True)
class IUBoundParams:
    c1: float
    c2: float
    alpha: float
    n: int = 2

    def A(self, eps):
        return iu_A(eps, self.c1, self.c2, self.n, self.alpha)

    def M(self, t):
        return iu_M(t, self.c1, self.c2, self.n, self.alpha)


def _ratio_excess(model: SpectralModel, t: float, skip_ground: bool) -> float:
    """max over (x, y) of sum_k e^((l_k - l_0) t) psi_k(x) psi_k(y), psi = phi/phi_0.

    The matrix is a Gram matrix, so its largest entry sits on the diagonal.
    """
    phi = model.eigenfunctions
    psi = phi / phi[:, :1]
    w = np.exp((model.eigenvalues - model.lambda0) * t)
    if skip_ground:
        psi, w = psi[:, 1:], w[1:]
    return float(np.max((psi**2) @ w))


def ground_state_ratio_sup(model: SpectralModel, t: float) -> float:
    """R(t) = sup e^(-lambda_0 t) u_q(t,x,y) / (phi_0(x) phi_0(y))."""
    if not model.complete and math.exp((model.eigenvalues[-1] - model.lambda0) * t) > 1e-12:
        warnings.warn("ratio uses a truncated spectrum", RuntimeWarning)
    if np.min(model.ground_state) <= 0:
        raise ValueError("ground state vanished on some cell; ratio not finite")
    return _ratio_excess(model, t, skip_ground=False)


@dataclass
class IUCheck:
    t: np.ndarray
    sup_ratio: np.ndarray
    params: IUBoundParams | None
    bound: np.ndarray | None
    passed: bool
    tail_monotone: bool


def iu_ratio_check(model: SpectralModel, t_list) -> IUCheck:
    """Fit the smallest c1 + c2 with R(t) <= exp(2 M(t/2)) on ``t_list`` (a linear program)."""
    t = np.asarray(sorted(t_list), dtype=float)
    ratios = np.array([ground_state_ratio_sup(model, s) for s in t])
    if not np.all(np.isfinite(ratios)):
        raise ValueError("non-finite ratio")
    n, a_ = 2, model.grid.alpha
    a, b, c = _iu_M_coefficients(t / 2, n, a_)
    # log R <= 2 M(t/2)  <=>  -(b c1 + c c2) <= (n/2alpha) a - log(R)/2
    res = optimize.linprog(
        c=[1.0, 1.0],
        A_ub=-np.column_stack([b, c]),
        b_ub=(n / (2 * a_)) * a - 0.5 * np.log(ratios),
        bounds=[(0, None), (0, None)],
        method="highs",
    )
    params = bound = None
    if res.success:
        params = IUBoundParams(float(res.x[0]), float(res.x[1]), a_, n)
        bound = np.exp(2 * params.M(t / 2))
    half = t >= np.median(t)
    tail = ratios[half]
    monotone = bool(np.all(np.diff(tail) <= 1e-12 * tail[:-1]))
    ok = params is not None and bool(np.all(ratios <= bound * (1 + 1e-12)))
    return IUCheck(t, ratios, params, bound, ok, monotone)


@dataclass
class GapFit:
    rate: float
    expected: float
    prefactor: float
    t: np.ndarray
    excess: np.ndarray
    passed: bool


def gap_convergence(model: SpectralModel, t_list, tol: float = 0.1) -> GapFit:
    """Fit sup |e^(-l0 t) u/(phi0 phi0) - 1| ~ C e^(rate t) and compare rate to l1 - l0."""
    if not model.lambda1 < model.lambda0:
        raise ValueError("need lambda_1 < lambda_0")
    t = np.asarray(sorted(t_list), dtype=float)
    ex = np.array([_ratio_excess(model, s, skip_ground=True) for s in t])
    keep = ex >= 1e-12
    if keep.sum() < 2:
        raise ValueError("excess below 1e-12: numerically converged, nothing to fit")
    slope, icpt = np.polyfit(t[keep], np.log(ex[keep]), 1)
    expected = model.lambda1 - model.lambda0
    return GapFit(float(slope), float(expected), float(math.exp(icpt)), t, ex,
                  abs(slope - expected) <= tol * abs(expected))


# -- ground-state geometry -------------------------------------------------------


@dataclass
class EnvelopeFit:
    C2: float
    worst_cell: int
    worst_ratio: float
    uncovered_cells: int


def ground_state_envelope(model: SpectralModel, graph: WhitneyGraph, x0) -> EnvelopeFit:
    """Smallest C2 >= 0 with phi_0(x) >= exp(-C2 rho(x0, x)) phi_0(x0) on all covered cells.

    ``rho`` is the Whitney chain distance from ``graph.root``, which should be the
    cube holding ``x0``.
    """
    grid = model.grid
    phi = model.ground_state
    i0 = int(grid.nearest_cell(np.asarray(x0, float))[0])
    cube = graph.locate_many(grid.centers)
    covered = cube >= 0
    rho = np.full(grid.n_cells, -1)
    rho[covered] = graph.bfs(graph.root)[cube[covered]]
    use = rho > 0
    c2, worst, worst_ratio = 0.0, i0, 1.0
    if np.any(use):
        need = np.log(phi[i0] / phi[use]) / rho[use]
        k = int(np.argmax(need))
        worst = int(np.flatnonzero(use)[k])
        worst_ratio = float(phi[worst] / phi[i0])
        c2 = max(0.0, float(need[k]))
    return EnvelopeFit(c2, worst, worst_ratio, int(np.sum(~covered)))


def harnack_ratio(model: SpectralModel, lo, hi) -> float:
    """sup/inf of phi_0 over cells with centres in the box [lo, hi]."""
    c = model.grid.centers
    sel = np.all((c >= np.asarray(lo) - 1e-12) & (c <= np.asarray(hi) + 1e-12), axis=1)
    if not np.any(sel):
        raise ValueError("the box contains no cell centre")
    v = model.ground_state[sel]
    return float(v.max() / v.min())


def constant_potential_model(model0: SpectralModel, c: float) -> SpectralModel:
    """Spectral model for q = c built by shifting the q = 0 spectrum."""
    grid = model0.grid.with_potential(Constant(c))
    return SpectralModel(grid, model0.eigenvalues + c, model0.eigenfunctions, model0.complete)
