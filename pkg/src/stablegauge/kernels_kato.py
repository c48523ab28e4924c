"""Free-space kernels, Kato-class diagnostics and Monte Carlo kernel estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .geometry import Domain
from .potential import Constant, Potential, RadialPower
from .stable_mc import RngStream, killed_walk_batch, sample_ball_exit_radius, wos_exit_batch

if TYPE_CHECKING:
    from .spectral import GridModel, SpectralModel


def stable_constant(n: int, alpha: float) -> float:
    """alpha 2^(alpha-1) Gamma((alpha+n)/2) / (pi^(n/2) Gamma(1-alpha/2))."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    return (alpha * 2 ** (alpha - 1) * math.gamma((alpha + n) / 2)
            / (math.pi ** (n / 2) * math.gamma(1 - alpha / 2)))


def free_green(n: int, alpha: float, x, y) -> float:
    """A(n, alpha) |x - y|^(alpha - n)."""
    if not alpha < n:
        raise ValueError("free_green needs alpha < n")
    r = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    if r == 0:
        raise ValueError("free_green is singular at x = y")
    return stable_constant(n, alpha) * r ** (alpha - n)


# -- Kato class ------------------------------------------------------------------

ANGLES = 64
PANELS = 14
MAX_PANELS = 60
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclass
class KatoReport:
    radii: np.ndarray
    moduli: np.ndarray
    in_kato: bool
    tolerance: float
    argmax: np.ndarray
    unconverged: list[int] = field(default_factory=list)


def _centered_radial(q: Potential, x: np.ndarray, r: float, alpha: float) -> float | None:
    """Closed form of the ball integral when x is the centre of a radial power, else None."""
    if not (isinstance(q, RadialPower) and np.allclose(x, q.center, atol=1e-14, rtol=0)):
        return None
    b = min(r, q.cutoff)
    a = min(q.inner, b)
    p = alpha - q.beta
    if p == 0:
        return np.inf if a == 0 else 2 * np.pi * abs(q.scale) * math.log(b / a)
    if p < 0 and a == 0:
        return np.inf
    return 2 * np.pi * abs(q.scale) * (b**p - a**p) / p


def riesz_ball_integral(q: Potential, probes, r: float, alpha: float, n: int = 2,
                        angles: int = ANGLES) -> tuple[np.ndarray, np.ndarray]:
    """int_{|z| <= r} |q(x + z)| |z|^(alpha - n) dz for each probe x (n = 2).

    Polar quadrature: ``angles`` midpoint angles, 8-point Gauss panels on a
    geometric radial mesh, and the innermost disk treated as constant q.
    Probes at the centre of a radial power are integrated in closed form.
    Also returns the half-angle estimate for convergence monitoring.
    """
    if n != 2:
        raise ValueError("only n = 2 is implemented")
    probes = np.atleast_2d(np.asarray(probes, float))
    theta = (np.arange(angles) + 0.5) * 2 * np.pi / angles
    dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    sing = np.array(q.singular_points()).reshape(-1, 2)
    full = np.empty(len(probes))
    half = np.empty(len(probes))
    for k, x in enumerate(probes):
        exact = _centered_radial(q, x, r, alpha)
        if exact is not None:
            full[k] = half[k] = exact
            continue
        # refine the radial mesh until the constant-q inner disk stays clear of singular points
        d_s = float(np.min(np.linalg.norm(sing - x, axis=1))) if len(sing) else np.inf
        panels = PANELS if not np.isfinite(d_s) else max(PANELS, int(np.ceil(np.log2(4 * r / d_s))))
        edges = r * 2.0 ** -np.arange(min(panels, MAX_PANELS) + 1)
        rho = np.concatenate([0.5 * (b - a) * _GL_NODES + 0.5 * (a + b) for a, b in zip(edges[1:], edges[:-1])])
        wr = np.concatenate([0.5 * (b - a) * _GL_WEIGHTS for a, b in zip(edges[1:], edges[:-1])])
        pts = x + rho[:, None, None] * dirs[None, :, :]
        vals = np.abs(np.asarray(q(pts.reshape(-1, 2)), float)).reshape(len(rho), angles)
        radial = (wr * rho ** (alpha - 1.0)) @ vals
        val = float(np.abs(q(x)))
        inner = 2 * np.pi * val * edges[-1] ** alpha / alpha if np.isfinite(val) else np.inf
        full[k] = radial.mean() * 2 * np.pi + inner
        half[k] = radial[::2].mean() * 2 * np.pi + inner
    return full, half


def kato_modulus(q: Potential, radii: Sequence[float], probe_grid, alpha: float = 1.0,
                 n: int = 2, tolerance: float = 0.1, rtol: float = 1e-2) -> KatoReport:
    """sup over probes of int_{|x-y|<=r} |q(y)| |x-y|^(alpha-n) dy for each radius.

    Singular centres of ``q`` are always added to the probes.  The verdict is
    that the modulus at the smallest radius is below ``tolerance``: numerical
    evidence, not a proof.
    """
    radii = np.asarray(radii, float)
    if np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be strictly decreasing")
    probes = np.atleast_2d(np.asarray(probe_grid, float))
    sing = q.singular_points()
    if sing:
        probes = np.vstack([probes, np.array(sing)])
    moduli, arg = [], []
    bad: set[int] = set()
    for r in radii:
        full, half = riesz_ball_integral(q, probes, float(r), alpha, n)
        finite = np.isfinite(full)
        with np.errstate(invalid="ignore"):
            rel = np.abs(full - half) / np.maximum(np.abs(full), 1e-300)
        bad.update(np.flatnonzero(finite & (rel > rtol)).tolist())
        k = int(np.argmax(np.where(np.isnan(full), -np.inf, full)))
        moduli.append(float(full[k]))
        arg.append(probes[k])
    moduli = np.array(moduli)
    return KatoReport(radii, moduli, bool(moduli[-1] < tolerance), tolerance, np.array(arg), sorted(bad))


def _support_sup_radius(q: RadialPower, probes) -> float:
    c = np.asarray(q.center, float)
    return float(np.max(np.linalg.norm(np.atleast_2d(probes) - c, axis=1)))


def kato_decompose(q: Potential, eps: float, grid: "GridModel",
                   max_doublings: int = 60) -> tuple[Potential, Potential]:
    """Split q = q1 + q2 with q1 = q 1{|q| <= M} and sup_x int |q2(y)||x-y|^(alpha-2) dy <= eps.

    M is found by doubling from the smallest value of |q| over the grid.
    Bounded potentials return q2 = 0 without a search.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if q.bounded:
        return q, Constant(0.0)
    if not isinstance(q, RadialPower):
        raise NotImplementedError("decomposition of unbounded potentials needs radial_power")
    alpha = grid.alpha
    c = np.asarray(q.center, float)
    m = float(np.min(np.abs(q(grid.centers))))
    m = m if m > 0 else abs(q.scale) * _support_sup_radius(q, grid.centers) ** (-q.beta)
    for _ in range(max_doublings + 1):
        rho = min((abs(q.scale) / m) ** (1.0 / q.beta), q.cutoff)
        q2 = RadialPower(q.center, q.beta, rho, q.inner, q.scale)
        near = grid.centers[np.linalg.norm(grid.centers - c, axis=1) < 2 * rho]
        rep = kato_modulus(q2, [4 * rho], near if len(near) else c[None], alpha, tolerance=eps)
        if rep.moduli[0] <= eps:
            if rho >= q.cutoff:
                return Constant(0.0), q
            q1 = RadialPower(q.center, q.beta, q.cutoff, max(rho, q.inner), q.scale)
            return q1, q2
        m *= 2.0
    raise ValueError(f"no threshold within {max_doublings} doublings meets eps = {eps}")


# -- exterior target regions ---------------------------------------------------------


class Region:
    """Subset of the plane used as an exit target."""

    def contains(self, pts) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Annulus(Region):
    """{r_in < |z - center| < r_out}; ``r_out`` may be infinite."""

    center: tuple[float, float] = (0.0, 0.0)
    r_in: float = 1.0
    r_out: float = np.inf

    def __post_init__(self):
        if not 0 <= self.r_in < self.r_out:
            raise ValueError("need 0 <= r_in < r_out")

    def contains(self, pts):
        r = np.linalg.norm(np.atleast_2d(pts) - np.asarray(self.center), axis=1)
        return (r > self.r_in) & (r < self.r_out)

    def gap_to(self, domain: Domain) -> float:
        """Distance from the domain to the region when D sits inside the inner hole."""
        return self.r_in - domain.max_distance_from(self.center)

    def riesz_weights(self, pts, alpha: float, radial: int = 48, angular: int = 256) -> np.ndarray:
        """int over the region of A |y - z|^-(2+alpha) dz for each y in ``pts``.

        Assumes every y lies inside the inner hole.
        """
        pts = np.atleast_2d(np.asarray(pts, float)) - np.asarray(self.center)
        x, w = np.polynomial.legendre.leggauss(radial)
        if np.isfinite(self.r_out):
            # substitute s = log r to spread nodes over wide annuli
            a, b = math.log(self.r_in), math.log(self.r_out)
            s = 0.5 * (b - a) * x + 0.5 * (a + b)
            rr, wr = np.exp(s), 0.5 * (b - a) * w * np.exp(2 * s)
        else:
            # r = r_in / u, u in (0, 1]: dz = r dr dtheta = r_in^2 u^-3 du dtheta
            u = 0.5 * x + 0.5
            rr, wr = self.r_in / u, 0.5 * w * self.r_in**2 / u**3
        theta = (np.arange(angular) + 0.5) * 2 * np.pi / angular
        z = rr[:, None, None] * np.stack([np.cos(theta), np.sin(theta)], -1)[None]
        out = np.empty(len(pts))
        for k, y in enumerate(pts):
            d = np.linalg.norm(z - y, axis=-1)
            out[k] = np.sum(wr[:, None] * d ** (-(2.0 + alpha))) * 2 * np.pi / angular
        return stable_constant(2, alpha) * out


@dataclass(frozen=True)
class Complement(Region):
    """The whole exterior of a domain."""

    domain: Domain

    def contains(self, pts):
        return ~self.domain.contains(np.atleast_2d(pts))


@dataclass(frozen=True)
class Union(Region):
    parts: tuple[Region, ...]

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        out = np.zeros(len(pts), dtype=bool)
        for p in self.parts:
            out |= p.contains(pts)
        return out


# -- Monte Carlo estimators ------------------------------------------------------------


@dataclass
class MCGreen:
    values: np.ndarray
    stderr: np.ndarray
    paths: int
    censored_fraction: float


def mc_green(domain: Domain, alpha: float, x, cells: "GridModel", paths: int, dt: float,
             rng: RngStream, t_max: float = 10.0, threads: int | None = None) -> MCGreen:
    """Cell-averaged G_D(x, .) from occupation times of killed paths.

    Standard errors come from batch means over the fixed path blocks.
    """
    sample = killed_walk_batch(domain, alpha, x, dt, t_max, paths, rng,
                               cell_index=cells.cell_index, n_cells=cells.n_cells, threads=threads)
    area = cells.cell_area
    values = sample.occupation / (paths * area)
    blocks = sample.occupation_blocks / (sample.block_sizes[:, None] * area)
    nb = len(blocks)
    if nb > 1:
        stderr = blocks.std(axis=0, ddof=1) / math.sqrt(nb)
    else:
        stderr = np.full_like(values, np.nan)
    return MCGreen(values, stderr, paths, sample.censored_fraction)


@dataclass
class HarmonicMeasure:
    probability: float
    stderr: float
    paths: int

    def __float__(self) -> float:
        return self.probability


def harmonic_measure(domain: Domain, alpha: float, x, target: Region, paths: int, rng: RngStream,
                     shrink: float = 1.0, threads: int | None = None) -> HarmonicMeasure:
    """P^x(X_{tau_D} in target) from walk-on-spheres exit positions."""
    exits, _ = wos_exit_batch(domain, alpha, x, paths, rng, shrink=shrink, threads=threads)
    p = float(np.mean(target.contains(exits)))
    return HarmonicMeasure(p, math.sqrt(max(p * (1 - p), 0.0) / paths), paths)


def poisson_kernel_matrix(model0: "SpectralModel", targets) -> np.ndarray:
    """K_D(x_i, w_j) = int_D G_D(x_i, y) A |y - w_j|^-(2+alpha) dy by cell quadrature."""
    grid = model0.grid
    w = np.atleast_2d(np.asarray(targets, float))
    d = np.linalg.norm(grid.centers[:, None, :] - w[None, :, :], axis=-1)
    jump = stable_constant(2, grid.alpha) * d ** (-(2.0 + grid.alpha))
    return model0.green_matrix() @ jump * grid.cell_area


@dataclass
class PoissonResidual:
    residual: float
    lhs: float
    rhs: float
    rhs_stderr: float


def poisson_identity_residual(domain: Domain, alpha: float, x, target: Annulus,
                              model0: "SpectralModel", paths: int = 200_000,
                              rng: RngStream | None = None, threads: int | None = None) -> PoissonResidual:
    """|lhs - rhs| / rhs with lhs = int_target int_D A G_D(x,y) |y-z|^-(2+alpha) dy dz
    from the Green matrix and rhs the walk-on-spheres harmonic measure."""
    grid = model0.grid
    if not isinstance(target, Annulus):
        raise TypeError("poisson identity targets must be annuli around the domain")
    if target.gap_to(domain) < grid.h:
        raise ValueError("target lies within one cell width of the domain")
    if float(domain.dist_to_boundary(np.asarray(x, float))) < 2 * grid.h:
        raise ValueError("x is within two cells of the boundary; kernel too coarse there")
    i = int(grid.nearest_cell(np.asarray(x, float))[0])
    weights = target.riesz_weights(grid.centers, alpha)
    lhs = float(model0.green_matrix()[i] @ weights * grid.cell_area)
    rng = rng if rng is not None else RngStream(0, 0xB0A)
    hm = harmonic_measure(domain, alpha, x, target, paths, rng, threads=threads)
    return PoissonResidual(abs(lhs - hm.probability) / hm.probability, lhs, hm.probability, hm.stderr)


@dataclass
class MartinSequence:
    ratios: np.ndarray
    gaps: np.ndarray

    @property
    def stabilizing(self) -> bool:
        """Successive differences shrink monotonically."""
        return bool(np.all(np.diff(self.gaps) <= 0))


def martin_estimate(domain: Domain, alpha: float, x, x0, z, approach, model0: "SpectralModel"
                    ) -> MartinSequence:
    """G_D(x, y_k) / G_D(x0, y_k) along ``approach`` points y_k -> z (nearest-cell values)."""
    grid = model0.grid
    ys = np.atleast_2d(np.asarray(approach, float))
    x, x0 = np.asarray(x, float), np.asarray(x0, float)
    for y in ys:
        if min(np.linalg.norm(y - x), np.linalg.norm(y - x0)) < grid.h:
            raise ValueError("approach point within one cell of x or x0")
    g = model0.green_matrix()
    ix, i0 = grid.nearest_cell(x)[0], grid.nearest_cell(x0)[0]
    iy = grid.nearest_cell(ys)
    ratios = g[ix, iy] / g[i0, iy]
    return MartinSequence(ratios, np.abs(np.diff(ratios)))


def ball_martin_kernel(ball, alpha: float, x, z) -> np.ndarray:
    """Closed-form Martin kernel of a ball in the plane, normalised at its centre:
    ((r^2 - |x-c|^2) / r^2)^(alpha/2) (r / |x - z|)^2 for z on the boundary sphere."""
    c, r = np.asarray(ball.center, float), float(ball.radius)
    x = np.atleast_2d(np.asarray(x, float))
    z = np.asarray(z, float)
    s = np.maximum(r**2 - np.sum((x - c) ** 2, axis=1), 0.0) / r**2
    return s ** (alpha / 2) * (r / np.linalg.norm(x - z, axis=1)) ** 2


def martin_column(model0: "SpectralModel", x0, z, depth: int = 1) -> np.ndarray:
    """Martin kernel estimate M(., z) = G_D(., y) / G_D(x0, y) for y the kept cell
    nearest to z, ``depth - 1`` cells further inside along the ray towards x0."""
    grid = model0.grid
    z, x0 = np.asarray(z, float), np.asarray(x0, float)
    u = (x0 - z) / np.linalg.norm(x0 - z)
    iy = int(grid.nearest_cell(z + 1e-12 * u)[0])
    for _ in range(depth - 1):
        iy = int(grid.nearest_cell(grid.centers[iy] + grid.h * u)[0])
    g = model0.green_matrix()
    i0 = int(grid.nearest_cell(x0)[0])
    return g[:, iy] / g[i0, iy]


@dataclass
class BallVerdict:
    center: np.ndarray
    radius: float
    value: float
    estimate: float
    stderr: float
    passed: bool


def superharmonic_check(domain: Domain, alpha: float, f: Callable, test_balls, paths: int,
                        rng: RngStream, nsigma: float = 3.0) -> list[BallVerdict]:
    """Check f(x) >= E_x[f(X_{tau_B}); X_{tau_B} in D] for each ball B(x, r) in D."""
    out = []
    for k, (c, r) in enumerate(test_balls):
        c = np.asarray(c, float)
        if float(domain.dist_to_boundary(c)) <= r or not domain.contains(c):
            raise ValueError("test ball closure must lie in D")
        gen = rng.child(k).generator()
        radius = r * sample_ball_exit_radius(alpha, gen, size=paths)
        theta = gen.uniform(0, 2 * np.pi, paths)
        y = c + radius[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
        vals = np.zeros(paths)
        inside = domain.contains(y)
        vals[inside] = np.asarray(f(y[inside]), float)
        est, se = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(paths))
        fx = float(np.asarray(f(c[None]), float)[0])
        out.append(BallVerdict(c, float(r), fx, est, se, fx >= est - nsigma * se))
    return out


def green_column_function(model0: "SpectralModel", y0, sign: float = 1.0) -> Callable:
    """x -> sign * G_D(x, y0) using nearest-cell values (zero outside D)."""
    grid = model0.grid
    col = sign * model0.green_matrix()[:, int(grid.nearest_cell(np.asarray(y0, float))[0])]
    dom = grid.domain

    def f(pts):
        pts = np.atleast_2d(pts)
        out = np.zeros(len(pts))
        ok = dom.contains(pts)
        out[ok] = col[grid.nearest_cell(pts[ok])]
        return out

    return f
