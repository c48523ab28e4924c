"""Sampling of isotropic alpha-stable motion killed on leaving a planar domain.

Increments use Bochner subordination: a positive (alpha/2)-stable variable S
with E exp(-lam S) = exp(-t lam^(alpha/2)) mixes a Gaussian with per-coordinate
variance 2S, giving characteristic function exp(-t |xi|^alpha).

Batch routines split paths into fixed-size blocks; block ``b`` always draws
from child stream ``b`` of the caller's :class:`RngStream`, so results do not
depend on how many worker threads are used.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .geometry import Domain

BLOCK = 8192
MAX_WOS_STEPS = 1_000_000


class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    ``child(k)`` returns an independent stream whose identity depends only on
    the parent identity and ``k``.
    """

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        self._path = tuple(_path)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self._path))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, k: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, (*self._path, int(k)))

    def generator(self) -> np.random.Generator:
        return self._gen

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self._path})"


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 2:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")


def worker_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("STABLEGAUGE_THREADS")
    return max(1, int(env)) if env else 1


def _map_blocks(fn: Callable[[int, RngStream, int], object], n: int, rng: RngStream,
                threads: int | None, block: int = BLOCK) -> list:
    sizes = [min(block, n - s) for s in range(0, n, block)]
    tasks = [(b, rng.child(b), sz) for b, sz in enumerate(sizes)]
    workers = worker_count(threads)
    if workers == 1 or len(tasks) == 1:
        return [fn(*t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: fn(*t), tasks))


# -- primitive draws ---------------------------------------------------------


def positive_stable(a: float, size, gen: np.random.Generator) -> np.ndarray:
    """Positive a-stable draws with Laplace transform exp(-lam^a), 0 < a < 1 (Kanter's method)."""
    u = gen.uniform(0.0, np.pi, size)
    e = gen.standard_exponential(size)
    return (np.sin(a * u) / np.sin(u) ** (1.0 / a)) * (np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a)


def subordinator(alpha: float, t: float, size, rng) -> np.ndarray:
    """Values S with E exp(-lam S) = exp(-t lam^(alpha/2))."""
    _check_alpha(alpha)
    if not t > 0:
        raise ValueError("t must be positive")
    return t ** (2.0 / alpha) * positive_stable(alpha / 2.0, size, _gen(rng))


def sample_increment(alpha: float, t: float, dim: int, rng, size: int | None = None) -> np.ndarray:
    """Isotropic alpha-stable increment over time ``t``; shape (dim,) or (size, dim)."""
    _check_alpha(alpha)
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    gen = _gen(rng)
    n = 1 if size is None else int(size)
    s = subordinator(alpha, t, n, gen)
    x = np.sqrt(2.0 * s)[:, None] * gen.standard_normal((n, dim))
    return x[0] if size is None else x


def ball_exit_radius_from_uniform(alpha: float, u) -> np.ndarray:
    """Inverse CDF of R = |exit|/r for a start at the ball's center.

    1 - 1/R^2 follows Beta(1 - alpha/2, alpha/2); for alpha = 1 this inverts in
    closed form to R = sec(pi u / 2).
    """
    _check_alpha(alpha)
    u = np.asarray(u, dtype=float)
    if alpha == 1.0:
        return 1.0 / np.cos(0.5 * np.pi * u)
    # 1/R^2 ~ Beta(alpha/2, 1 - alpha/2); the upper-tail form avoids cancellation
    v = special.betainccinv(alpha / 2.0, 1.0 - alpha / 2.0, u)
    return 1.0 / np.sqrt(v)


def ball_exit_radius_cdf(alpha: float, rho) -> np.ndarray:
    """P(R <= rho), evaluated in whichever tail keeps the Beta argument well conditioned."""
    rho = np.asarray(rho, dtype=float)
    near = special.betainc(1.0 - alpha / 2.0, alpha / 2.0, (rho - 1.0) * (rho + 1.0) / rho**2)
    far = special.betaincc(alpha / 2.0, 1.0 - alpha / 2.0, 1.0 / rho**2)
    return np.where(rho < 2.0, near, far)


def sample_ball_exit_radius(alpha: float, rng, size: int | None = None):
    gen = _gen(rng)
    u = gen.random(1 if size is None else size)
    # u == 0 would give R == 1 exactly
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    r = ball_exit_radius_from_uniform(alpha, u)
    return float(r[0]) if size is None else r


def _uniform_directions(n: int, gen: np.random.Generator) -> np.ndarray:
    theta = gen.uniform(0.0, 2.0 * np.pi, n)
    return np.column_stack([np.cos(theta), np.sin(theta)])


# -- walk on spheres -----------------------------------------------------------


@dataclass
class WosTrace:
    centers: np.ndarray
    radii: np.ndarray
    exit_position: np.ndarray
    steps: int


def wos_exit(domain: Domain, alpha: float, x, rng, shrink: float = 1.0) -> WosTrace:
    """Exact draw of the exit position from ``domain`` for a start at ``x``."""
    _check_alpha(alpha)
    if not 0 < shrink <= 1:
        raise ValueError("shrink must lie in (0, 1]")
    y = np.asarray(x, dtype=float)
    if not domain.contains(y):
        raise ValueError("start point must lie in the domain")
    gen = _gen(rng)
    centers, radii = [], []
    for _ in range(MAX_WOS_STEPS):
        r = shrink * float(domain.dist_to_boundary(y))
        centers.append(y.copy())
        radii.append(r)
        y = y + r * sample_ball_exit_radius(alpha, gen) * _uniform_directions(1, gen)[0]
        if not domain.contains(y):
            return WosTrace(np.array(centers), np.array(radii), y, len(radii))
    raise RuntimeError("walk on spheres did not terminate")


def wos_exit_batch(domain: Domain, alpha: float, x, paths: int, rng: RngStream,
                   shrink: float = 1.0, threads: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Exit positions (paths, 2) and step counts for ``paths`` independent walks."""
    _check_alpha(alpha)
    if not 0 < shrink <= 1:
        raise ValueError("shrink must lie in (0, 1]")
    x = np.asarray(x, dtype=float)
    if not domain.contains(x):
        raise ValueError("start point must lie in the domain")

    def block(_b, sub: RngStream, n: int):
        gen = sub.generator()
        pos = np.tile(x, (n, 1))
        steps = np.zeros(n, dtype=np.int64)
        alive = np.arange(n)
        for _ in range(MAX_WOS_STEPS):
            if alive.size == 0:
                return pos, steps
            y = pos[alive]
            r = shrink * domain.dist_to_boundary(y)
            u = gen.random(alive.size)
            u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
            jump = (r * ball_exit_radius_from_uniform(alpha, u))[:, None]
            y = y + jump * _uniform_directions(alive.size, gen)
            pos[alive] = y
            steps[alive] += 1
            alive = alive[domain.contains(y)]
        raise RuntimeError("walk on spheres did not terminate")

    out = _map_blocks(block, paths, rng, threads)
    return np.concatenate([o[0] for o in out]), np.concatenate([o[1] for o in out])


# -- time-stepped killed paths -------------------------------------------------


@dataclass
class StablePath:
    alpha: float
    times: np.ndarray
    positions: np.ndarray
    exited: bool
    exit_time: float | None
    exit_position: np.ndarray | None
    fk_integral: float


def _q_eval(q, pts: np.ndarray) -> np.ndarray:
    if q is None:
        return np.zeros(len(pts))
    v = np.asarray(q(pts), dtype=float)
    return np.broadcast_to(v, (len(pts),)) if v.ndim == 0 else v


def killed_walk(domain: Domain, alpha: float, x, dt: float, q, t_max: float, rng) -> StablePath:
    """Euler path with exact stable increments, killed at the first step outside D.

    ``fk_integral`` accumulates q(X_{t_k}) dt over the pre-exit steps (left endpoint).
    """
    _check_alpha(alpha)
    if not dt > 0 or not t_max > 0:
        raise ValueError("dt and t_max must be positive")
    x = np.asarray(x, dtype=float)
    if not domain.contains(x):
        raise ValueError("start point must lie in the domain")
    gen = _gen(rng)
    nsteps = int(math.ceil(t_max / dt - 1e-9))
    times, positions = [0.0], [x.copy()]
    fk = 0.0
    y = x
    for k in range(1, nsteps + 1):
        fk += float(_q_eval(q, y[None])[0]) * dt
        y = y + sample_increment(alpha, dt, 2, gen)
        t = k * dt
        times.append(t)
        positions.append(y.copy())
        if not domain.contains(y):
            return StablePath(alpha, np.array(times), np.array(positions), True, t, y, fk)
    return StablePath(alpha, np.array(times), np.array(positions), False, None, None, fk)


def feynman_kac_weight(path: StablePath) -> float:
    if not path.exited:
        raise ValueError("path was censored at t_max; the weight e_q(tau) is undefined")
    return math.exp(path.fk_integral)


@dataclass
class ExitSample:
    """Summary of many killed paths started from one point."""

    dt: float
    t_max: float
    exit_time: np.ndarray  # nan where censored
    exited: np.ndarray
    fk_integral: np.ndarray
    exit_position: np.ndarray  # nan rows where censored
    occupation: np.ndarray | None = field(default=None, repr=False)
    occupation_blocks: np.ndarray | None = field(default=None, repr=False)
    block_sizes: np.ndarray | None = field(default=None, repr=False)

    @property
    def paths(self) -> int:
        return len(self.exited)

    @property
    def censored_fraction(self) -> float:
        return float(1.0 - self.exited.mean())

    def weights(self) -> np.ndarray:
        return np.exp(self.fk_integral[self.exited])

    def survival(self, t) -> np.ndarray:
        """Empirical P(tau > t); censored paths count as alive up to t_max."""
        t = np.asarray(t, dtype=float)
        et = np.where(self.exited, self.exit_time, np.inf)
        et_sorted = np.sort(et)
        return 1.0 - np.searchsorted(et_sorted, t, side="right") / len(et)


def killed_walk_batch(domain: Domain, alpha: float, x, dt: float, t_max: float, paths: int,
                      rng: RngStream, q=None, cell_index: Callable | None = None,
                      n_cells: int = 0, threads: int | None = None) -> ExitSample:
    """Vectorised :func:`killed_walk` over ``paths`` paths.

    If ``cell_index`` maps points to grid cells (-1 off-grid), the summed time
    each path spends per cell is accumulated in ``occupation``.
    """
    _check_alpha(alpha)
    if not dt > 0 or not t_max > 0:
        raise ValueError("dt and t_max must be positive")
    x = np.asarray(x, dtype=float)
    if not domain.contains(x):
        raise ValueError("start point must lie in the domain")
    nsteps = int(math.ceil(t_max / dt - 1e-9))
    scale = dt ** (1.0 / alpha)

    def block(_b, sub: RngStream, n: int):
        gen = sub.generator()
        pos = np.tile(x, (n, 1))
        exit_time = np.full(n, np.nan)
        fk = np.zeros(n)
        occ = np.zeros(n_cells) if cell_index is not None else None
        alive = np.arange(n)
        for k in range(1, nsteps + 1):
            if alive.size == 0:
                break
            y = pos[alive]
            fk[alive] += _q_eval(q, y) * dt
            if occ is not None:
                c = cell_index(y)
                c = c[c >= 0]
                occ += dt * np.bincount(c, minlength=n_cells)
            s = positive_stable(alpha / 2.0, alive.size, gen)
            y = y + (scale * np.sqrt(2.0 * s))[:, None] * gen.standard_normal((alive.size, 2))
            pos[alive] = y
            out = ~domain.contains(y)
            exit_time[alive[out]] = k * dt
            alive = alive[~out]
        exited = ~np.isnan(exit_time)
        pos[~exited] = np.nan
        return exit_time, exited, fk, pos, occ

    res = _map_blocks(block, paths, rng, threads)
    occupation = blocks = None
    if cell_index is not None:
        blocks = np.array([r[4] for r in res])
        occupation = blocks.sum(axis=0)
    return ExitSample(
        dt=dt,
        t_max=t_max,
        exit_time=np.concatenate([r[0] for r in res]),
        exited=np.concatenate([r[1] for r in res]),
        fk_integral=np.concatenate([r[2] for r in res]),
        exit_position=np.concatenate([r[3] for r in res]),
        occupation=occupation,
        occupation_blocks=blocks,
        block_sizes=np.array([len(r[0]) for r in res]),
    )


# -- self-tests ------------------------------------------------------------------


@dataclass
class SelfTestResult:
    name: str
    estimate: float
    expected: float
    sigma: float
    passed: bool

    @property
    def z(self) -> float:
        return (self.estimate - self.expected) / self.sigma if self.sigma > 0 else 0.0


def characteristic_function_test(alpha: float, xi: float, rng, draws: int = 1_000_000,
                                 t: float = 1.0, nsigma: float = 3.0) -> SelfTestResult:
    x = sample_increment(alpha, t, 2, rng, size=draws)
    # project on a fixed unit direction; isotropy makes the direction irrelevant
    c = np.cos(xi * (x[:, 0] * 0.6 + x[:, 1] * 0.8))
    est, sig = float(c.mean()), float(c.std(ddof=1) / np.sqrt(draws))
    expected = math.exp(-t * abs(xi) ** alpha)
    return SelfTestResult(f"charfn(alpha={alpha}, |xi|={xi})", est, expected, sig,
                          abs(est - expected) <= nsigma * sig)


def laplace_transform_test(alpha: float, lam: float, rng, draws: int = 1_000_000,
                           nsigma: float = 3.0) -> SelfTestResult:
    s = subordinator(alpha, 1.0, draws, rng)
    v = np.exp(-lam * s)
    est, sig = float(v.mean()), float(v.std(ddof=1) / np.sqrt(draws))
    expected = math.exp(-lam ** (alpha / 2.0))
    return SelfTestResult(f"laplace(alpha={alpha}, lambda={lam})", est, expected, sig,
                          abs(est - expected) <= nsigma * sig)


def ball_exit_tail_test(rng, draws: int = 1_000_000, nsigma: float = 3.0) -> SelfTestResult:
    r = sample_ball_exit_radius(1.0, rng, size=draws)
    p = float(np.mean(r > 2.0))
    sig = math.sqrt((1 / 3) * (2 / 3) / draws)
    return SelfTestResult("ball_exit P(R>2) alpha=1", p, 1 / 3, sig, abs(p - 1 / 3) <= nsigma * sig)


def run_selftests(seed: int = 0, draws: int = 1_000_000, alphas: Sequence[float] = (0.5, 1.0, 1.5)
                  ) -> list[SelfTestResult]:
    """Characteristic-function, Laplace-transform and ball-exit checks."""
    root = RngStream(seed, 0x5E1F)
    out: list[SelfTestResult] = []
    k = 0
    for a in alphas:
        for xi in (0.5, 1.0, 2.0):
            out.append(characteristic_function_test(a, xi, root.child(k), draws))
            k += 1
        for lam in (0.5, 1.0, 2.0):
            out.append(laplace_transform_test(a, lam, root.child(k), draws))
            k += 1
    out.append(ball_exit_tail_test(root.child(k), draws))
    return out
