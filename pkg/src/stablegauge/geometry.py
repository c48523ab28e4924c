"""Planar test domains, Whitney decompositions and quasi-hyperbolic proxies.

Domains are ball, axis box or simple counterclockwise polygon in R^2.  All
point queries accept a single point ``(2,)`` or an array of points ``(m, 2)``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any

import numpy as np

BOUNDARY_TOL = 1e-12


def _as_points(x) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    return np.atleast_2d(pts), single


def _unwrap(values: np.ndarray, single: bool):
    return values[0] if single else values


def _point_segment_dist(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each of ``pts`` (m, 2) to each segment [a_k, b_k]; returns (m, k)."""
    d = b - a
    L2 = np.einsum("ij,ij->i", d, d)
    rel = pts[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("mkj,kj->mk", rel, d) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * d[None, :, :]
    return np.linalg.norm(pts[:, None, :] - proj, axis=-1)


def _point_box_dist(pts: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Distance from points (m, 2) to axis boxes [lo_k, hi_k]; returns (m, k)."""
    gap = np.maximum(np.maximum(lo[None] - pts[:, None], pts[:, None] - hi[None]), 0.0)
    return np.linalg.norm(gap, axis=-1)


class Domain:
    """Base class for bounded planar domains."""

    kind: str = ""

    def contains(self, x):
        raise NotImplementedError

    def dist_to_boundary(self, x):
        raise NotImplementedError

    def square_clearance(self, centers: np.ndarray, half: np.ndarray) -> np.ndarray:
        """Distance from closed squares to the boundary, valid when the square lies in D.

        For squares meeting the boundary the value is at most the square's diameter,
        which is all the Whitney acceptance test needs.
        """
        raise NotImplementedError

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def area(self) -> float:
        raise NotImplementedError

    @property
    def x0(self) -> np.ndarray:
        """Default reference point (the domain's center)."""
        raise NotImplementedError

    def max_distance_from(self, c) -> float:
        """Largest distance from ``c`` to a point of the closed domain."""
        raise NotImplementedError

    def scaled(self, factor: float) -> "Domain":
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    @staticmethod
    def from_dict(raw: dict[str, Any]) -> "Domain":
        shape = raw.get("shape")
        if shape == "ball":
            return Ball(tuple(raw.get("center", (0.0, 0.0))), float(raw["radius"]))
        if shape == "box":
            return Box(tuple(raw["lo"]), tuple(raw["hi"]))
        if shape == "polygon":
            return Polygon(tuple(tuple(v) for v in raw["vertices"]))
        raise ValueError(f"unknown domain shape {shape!r}")


@dataclass(frozen=True)
class Ball(Domain):
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    kind: str = field(default="ball", init=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    def contains(self, x):
        pts, single = _as_points(x)
        r = np.linalg.norm(pts - self.c, axis=1)
        return _unwrap(r < self.radius - BOUNDARY_TOL, single)

    def dist_to_boundary(self, x):
        pts, single = _as_points(x)
        r = np.linalg.norm(pts - self.c, axis=1)
        return _unwrap(np.abs(self.radius - r), single)

    def square_clearance(self, centers, half):
        # farthest corner of each square from the ball center
        far = np.abs(centers - self.c) + half[:, None]
        return self.radius - np.linalg.norm(far, axis=1)

    @property
    def bounding_box(self):
        return self.c - self.radius, self.c + self.radius

    @property
    def area(self) -> float:
        return float(np.pi * self.radius**2)

    @property
    def x0(self) -> np.ndarray:
        return self.c

    def max_distance_from(self, c) -> float:
        return float(np.linalg.norm(np.asarray(c, float) - self.c) + self.radius)

    def scaled(self, factor: float) -> "Ball":
        return Ball(tuple(self.c * factor), self.radius * factor)

    def to_dict(self):
        return {"shape": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Box(Domain):
    lo: tuple[float, float] = (0.0, 0.0)
    hi: tuple[float, float] = (1.0, 1.0)
    kind: str = field(default="box", init=False)

    def __post_init__(self):
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ValueError("box requires lo < hi componentwise")

    def contains(self, x):
        pts, single = _as_points(x)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        inside = np.all((pts > lo + BOUNDARY_TOL) & (pts < hi - BOUNDARY_TOL), axis=1)
        return _unwrap(inside, single)

    def dist_to_boundary(self, x):
        pts, single = _as_points(x)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        inner = np.min(np.minimum(pts - lo, hi - pts), axis=1)
        outer = _point_box_dist(pts, lo[None], hi[None])[:, 0]
        return _unwrap(np.where(outer > 0, outer, np.abs(inner)), single)

    def square_clearance(self, centers, half):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        gap = np.minimum(centers - half[:, None] - lo, hi - centers - half[:, None])
        return np.min(gap, axis=1)

    @property
    def bounding_box(self):
        return np.asarray(self.lo, float), np.asarray(self.hi, float)

    @property
    def area(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def x0(self) -> np.ndarray:
        return (np.asarray(self.lo, float) + np.asarray(self.hi, float)) / 2

    def max_distance_from(self, c) -> float:
        lo, hi = self.bounding_box
        far = np.maximum(np.abs(np.asarray(c, float) - lo), np.abs(hi - np.asarray(c, float)))
        return float(np.linalg.norm(far))

    def scaled(self, factor: float) -> "Box":
        return Box(tuple(np.multiply(self.lo, factor)), tuple(np.multiply(self.hi, factor)))

    def to_dict(self):
        return {"shape": "box", "lo": list(self.lo), "hi": list(self.hi)}


def _segments_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


@dataclass(frozen=True)
class Polygon(Domain):
    vertices: tuple[tuple[float, float], ...] = ()
    kind: str = field(default="polygon", init=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise ValueError("polygon needs at least 3 planar vertices")
        signed = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if signed <= 0:
            raise ValueError("polygon vertices must be counterclockwise")
        m = len(v)
        for i in range(m):
            for j in range(i + 1, m):
                if j == i + 1 or (i == 0 and j == m - 1):
                    continue
                if _segments_intersect(v[i], v[(i + 1) % m], v[j], v[(j + 1) % m]):
                    raise ValueError("polygon is not simple")

    @property
    def _v(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def _edges(self) -> tuple[np.ndarray, np.ndarray]:
        v = self._v
        return v, np.roll(v, -1, axis=0)

    def _winding(self, pts: np.ndarray) -> np.ndarray:
        a, b = self._edges()
        wn = np.zeros(len(pts), dtype=int)
        for (ax, ay), (bx, by) in zip(a, b):
            cross = (bx - ax) * (pts[:, 1] - ay) - (pts[:, 0] - ax) * (by - ay)
            up = (ay <= pts[:, 1]) & (by > pts[:, 1]) & (cross > 0)
            down = (ay > pts[:, 1]) & (by <= pts[:, 1]) & (cross < 0)
            wn += up.astype(int) - down.astype(int)
        return wn

    def contains(self, x):
        pts, single = _as_points(x)
        a, b = self._edges()
        near = _point_segment_dist(pts, a, b).min(axis=1) <= BOUNDARY_TOL
        return _unwrap((self._winding(pts) != 0) & ~near, single)

    def dist_to_boundary(self, x):
        pts, single = _as_points(x)
        a, b = self._edges()
        return _unwrap(_point_segment_dist(pts, a, b).min(axis=1), single)

    def square_clearance(self, centers, half):
        a, _ = self._edges()
        lo, hi = centers - half[:, None], centers + half[:, None]
        # vertices of the polygon to each square, and square corners to the edges
        vert = _point_box_dist(a, lo, hi).min(axis=0)
        corners = np.concatenate(
            [centers + half[:, None] * np.array(s) for s in ((1, 1), (1, -1), (-1, 1), (-1, -1))]
        )
        cd = self.dist_to_boundary(corners).reshape(4, -1).min(axis=0)
        return np.minimum(vert, cd)

    @property
    def bounding_box(self):
        v = self._v
        return v.min(axis=0), v.max(axis=0)

    @property
    def area(self) -> float:
        v = self._v
        return float(0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))

    @property
    def x0(self) -> np.ndarray:
        # deepest point on a coarse lattice
        lo, hi = self.bounding_box
        g = np.stack(np.meshgrid(np.linspace(lo[0], hi[0], 65), np.linspace(lo[1], hi[1], 65)), -1)
        g = g.reshape(-1, 2)
        inside = self.contains(g)
        d = np.where(inside, self.dist_to_boundary(g), -1.0)
        return g[int(np.argmax(d))]

    def max_distance_from(self, c) -> float:
        return float(np.linalg.norm(self._v - np.asarray(c, float), axis=1).max())

    def scaled(self, factor: float) -> "Polygon":
        return Polygon(tuple(tuple(p) for p in self._v * factor))

    def to_dict(self):
        return {"shape": "polygon", "vertices": [list(p) for p in self.vertices]}


def l_shape(size: float = 1.0) -> Polygon:
    """The L-shaped polygon [0,2]^2 minus [1,2]^2, scaled by ``size``."""
    v = np.array([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)], float) * size
    return Polygon(tuple(tuple(p) for p in v))


def contains(domain: Domain, x):
    return domain.contains(x)


def dist_to_boundary(domain: Domain, x):
    return domain.dist_to_boundary(x)


# -- Whitney decomposition ---------------------------------------------------


@dataclass(frozen=True)
class WhitneyCube:
    center: tuple[float, float]
    side: float
    depth: int

    @property
    def diam(self) -> float:
        return self.side * np.sqrt(2.0)


@dataclass
class WhitneyGraph:
    cubes: list[WhitneyCube]
    adjacency: list[tuple[int, int]]
    root: int
    origin: np.ndarray
    width: float
    clearance: np.ndarray
    uncovered_fraction: float
    index: dict[tuple[int, int, int], int] = field(repr=False, default_factory=dict)
    _dist_cache: dict[int, np.ndarray] = field(repr=False, default_factory=dict)

    def __len__(self) -> int:
        return len(self.cubes)

    def neighbors(self) -> list[list[int]]:
        nb: list[list[int]] = [[] for _ in self.cubes]
        for i, j in self.adjacency:
            nb[i].append(j)
            nb[j].append(i)
        return nb

    def bfs(self, source: int) -> np.ndarray:
        """Chain distances from cube ``source`` to every cube (-1 if unreachable)."""
        if source not in self._dist_cache:
            nb = self.neighbors()
            dist = np.full(len(self.cubes), -1, dtype=int)
            dist[source] = 0
            queue = deque([source])
            while queue:
                i = queue.popleft()
                for j in nb[i]:
                    if dist[j] < 0:
                        dist[j] = dist[i] + 1
                        queue.append(j)
            self._dist_cache[source] = dist
        return self._dist_cache[source]

    def locate(self, x) -> int:
        """Index of the lowest-numbered closed cube containing ``x``; -1 if uncovered."""
        x = np.asarray(x, dtype=float)
        best = -1
        max_depth = max(c.depth for c in self.cubes)
        for d in range(max_depth + 1):
            side = self.width / 2**d
            u = (x - self.origin) / side
            fl = np.floor(u).astype(int)
            cand_i = {fl[0]} | ({fl[0] - 1} if u[0] == fl[0] else set())
            cand_j = {fl[1]} | ({fl[1] - 1} if u[1] == fl[1] else set())
            for i in cand_i:
                for j in cand_j:
                    k = self.index.get((d, i, j))
                    if k is not None and (best < 0 or k < best):
                        best = k
        return best

    def locate_many(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        out = np.full(len(pts), -1, dtype=int)
        max_depth = max(c.depth for c in self.cubes)
        # interior points: one lookup per depth
        for d in range(max_depth, -1, -1):
            side = self.width / 2**d
            fl = np.floor((pts - self.origin) / side).astype(int)
            for m in np.flatnonzero(out < 0):
                k = self.index.get((d, fl[m, 0], fl[m, 1]))
                if k is not None:
                    out[m] = k
        # exact face points need the lowest-index rule
        on_face = np.zeros(len(pts), dtype=bool)
        for d in range(max_depth + 1):
            side = self.width / 2**d
            u = (pts - self.origin) / side
            on_face |= np.any(u == np.floor(u), axis=1)
        for m in np.flatnonzero(on_face):
            out[m] = self.locate(pts[m])
        return out


def whitney_decompose(domain: Domain, max_depth: int, x0=None) -> WhitneyGraph:
    """Dyadic Whitney decomposition of ``domain`` down to ``max_depth`` levels.

    Squares are accepted when their closure lies in D and
    1 <= dist(Q, boundary)/diam(Q) <= 4; everything still unresolved at
    ``max_depth`` is dropped and reported through ``uncovered_fraction``.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    lo, hi = domain.bounding_box
    width = float(np.max(hi - lo)) * (1 + 1e-9)
    origin = (lo + hi) / 2 - width / 2
    x0 = domain.x0 if x0 is None else np.asarray(x0, float)

    cubes: list[WhitneyCube] = []
    clear: list[float] = []
    index: dict[tuple[int, int, int], int] = {}
    ij = np.zeros((1, 2), dtype=np.int64)
    for d in range(max_depth + 1):
        if len(ij) == 0:
            break
        side = width / 2**d
        centers = origin + (ij + 0.5) * side
        half = np.full(len(ij), side / 2)
        diam = side * np.sqrt(2.0)
        inside = domain.contains(centers)
        cl = domain.square_clearance(centers, half)
        ratio = np.where(inside, cl / diam, -np.inf)
        accept = (ratio >= 1.0) & (ratio <= 4.0)
        for k in np.flatnonzero(accept):
            index[(d, int(ij[k, 0]), int(ij[k, 1]))] = len(cubes)
            cubes.append(WhitneyCube((float(centers[k, 0]), float(centers[k, 1])), side, d))
            clear.append(float(cl[k]))
        # squares wholly outside D are discarded; the rest are split
        outside = ~inside & (domain.dist_to_boundary(centers) > diam / 2)
        keep = ~accept & ~outside
        if d == max_depth:
            break
        parents = ij[keep]
        ij = np.concatenate(
            [2 * parents + np.array(o) for o in ((0, 0), (1, 0), (0, 1), (1, 1))]
        )

    if not cubes:
        raise ValueError("no Whitney cube accepted; increase max_depth")
    adjacency = _adjacency(index)
    covered = sum(c.side**2 for c in cubes)
    graph = WhitneyGraph(
        cubes=cubes,
        adjacency=adjacency,
        root=-1,
        origin=origin,
        width=width,
        clearance=np.asarray(clear),
        uncovered_fraction=max(0.0, 1.0 - covered / domain.area),
        index=index,
    )
    root = graph.locate(x0)
    if root < 0:
        raise ValueError(f"reference point {tuple(x0)} is not covered at depth {max_depth}")
    graph.root = root
    return graph


def _adjacency(index: dict[tuple[int, int, int], int]) -> list[tuple[int, int]]:
    """Pairs of cubes sharing a boundary segment of positive length."""
    edges: set[tuple[int, int]] = set()
    for (d, i, j), a in index.items():
        # right (+x) and top (+y) sides; the reverse pairs come from the other cube
        for axis in (0, 1):
            for dd in range(-2, 3):
                d2 = d + dd
                if d2 < 0:
                    continue
                if dd <= 0:
                    s = -dd
                    edge = (i + 1) if axis == 0 else (j + 1)
                    if edge % (1 << s):
                        continue
                    key = (d2, edge >> s, j >> s) if axis == 0 else (d2, i >> s, edge >> s)
                    b = index.get(key)
                    if b is not None:
                        edges.add((min(a, b), max(a, b)))
                else:
                    s = dd
                    for m in range(1 << s):
                        if axis == 0:
                            key = (d2, (i + 1) << s, (j << s) + m)
                        else:
                            key = (d2, (i << s) + m, (j + 1) << s)
                        b = index.get(key)
                        if b is not None:
                            edges.add((min(a, b), max(a, b)))
    return sorted(edges)


def whitney_distance(graph: WhitneyGraph, x) -> int:
    k = graph.locate(x)
    if k < 0:
        raise ValueError(f"point {tuple(np.asarray(x))} is not covered by the decomposition")
    d = int(graph.bfs(graph.root)[k])
    if d < 0:
        raise ValueError("point lies in a component not connected to the root cube")
    return d


def quasihyperbolic_estimate(domain: Domain, x0, x, depth: int, scale: float = 1.0) -> float:
    """Whitney chain length between the cubes of ``x0`` and ``x``, times ``scale``."""
    graph = whitney_decompose(domain, depth, x0=x0)
    return scale * whitney_distance(graph, x)


def chain_distances(graph: WhitneyGraph, pts) -> np.ndarray:
    """Chain distance from the root cube for many points; -1 where uncovered."""
    loc = graph.locate_many(pts)
    dist = graph.bfs(graph.root)
    return np.where(loc >= 0, dist[np.maximum(loc, 0)], -1)


def sample_uniform(domain: Domain, count: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = domain.bounding_box
    out: list[np.ndarray] = []
    n = 0
    while n < count:
        cand = lo + (hi - lo) * rng.random((2 * (count - n) + 16, 2))
        cand = cand[domain.contains(cand)]
        out.append(cand)
        n += len(cand)
    return np.concatenate(out)[:count]


@dataclass
class Holder0Fit:
    C1: float
    C2: float
    max_violation: float
    C2_raw: float
    x0_clearance: float
    samples: int
    depth: int
    holdout_violation: float = 0.0


def holder0_fit(domain: Domain, x0, sample_count: int, rng, depth: int | None = None) -> Holder0Fit:
    """Fit rho(x0, x) <= C1 log(1/delta(x)) + C2 with delta rescaled so delta(x0) = 1.

    The slope comes from least squares and the intercept is the smallest one
    covering every sample, so ``max_violation`` is zero up to rounding.
    ``holdout_violation`` repeats the fit on half the sample and measures the
    excess on the other half.
    """
    if sample_count < 100:
        raise ValueError("holder0_fit needs at least 100 samples")
    gen = rng.generator() if hasattr(rng, "generator") else rng
    x0 = np.asarray(x0, dtype=float)
    d0 = float(domain.dist_to_boundary(x0))
    pts = sample_uniform(domain, sample_count, gen)
    delta = domain.dist_to_boundary(pts)
    if depth is None:
        lo, hi = domain.bounding_box
        width = float(np.max(hi - lo))
        # resolve all but the closest 1% of samples; deeper trees grow like 2^depth
        depth = int(np.ceil(np.log2(8 * np.sqrt(2) * width / max(np.quantile(delta, 0.01), 1e-9)))) + 1
        depth = min(max(depth, 4), 12)
    graph = whitney_decompose(domain, depth, x0=x0)
    rho = chain_distances(graph, pts).astype(float)
    ok = rho >= 0
    pts, delta, rho = pts[ok], delta[ok], rho[ok]
    logterm = np.log(d0 / delta)

    def fit(sel):
        A = np.column_stack([logterm[sel], np.ones(int(np.sum(sel)))])
        (c1, _), *_ = np.linalg.lstsq(A, rho[sel], rcond=None)
        c1 = max(float(c1), 0.0)
        return c1, max(float(np.max(rho[sel] - c1 * logterm[sel])), 0.0)

    c1, c2 = fit(np.ones(len(rho), bool))
    excess = rho - (c1 * logterm + c2)
    # generalisation: envelope fitted on even samples, excess measured on odd ones
    even = np.arange(len(rho)) % 2 == 0
    h1, h2 = fit(even)
    holdout = float(max(np.max(rho[~even] - (h1 * logterm[~even] + h2)), 0.0))
    return Holder0Fit(
        C1=c1,
        C2=c2,
        max_violation=float(max(excess.max(), 0.0)),
        C2_raw=float(c2 + c1 * np.log(d0)),
        x0_clearance=d0,
        samples=int(len(rho)),
        depth=depth,
        holdout_violation=holdout,
    )
