"""Potentials q used as Feynman-Kac perturbations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import integrate


class Potential:
    """A function q on R^2; ``__call__`` accepts a point or an (m, 2) array."""

    form: str = ""

    def __call__(self, x):
        raise NotImplementedError

    @property
    def bounded(self) -> bool:
        return True

    def sup(self) -> float:
        raise NotImplementedError

    def singular_points(self) -> list[np.ndarray]:
        return []

    def cell_values(self, centers: np.ndarray, h: float) -> np.ndarray:
        """Values assigned to grid cells of side ``h`` (point values by default)."""
        return np.asarray(self(centers), dtype=float)

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    @staticmethod
    def from_dict(raw: dict[str, Any]) -> "Potential":
        form = raw.get("form")
        if form == "constant":
            return Constant(float(raw["c"]))
        if form == "radial_power":
            return RadialPower(
                center=tuple(raw.get("center", (0.0, 0.0))),
                beta=float(raw["beta"]),
                cutoff=float(raw.get("cutoff", np.inf)),
                inner=float(raw.get("inner", 0.0)),
                scale=float(raw.get("scale", 1.0)),
            )
        raise ValueError(f"unknown potential form {form!r}")

    def __mul__(self, k: float) -> "Potential":
        raise NotImplementedError

    __rmul__ = __mul__


@dataclass(frozen=True)
class Constant(Potential):
    c: float = 0.0
    form = "constant"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.c if x.ndim == 1 else np.full(len(x), self.c)

    def sup(self) -> float:
        return abs(self.c)

    def __mul__(self, k):
        return Constant(self.c * k)

    __rmul__ = __mul__

    def to_dict(self):
        return {"form": "constant", "c": self.c}


def _square_power_average(half: float, p: float) -> float:
    """Mean of |y|^p over the square [-half, half]^2 (p > -2)."""
    # 8 congruent triangles, polar coordinates
    ang = integrate.quad(lambda t: np.cos(t) ** (-(p + 2)), 0.0, np.pi / 4)[0]
    total = 8.0 * half ** (p + 2) / (p + 2) * ang
    return total / (2 * half) ** 2


@dataclass(frozen=True)
class RadialPower(Potential):
    """scale * |x - center|^(-beta) on inner <= |x - center| < cutoff, zero elsewhere."""

    center: tuple[float, float] = (0.0, 0.0)
    beta: float = 0.5
    cutoff: float = np.inf
    inner: float = 0.0
    scale: float = 1.0
    form = "radial_power"

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("radial_power requires beta >= 0")
        if not self.cutoff > 0:
            raise ValueError("radial_power requires cutoff > 0")
        if not 0 <= self.inner < self.cutoff:
            raise ValueError("radial_power requires 0 <= inner < cutoff")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(np.atleast_2d(x) - np.asarray(self.center), axis=1)
        with np.errstate(divide="ignore"):
            v = np.where((r >= self.inner) & (r < self.cutoff), self.scale * r ** (-self.beta), 0.0)
        return v[0] if x.ndim == 1 else v

    @property
    def bounded(self) -> bool:
        return self.beta == 0 or self.inner > 0

    def sup(self) -> float:
        if self.bounded:
            return abs(self.scale) * (self.inner ** (-self.beta) if self.beta > 0 else 1.0)
        return np.inf

    def singular_points(self):
        return [] if self.bounded else [np.asarray(self.center, dtype=float)]

    def cell_values(self, centers, h):
        vals = np.asarray(self(centers), dtype=float)
        if self.bounded:
            return vals
        # the cell holding the singularity gets the exact cell average
        rel = np.abs(centers - np.asarray(self.center))
        hit = np.all(rel <= h / 2, axis=1)
        for k in np.flatnonzero(hit):
            if np.allclose(rel[k], 0.0) and self.cutoff >= h / np.sqrt(2):
                vals[k] = self.scale * _square_power_average(h / 2, -self.beta)
            else:
                vals[k] = _cell_average(self, centers[k], h)
        return vals

    def __mul__(self, k):
        return RadialPower(self.center, self.beta, self.cutoff, self.inner, self.scale * k)

    __rmul__ = __mul__

    def to_dict(self):
        d = {"form": "radial_power", "center": list(self.center), "beta": self.beta}
        if np.isfinite(self.cutoff):
            d["cutoff"] = self.cutoff
        if self.inner > 0:
            d["inner"] = self.inner
        if self.scale != 1.0:
            d["scale"] = self.scale
        return d


def _cell_average(q: Potential, center: np.ndarray, h: float, m: int = 64) -> float:
    u = (np.arange(m) + 0.5) / m - 0.5
    gx, gy = np.meshgrid(center[0] + h * u, center[1] + h * u)
    return float(np.mean(q(np.column_stack([gx.ravel(), gy.ravel()]))))


@dataclass(frozen=True)
class GridPotential(Potential):
    """Cell-constant potential on the cells of a grid; zero off the grid."""

    centers: np.ndarray
    h: float
    values: np.ndarray
    form = "grid"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        out = np.zeros(len(pts))
        idx = _nearest_cells(self.centers, self.h, pts)
        ok = idx >= 0
        out[ok] = self.values[idx[ok]]
        return out[0] if x.ndim == 1 else out

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if len(self.values) else 0.0

    def cell_values(self, centers, h):
        if len(centers) == len(self.centers) and np.allclose(centers, self.centers):
            return np.asarray(self.values, dtype=float)
        return np.asarray(self(centers), dtype=float)

    def __mul__(self, k):
        return GridPotential(self.centers, self.h, self.values * k)

    __rmul__ = __mul__

    def to_dict(self):
        return {"form": "grid", "h": self.h, "cells": len(self.values)}


def _nearest_cells(centers: np.ndarray, h: float, pts: np.ndarray) -> np.ndarray:
    """Index of the grid cell (side h) containing each point, -1 if none."""
    origin = centers.min(axis=0) - h / 2
    cells = np.floor((centers - origin) / h).astype(np.int64)
    lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(cells)}
    ij = np.floor((pts - origin) / h).astype(np.int64)
    return np.array([lookup.get((int(a), int(b)), -1) for a, b in ij], dtype=int)
