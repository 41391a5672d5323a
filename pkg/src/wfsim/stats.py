"""Distributional utilities: Wasserstein-1 distances, Beta sampling, moments and grid laws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridDensity",
    "EmpiricalLaw",
    "w1_empirical",
    "w1_cdf",
    "w1_beta_closed",
    "w1_grid",
    "w1_sample_grid",
    "beta_sample",
    "moments_empirical",
    "mc_stderr",
    "variance_stderr",
    "loglog_slope",
]


@dataclass(frozen=True)
class GridDensity:
    """Piecewise-constant density on the uniform partition of [0, 1] into ``len(values)`` cells."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("grid density needs a 1-d vector with at least two cells")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("grid density values must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_masses(cls, masses: np.ndarray) -> "GridDensity":
        m = np.clip(np.asarray(masses, dtype=float), 0.0, None)
        return cls(m * m.size / m.sum())

    @classmethod
    def uniform(cls, grid_size: int) -> "GridDensity":
        return cls(np.ones(grid_size))

    @classmethod
    def point_mass(cls, x: float, grid_size: int) -> "GridDensity":
        m = np.zeros(grid_size)
        m[min(int(x * grid_size), grid_size - 1)] = 1.0
        return cls.from_masses(m)

    @classmethod
    def from_pdf(cls, pdf, grid_size: int) -> "GridDensity":
        """Cell averages of ``pdf`` by 8-point Gauss-Legendre per cell (handles integrable endpoint spikes)."""
        nodes, weights = np.polynomial.legendre.leggauss(8)
        h = 1.0 / grid_size
        left = np.arange(grid_size) * h
        pts = left[:, None] + (nodes[None, :] + 1) * h / 2
        return cls.from_masses((pdf(pts) * weights).sum(axis=1))

    @property
    def grid_size(self) -> int:
        return self.values.size

    @property
    def width(self) -> float:
        return 1.0 / self.values.size

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.grid_size) + 0.5) * self.width

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_size + 1)

    @property
    def masses(self) -> np.ndarray:
        return self.values * self.width

    def total_mass(self) -> float:
        return float(self.masses.sum())

    def mean(self) -> float:
        # exact for a piecewise-constant density
        return float(self.masses @ self.midpoints)

    def moment(self, k: int) -> float:
        e = self.edges
        cell = (e[1:] ** (k + 1) - e[:-1] ** (k + 1)) / (k + 1)
        return float(self.values @ cell)

    def variance(self) -> float:
        return self.moment(2) - self.mean() ** 2

    def cdf_nodes(self) -> np.ndarray:
        """CDF at the cell edges (length ``grid_size + 1``)."""
        return np.concatenate([[0.0], np.cumsum(self.masses)])

    def cdf(self, x: np.ndarray) -> np.ndarray:
        return np.interp(x, self.edges, self.cdf_nodes())

    def quantile(self, u: np.ndarray) -> np.ndarray:
        """Inverse CDF; exact for the piecewise-linear grid CDF."""
        c = self.cdf_nodes()
        c = c / c[-1]
        u = np.asarray(u, dtype=float)
        j = np.clip(np.searchsorted(c, u, side="right") - 1, 0, self.grid_size - 1)
        mass = c[j + 1] - c[j]
        frac = np.where(mass > 0, (u - c[j]) / np.where(mass > 0, mass, 1.0), 0.5)
        return np.clip((j + np.clip(frac, 0.0, 1.0)) * self.width, 0.0, 1.0)

    def l1_distance(self, other: "GridDensity") -> float:
        return float(np.abs(self.values - other.values).sum() * self.width)


class EmpiricalLaw:
    """Empirical measure of the samples along the last axis (batched when ``values`` is 2-d)."""

    def __init__(self, values: np.ndarray):
        self.values = np.asarray(values, dtype=float)
        self._sorted = None

    def mean(self) -> np.ndarray | float:
        m = self.values.mean(axis=-1, keepdims=True)
        return float(m[0]) if self.values.ndim == 1 else m

    def sorted(self) -> np.ndarray:
        if self._sorted is None:
            self._sorted = np.sort(self.values, axis=-1)
        return self._sorted


def w1_empirical(a: np.ndarray, b: np.ndarray) -> float:
    """W1 between two equal-size samples: mean absolute gap of the order statistics."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"sample sizes differ ({a.size} vs {b.size}); resample to a common size")
    if a.size == 0:
        return 0.0
    return float(np.abs(np.sort(a) - np.sort(b)).mean())


def w1_cdf(a: np.ndarray, b: np.ndarray) -> float:
    """W1 as the L1 distance between the two empirical CDFs (any sample sizes)."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    pts = np.concatenate([a, b])
    pts.sort(kind="mergesort")
    fa = np.searchsorted(a, pts[:-1], side="right") / a.size
    fb = np.searchsorted(b, pts[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * np.diff(pts)))


def w1_beta_closed(a1: float, a2: float, b1: float, b2: float) -> float:
    """W1 between Beta(a1, a2) and Beta(b1, b2) with equal total shape a1 + a2 = b1 + b2."""
    if min(a1, a2, b1, b2) <= 0:
        raise ValueError("Beta shapes must be positive")
    if abs((a1 + a2) - (b1 + b2)) > 1e-12:
        raise ValueError(f"total shapes differ: {a1 + a2} vs {b1 + b2}")
    return abs(a1 - b1) / (a1 + a2)


def _abs_linear_integral(d0: np.ndarray, d1: np.ndarray, length: np.ndarray) -> np.ndarray:
    """Integral of |linear function| over a segment given its endpoint values."""
    same = d0 * d1 >= 0
    s = np.abs(d0) + np.abs(d1)
    crossing = np.where(s > 0, (d0 * d0 + d1 * d1) / np.where(s > 0, s, 1.0), 0.0)
    return length * np.where(same, s, crossing) / 2


def w1_grid(mu: GridDensity, nu: GridDensity) -> float:
    """Exact W1 between two grid densities of equal resolution."""
    if mu.grid_size != nu.grid_size:
        raise ValueError("grid sizes differ")
    d = mu.cdf_nodes() - nu.cdf_nodes()
    return float(_abs_linear_integral(d[:-1], d[1:], np.full(mu.grid_size, mu.width)).sum())


def w1_sample_grid(sample: np.ndarray, law: GridDensity) -> float:
    """Exact W1 between an empirical measure and a grid density."""
    s = np.sort(np.asarray(sample, dtype=float).ravel())
    pts = np.union1d(s, law.edges)
    f_emp = np.searchsorted(s, pts[:-1], side="right") / s.size
    g = law.cdf(pts)
    return float(_abs_linear_integral(g[:-1] - f_emp, g[1:] - f_emp, np.diff(pts)).sum())


def beta_sample(a: float, b: float, stream, size=None) -> np.ndarray:
    """Beta(a, b) draws as G_a / (G_a + G_b) with independent unit-scale Gamma variables."""
    if a <= 0 or b <= 0:
        raise ValueError("Beta shapes must be positive")
    ga = stream.gamma(a, size)
    gb = stream.gamma(b, size)
    return ga / (ga + gb)


def moments_empirical(s: np.ndarray, k_max: int) -> np.ndarray:
    """Raw sample moments of orders 0..k_max."""
    s = np.asarray(s, dtype=float).ravel()
    return np.array([np.mean(s**k) for k in range(k_max + 1)])


def mc_stderr(s: np.ndarray) -> float:
    """Standard error of the sample mean."""
    s = np.asarray(s, dtype=float).ravel()
    if s.size < 2:
        return 0.0
    return float(s.std(ddof=1) / np.sqrt(s.size))


def variance_stderr(s: np.ndarray) -> float:
    """Standard error of the unbiased sample variance (fourth-moment formula)."""
    s = np.asarray(s, dtype=float).ravel()
    n = s.size
    c = s - s.mean()
    m2 = np.mean(c**2)
    m4 = np.mean(c**4)
    return float(np.sqrt(max(m4 - (n - 3) / (n - 1) * m2**2, 0.0) / n))


def loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
