"""Linear chains driven by a frequency-dependent type-0 probability ``p(x)``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .engine import run_blocks
from .kernel import coupled_step, kernel_step

__all__ = [
    "DriftContractError",
    "Drift",
    "IdentityDrift",
    "ConstantDrift",
    "FunctionDrift",
    "FittestTypeWinsDrift",
    "ScaledDrift",
    "TabulatedDrift",
    "truncate_series",
    "ChainPath",
    "chain_step",
    "simulate_chain",
    "coupled_chains",
    "FixationResult",
    "fixation_estimate",
    "heterozygosity_series",
    "log_slope_fit",
]

_CHECK_GRID = np.concatenate([[0.0], np.linspace(0.0, 1.0, 10_001), [1.0]])


class DriftContractError(ValueError):
    pass


def _check_range(p: np.ndarray, x: np.ndarray) -> None:
    bad = (p < 0.0) | (p > 1.0) | ~np.isfinite(p)
    if np.any(bad):
        i = np.flatnonzero(np.ravel(bad))[0]
        raise DriftContractError(
            f"drift value {np.ravel(p)[i]!r} at x={np.ravel(np.broadcast_to(x, np.shape(p)))[i]!r} is outside [0, 1]"
        )


class Drift:
    """A map ``x -> p(x)`` from frequencies to type-0 replacement probabilities."""

    kind = "general"

    def __call__(self, x):
        raise NotImplementedError

    def validate(self) -> "Drift":
        _check_range(np.asarray(self(_CHECK_GRID), dtype=float), _CHECK_GRID)
        return self

    def metadata(self) -> dict:
        return {"kind": self.kind}


class IdentityDrift(Drift):
    kind = "identity"

    def __call__(self, x):
        return np.asarray(x, dtype=float)


class ConstantDrift(Drift):
    kind = "constant"

    def __init__(self, p: float):
        self.p = float(p)
        self.validate()

    def __call__(self, x):
        return np.full(np.shape(x), self.p)

    def metadata(self) -> dict:
        return {"kind": self.kind, "p": self.p}


class FunctionDrift(Drift):
    def __init__(self, func: Callable[[np.ndarray], np.ndarray], name: str = "general"):
        self.func = func
        self.name = name
        self.validate()

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def metadata(self) -> dict:
        return {"kind": self.kind, "name": self.name}


def truncate_series(sigma: Sequence[float], tail_tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Shortest prefix whose dropped tail sums below ``tail_tol``; returns (prefix, dropped tail)."""
    s = np.asarray(sigma, dtype=float)
    tails = np.concatenate([np.cumsum(s[::-1])[::-1], [0.0]])
    keep = int(np.argmax(tails < tail_tol))
    return s[:keep], float(tails[keep])


class FittestTypeWinsDrift(Drift):
    """Selection against type 0 with mutation:
    ``p(x) = x + (2 delta / 3) (-x (1 - x) sum_i sigma_i x^i + theta0 (1 - x) - theta1 x)``."""

    kind = "fittest-type-wins"

    def __init__(self, sigma: Sequence[float], theta0: float, theta1: float, delta: float, check_sigma: bool = True):
        sig, tail = truncate_series(sigma)
        if check_sigma and sig.size:
            if np.any(sig <= 0):
                raise ValueError("selection coefficients must be positive")
            if np.any(np.diff(sig) > 0):
                raise ValueError("selection coefficients must be non-increasing")
        if theta0 < 0 or theta1 < 0:
            raise ValueError("mutation rates must be nonnegative")
        s0 = sig[0] if sig.size else 0.0
        if 2 * delta / 3 * (s0 + theta0 + theta1) >= 1:
            raise ValueError("need (2 delta / 3)(sigma_0 + theta0 + theta1) < 1")
        self.sigma = sig
        self.tail = tail
        self.theta0 = float(theta0)
        self.theta1 = float(theta1)
        self.delta = float(delta)
        self.validate()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        poly = np.polynomial.polynomial.polyval(x, self.sigma) if self.sigma.size else 0.0
        return x + (2 * self.delta / 3) * (-x * (1 - x) * poly + self.theta0 * (1 - x) - self.theta1 * x)

    def metadata(self) -> dict:
        return {
            "kind": self.kind,
            "sigma": self.sigma.tolist(),
            "truncation_index": int(self.sigma.size),
            "dropped_tail": self.tail,
            "theta0": self.theta0,
            "theta1": self.theta1,
            "delta": self.delta,
        }


class ScaledDrift(Drift):
    """``p_N(x) = x + (2 / sqrt(3 N)) b(x)``, to be run with ``delta_N = sqrt(3 / N)``."""

    kind = "diffusion-scaled"

    def __init__(self, b: Callable[[np.ndarray], np.ndarray], N: int, name: str = "b"):
        if N < 1:
            raise ValueError("N must be positive")
        if b(np.array([0.0]))[0] < 0 or b(np.array([1.0]))[0] > 0:
            raise ValueError("drift must point inward: b(0) >= 0 and b(1) <= 0")
        self.b = b
        self.N = int(N)
        self.name = name
        self.validate()

    @property
    def delta(self) -> float:
        return float(np.sqrt(3.0 / self.N))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x + 2.0 / np.sqrt(3.0 * self.N) * np.asarray(self.b(x), dtype=float)

    def metadata(self) -> dict:
        return {"kind": self.kind, "N": self.N, "b": self.name}


class TabulatedDrift(Drift):
    kind = "tabulated"

    def __init__(self, grid: Sequence[float], values: Sequence[float]):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.validate()

    def __call__(self, x):
        return np.interp(x, self.grid, self.values)


@dataclass
class ChainPath:
    """Generation-indexed values; axis 0 is the generation, trailing axes index replicates."""

    values: np.ndarray
    delta: float
    drift: Drift = field(repr=False)

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]


def chain_step(delta: float, drift: Drift, x, stream) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    p = np.asarray(drift(x), dtype=float)
    _check_range(p, x)
    return kernel_step(delta, p, x, stream)


def simulate_chain(delta: float, drift: Drift, z0, n: int, stream) -> ChainPath:
    """Path of length n + 1; ``z0`` may be an array of independent replicate starts."""
    z = np.asarray(z0, dtype=float)
    out = np.empty((n + 1,) + z.shape)
    out[0] = z
    for k in range(n):
        z = chain_step(delta, drift, z, stream)
        out[k + 1] = z
    return ChainPath(out, delta, drift)


def coupled_chains(delta: float, driftP: Drift, driftQ: Drift, x0, y0, n: int, stream):
    """Chains under ``driftP`` and ``driftQ`` advanced by the monotone coupled step."""
    x = np.asarray(x0, dtype=float)
    y = np.asarray(y0, dtype=float)
    xs = np.empty((n + 1,) + np.broadcast(x, y).shape)
    ys = np.empty_like(xs)
    xs[0], ys[0] = x, y
    for k in range(n):
        p = np.asarray(driftP(x), dtype=float)
        q = np.asarray(driftQ(y), dtype=float)
        _check_range(p, x)
        _check_range(q, y)
        x, y = coupled_step(x, y, p, q, delta, stream)
        xs[k + 1], ys[k + 1] = x, y
    return ChainPath(xs, delta, driftP), ChainPath(ys, delta, driftQ)


@dataclass(frozen=True)
class FixationResult:
    p_fix0: float
    p_fix1: float
    p_undecided: float
    stderr0: float
    stderr1: float
    reps: int


def _terminal(delta, drift, z0, horizon):
    def job(stream, size):
        z = np.full(size, float(z0))
        for _ in range(horizon):
            z = chain_step(delta, drift, z, stream)
        return z

    return job


def fixation_estimate(
    delta: float, drift: Drift, z0: float, horizon: int, eps: float = 1e-9, reps: int = 10_000, master_seed: int = 0
) -> FixationResult:
    """Fractions of replicates within ``eps`` of 0, of 1, or neither at the horizon."""
    z = run_blocks(reps, _terminal(delta, drift, z0, horizon), master_seed)
    lo = z < eps
    hi = z > 1 - eps
    f0, f1 = lo.mean(), hi.mean()
    return FixationResult(
        float(f0),
        float(f1),
        float(1 - f0 - f1),
        float(np.sqrt(f0 * (1 - f0) / reps)),
        float(np.sqrt(f1 * (1 - f1) / reps)),
        reps,
    )


def heterozygosity_series(delta: float, z0: float, n: int, reps: int, master_seed: int = 0, drift=None, cell=()):
    """Mean and standard error of ``Z_k (1 - Z_k)`` for k = 0..n under the neutral chain."""
    drift = drift or IdentityDrift()

    def job(stream, size):
        return simulate_chain(delta, drift, np.full(size, float(z0)), n, stream).values.T

    paths = run_blocks(reps, job, master_seed, cell=cell)
    h = paths * (1 - paths)
    return h.mean(axis=0), h.std(axis=0, ddof=1) / np.sqrt(reps)


def log_slope_fit(mean: np.ndarray, stderr: np.ndarray) -> tuple[float, float]:
    """Weighted least-squares slope of log(mean) on the index; weights from the delta method.

    Returns (slope, slope standard error).
    """
    n = np.arange(mean.size, dtype=float)
    y = np.log(mean)
    rel = np.where(stderr > 0, stderr / mean, np.min(stderr[stderr > 0] / mean[stderr > 0]) if np.any(stderr > 0) else 1.0)
    w = 1.0 / rel**2
    X = np.stack([np.ones_like(n), n], axis=1)
    cov = np.linalg.inv(X.T @ (X * w[:, None]))
    beta = cov @ (X.T @ (w * y))
    return float(beta[1]), float(np.sqrt(cov[1, 1]))
