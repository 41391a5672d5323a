"""Non-linear chains whose replacement probability depends on the current law.

Laws are carried deterministically as grid densities; the kernel's transition is a mixture
of two uniforms, so one step of the law is an exact cell-to-cell transfer. Sample paths are
then drawn against the precomputed law flow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .chains import ChainPath, DriftContractError, _check_range
from .kernel import coupled_step, invariant_density, invariant_variance, kernel_step, push_forward
from .stats import GridDensity, w1_grid

__all__ = [
    "MeanLaw",
    "NonLinearDrift",
    "AffineMeanDrift",
    "EpsilonDrift",
    "ScaledMeanFieldDrift",
    "GeneralDrift",
    "check_lipschitz",
    "LawFlow",
    "propagate_law",
    "law_flow",
    "invariant_law",
    "frozen_invariant",
    "nonlinear_chain_simulate",
    "CouplingSeries",
    "nonlinear_coupling",
    "invariant_fixed_point_mean_only",
    "perturbation_stats",
    "perturbation_moment_bound",
]


@dataclass(frozen=True)
class MeanLaw:
    """A law known only through its first moment."""

    value: float

    def mean(self) -> float:
        return self.value


class NonLinearDrift:
    """``(x, law) -> p`` with declared Lipschitz constants in x and in the law (W1)."""

    L1: float = np.inf
    L2: float = np.inf
    mean_only = False
    x_independent = False
    kind = "general"

    def __call__(self, x, law):
        raise NotImplementedError

    def metadata(self) -> dict:
        return {"kind": self.kind, "L1": self.L1, "L2": self.L2}


class AffineMeanDrift(NonLinearDrift):
    """``p(x, mu) = a + b x + c <mu>_1``."""

    kind = "affine-in-mean"
    mean_only = True

    def __init__(self, a: float, b: float, c: float):
        self.a, self.b, self.c = float(a), float(b), float(c)
        corners = [a + b * x + c * m for x in (0.0, 1.0) for m in (0.0, 1.0)]
        if min(corners) < 0 or max(corners) > 1:
            raise DriftContractError(f"a + b x + c m leaves [0, 1] for (a, b, c) = {(a, b, c)}")
        self.L1, self.L2 = abs(self.b), abs(self.c)
        self.x_independent = self.b == 0.0

    def __call__(self, x, law):
        return self.a + self.b * np.asarray(x, dtype=float) + self.c * np.asarray(law.mean())

    def stationary_mean(self) -> float:
        return self.a / (1.0 - self.b - self.c)

    def metadata(self) -> dict:
        return {**super().metadata(), "a": self.a, "b": self.b, "c": self.c}


class EpsilonDrift(AffineMeanDrift):
    """``p(x, mu) = a + b (eps x + (1 - eps) <mu>_1)``: eps interpolates linear and mean feedback."""

    kind = "epsilon-interpolated"

    def __init__(self, a: float, b: float, eps: float):
        super().__init__(a, b * eps, b * (1.0 - eps))
        self.base_b, self.eps = float(b), float(eps)


class ScaledMeanFieldDrift(NonLinearDrift):
    """``p_N(x, mu) = x + (2 / sqrt(3N)) b(x, <mu>_1)`` for a mean-feedback diffusion drift b."""

    kind = "diffusion-scaled"
    mean_only = True

    def __init__(self, b: Callable, N: int, L1: float = np.inf, L2: float = np.inf, check: bool = True):
        self.b = b
        self.N = int(N)
        self.L1, self.L2 = L1, L2
        if check:
            for m in np.linspace(0, 1, 11):
                if b(np.array([0.0]), m)[0] < 0 or b(np.array([1.0]), m)[0] > 0:
                    raise ValueError("drift must point inward at the boundary for every mean")

    @property
    def delta(self) -> float:
        return float(np.sqrt(3.0 / self.N))

    def __call__(self, x, law):
        x = np.asarray(x, dtype=float)
        return x + 2.0 / np.sqrt(3.0 * self.N) * self.b(x, np.asarray(law.mean()))

    def metadata(self) -> dict:
        return {**super().metadata(), "N": self.N}


class GeneralDrift(NonLinearDrift):
    def __init__(self, func: Callable, L1: float, L2: float, mean_only: bool = False):
        self.func = func
        self.L1, self.L2 = float(L1), float(L2)
        self.mean_only = mean_only

    def __call__(self, x, law):
        return np.asarray(self.func(np.asarray(x, dtype=float), law), dtype=float)


def check_lipschitz(drift: NonLinearDrift, probes: list[GridDensity], stream, samples: int = 2000) -> dict:
    """Spot-check range and the declared Lipschitz inequality on random (x, y, mu, nu) quadruples.

    A pass does not certify global Lipschitz continuity.
    """
    i = stream.integers(0, len(probes), samples)
    j = stream.integers(0, len(probes), samples)
    x = stream.uniform(samples)
    y = stream.uniform(samples)
    worst = -np.inf
    in_range = True
    for k in range(samples):
        mu, nu = probes[i[k]], probes[j[k]]
        px = float(drift(x[k], mu))
        py = float(drift(y[k], nu))
        in_range &= 0.0 <= px <= 1.0
        bound = drift.L1 * abs(x[k] - y[k]) + drift.L2 * w1_grid(mu, nu)
        worst = max(worst, abs(px - py) - bound)
    return {"samples": samples, "in_range": bool(in_range), "max_excess": float(worst), "certified": False}


@dataclass
class LawFlow:
    means: np.ndarray
    variances: np.ndarray
    densities: list[GridDensity] | None = field(default=None, repr=False)
    final: GridDensity | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.means.size


def _drift_on_grid(mu: GridDensity, drift: NonLinearDrift) -> np.ndarray:
    x = mu.midpoints
    p = np.broadcast_to(np.asarray(drift(x, mu), dtype=float), x.shape)
    _check_range(p, x)
    return p


def propagate_law(mu: GridDensity, delta: float, drift: NonLinearDrift) -> GridDensity:
    """One step of the law: cell masses moved by the exact transfer, drift read at cell midpoints."""
    masses = push_forward(mu.masses, _drift_on_grid(mu, drift), delta)
    return GridDensity.from_masses(masses)


def law_flow(mu0: GridDensity, delta: float, drift: NonLinearDrift, n: int, keep: bool = True) -> LawFlow:
    laws = [mu0]
    means = [mu0.mean()]
    variances = [mu0.variance()]
    mu = mu0
    for _ in range(n):
        mu = propagate_law(mu, delta, drift)
        if keep:
            laws.append(mu)
        means.append(mu.mean())
        variances.append(mu.variance())
    return LawFlow(np.array(means), np.array(variances), laws if keep else None, mu)


def invariant_law(
    delta: float,
    drift: NonLinearDrift,
    grid_size: int = 2048,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    mu0: GridDensity | None = None,
) -> tuple[GridDensity, int]:
    """Fixed point of the law recursion, iterated until the L1 change drops below ``tol``."""
    mu = mu0 or GridDensity.uniform(grid_size)
    for it in range(1, max_iter + 1):
        new = propagate_law(mu, delta, drift)
        change = new.l1_distance(mu)
        mu = new
        if change < tol:
            return mu, it
    raise RuntimeError(f"law iteration did not settle after {max_iter} steps (last L1 change {change:.3e})")


def frozen_invariant(nu: GridDensity, delta: float, drift: NonLinearDrift, tol: float = 1e-12, max_iter: int = 100_000) -> GridDensity:
    """Invariant law of the linear kernel obtained by freezing the law argument at ``nu``."""
    p = _drift_on_grid(nu, drift)
    masses = np.full(nu.grid_size, 1.0 / nu.grid_size)
    for _ in range(max_iter):
        new = push_forward(masses, p, delta)
        new /= new.sum()
        if np.abs(new - masses).sum() < tol:
            return GridDensity.from_masses(new)
        masses = new
    raise RuntimeError("frozen-law invariant did not converge")


def _law_at(flow: LawFlow, k: int, drift: NonLinearDrift):
    if drift.mean_only:
        return MeanLaw(float(flow.means[k]))
    return flow.densities[k]


def nonlinear_chain_simulate(
    mu0: GridDensity,
    delta: float,
    drift: NonLinearDrift,
    n: int,
    stream,
    size: int = 1,
    flow: LawFlow | None = None,
):
    """Law flow first (or ``flow`` if given), then ``size`` independent paths with starts drawn from ``mu0``."""
    if flow is None:
        flow = law_flow(mu0, delta, drift, n, keep=not drift.mean_only)
    z = mu0.quantile(stream.uniform(size))
    out = np.empty((n + 1, size))
    out[0] = z
    for k in range(n):
        p = np.asarray(drift(z, _law_at(flow, k, drift)), dtype=float)
        _check_range(p, z)
        z = kernel_step(delta, p, z, stream)
        out[k + 1] = z
    return ChainPath(out, delta, drift), flow


@dataclass
class CouplingSeries:
    gap: np.ndarray
    gap_stderr: np.ndarray
    drift_gap: np.ndarray
    flow_p: LawFlow = field(repr=False)
    flow_q: LawFlow = field(repr=False)

    def recursion_bound(self, delta: float) -> np.ndarray:
        """One-step bound (1 - delta/2) gap_n + (delta/2) E|p_n - q_n| for generations 1..n."""
        return (1 - delta / 2) * self.gap[:-1] + delta / 2 * self.drift_gap


def nonlinear_coupling(
    driftP: NonLinearDrift,
    driftQ: NonLinearDrift,
    delta: float,
    mu0P: GridDensity,
    mu0Q: GridDensity,
    n: int,
    stream,
    size: int = 10_000,
) -> CouplingSeries:
    """Coupled non-linear chains, started from the comonotone (W1-optimal) coupling of the initial laws."""
    fp = law_flow(mu0P, delta, driftP, n, keep=not driftP.mean_only)
    fq = law_flow(mu0Q, delta, driftQ, n, keep=not driftQ.mean_only)
    u = stream.uniform(size)
    x = mu0P.quantile(u)
    y = mu0Q.quantile(u)
    gaps = [np.abs(x - y)]
    dgap = []
    for k in range(n):
        p = np.asarray(driftP(x, _law_at(fp, k, driftP)), dtype=float)
        q = np.asarray(driftQ(y, _law_at(fq, k, driftQ)), dtype=float)
        _check_range(p, x)
        _check_range(q, y)
        dgap.append(np.abs(p - q).mean())
        x, y = coupled_step(x, y, p, q, delta, stream)
        gaps.append(np.abs(x - y))
    g = np.array(gaps)
    return CouplingSeries(g.mean(axis=1), g.std(axis=1, ddof=1) / np.sqrt(size), np.array(dgap), fp, fq)


def invariant_fixed_point_mean_only(drift: NonLinearDrift, delta: float, tol: float = 1e-12, grid_size: int = 2048):
    """Solve ``p(0, beta_{delta,s}) = s`` by bisection for a drift that only reads the law's mean.

    The invariant law of the constant-p kernel has mean p, so the drift is evaluated on a law
    with mean s. Returns ``(s, density of the invariant law at s)``.
    """
    if not (drift.mean_only and drift.x_independent):
        raise ValueError("drift must be constant in x and depend on the law only through its mean")

    def excess(s: float) -> float:
        return float(drift(0.0, MeanLaw(s))) - s

    lo, hi = excess(0.0), excess(1.0)
    if lo == 0.0 or hi == 0.0:
        s = 0.0 if lo == 0.0 else 1.0
        return s, GridDensity.point_mass(s, grid_size)
    if lo * hi > 0:
        raise ValueError("no sign change of p(0, s) - s on [0, 1]")
    s = optimize.bisect(excess, 0.0, 1.0, xtol=tol)
    return s, invariant_density(delta, s, grid_size).density


def perturbation_stats(a: float, b: float, epsilon: float, delta: float) -> tuple[float, float]:
    """Mean and variance of the invariant law for ``p = a + b (eps x + (1 - eps) <mu>_1)``."""
    if not (0 < a < 1 and 0 < b < 0.5 and a + b < 1 and 0 <= epsilon <= 1 and 0 < delta <= 1):
        raise ValueError("need a in (0,1), b in (0,1/2), a+b<1, eps in [0,1], delta in (0,1]")
    s = a / (1 - b)
    return s, invariant_variance(delta, s) / (1 - epsilon * b * (3 - 2 * delta) / (3 - delta))


def perturbation_moment_bound(k: int, b: float, epsilon: float) -> float:
    return k * 2 * b * epsilon / (1 - 2 * b)
