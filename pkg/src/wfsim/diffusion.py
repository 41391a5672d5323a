"""Diffusion limits: Euler-Maruyama for the Wright-Fisher SDE and its mean-field version,
the N-scaled comparison, and the self-stabilising mutation model."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .chains import ScaledDrift, simulate_chain
from .engine import derive_stream, run_blocks, stream_index
from .meanfield import ScalingParams, scaled_system_run, simulate_system
from .nonlinear import ScaledMeanFieldDrift
from .stats import GridDensity, beta_sample, w1_empirical

__all__ = [
    "SDEParams",
    "EMResult",
    "em_wf_simulate",
    "mv_particle_em_simulate",
    "CaseStudyParams",
    "CaseInvariant",
    "case_study_invariant",
    "mutation_drift",
    "ScalingRow",
    "scaling_limit_check",
    "scaling_limit_check_meanfield",
    "ergodic_rate_check",
    "CaseStudyRun",
    "case_study_particle_run",
    "histogram_rows",
    "bootstrap_w1_stderr",
]

log = logging.getLogger(__name__)


def mutation_drift(theta0: float, theta1: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: theta0 * (1 - x) - theta1 * x


@dataclass(frozen=True)
class SDEParams:
    """``dX = b dt + sqrt(X (1 - X)) dW``; ``b(x)`` or, with ``mean_field``, ``b(x, mean)``."""

    drift: Callable
    dt: float
    t_end: float
    mean_field: bool = False
    clamp: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        ends = np.array([0.0, 1.0])
        for m in np.linspace(0, 1, 5) if self.mean_field else [None]:
            b = self.drift(ends, m) if self.mean_field else self.drift(ends)
            if b[0] < 0 or b[1] > 0:
                raise ValueError("drift must point inward: b(0) >= 0 and b(1) <= 0")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class EMResult:
    terminal: np.ndarray
    clamp_fraction: float
    checkpoints: dict


def _em_step(x, b, dt, noise):
    y = x + b * dt + np.sqrt(np.clip(x * (1 - x), 0.0, None) * dt) * noise
    return np.clip(y, 0.0, 1.0), (y < 0) | (y > 1)


def _initial(x0, stream, shape):
    if isinstance(x0, GridDensity):
        return x0.quantile(stream.uniform(shape))
    if callable(x0):
        return np.asarray(x0(stream, shape), dtype=float)
    return np.full(shape, float(x0))


def em_wf_simulate(params: SDEParams, x0, reps: int, master_seed: int = 0, cell: Sequence[int] = ()) -> EMResult:
    """Independent Euler-Maruyama paths with post-step clamping to [0, 1]."""
    if params.mean_field:
        raise ValueError("use mv_particle_em_simulate for mean-field drifts")
    n = params.steps

    def job(stream, size):
        x = _initial(x0, stream, size)
        clamps = np.zeros(size)
        for _ in range(n):
            x, c = _em_step(x, params.drift(x), params.dt, stream.normal(size))
            clamps += c
        return np.column_stack([x, clamps])

    out = run_blocks(reps, job, master_seed, cell=tuple(cell) + (9,))
    frac = float(out[:, 1].sum() / (reps * max(n, 1))) if reps else 0.0
    return EMResult(out[:, 0], frac, {})


def mv_particle_em_simulate(
    K: int,
    drift: Callable[[np.ndarray, float], np.ndarray],
    x0,
    dt: float,
    t_end: float,
    master_seed: int = 0,
    checkpoints: Sequence[float] = (),
    cell: Sequence[int] = (),
) -> EMResult:
    """K interacting Euler particles; the drift reads the particle mean frozen at the start of each step."""
    if K < 2:
        raise ValueError("need at least two particles")
    SDEParams(drift, dt, t_end, mean_field=True)
    stream = derive_stream(master_seed, stream_index(*cell, 10))
    n = int(round(t_end / dt))
    marks = {int(round(t / dt)): t for t in checkpoints}
    x = _initial(x0, stream, K)
    saved = {}
    clamps = 0
    for k in range(n + 1):
        if k in marks:
            saved[marks[k]] = x.copy()
        if k == n:
            break
        x, c = _em_step(x, drift(x, x.mean()), dt, stream.normal(K))
        clamps += int(c.sum())
    return EMResult(x, clamps / (K * max(n, 1)), saved)


@dataclass(frozen=True)
class CaseStudyParams:
    """Mutation rates ``theta0, theta1`` and attraction ``gamma`` toward the population mean."""

    theta0: float
    theta1: float
    gamma: float

    def __post_init__(self):
        if self.theta0 <= 0 or self.theta1 <= 0:
            raise ValueError("mutation rates must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.gamma >= 1:
            log.warning("gamma=%g lies outside (0, 1); running with the range-extension flag set", self.gamma)

    @property
    def range_extension(self) -> bool:
        return self.gamma >= 1

    @property
    def theta(self) -> float:
        return self.theta0 + self.theta1

    @property
    def m(self) -> float:
        return self.theta0 / self.theta

    @property
    def shapes(self) -> tuple[float, float]:
        scale = 1 + self.gamma / self.theta
        return 2 * self.theta0 * scale, 2 * self.theta1 * scale

    def drift(self, x, mean):
        return -self.theta1 * x + self.theta0 * (1 - x) - self.gamma * (x - mean)

    def scaled(self, N: int) -> ScaledMeanFieldDrift:
        c = 2.0 / np.sqrt(3.0 * N)
        return ScaledMeanFieldDrift(self.drift, N, L1=abs(1 - c * (self.theta + self.gamma)), L2=c * self.gamma)

    def min_scale(self) -> float:
        """Smallest N for which the scaled drift maps [0, 1] x [0, 1] into [0, 1]."""
        return 4 * (self.theta + self.gamma) ** 2 / 3


@dataclass(frozen=True)
class CaseInvariant:
    shapes: tuple[float, float]
    mean: float
    variance: float


def case_study_invariant(case: CaseStudyParams) -> CaseInvariant:
    m = case.m
    second = m * (2 * (case.theta0 + case.gamma * m) + 1) / (2 * (case.theta + case.gamma) + 1)
    return CaseInvariant(case.shapes, m, second - m * m)


def bootstrap_w1_stderr(a: np.ndarray, b: np.ndarray, stream, rounds: int = 30) -> float:
    n = a.size
    vals = [w1_empirical(a[stream.integers(0, n, n)], b[stream.integers(0, n, n)]) for _ in range(rounds)]
    return float(np.std(vals, ddof=1))


@dataclass(frozen=True)
class ScalingRow:
    N: int
    w1: float
    stderr: float


def scaling_limit_check(
    N_list: Sequence[int],
    b: Callable[[np.ndarray], np.ndarray],
    x0: float,
    t: float,
    reps: int,
    master_seed: int = 0,
    dt_ref: float = 1e-4,
) -> tuple[list[ScalingRow], np.ndarray]:
    """W1 between the N-scaled chain at generation floor(N t) and an Euler-Maruyama reference at time t."""
    ref = em_wf_simulate(SDEParams(b, dt_ref, t), x0, reps, master_seed, cell=(11,)).terminal
    rows = []
    for i, N in enumerate(N_list):
        drift = ScaledDrift(b, N)
        n = ScalingParams(N).generations(t)
        sample = run_blocks(
            reps,
            lambda st, s: simulate_chain(drift.delta, drift, np.full(s, float(x0)), n, st).terminal,
            master_seed,
            cell=(12, i),
        )
        boot = derive_stream(master_seed, stream_index(13, i))
        rows.append(ScalingRow(int(N), w1_empirical(sample, ref), bootstrap_w1_stderr(sample, ref, boot)))
    return rows, ref


def scaling_limit_check_meanfield(
    N_list: Sequence[int],
    case: CaseStudyParams,
    mu0: GridDensity,
    t: float,
    reps: int,
    master_seed: int = 0,
    dt_ref: float = 1e-4,
    M_of_N: Callable[[int], int] = lambda N: N,
) -> list[ScalingRow]:
    """Host system at scale N (pooled hosts) against interacting Euler particles at time t."""
    ref = mv_particle_em_simulate(reps, case.drift, mu0, dt_ref, t, master_seed, cell=(14,)).terminal
    rows = []
    for i, N in enumerate(N_list):
        hosts, _ = scaled_system_run(ScalingParams(N, M_of_N), case.scaled(N), mu0, t, reps, master_seed, cell=(15, i))
        boot = derive_stream(master_seed, stream_index(16, i))
        rows.append(ScalingRow(int(N), w1_empirical(hosts, ref), bootstrap_w1_stderr(hosts, ref, boot)))
    return rows


def ergodic_rate_check(
    case: CaseStudyParams,
    t_list: Sequence[float],
    K: int,
    dt: float = 1e-3,
    master_seed: int = 0,
    start: float | str = 1e-3,
) -> tuple[np.ndarray, np.ndarray, float]:
    """W1 between the particle law at each t and an exact invariant sample; fitted exponential rate.

    ``start`` is a point (all particles there) or ``"invariant"``. The rate is fitted on the
    points whose W1 exceeds three times the sampling floor.
    """
    a, b = case.shapes
    st = derive_stream(master_seed, stream_index(17))
    if start == "invariant":
        x0 = lambda s, shape: beta_sample(a, b, s, shape)
    else:
        x0 = float(start)
    run = mv_particle_em_simulate(K, case.drift, x0, dt, max(t_list), master_seed, checkpoints=t_list, cell=(18,))
    target = beta_sample(a, b, st, K)
    floor = w1_empirical(beta_sample(a, b, st, K), target)
    w1 = np.array([w1_empirical(run.checkpoints[t], target) for t in t_list])
    t_arr = np.asarray(t_list, dtype=float)
    use = w1 > 3 * floor
    rate = float(-np.polyfit(t_arr[use], np.log(w1[use]), 1)[0]) if use.sum() >= 2 else float("nan")
    return w1, np.full_like(w1, floor), rate


@dataclass
class CaseStudyRun:
    case: CaseStudyParams
    N: int
    M: int
    samples: np.ndarray
    mean: float
    mean_stderr: float
    variance: float
    variance_stderr: float
    w1: float
    beta_sample: np.ndarray

    def summary(self) -> dict:
        inv = case_study_invariant(self.case)
        return {
            "gamma": self.case.gamma,
            "range_extension": self.case.range_extension,
            "N": self.N,
            "M": self.M,
            "beta_shapes": list(inv.shapes),
            "mean": self.mean,
            "mean_stderr": self.mean_stderr,
            "variance": self.variance,
            "variance_stderr": self.variance_stderr,
            "theory_variance": inv.variance,
            "w1_vs_beta": self.w1,
        }


def case_study_particle_run(
    case: CaseStudyParams,
    N: int = 600,
    reps: int = 100_000,
    T: float = 10.0,
    master_seed: int = 0,
    mu0: GridDensity | None = None,
    M_of_N: Callable[[int], int] = lambda N: N,
) -> CaseStudyRun:
    """Terminal host frequencies of the N-scaled self-stabilising system, pooled over independent systems.

    Standard errors treat each system as one cluster, since hosts of one system share the mean.
    """
    mu0 = mu0 or GridDensity.uniform(2048)
    scaling = ScalingParams(N, M_of_N)
    M = scaling.M
    drift = case.scaled(N)
    n = scaling.generations(T)
    systems = -(-reps // M)

    def job(stream, size):
        z = mu0.quantile(stream.uniform((size, M)))
        return simulate_system(z, scaling.delta, drift, n, stream).frequencies

    hosts = run_blocks(systems, job, master_seed, cell=(19, int(round(case.gamma * 1000)) % ((1 << 16) - 1)), block_size=max(1, (1 << 20) // M))
    flat = hosts.ravel()[:reps]
    means = hosts.mean(axis=1)
    mean_se = float(means.std(ddof=1) / np.sqrt(systems)) if systems > 1 else float("nan")
    # between-system spread of the per-system second central moment about the pooled mean
    pooled = flat.mean()
    sq = ((hosts - pooled) ** 2).mean(axis=1)
    var_se = float(sq.std(ddof=1) / np.sqrt(systems)) if systems > 1 else float("nan")
    a, b = case.shapes
    target = beta_sample(a, b, derive_stream(master_seed, stream_index(20)), flat.size)
    return CaseStudyRun(case, N, M, flat, float(flat.mean()), mean_se, float(flat.var(ddof=1)), var_se, w1_empirical(flat, target), target)


def histogram_rows(samples: np.ndarray, bins: int = 100) -> list[dict]:
    counts, edges = np.histogram(samples, bins=bins, range=(0.0, 1.0))
    return [{"bin_left": float(l), "bin_right": float(r), "count": int(c)} for l, r, c in zip(edges[:-1], edges[1:], counts)]
