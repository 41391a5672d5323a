"""Backward (dual) chains of the kernel family.

Dual states are nonnegative line counts plus a cemetery, stored as ``CEMETERY = -1`` in
integer arrays and evaluated as ``z ** CEMETERY := 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .chains import FittestTypeWinsDrift, IdentityDrift, simulate_chain, truncate_series
from .engine import run_blocks
from .kernel import replacement_integral

__all__ = [
    "CEMETERY",
    "lambda_coeff",
    "lambda_table",
    "TransitionRow",
    "neutral_dual_row",
    "neutral_dual_matrix",
    "neutral_dual_moment",
    "DualityResult",
    "duality_check_neutral",
    "duality_sweep_neutral",
    "FTWDualParams",
    "ftw_dual_row",
    "ftw_dual_matrix",
    "ftw_dual_moment",
    "ftw_dual_simulate",
    "ftw_event_step",
    "coupled_dual_paths",
    "duality_check_ftw",
    "duality_sweep_ftw",
    "absorption_prob_exact",
    "absorption_table",
    "dual_power",
]

log = logging.getLogger(__name__)

CEMETERY = -1
ROW_TOL = 1e-12


def lambda_coeff(n: int, k: int, delta: float) -> float:
    """``(1/delta) * int_0^delta x^k (1-x)^(n-k) dx``: chance that a given k of n lines are hit."""
    if k > n or k < 0:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    return replacement_integral(n, k, delta)


@lru_cache(maxsize=64)
def _binom_lambda(n: int, delta: float) -> np.ndarray:
    # C(n, k) * lambda_{n,k}: law of the number of hit lines among n
    return np.array([comb(n, k) * lambda_coeff(n, k, delta) for k in range(n + 1)])


def lambda_table(n_max: int, delta: float) -> np.ndarray:
    out = np.zeros((n_max + 1, n_max + 1))
    for n in range(n_max + 1):
        for k in range(n + 1):
            out[n, k] = lambda_coeff(n, k, delta)
    return out


@dataclass(frozen=True)
class TransitionRow:
    source: int
    dest: np.ndarray
    prob: np.ndarray

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.dest.tolist(), self.prob.tolist()))

    def total(self) -> float:
        return float(self.prob.sum())


def _make_row(source: int, probs: dict[int, float]) -> TransitionRow:
    dest = np.array(sorted(probs), dtype=int)
    prob = np.array([probs[d] for d in dest])
    if np.any(prob < -ROW_TOL):
        raise ArithmeticError(f"negative transition probability in row {source}")
    prob = np.clip(prob, 0.0, None)
    remainder = 1.0 - prob.sum()
    if abs(remainder) > 1e-10:
        raise ArithmeticError(f"row {source} sums to {prob.sum()!r}")
    if remainder != 0.0:
        log.debug("row %d: folding remainder %.3e into the stay probability", source, remainder)
        prob[dest == source] += remainder
    return TransitionRow(source, dest, prob)


def neutral_dual_row(n: int, delta: float) -> TransitionRow:
    """Neutral dual from n lines: hit lines merge into one."""
    if n < 1:
        return _make_row(n, {n: 1.0})
    w = _binom_lambda(n, delta)
    probs = {n: w[0] + w[1]}
    for k in range(2, n + 1):
        probs[n - k + 1] = probs.get(n - k + 1, 0.0) + w[k]
    return _make_row(n, probs)


def neutral_dual_matrix(m: int, delta: float) -> np.ndarray:
    """Transition matrix on states 0..m (row and column index = line count; state 0 is inert)."""
    if m < 1:
        raise ValueError("m must be at least 1")
    P = np.zeros((m + 1, m + 1))
    P[0, 0] = 1.0
    for n in range(1, m + 1):
        row = neutral_dual_row(n, delta)
        P[n, row.dest] = row.prob
    return P


def dual_power(P: np.ndarray, n: int) -> np.ndarray:
    return np.linalg.matrix_power(P, n)


def neutral_dual_moment(z: float, m: int, n: int, delta: float) -> float:
    """Exact ``E_m[z ** M_n]`` by the n-th matrix power."""
    P = neutral_dual_matrix(m, delta)
    powers = float(z) ** np.arange(m + 1)
    return float(dual_power(P, n)[m] @ powers)


@dataclass(frozen=True)
class DualityResult:
    z: float
    m: int
    n: int
    lhs: float
    rhs: float
    stderr: float
    stderr_rhs: float = 0.0

    @property
    def combined_stderr(self) -> float:
        return float(np.hypot(self.stderr, self.stderr_rhs))

    def passed(self, k: float = 3.0) -> bool:
        return abs(self.lhs - self.rhs) <= k * self.combined_stderr + 1e-15

    def zscore(self) -> float:
        se = self.combined_stderr
        return 0.0 if se == 0 else (self.lhs - self.rhs) / se


def _forward_samples(delta, drift, z, n_list, reps, master_seed, cell):
    n_list = sorted(set(int(n) for n in n_list))

    def job(stream, size):
        path = simulate_chain(delta, drift, np.full(size, float(z)), n_list[-1], stream).values
        return path[n_list].T

    return n_list, run_blocks(reps, job, master_seed, cell=cell)


def duality_sweep_neutral(z_list, m_list, n_list, delta: float, reps: int, master_seed: int = 0) -> list[DualityResult]:
    """Forward Monte Carlo moments against exact dual moments on a (z, m, n) grid.

    One forward ensemble per z is shared by every (m, n) cell.
    """
    out = []
    for zi, z in enumerate(z_list):
        ns, samples = _forward_samples(delta, IdentityDrift(), z, n_list, reps, master_seed, (1, zi))
        for m in m_list:
            for col, n in enumerate(ns):
                vals = samples[:, col] ** m
                se = float(vals.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
                out.append(DualityResult(float(z), int(m), int(n), float(vals.mean()), neutral_dual_moment(z, m, n, delta), se))
    return out


def duality_check_neutral(z: float, m: int, n: int, delta: float, reps: int, master_seed: int = 0) -> DualityResult:
    if m < 1 or n < 0:
        raise ValueError("need m >= 1 and n >= 0")
    if n == 0:
        return DualityResult(z, m, 0, z**m, z**m, 0.0)
    return duality_sweep_neutral([z], [m], [n], delta, reps, master_seed)[0]


@dataclass(frozen=True)
class FTWDualParams:
    """Parameters of the dual for selection (coefficients ``sigma``) with two-way mutation."""

    delta: float
    theta0: float
    theta1: float
    sigma: tuple = ()
    check: bool = True

    def __post_init__(self):
        sig, tail = truncate_series(self.sigma)
        object.__setattr__(self, "sigma", tuple(float(s) for s in sig))
        object.__setattr__(self, "tail", tail)
        if self.theta0 < 0 or self.theta1 < 0:
            raise ValueError("mutation rates must be nonnegative")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if self.check:
            if any(s <= 0 for s in self.sigma) or any(b > a for a, b in zip(self.sigma, self.sigma[1:])):
                raise ValueError("selection coefficients must be positive and non-increasing")
        if self.delta0 * (self.sigma0 + self.theta) >= 1:
            raise ValueError("need (2 delta / 3)(sigma_0 + theta0 + theta1) < 1")

    @property
    def delta0(self) -> float:
        return 2.0 * self.delta / 3.0

    @property
    def theta(self) -> float:
        return self.theta0 + self.theta1

    @property
    def sigma0(self) -> float:
        return self.sigma[0] if self.sigma else 0.0

    @property
    def J(self) -> int:
        return len(self.sigma)

    @property
    def rho(self) -> np.ndarray:
        """Branching-size law; index 0 is unused, support 1..J."""
        s = np.concatenate([np.asarray(self.sigma, dtype=float), [0.0]])
        r = np.zeros(self.J + 1)
        if self.J:
            r[1:] = (s[:-1] - s[1:]) / s[0]
        return r

    @property
    def mean_branching(self) -> float:
        r = self.rho
        return float(np.arange(r.size) @ r)

    def drift(self) -> FittestTypeWinsDrift:
        return FittestTypeWinsDrift(self.sigma, self.theta0, self.theta1, self.delta, check_sigma=self.check)


def ftw_dual_row(m: int, params: FTWDualParams) -> TransitionRow:
    """Transition row of the selection-mutation dual from m >= 0 lines (cemetery included)."""
    if m == CEMETERY:
        return _make_row(CEMETERY, {CEMETERY: 1.0})
    if m < 0:
        raise ValueError("invalid dual state")
    if m == 0:
        return _make_row(0, {0: 1.0})
    d0, th, s0 = params.delta0, params.theta, params.sigma0
    rho = params.rho
    J = params.J
    neutral = 1.0 - d0 * (th + s0)
    w = _binom_lambda(m, params.delta)

    def r(i: int) -> float:
        return rho[i] if 1 <= i <= J else 0.0

    probs: dict[int, float] = {}
    probs[m] = w[0] + neutral * w[1] + d0 * s0 * sum(w[k] * r(k - 1) for k in range(2, m + 1))
    for j in range(1, m + 1):
        val = d0 * params.theta0 * w[j]
        if j + 1 <= m:
            val += neutral * w[j + 1]
        val += d0 * s0 * sum(w[k] * r(k - j - 1) for k in range(j + 2, m + 1))
        probs[m - j] = val
    for j in range(1, J + 1):
        probs[m + j] = d0 * s0 * sum(w[k] * r(j + k - 1) for k in range(1, m + 1))
    probs[CEMETERY] = d0 * params.theta1 * (1.0 - w[0])
    probs = {k: v for k, v in probs.items() if v != 0.0 or k == m}
    return _make_row(m, probs)


def ftw_dual_matrix(max_state: int, params: FTWDualParams) -> np.ndarray:
    """Rows for states (cemetery, 0..max_state) on columns (cemetery, 0..max_state + J).

    Matrix index is state + 1. Mass leaving the top rows past ``max_state + J`` cannot occur.
    """
    width = max_state + params.J + 2
    P = np.zeros((max_state + 2, width))
    P[0, 0] = 1.0
    for m in range(0, max_state + 1):
        row = ftw_dual_row(m, params)
        P[m + 1, row.dest + 1] = row.prob
    return P


def ftw_dual_moment(z: float, m: int, n: int, params: FTWDualParams) -> float:
    """Exact ``E_m[z ** M_n]`` on the finite set of states reachable in n steps."""
    top = m + n * params.J
    P = ftw_dual_matrix(top, params)[:, : top + 2]
    dist = np.zeros(top + 2)
    dist[m + 1] = 1.0
    for _ in range(n):
        dist = dist @ P
    values = np.concatenate([[0.0], float(z) ** np.arange(top + 1)])
    return float(dist @ values)


def _cumulative_table(max_state: int, params: FTWDualParams):
    P = ftw_dual_matrix(max_state, params)
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = np.inf
    dest = np.arange(P.shape[1]) - 1
    return cum, dest


def ftw_dual_simulate(m0: int, params: FTWDualParams, n: int, stream, size: int | None = None) -> np.ndarray:
    """Dual paths by inverse-CDF sampling on the rows (destinations ascending, cemetery first).

    Returns an integer array of shape (n + 1,) or (n + 1, size).
    """
    scalar = size is None
    size = 1 if scalar else int(size)
    top = max(m0, 0) + n * params.J
    cum, dest = _cumulative_table(top, params)
    state = np.full(size, int(m0))
    out = np.empty((n + 1, size), dtype=int)
    out[0] = state
    for k in range(n):
        u = stream.uniform(size)
        rows = cum[state + 1]
        state = dest[(u[:, None] >= rows).sum(axis=1)]
        out[k + 1] = state
    return out[:, 0] if scalar else out


def ftw_event_step(state: np.ndarray, u: np.ndarray, e: np.ndarray, marks: np.ndarray, params: FTWDualParams) -> np.ndarray:
    """One dual step from explicit events.

    ``marks`` is the number of hit lines (Binomial(state, u)). The event type comes from ``e``:
    selection of range ``#{i : sigma_i > e / delta0}`` when ``e < delta0 sigma_0``, mutation to
    type 1 (cemetery) when ``e > 1 - delta0 theta1``, mutation to type 0 when
    ``1 - delta0 theta < e <= 1 - delta0 theta1``, and a plain merger otherwise. Placing the
    events this way makes the step monotone in the line count and in the selection coefficients.
    """
    d0 = params.delta0
    sig = np.asarray(params.sigma, dtype=float)
    hit = marks >= 1
    branch = (e[:, None] < d0 * sig[None, :]).sum(axis=1) if sig.size else np.zeros_like(state)
    kill = e > 1.0 - d0 * params.theta1
    death = (e > 1.0 - d0 * params.theta) & ~kill
    new = state - marks + 1 + branch
    new = np.where(death, state - marks, new)
    new = np.where(kill, CEMETERY, new)
    alive = state != CEMETERY
    return np.where(alive & hit, new, state)


def coupled_dual_paths(m0: int, low: FTWDualParams, high: FTWDualParams, n: int, stream, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Two duals driven by shared marks and a shared event uniform.

    The lines of the first system are identified with a subset of the lines of the second.
    With ``low`` carrying mutation and ``high`` the same selection without mutation, the first
    stays below the second until it is killed; with equal mutation and pointwise smaller
    selection coefficients the order holds throughout.
    """
    if abs(low.delta - high.delta) > 0:
        raise ValueError("both systems need the same delta")
    a = np.full(size, int(m0))
    b = np.full(size, int(m0))
    pa = np.empty((n + 1, size), dtype=int)
    pb = np.empty_like(pa)
    pa[0], pb[0] = a, b
    for k in range(n):
        u = stream.uniform(size) * low.delta
        e = stream.uniform(size)
        shared_n = np.clip(np.minimum(np.where(a == CEMETERY, 0, a), b), 0, None)
        shared = stream.binomial(shared_n, u)
        extra_a = stream.binomial(np.clip(a - shared_n, 0, None), u)
        extra_b = stream.binomial(np.clip(b - shared_n, 0, None), u)
        a = ftw_event_step(a, u, e, shared + extra_a, low)
        b = ftw_event_step(b, u, e, shared + extra_b, high)
        pa[k + 1], pb[k + 1] = a, b
    return pa, pb


def duality_sweep_ftw(z_list, m_list, n_list, params: FTWDualParams, reps: int, master_seed: int = 0) -> list[DualityResult]:
    """Two-sided Monte Carlo on a (z, m, n) grid; each side shares its ensemble across cells."""
    drift = params.drift()
    n_sorted = sorted(set(int(n) for n in n_list))
    forward = {}
    for zi, z in enumerate(z_list):
        forward[z] = _forward_samples(params.delta, drift, z, n_sorted, reps, master_seed, (2, zi))[1]
    out = []
    for mi, m in enumerate(m_list):

        def job(stream, size, m=m):
            return ftw_dual_simulate(m, params, n_sorted[-1], stream, size)[n_sorted].T

        dual = run_blocks(reps, job, master_seed, cell=(3, mi))
        for z in z_list:
            zpow = np.where(dual == CEMETERY, 0.0, float(z) ** np.where(dual == CEMETERY, 0, dual))
            for col, n in enumerate(n_sorted):
                lhs_vals = forward[z][:, col] ** m
                rhs_vals = zpow[:, col]
                out.append(
                    DualityResult(
                        float(z),
                        int(m),
                        int(n),
                        float(lhs_vals.mean()),
                        float(rhs_vals.mean()),
                        float(lhs_vals.std(ddof=1) / np.sqrt(reps)),
                        float(rhs_vals.std(ddof=1) / np.sqrt(reps)),
                    )
                )
    return out


def duality_check_ftw(z: float, m: int, n: int, params: FTWDualParams, reps: int, master_seed: int = 0) -> DualityResult:
    if n == 0:
        return DualityResult(z, m, 0, z**m, z**m, 0.0, 0.0)
    return duality_sweep_ftw([z], [m], [n], params, reps, master_seed)[0]


def absorption_table(m_max: int, delta: float, theta0: float, theta1: float) -> np.ndarray:
    """``h(j) = P_j(hit 0 before the cemetery)`` for j = 0..m_max, mutation only (no selection).

    Without selection the dual never gains lines, so first-step analysis gives a lower
    triangular system ``(I - Q) h = r`` over the transient states 1..m_max.
    """
    if theta0 <= 0 or theta1 <= 0:
        raise ValueError("both mutation rates must be positive")
    params = FTWDualParams(delta, theta0, theta1, (), check=False)
    if m_max == 0:
        return np.ones(1)
    A = np.zeros((m_max, m_max))
    r = np.zeros(m_max)
    for m in range(1, m_max + 1):
        row = ftw_dual_row(m, params).as_dict()
        A[m - 1, m - 1] = 1.0 - row.get(m, 0.0)
        for t, pr in row.items():
            if t == 0:
                r[m - 1] += pr
            elif 1 <= t < m:
                A[m - 1, t - 1] -= pr
    if np.any(np.abs(np.diag(A)) < 1e-300):
        raise np.linalg.LinAlgError("absorption system is singular")
    h = solve_triangular(A, r, lower=True)
    return np.concatenate([[1.0], h])


def absorption_prob_exact(m: int, delta: float, theta0: float, theta1: float) -> float:
    return float(absorption_table(m, delta, theta0, theta1)[m])
