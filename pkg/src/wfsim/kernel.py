"""The two-branch uniform replacement kernel on allele frequencies.

One step from frequency ``x``: draw ``U ~ Unif[0, 1]``; with probability ``p`` a
fraction ``delta * U`` of the population is replaced by type 0 (``x -> x + (1 - x) delta U``),
otherwise by type 1 (``x -> x (1 - delta U)``).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np
from scipy import sparse

from .stats import GridDensity

__all__ = [
    "KernelParams",
    "replacement_integral",
    "kernel_step",
    "update_sup",
    "update_inf",
    "coupled_step",
    "one_step_mean",
    "invariant_mean",
    "invariant_variance",
    "invariant_moments",
    "InvariantMoments",
    "DensitySolution",
    "DensityNotConverged",
    "invariant_density",
    "density_operator",
    "transfer_operators",
    "push_forward",
]


@dataclass(frozen=True)
class KernelParams:
    delta: float
    p: float

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")


@lru_cache(maxsize=None)
def _replacement_integral_exact(n: int, k: int, delta: Fraction) -> Fraction:
    # (1/d) * int_0^d x^k (1-x)^(n-k) dx, expanded binomially in exact rationals
    total = Fraction(0)
    for i in range(n - k + 1):
        total += (-1) ** i * comb(n - k, i) * delta ** (k + i + 1) / (k + i + 1)
    return total / delta


def replacement_integral(n: int, k: int, delta: float) -> float:
    """Average of ``x**k (1-x)**(n-k)`` over ``x`` uniform on ``[0, delta]``.

    Evaluated exactly in rational arithmetic (``delta`` is a dyadic rational as a float)
    and rounded once, so there is no cancellation error for large ``n``.
    """
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    return float(_replacement_integral_exact(int(n), int(k), Fraction(delta)))


def update_sup(q, delta, y, u, v):
    """Single-parameter update: type-0 replacement when ``v > 1 - q``."""
    y = np.asarray(y, dtype=float)
    return np.where(v <= 1.0 - np.asarray(q), y * (1.0 - delta * u), y + delta * u * (1.0 - y))


def update_inf(p, q, delta, x, u, v, w):
    """Update for the smaller parameter ``p <= q`` sharing ``(u, v)`` with :func:`update_sup`.

    Type-0 replacement happens only when ``v > 1 - q`` and ``w <= p / q`` (ratio taken as 1 when q = 0).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(p > q):
        raise ValueError("update_inf requires p <= q")
    ratio = np.divide(p, q, out=np.ones(np.broadcast(p, q).shape), where=q > 0)
    x = np.asarray(x, dtype=float)
    up = (v > 1.0 - q) & (w <= ratio)
    return np.where(up, x + delta * u * (1.0 - x), x * (1.0 - delta * u))


def kernel_step(delta: float, p, x, stream) -> np.ndarray:
    """Sample one kernel step for every entry of ``x`` (``p`` may be per-entry)."""
    x = np.asarray(x, dtype=float)
    u = stream.uniform(x.shape)
    v = 1.0 - stream.uniform(x.shape)
    return update_sup(p, delta, x, u, v)


def coupled_step(x, y, p, q, delta: float, stream):
    """Monotone coupling of one step from ``x`` under parameter ``p`` and ``y`` under ``q``.

    The coordinate with the smaller parameter gets :func:`update_inf`, the other
    :func:`update_sup`; both share the same uniforms.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast(x, y, p, q).shape
    u = stream.uniform(shape)
    # v, w in (0, 1]: a zero probability never fires and probability one always does
    v = 1.0 - stream.uniform(shape)
    w = 1.0 - stream.uniform(shape)
    p = np.broadcast_to(np.asarray(p, dtype=float), shape)
    q = np.broadcast_to(np.asarray(q, dtype=float), shape)
    lo = np.minimum(p, q)
    hi = np.maximum(p, q)
    inf_x = update_inf(lo, hi, delta, x, u, v, w)
    sup_x = update_sup(hi, delta, x, u, v)
    inf_y = update_inf(lo, hi, delta, y, u, v, w)
    sup_y = update_sup(hi, delta, y, u, v)
    p_small = p <= q
    return np.where(p_small, inf_x, sup_x), np.where(p_small, sup_y, inf_y)


def one_step_mean(delta: float, p, x):
    return np.asarray(x) + 0.5 * delta * (np.asarray(p) - np.asarray(x))


def invariant_mean(delta: float, p: float) -> float:
    return p


def invariant_variance(delta: float, p: float) -> float:
    return delta * p * (1.0 - p) / (3.0 - delta)


@dataclass(frozen=True)
class InvariantMoments:
    delta: float
    p: float
    moments: np.ndarray


def invariant_moments(delta: float, p: float, k_max: int) -> InvariantMoments:
    """Raw moments 0..k_max of the invariant law, filled by the exact moment recursion.

    Stationarity of E[X^k] gives
    ``m_k (1 - I(k, 0)) = p * sum_{j<k} C(k, j) I(k, k - j) m_j`` with ``I`` the
    replacement integral.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    KernelParams(delta, p)
    m = np.zeros(k_max + 1)
    m[0] = 1.0
    for k in range(1, k_max + 1):
        acc = sum(comb(k, j) * replacement_integral(k, k - j, delta) * m[j] for j in range(k))
        m[k] = p * acc / (1.0 - replacement_integral(k, 0, delta))
    return InvariantMoments(delta, p, m)


class DensityNotConverged(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"density iteration did not converge after {iterations} sweeps (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class DensitySolution:
    density: GridDensity
    iterations: int
    residual: float


def _log_cell_integrals(lo: np.ndarray, hi: np.ndarray, edges: np.ndarray, transform) -> np.ndarray:
    """Matrix of exact integrals of the singular weight over [lo_i, hi_i] intersected with cell j."""
    a = np.maximum(lo[:, None], edges[None, :-1])
    b = np.minimum(hi[:, None], edges[None, 1:])
    out = np.zeros_like(a)
    mask = b > a
    out[mask] = transform(a[mask], b[mask])
    return out


def density_operator(delta: float, p: float, grid_size: int) -> np.ndarray:
    """Midpoint-collocation matrix of the stationary density equation.

    Row i maps cell values g_j to the right-hand side at midpoint z_i; the 1/x and
    1/(1-x) weights are integrated exactly over each cell.
    """
    edges = np.linspace(0.0, 1.0, grid_size + 1)
    z = (np.arange(grid_size) + 0.5) / grid_size
    down_hi = np.minimum(z / (1.0 - delta), 1.0)
    up_lo = np.maximum((z - delta) / (1.0 - delta), 0.0)
    down = _log_cell_integrals(z, down_hi, edges, lambda a, b: np.log(b / a))
    up = _log_cell_integrals(up_lo, z, edges, lambda a, b: np.log1p(-a) - np.log1p(-b))
    return ((1.0 - p) * down + p * up) / delta


@lru_cache(maxsize=8)
def transfer_operators(delta: float, grid_size: int) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Cell-to-cell transfer matrices of the type-1 and type-0 replacement branches.

    Entry (j, i) is the probability that a point uniform on cell j lands in cell i after
    ``x -> x (1 - delta U)`` (first matrix) or ``x -> x + (1 - x) delta U`` (second).
    The double integral over source and target cells is done in closed form: on each
    piece between the breakpoints c, d, c/(1-delta), d/(1-delta) the overlap length is
    affine in x and the integrand is (A + B x) / (delta x).
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    n = int(grid_size)
    h = 1.0 / n
    j = np.arange(n)
    lo = np.floor(j * h * (1.0 - delta) / h).astype(int)
    counts = j - lo + 1
    src = np.repeat(j, counts)
    tgt = np.concatenate([np.arange(l, k + 1) for l, k in zip(lo, j)])
    a, b = src * h, (src + 1) * h
    c, d = tgt * h, (tgt + 1) * h
    keep = 1.0 - delta
    with np.errstate(divide="ignore", invalid="ignore"):
        c_shift = np.where(keep > 0, c / keep, np.inf)
        d_shift = np.where(keep > 0, d / keep, np.inf)
    pts = np.stack([a, np.clip(c, a, b), np.clip(d, a, b), np.clip(c_shift, a, b), np.clip(d_shift, a, b), b], axis=1)
    pts.sort(axis=1)
    x1, x2 = pts[:, :-1], pts[:, 1:]
    xm = 0.5 * (x1 + x2)
    upper_is_x = xm < d[:, None]
    lower_is_scaled = xm * keep > c[:, None]
    const = np.where(upper_is_x, 0.0, d[:, None]) - np.where(lower_is_scaled, 0.0, c[:, None])
    slope = np.where(upper_is_x, 1.0, 0.0) - np.where(lower_is_scaled, keep, 0.0)
    active = (x2 > x1) & (const + slope * xm > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(active & (const != 0), const * np.log(np.where(x1 > 0, x2 / x1, 1.0)), 0.0)
    piece = np.where(active, logs + slope * (x2 - x1), 0.0)
    vals = piece.sum(axis=1) / (delta * h)
    down = sparse.csr_matrix((vals, (src, tgt)), shape=(n, n))
    down.sum_duplicates()
    up = sparse.csr_matrix((vals, (n - 1 - src, n - 1 - tgt)), shape=(n, n))
    return down, up


def push_forward(masses: np.ndarray, p, delta: float) -> np.ndarray:
    """Cell masses after one step; ``p`` is the type-0 probability per source cell."""
    down, up = transfer_operators(float(delta), masses.size)
    p = np.broadcast_to(np.asarray(p, dtype=float), masses.shape)
    return down.T @ ((1.0 - p) * masses) + up.T @ (p * masses)


def invariant_density(
    delta: float,
    p: float,
    grid_size: int = 2048,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    scheme: str = "cell",
) -> DensitySolution:
    """Stationary density by Picard iteration from the uniform density, renormalised every sweep.

    ``scheme="cell"`` iterates the cell-averaged operator (exact transfer of piecewise-constant
    densities); ``scheme="midpoint"`` collocates the equation at the cell midpoints. Both
    integrate the 1/x and 1/(1-x) singular weights exactly per cell; the cell scheme stays
    accurate when the density has a strong endpoint singularity (small p or 1 - p).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    if scheme == "cell":
        down, up = transfer_operators(float(delta), grid_size)
        op = ((1.0 - p) * down + p * up).T.tocsr()
    elif scheme == "midpoint":
        op = density_operator(delta, p, grid_size)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    g = np.ones(grid_size)
    residual = np.inf
    for it in range(1, max_iter + 1):
        new = op @ g
        new *= grid_size / new.sum()
        residual = float(np.max(np.abs(new - g)))
        g = new
        if residual < tol:
            return DensitySolution(GridDensity(g), it, residual)
    raise DensityNotConverged(max_iter, residual)
