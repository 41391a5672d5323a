"""Mean-field host systems: M frequencies updated independently given their empirical law."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

from .chains import _check_range
from .engine import derive_stream, run_blocks, stream_index
from .kernel import coupled_step, kernel_step
from .nonlinear import LawFlow, NonLinearDrift, _law_at, law_flow, nonlinear_chain_simulate
from .stats import EmpiricalLaw, GridDensity, loglog_slope, w1_empirical, w1_sample_grid

__all__ = [
    "HostSystemState",
    "ScalingParams",
    "system_step",
    "simulate_system",
    "TwoLevelResult",
    "twolevel_coupled_run",
    "ChaosResult",
    "chaos_rate_experiment",
    "glivenko_cantelli_rate",
    "scaled_system_run",
]

# elements per vectorised block (replicates x hosts)
_BLOCK_ELEMENTS = 1 << 20


@dataclass
class HostSystemState:
    """Host frequencies along the last axis; leading axes index independent systems."""

    frequencies: np.ndarray
    generation: int = 0

    @property
    def M(self) -> int:
        return self.frequencies.shape[-1]

    def empirical(self) -> EmpiricalLaw:
        return EmpiricalLaw(self.frequencies)


@dataclass(frozen=True)
class ScalingParams:
    N: int
    M_of_N: Callable[[int], int] = lambda N: N

    @property
    def delta(self) -> float:
        return float(np.sqrt(3.0 / self.N))

    @property
    def M(self) -> int:
        return int(self.M_of_N(self.N))

    def generations(self, t: float) -> int:
        return int(np.floor(self.N * t + 1e-9))


def _drift_values(drift: NonLinearDrift, z: np.ndarray, law) -> np.ndarray:
    p = np.asarray(drift(z, law), dtype=float)
    p = np.broadcast_to(p, z.shape)
    _check_range(p, z)
    return p


def system_step(state: HostSystemState, delta: float, drift: NonLinearDrift, stream) -> HostSystemState:
    """Freeze the empirical law once, then update every host with its own uniforms."""
    z = state.frequencies
    p = _drift_values(drift, z, state.empirical())
    return HostSystemState(kernel_step(delta, p, z, stream), state.generation + 1)


def simulate_system(z0: np.ndarray, delta: float, drift: NonLinearDrift, n: int, stream) -> HostSystemState:
    state = HostSystemState(np.asarray(z0, dtype=float))
    for _ in range(n):
        state = system_step(state, delta, drift, stream)
    return state


def _block_size(M: int) -> int:
    return max(1, _BLOCK_ELEMENTS // max(M, 1))


@dataclass
class TwoLevelResult:
    M: int
    gap: np.ndarray
    gap_stderr: np.ndarray
    system_coord1: np.ndarray
    chain_coord1: np.ndarray
    flow: LawFlow


def twolevel_coupled_run(
    M: int,
    delta: float,
    drift: NonLinearDrift,
    mu0: GridDensity,
    n: int,
    reps: int,
    master_seed: int = 0,
    flow: LawFlow | None = None,
    cell: Sequence[int] = (),
) -> TwoLevelResult:
    """Host system coupled host-by-host to M independent non-linear chains.

    Both start from the same i.i.d. draws from ``mu0``; each generation host i and chain i
    share (u, v, w) in the monotone coupled step. The gap at generation k is E|Z_k,i - Zbar_k,i|,
    averaged over replicates and (by exchangeability) over hosts.
    """
    flow = flow or law_flow(mu0, delta, drift, n, keep=not drift.mean_only)

    def job(stream, size):
        z = mu0.quantile(stream.uniform((size, M)))
        zbar = z.copy()
        gaps = np.empty((size, n + 1))
        gaps[:, 0] = 0.0
        for k in range(n):
            p = _drift_values(drift, z, EmpiricalLaw(z))
            q = _drift_values(drift, zbar, _law_at(flow, k, drift))
            z, zbar = coupled_step(z, zbar, p, q, delta, stream)
            gaps[:, k + 1] = np.abs(z - zbar).mean(axis=1)
        return np.concatenate([gaps, z[:, :1], zbar[:, :1]], axis=1)

    out = run_blocks(reps, job, master_seed, cell=tuple(cell) + (M,), block_size=_block_size(M))
    gaps = out[:, : n + 1]
    se = gaps.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros(n + 1)
    return TwoLevelResult(M, gaps.mean(axis=0), se, out[:, n + 1], out[:, n + 2], flow)


@dataclass
class ChaosResult:
    M: np.ndarray
    n: int
    w1: np.ndarray
    w1_stderr: np.ndarray
    w1_floor: np.ndarray
    gap: np.ndarray
    gap_stderr: np.ndarray
    slope_w1: float
    slope_gap: float

    def rows(self) -> list[dict]:
        return [
            {"M": int(m), "n": self.n, "w1": float(w), "stderr": float(s), "coupling_gap": float(g), "gap_stderr": float(gs)}
            for m, w, s, g, gs in zip(self.M, self.w1, self.w1_stderr, self.gap, self.gap_stderr)
        ]


def _bootstrap_w1(sample: np.ndarray, law: GridDensity, stream, rounds: int = 50) -> float:
    vals = [w1_sample_grid(sample[stream.integers(0, sample.size, sample.size)], law) for _ in range(rounds)]
    return float(np.std(vals, ddof=1))


def chaos_rate_experiment(
    M_list: Sequence[int],
    delta: float,
    drift: NonLinearDrift,
    mu0: GridDensity,
    n: int,
    reps: int,
    master_seed: int = 0,
) -> ChaosResult:
    """W1 between host 1's law (across replicates) and the non-linear law at generation n, per M.

    Also reports the coupled host-to-chain gap, which upper-bounds that W1, and the W1 of
    ``reps`` exact draws from the non-linear law (the Monte Carlo floor of the estimator).
    """
    flow = law_flow(mu0, delta, drift, n, keep=True)
    target = flow.densities[-1]
    w1, se, floor, gap, gse = [], [], [], [], []
    for i, M in enumerate(M_list):
        res = twolevel_coupled_run(int(M), delta, drift, mu0, n, reps, master_seed, flow=flow, cell=(4,))
        boot = derive_stream(master_seed, stream_index(5, i))
        w1.append(w1_sample_grid(res.system_coord1, target))
        se.append(_bootstrap_w1(res.system_coord1, target, boot))
        floor.append(w1_sample_grid(target.quantile(boot.uniform(reps)), target))
        gap.append(res.gap[-1])
        gse.append(res.gap_stderr[-1])
    M_arr = np.asarray(M_list, dtype=float)
    return ChaosResult(
        np.asarray(M_list),
        n,
        np.array(w1),
        np.array(se),
        np.array(floor),
        np.array(gap),
        np.array(gse),
        loglog_slope(M_arr, w1),
        loglog_slope(M_arr, gap),
    )


def glivenko_cantelli_rate(M_list: Sequence[int], a: float, b: float, reps: int, master_seed: int = 0) -> tuple[np.ndarray, float]:
    """Mean W1 between M i.i.d. Beta(a, b) draws and the Beta law itself, with the log-log slope."""
    grid = GridDensity.from_pdf(lambda x: sps.beta(a, b).pdf(x), 4096)
    means = []
    for i, M in enumerate(M_list):
        st = derive_stream(master_seed, stream_index(6, i))
        ga = st.gamma(a, (reps, M))
        gb = st.gamma(b, (reps, M))
        draws = ga / (ga + gb)
        means.append(np.mean([w1_sample_grid(row, grid) for row in draws]))
    means = np.array(means)
    return means, loglog_slope(np.asarray(M_list, float), means)


def scaled_system_run(
    scaling: ScalingParams,
    drift: NonLinearDrift,
    mu0: GridDensity,
    t_end: float,
    reps: int,
    master_seed: int = 0,
    pool_hosts: bool = True,
    cell: Sequence[int] = (),
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal samples of the N-scaled host system and of the N-scaled non-linear chain.

    With ``pool_hosts`` the ``reps`` host samples are all hosts of ceil(reps / M) independent
    systems (hosts are exchangeable); otherwise host 1 of ``reps`` systems. The non-linear
    chain runs against its grid law flow.
    """
    delta, M, n = scaling.delta, scaling.M, scaling.generations(t_end)
    systems = -(-reps // M) if pool_hosts else reps

    def job(stream, size):
        z = mu0.quantile(stream.uniform((size, M)))
        state = simulate_system(z, delta, drift, n, stream)
        return state.frequencies if pool_hosts else state.frequencies[:, :1]

    hosts = run_blocks(systems, job, master_seed, cell=tuple(cell) + (7,), block_size=_block_size(M)).ravel()[:reps]

    flow = law_flow(mu0, delta, drift, n, keep=not drift.mean_only)

    def chain_job(stream, size):
        path, _ = nonlinear_chain_simulate(mu0, delta, drift, n, stream, size, flow=flow)
        return path.terminal

    chain = run_blocks(reps, chain_job, master_seed, cell=tuple(cell) + (8,))
    return hosts, chain
