"""Deterministic random streams and replicate orchestration.

Every stream is a Philox counter-based generator whose 128-bit key is the pair
(master seed, replicate index), so any replicate can be regenerated in isolation
and results do not depend on scheduling. Work fans out over a thread pool and the
per-replicate outputs are always reduced in ascending index order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from functools import reduce
from typing import Any, Callable, Sequence

import numpy as np

__all__ = [
    "ReplicateStream",
    "ReplicateError",
    "derive_stream",
    "stream_index",
    "parallel_replicates",
    "run_blocks",
    "set_threads",
    "get_threads",
    "BLOCK_SIZE",
]

_MASK64 = (1 << 64) - 1
BLOCK_SIZE = 1 << 16
_threads = os.cpu_count() or 1


def set_threads(n: int | None) -> None:
    global _threads
    _threads = max(1, int(n)) if n else (os.cpu_count() or 1)


def get_threads() -> int:
    return _threads


class ReplicateStream:
    """Random source addressed by (master_seed, replicate_index)."""

    def __init__(self, master_seed: int, replicate_index: int):
        if master_seed < 0 or replicate_index < 0:
            raise ValueError("seed and index must be nonnegative")
        self.master_seed = int(master_seed) & _MASK64
        self.replicate_index = int(replicate_index) & _MASK64
        key = (self.master_seed << 64) | self.replicate_index
        self._gen = np.random.Generator(np.random.Philox(key=key))

    @property
    def counter(self) -> np.ndarray:
        return self._gen.bit_generator.state["state"]["counter"].copy()

    def uniform(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def gamma(self, shape, size=None) -> np.ndarray:
        return self._gen.standard_gamma(shape, size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def binomial(self, n, p, size=None) -> np.ndarray:
        return self._gen.binomial(n, p, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"ReplicateStream(master_seed={self.master_seed}, replicate_index={self.replicate_index})"


def derive_stream(master_seed: int, replicate_index: int) -> ReplicateStream:
    return ReplicateStream(master_seed, replicate_index)


def stream_index(*parts: int) -> int:
    """Pack small nonnegative labels (experiment cell, block, ...) into one 64-bit replicate index.

    Each part is stored as ``part + 1`` in its own 16-bit digit, so tuples of different
    lengths never collide.
    """
    if len(parts) > 4:
        raise ValueError("at most four index parts fit in 64 bits")
    idx = 0
    for p in parts:
        if not 0 <= p < (1 << 16) - 1:
            raise ValueError("index parts must lie in [0, 2**16 - 1)")
        idx = (idx << 16) | (int(p) + 1)
    return idx


class ReplicateError(RuntimeError):
    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"replicate {index} failed: {cause!r}")
        self.index = index


def parallel_replicates(
    count: int,
    job: Callable[[int, ReplicateStream], Any],
    reducer: Callable[[Any, Any], Any] | None = None,
    initial: Any = None,
    master_seed: int = 0,
    threads: int | None = None,
    index_of: Callable[[int], int] = lambda i: i,
):
    """Run ``job(i, stream_i)`` for i < count and fold the results in ascending i.

    Without a reducer the ordered list of results is returned. With a reducer the
    fold starts from ``initial``; ``count == 0`` returns ``initial``.
    """

    def call(i: int):
        try:
            return job(i, derive_stream(master_seed, index_of(i)))
        except Exception as exc:  # noqa: BLE001 - re-raised with the index attached
            raise ReplicateError(i, exc) from exc

    workers = min(threads or _threads, max(count, 1))
    if workers <= 1:
        results = [call(i) for i in range(count)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(call, range(count)))
    if reducer is None:
        return results
    return reduce(reducer, results, initial)


def run_blocks(
    reps: int,
    job: Callable[[ReplicateStream, int], np.ndarray],
    master_seed: int = 0,
    cell: Sequence[int] = (),
    block_size: int = BLOCK_SIZE,
    threads: int | None = None,
) -> np.ndarray:
    """Vectorised replicates: ``job(stream, size)`` returns arrays whose first axis is the replicate.

    Replicates are cut into fixed-size blocks, each with its own stream, so the output
    is independent of the thread count. ``cell`` labels separate sub-experiments.
    """
    sizes = [min(block_size, reps - s) for s in range(0, reps, block_size)]
    if not sizes:
        return np.empty(0)
    parts = parallel_replicates(
        len(sizes),
        lambda i, st: job(st, sizes[i]),
        master_seed=master_seed,
        threads=threads,
        index_of=lambda i: stream_index(*cell, i),
    )
    return np.concatenate(parts, axis=0)
