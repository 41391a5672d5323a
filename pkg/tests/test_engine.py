import numpy as np
import pytest

from wfsim import engine
from wfsim.engine import ReplicateError, derive_stream, parallel_replicates, run_blocks, stream_index


def test_streams_are_reproducible_and_distinct():
    a = derive_stream(5, 3).uniform(100)
    b = derive_stream(5, 3).uniform(100)
    c = derive_stream(5, 4).uniform(100)
    d = derive_stream(6, 3).uniform(100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_stream_index_packing():
    assert stream_index() == 0
    assert stream_index(1) != stream_index(0, 1)
    assert stream_index(0) != stream_index(0, 0)
    labels = [()] + [(i,) for i in range(20)] + [(i, j) for i in range(20) for j in range(20)]
    labels += [(i, j, k) for i in range(5) for j in range(5) for k in range(5)]
    assert len({stream_index(*t) for t in labels}) == len(labels)
    with pytest.raises(ValueError):
        stream_index((1 << 16) - 1)
    with pytest.raises(ValueError):
        stream_index(1, 2, 3, 4, 5)


def _job(stream, size):
    return stream.uniform(size) + stream.normal(size)


def test_run_blocks_independent_of_thread_count():
    try:
        engine.set_threads(1)
        one = run_blocks(200_000, _job, master_seed=9, cell=(1, 2))
        engine.set_threads(4)
        four = run_blocks(200_000, _job, master_seed=9, cell=(1, 2))
    finally:
        engine.set_threads(None)
    assert one.shape == (200_000,)
    assert one.tobytes() == four.tobytes()


def test_run_blocks_cells_differ():
    assert not np.array_equal(run_blocks(10, _job, 0, cell=(1,)), run_blocks(10, _job, 0, cell=(2,)))


def test_parallel_replicates_folds_in_index_order():
    out = parallel_replicates(6, lambda i, s: [i], reducer=lambda acc, r: acc + r, initial=[], threads=3)
    assert out == [0, 1, 2, 3, 4, 5]


def test_parallel_replicates_empty_returns_initial():
    assert parallel_replicates(0, lambda i, s: i, reducer=lambda a, b: a + b, initial=42) == 42


def test_parallel_replicates_wraps_failures():
    def job(i, s):
        if i == 2:
            raise RuntimeError("boom")
        return i

    with pytest.raises(ReplicateError) as info:
        parallel_replicates(4, job, threads=2)
    assert info.value.index == 2


def test_set_threads_defaults_to_cores():
    engine.set_threads(3)
    assert engine.get_threads() == 3
    engine.set_threads(None)
    assert engine.get_threads() >= 1
