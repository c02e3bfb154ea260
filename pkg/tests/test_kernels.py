import os
import subprocess
import sys

import numpy as np
import pytest

from kgalign import kernels

import naive_oracles as naive

BACKENDS = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    previous = kernels.active_backend()
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


def test_segment_sum_matches_naive_loop(backend, rng):
    values = rng.normal(size=(40, 6))
    ids = rng.integers(0, 7, size=40)
    got = kernels.segment_sum(values, ids, 7)
    np.testing.assert_array_equal(got, naive.segment_sum(values, ids, 7))


def test_segment_sum_1d_and_empty_segments(backend):
    values = np.array([1.0, 2.0, 3.0])
    out = kernels.segment_sum(values, [0, 0, 3], 5)
    np.testing.assert_array_equal(out, [3.0, 0.0, 0.0, 3.0, 0.0])


def test_segment_max(backend, rng):
    values = rng.normal(size=30)
    ids = rng.integers(0, 4, size=30)
    got = kernels.segment_max(values, ids, 5)
    for seg in range(4):
        members = values[ids == seg]
        expected = members.max() if members.size else -np.inf
        assert got[seg] == expected
    assert got[4] == -np.inf


def test_scatter_add_rows_accumulates_duplicates(backend):
    out = np.zeros((3, 2))
    kernels.scatter_add_rows(out, [1, 1, 0], np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
    np.testing.assert_array_equal(out, [[5.0, 6.0], [4.0, 6.0], [0.0, 0.0]])


def test_pairwise_manhattan_matches_direct(backend, rng):
    a = rng.normal(size=(9, 5))
    b = rng.normal(size=(7, 5))
    got = kernels.pairwise_manhattan(a, b)
    want = np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_pairwise_manhattan_rejects_width_mismatch(backend):
    with pytest.raises(ValueError):
        kernels.pairwise_manhattan(np.zeros((2, 3)), np.zeros((2, 4)))


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba unavailable")
def test_backends_agree_bitwise(rng):
    values = rng.normal(size=(64, 8))
    ids = rng.integers(0, 9, size=64)
    a = rng.normal(size=(12, 8))
    b = rng.normal(size=(15, 8))
    results = {}
    for name in ("numpy", "numba"):
        kernels.set_backend(name)
        results[name] = (
            kernels.segment_sum(values, ids, 9),
            kernels.segment_max(values[:, 0], ids, 9),
            kernels.pairwise_manhattan(a, b),
        )
    kernels.set_backend("numba")
    for x, y in zip(results["numpy"], results["numba"]):
        np.testing.assert_array_equal(x, y)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.set_backend("gpu")


def test_env_flag_selects_numpy_backend():
    probe = "from kgalign import kernels; print(kernels.active_backend())"
    out = subprocess.run(
        [sys.executable, "-c", probe],
        env={**os.environ, "KGALIGN_NO_NUMBA": "1"},
        capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
