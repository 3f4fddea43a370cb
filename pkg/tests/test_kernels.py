import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from structbias import kernels
from structbias._backend import HAVE_NUMBA

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def random_parent(rng, n):
    parent = np.full(n, -1, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    for k in range(1, n):
        parent[k] = rng.integers(0, k)
        depth[k] = depth[parent[k]] + 1
    return parent, depth


def lcs_dp(a, b):
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a)):
        for j in range(len(b)):
            t[i + 1][j + 1] = t[i][j] + 1 if a[i] == b[j] else max(t[i][j + 1], t[i + 1][j])
    return t[-1][-1]


def match_brute(s, d):
    out = []
    for i in range(len(s)):
        best = 0
        for k in range(1, len(s) - i + 1):
            piece = list(s[i:i + k])
            if any(list(d[j:j + k]) == piece for j in range(len(d) - k + 1)):
                best = k
            else:
                break
        out.append(best)
    return out


@needs_numba
@pytest.mark.parametrize("n", [1, 2, 7, 40])
def test_pair_positions_backends_agree(n):
    parent, depth = random_parent(np.random.default_rng(n), n)
    a = kernels.pair_positions_numba(parent, depth)
    b = kernels.pair_positions_numpy(parent, depth)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


@needs_numba
def test_gather_and_scatter_backends_agree():
    rng = np.random.default_rng(0)
    owner = rng.integers(0, 9, size=30)
    table = rng.integers(0, 100, size=(9, 9))
    assert np.array_equal(kernels.gather_pairs_numba(owner, table),
                          kernels.gather_pairs_numpy(owner, table))
    idx = rng.integers(0, 17, size=(3, 5, 5))
    vals = rng.normal(size=(3, 5, 5))
    a = kernels.scatter_add_numba(idx, vals, 17)
    b = kernels.scatter_add_numpy(idx, vals, 17)
    assert np.allclose(a, b, rtol=0, atol=1e-12)
    ref = np.zeros(17)
    np.add.at(ref, idx.ravel(), vals.ravel())
    assert np.allclose(a, ref, rtol=0, atol=1e-12)


seqs = st.lists(st.integers(0, 4), max_size=30)


@settings(max_examples=200, deadline=None)
@given(seqs, seqs)
def test_lcs_against_dp(a, b):
    want = lcs_dp(a, b)
    assert kernels.lcs_length_numpy(a, b) == want
    if HAVE_NUMBA:
        assert kernels.lcs_length_numba(a, b) == want


@settings(max_examples=200, deadline=None)
@given(seqs, seqs)
def test_match_lengths_against_brute_force(s, d):
    want = match_brute(s, d)
    assert kernels.match_lengths_numpy(s, d).tolist() == want
    if HAVE_NUMBA:
        assert kernels.match_lengths_numba(s, d).tolist() == want


def test_env_flag_selects_numpy():
    code = "from structbias._backend import backend_name; print(backend_name())"
    env = dict(os.environ, STRUCTBIAS_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "numpy"
