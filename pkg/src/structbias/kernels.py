"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

The public name (``pair_positions``, ``lcs_length`` ...) dispatches on
``structbias._backend.USE_NUMBA``. The ``*_numba`` and ``*_numpy`` variants
are exported so tests and the benchmark can run both on the same inputs.
"""

import numpy as np

from structbias._backend import USE_NUMBA, njit


# --------------------------------------------------------------------------
# all-pairs tree positions

@njit
def _pair_positions_nb(parent, depth):
    n = parent.shape[0]
    path = np.zeros((n, n), dtype=np.int64)
    lvl = np.zeros((n, n), dtype=np.int64)
    for x in range(n):
        for y in range(x + 1, n):
            a = x
            b = y
            while depth[a] > depth[b]:
                a = parent[a]
            while depth[b] > depth[a]:
                b = parent[b]
            while a != b:
                a = parent[a]
                b = parent[b]
            d = depth[x] + depth[y] - 2 * depth[a]
            # ids are pre-order, so x < y means x comes first in the text
            path[x, y] = d
            path[y, x] = -d
            lvl[x, y] = depth[x] - depth[y]
            lvl[y, x] = depth[y] - depth[x]
    return path, lvl


def pair_positions_numba(parent, depth):
    parent = np.ascontiguousarray(parent, dtype=np.int64)
    depth = np.ascontiguousarray(depth, dtype=np.int64)
    return _pair_positions_nb(parent, depth)


def pair_positions_numpy(parent, depth):
    parent = np.asarray(parent, dtype=np.int64)
    depth = np.asarray(depth, dtype=np.int64)
    n = parent.shape[0]
    anc = np.eye(n, dtype=np.int64)
    # parents always have smaller pre-order ids, so one forward sweep suffices
    for x in range(1, n):
        anc[x] += anc[parent[x]]
    common = anc @ anc.T
    lca_depth = common - 1
    dist = depth[:, None] + depth[None, :] - 2 * lca_depth
    order = np.sign(np.arange(n)[None, :] - np.arange(n)[:, None])
    path = dist * order
    lvl = depth[:, None] - depth[None, :]
    return path, lvl


def pair_positions(parent, depth):
    """Signed path length and level difference for every ordered node pair.

    ``parent`` holds the parent id of each node (-1 for the root) and nodes
    must be numbered in pre-order. Returns two ``(n, n)`` int64 arrays.
    """
    if USE_NUMBA:
        return pair_positions_numba(parent, depth)
    return pair_positions_numpy(parent, depth)


# --------------------------------------------------------------------------
# token-level gather of a section-level index

@njit
def _gather_pairs_nb(owner, table):
    n = owner.shape[0]
    out = np.empty((n, n), dtype=table.dtype)
    for i in range(n):
        si = owner[i]
        for j in range(n):
            out[i, j] = table[si, owner[j]]
    return out


def gather_pairs_numba(owner, table):
    return _gather_pairs_nb(np.ascontiguousarray(owner, dtype=np.int64),
                            np.ascontiguousarray(table))


def gather_pairs_numpy(owner, table):
    owner = np.asarray(owner, dtype=np.int64)
    return np.asarray(table)[owner[:, None], owner[None, :]]


def gather_pairs(owner, table):
    """``out[i, j] = table[owner[i], owner[j]]``."""
    if USE_NUMBA:
        return gather_pairs_numba(owner, table)
    return gather_pairs_numpy(owner, table)


# --------------------------------------------------------------------------
# scatter-add used by the bias-table gradient

@njit
def _scatter_add_nb(index, values, size):
    out = np.zeros(size, dtype=np.float64)
    for k in range(index.shape[0]):
        out[index[k]] += values[k]
    return out


def scatter_add_numba(index, values, size):
    index = np.ascontiguousarray(index, dtype=np.int64).ravel()
    values = np.ascontiguousarray(values, dtype=np.float64).ravel()
    return _scatter_add_nb(index, values, size)


def scatter_add_numpy(index, values, size):
    index = np.asarray(index, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=np.float64).ravel()
    return np.bincount(index, weights=values, minlength=size)[:size]


def scatter_add(index, values, size):
    """Sum ``values`` into ``size`` buckets named by ``index``."""
    if USE_NUMBA:
        return scatter_add_numba(index, values, size)
    return scatter_add_numpy(index, values, size)


# --------------------------------------------------------------------------
# longest common subsequence

@njit
def _lcs_nb(a, b):
    m = b.shape[0]
    prev = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(a.shape[0]):
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                cur[j + 1] = prev[j] + 1
            elif prev[j + 1] >= cur[j]:
                cur[j + 1] = prev[j + 1]
            else:
                cur[j + 1] = cur[j]
        prev, cur = cur, prev
    return prev[m]


def lcs_length_numba(a, b):
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return 0
    return int(_lcs_nb(a, b))


def lcs_length_numpy(a, b):
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return 0
    prev = np.zeros(b.shape[0] + 1, dtype=np.int64)
    for ai in a:
        hit = (b == ai).astype(np.int64)
        # row update as a running max: cur[j] = max_k<=j max(prev[k], prev[k-1] + hit[k])
        cand = np.maximum(prev[1:], prev[:-1] + hit)
        cur = np.empty_like(prev)
        cur[0] = 0
        np.maximum.accumulate(cand, out=cur[1:])
        prev = cur
    return int(prev[-1])


def lcs_length(a, b):
    """Length of the longest common subsequence of two int sequences."""
    if USE_NUMBA:
        return lcs_length_numba(a, b)
    return lcs_length_numpy(a, b)


# --------------------------------------------------------------------------
# longest shared run starting at each summary position

@njit
def _match_lengths_nb(s, d):
    n = s.shape[0]
    m = d.shape[0]
    best = np.zeros(n, dtype=np.int64)
    nxt = np.zeros(m + 1, dtype=np.int64)
    row = np.zeros(m + 1, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        top = 0
        si = s[i]
        for j in range(m):
            if si == d[j]:
                row[j] = nxt[j + 1] + 1
                if row[j] > top:
                    top = row[j]
            else:
                row[j] = 0
        best[i] = top
        nxt, row = row, nxt
    return best


def match_lengths_numba(summary, document):
    s = np.ascontiguousarray(summary, dtype=np.int64)
    d = np.ascontiguousarray(document, dtype=np.int64)
    if s.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return _match_lengths_nb(s, d)


def match_lengths_numpy(summary, document):
    s = np.asarray(summary, dtype=np.int64)
    d = np.asarray(document, dtype=np.int64)
    n = s.shape[0]
    best = np.zeros(n, dtype=np.int64)
    if n == 0 or d.shape[0] == 0:
        return best
    nxt = np.zeros(d.shape[0] + 1, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        row = np.zeros(d.shape[0] + 1, dtype=np.int64)
        row[:-1] = np.where(d == s[i], nxt[1:] + 1, 0)
        best[i] = row.max()
        nxt = row
    return best


def match_lengths(summary, document):
    """For each summary position, the longest run shared with the document.

    ``out[i]`` is the largest ``k`` such that ``summary[i:i+k]`` occurs as a
    contiguous slice of ``document``.
    """
    if USE_NUMBA:
        return match_lengths_numba(summary, document)
    return match_lengths_numpy(summary, document)
