"""Edge-level array kernels shared by the autodiff ops and graph measures.

The message-passing layers spend most of their time gathering per-edge rows,
scaling them, and summing them back per target node (forward and backward).
Those inner loops are compiled with numba when it is importable; setting
``PERCADE_NO_NUMBA=1`` selects the pure-numpy fallbacks instead.  Both
variants accumulate in edge order, so results are bitwise identical across
backends.  ``benchmarks/kernel_bench.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("PERCADE_NO_NUMBA", "").strip().lower()
NUMBA_REQUESTED = _flag not in ("1", "true", "yes")

try:
    if not NUMBA_REQUESTED:
        raise ImportError("numba disabled via PERCADE_NO_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    njit = None
    NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# pure-numpy reference implementations

def segment_sum_rows_numpy(vals: np.ndarray, seg: np.ndarray, n: int) -> np.ndarray:
    """Sum rows of ``vals`` (m, d) into ``n`` buckets given by ``seg``."""
    out = np.zeros((n, vals.shape[1]), dtype=np.float64)
    np.add.at(out, seg, vals)
    return out


def segment_sum_vec_numpy(vals: np.ndarray, seg: np.ndarray, n: int) -> np.ndarray:
    """Sum entries of ``vals`` (m,) into ``n`` buckets given by ``seg``."""
    out = np.zeros(n, dtype=np.float64)
    np.add.at(out, seg, vals)
    return out


def segment_max_vec_numpy(vals: np.ndarray, seg: np.ndarray, n: int) -> np.ndarray:
    """Per-bucket maximum; empty buckets get -inf."""
    out = np.full(n, -np.inf, dtype=np.float64)
    np.maximum.at(out, seg, vals)
    return out


def scale_rows_numpy(rows: np.ndarray, s: np.ndarray) -> np.ndarray:
    return rows * s[:, None]


def triangles_per_node_numpy(indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Triangles through each node of an undirected graph.

    ``indices`` must hold sorted neighbor lists (CSR).  Counts each triangle
    once per incident node.
    """
    n = indptr.shape[0] - 1
    out = np.zeros(n, dtype=np.int64)
    neigh = [set(indices[indptr[v]:indptr[v + 1]].tolist()) for v in range(n)]
    for v in range(n):
        pairs = 0
        for u in indices[indptr[v]:indptr[v + 1]]:
            pairs += len(neigh[v] & neigh[u])
        out[v] = pairs // 2
    return out


# ---------------------------------------------------------------------------
# numba variants

if NUMBA_ENABLED:

    @njit(cache=True)
    def _segment_sum_rows_jit(vals, seg, out):
        for i in range(vals.shape[0]):
            t = seg[i]
            for j in range(vals.shape[1]):
                out[t, j] += vals[i, j]

    @njit(cache=True)
    def _segment_sum_vec_jit(vals, seg, out):
        for i in range(vals.shape[0]):
            out[seg[i]] += vals[i]

    @njit(cache=True)
    def _segment_max_vec_jit(vals, seg, out):
        for i in range(vals.shape[0]):
            t = seg[i]
            if vals[i] > out[t]:
                out[t] = vals[i]

    @njit(cache=True)
    def _scale_rows_jit(rows, s, out):
        for i in range(rows.shape[0]):
            for j in range(rows.shape[1]):
                out[i, j] = rows[i, j] * s[i]

    @njit(cache=True)
    def _triangles_jit(indptr, indices, out):
        n = indptr.shape[0] - 1
        for v in range(n):
            pairs = 0
            for ui in range(indptr[v], indptr[v + 1]):
                u = indices[ui]
                # sorted-list intersection |N(v) & N(u)|
                a = indptr[v]
                b = indptr[u]
                while a < indptr[v + 1] and b < indptr[u + 1]:
                    x = indices[a]
                    y = indices[b]
                    if x == y:
                        pairs += 1
                        a += 1
                        b += 1
                    elif x < y:
                        a += 1
                    else:
                        b += 1
            out[v] = pairs // 2

    def segment_sum_rows_numba(vals, seg, n):
        out = np.zeros((n, vals.shape[1]), dtype=np.float64)
        _segment_sum_rows_jit(vals, seg, out)
        return out

    def segment_sum_vec_numba(vals, seg, n):
        out = np.zeros(n, dtype=np.float64)
        _segment_sum_vec_jit(vals, seg, out)
        return out

    def segment_max_vec_numba(vals, seg, n):
        out = np.full(n, -np.inf, dtype=np.float64)
        _segment_max_vec_jit(vals, seg, out)
        return out

    def scale_rows_numba(rows, s):
        out = np.empty_like(rows)
        _scale_rows_jit(rows, s, out)
        return out

    def triangles_per_node_numba(indptr, indices):
        out = np.zeros(indptr.shape[0] - 1, dtype=np.int64)
        _triangles_jit(indptr, indices, out)
        return out

    segment_sum_rows = segment_sum_rows_numba
    segment_sum_vec = segment_sum_vec_numba
    segment_max_vec = segment_max_vec_numba
    scale_rows = scale_rows_numba
    triangles_per_node = triangles_per_node_numba
else:
    segment_sum_rows_numba = None
    segment_sum_vec_numba = None
    segment_max_vec_numba = None
    scale_rows_numba = None
    triangles_per_node_numba = None

    segment_sum_rows = segment_sum_rows_numpy
    segment_sum_vec = segment_sum_vec_numpy
    segment_max_vec = segment_max_vec_numpy
    scale_rows = scale_rows_numpy
    triangles_per_node = triangles_per_node_numpy
