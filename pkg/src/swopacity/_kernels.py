"""Hot inner loops, each with a numba and a pure-numpy implementation.

Set ``SWOPACITY_NUMBA=0`` to force the numpy path.  Work sizes below
``SWOPACITY_NUMBA_MIN_WORK`` (default 20000 element comparisons) also take
the numpy path, since the jit call overhead dominates there.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("SWOPACITY_NUMBA", "1").strip().lower()
MIN_WORK = int(os.environ.get("SWOPACITY_NUMBA_MIN_WORK", "20000"))

try:
    if _flag in ("0", "false", "off", "no"):
        raise ImportError("disabled by SWOPACITY_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

_CHUNK = 1 << 22


def _use_numba(backend: str | None, work: int) -> bool:
    if backend == "numpy":
        return False
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is unavailable or disabled")
        return True
    return HAVE_NUMBA and work >= MIN_WORK


# ---------------------------------------------------------------- ball query

def ball_pairs_numpy(images: np.ndarray, grid: np.ndarray, radius: float):
    """All (i, g) with ``max_d |images[i, d] - grid[g, d]| <= radius``."""
    images = np.ascontiguousarray(images, dtype=np.float64)
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    k, m = images.shape[0], grid.shape[0]
    if k == 0 or m == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    rows = max(1, _CHUNK // max(1, m * images.shape[1]))
    out_i, out_g = [], []
    for s in range(0, k, rows):
        block = images[s:s + rows]
        dist = np.abs(block[:, None, :] - grid[None, :, :]).max(axis=2)
        ii, gg = np.nonzero(dist <= radius)
        out_i.append(ii + s)
        out_g.append(gg)
    return np.concatenate(out_i).astype(np.int64), np.concatenate(out_g).astype(np.int64)


def close_matrix_numpy(a: np.ndarray, b: np.ndarray, radius: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(len(a), -1)
    b = np.asarray(b, dtype=np.float64).reshape(len(b), -1)
    if a.shape[1] == 0:
        return np.ones((a.shape[0], b.shape[0]), dtype=bool)
    return np.abs(a[:, None, :] - b[None, :, :]).max(axis=2) <= radius


def expand_beliefs_numpy(post: np.ndarray, close: np.ndarray, z: np.ndarray, beliefs: np.ndarray):
    """Children of belief nodes.

    For each parent ``k`` (tracked state ``z[k]``, belief row ``beliefs[k]``)
    and each successor ``s`` of ``z[k]``, the child belief is
    ``post(beliefs[k]) & close[s]``.  Returns (parent, successor, child rows).
    """
    if len(z) == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty((0, post.shape[0]), bool)
    post_b = (beliefs.astype(np.uint8) @ post.astype(np.uint8)) > 0
    parent, succ = np.nonzero(post[z])
    children = post_b[parent] & close[succ]
    return parent.astype(np.int64), succ.astype(np.int64), children


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _ball_pairs_nb(images, grid, radius):
        k, m, n = images.shape[0], grid.shape[0], images.shape[1]
        counts = np.zeros(k, np.int64)
        for i in range(k):
            c = 0
            for g in range(m):
                ok = True
                for d in range(n):
                    if abs(images[i, d] - grid[g, d]) > radius:
                        ok = False
                        break
                if ok:
                    c += 1
            counts[i] = c
        total = counts.sum()
        out_i = np.empty(total, np.int64)
        out_g = np.empty(total, np.int64)
        pos = 0
        for i in range(k):
            if counts[i] == 0:
                continue
            for g in range(m):
                ok = True
                for d in range(n):
                    if abs(images[i, d] - grid[g, d]) > radius:
                        ok = False
                        break
                if ok:
                    out_i[pos] = i
                    out_g[pos] = g
                    pos += 1
        return out_i, out_g

    @njit(cache=True, nogil=True)
    def _close_matrix_nb(a, b, radius):
        out = np.empty((a.shape[0], b.shape[0]), np.bool_)
        for i in range(a.shape[0]):
            for j in range(b.shape[0]):
                ok = True
                for d in range(a.shape[1]):
                    if abs(a[i, d] - b[j, d]) > radius:
                        ok = False
                        break
                out[i, j] = ok
        return out

    @njit(cache=True, nogil=True)
    def _expand_beliefs_nb(post, close, z, beliefs):
        k, n = beliefs.shape
        post_b = np.zeros((k, n), np.bool_)
        total = 0
        for r in range(k):
            for s in range(n):
                if beliefs[r, s]:
                    for t in range(n):
                        if post[s, t]:
                            post_b[r, t] = True
            for s in range(n):
                if post[z[r], s]:
                    total += 1
        parent = np.empty(total, np.int64)
        succ = np.empty(total, np.int64)
        children = np.empty((total, n), np.bool_)
        pos = 0
        for r in range(k):
            for s in range(n):
                if post[z[r], s]:
                    parent[pos] = r
                    succ[pos] = s
                    for t in range(n):
                        children[pos, t] = post_b[r, t] and close[s, t]
                    pos += 1
        return parent, succ, children


def ball_pairs_numba(images, grid, radius):
    return _ball_pairs_nb(np.ascontiguousarray(images, dtype=np.float64),
                          np.ascontiguousarray(grid, dtype=np.float64), float(radius))


def close_matrix_numba(a, b, radius):
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64).reshape(len(a), -1))
    b = np.ascontiguousarray(np.asarray(b, dtype=np.float64).reshape(len(b), -1))
    return _close_matrix_nb(a, b, float(radius))


def expand_beliefs_numba(post, close, z, beliefs):
    return _expand_beliefs_nb(np.ascontiguousarray(post, dtype=np.bool_),
                              np.ascontiguousarray(close, dtype=np.bool_),
                              np.ascontiguousarray(z, dtype=np.int64),
                              np.ascontiguousarray(beliefs, dtype=np.bool_))


# ------------------------------------------------------------- dispatchers

def ball_pairs(images, grid, radius, backend=None):
    work = len(images) * len(grid)
    if _use_numba(backend, work):
        return ball_pairs_numba(images, grid, radius)
    return ball_pairs_numpy(images, grid, radius)


def close_matrix(a, b, radius, backend=None):
    work = len(a) * len(b)
    if _use_numba(backend, work):
        return close_matrix_numba(a, b, radius)
    return close_matrix_numpy(a, b, radius)


def expand_beliefs(post, close, z, beliefs, backend=None):
    n = post.shape[0]
    work = len(z) * n * n
    if _use_numba(backend, work):
        return expand_beliefs_numba(post, close, z, beliefs)
    return expand_beliefs_numpy(post, close, z, beliefs)
