# cython: language_level=3
"""Compiled versions of the kernels in ``_pykernels``."""
from libc.math cimport sqrt

import numpy as np


cdef inline void _check_window(Py_ssize_t window) except *:
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")


def rolling_mean(x, Py_ssize_t window=5):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    _check_window(window)
    cdef Py_ssize_t n = xv.shape[0], half = window // 2, i, j, lo, hi
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double s
    for i in range(n):
        lo = i - half if i >= half else 0
        hi = i + half + 1 if i + half + 1 <= n else n
        s = 0.0
        for j in range(lo, hi):
            s += xv[j]
        o[i] = s / (hi - lo)
    return out


def rolling_std(x, Py_ssize_t window=5):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    _check_window(window)
    cdef Py_ssize_t n = xv.shape[0], half = window // 2, i, j, lo, hi
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double s, m, d
    for i in range(n):
        lo = i - half if i >= half else 0
        hi = i + half + 1 if i + half + 1 <= n else n
        s = 0.0
        for j in range(lo, hi):
            s += xv[j]
        m = s / (hi - lo)
        s = 0.0
        for j in range(lo, hi):
            d = xv[j] - m
            s += d * d
        o[i] = sqrt(s / (hi - lo))
    return out


cdef double _positive_trapezoid(const double[::1] t, const double[::1] v, double baseline):
    cdef Py_ssize_t n = t.shape[0], i
    cdef double area = 0.0, a, b
    if n < 2:
        return 0.0
    a = v[0] - baseline
    if a < 0.0:
        a = 0.0
    for i in range(1, n):
        b = v[i] - baseline
        if b < 0.0:
            b = 0.0
        area += (a + b) * (t[i] - t[i - 1])
        a = b
    return area * 0.5


def positive_trapezoid(t, v, double baseline):
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    if tv.shape[0] != vv.shape[0]:
        raise ValueError("t and v must have the same length")
    return _positive_trapezoid(tv, vv, baseline)


def smoothed_positive_area(t, v, double baseline, Py_ssize_t window=5):
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    smoothed = rolling_mean(v, window)
    cdef const double[::1] sv = smoothed
    if tv.shape[0] != sv.shape[0]:
        raise ValueError("t and v must have the same length")
    return _positive_trapezoid(tv, sv, baseline)


cdef void _dfs(const unsigned char[:, ::1] adj, Py_ssize_t target, Py_ssize_t max_edges,
               Py_ssize_t[::1] path, Py_ssize_t depth, unsigned char[::1] on_path,
               list paths):
    # depth = number of nodes currently on the path
    cdef Py_ssize_t n = adj.shape[0], last = path[depth - 1], u
    if depth > max_edges:
        return
    if adj[last, target]:
        paths.append(tuple([path[i] for i in range(depth)]) + (target,))
    for u in range(n):
        if not adj[last, u] or u == target or on_path[u]:
            continue
        on_path[u] = 1
        path[depth] = u
        _dfs(adj, target, max_edges, path, depth + 1, on_path, paths)
        on_path[u] = 0


def simple_paths_to(adj, Py_ssize_t target, Py_ssize_t max_edges):
    cdef const unsigned char[:, ::1] a = np.ascontiguousarray(adj, dtype=np.uint8)
    cdef Py_ssize_t n = a.shape[0], s
    if a.shape[1] != n:
        raise ValueError("adjacency must be square")
    path_buf = np.zeros(n + 1, dtype=np.intp)
    on_buf = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t[::1] path = path_buf
    cdef unsigned char[::1] on_path = on_buf
    cdef list paths = []
    for s in range(n):
        if s == target:
            continue
        on_path[:] = 0
        on_path[s] = 1
        path[0] = s
        _dfs(a, target, max_edges, path, 1, on_path, paths)
    return paths
