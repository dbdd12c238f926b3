"""Pure-Python/numpy implementations of the numeric kernels.

These are the reference versions; ``_ckernels.pyx`` must agree with them.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _check_window(window):
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")


def _window_stat(x, window, stat):
    x = np.ascontiguousarray(x, dtype=np.float64)
    _check_window(window)
    n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    if n == 0:
        return out
    half = window // 2
    if n >= window:
        out[half:n - half] = stat(sliding_window_view(x, window), axis=1)
        edges = list(range(half)) + list(range(n - half, n))
    else:
        edges = range(n)
    for i in edges:
        out[i] = stat(x[max(0, i - half):min(n, i + half + 1)])
    return out


def rolling_mean(x, window=5):
    """Centered rolling mean; the window is truncated at the series boundaries."""
    return _window_stat(x, window, np.mean)


def rolling_std(x, window=5):
    """Centered rolling population standard deviation (ddof=0)."""
    return _window_stat(x, window, np.std)


def positive_trapezoid(t, v, baseline):
    """Trapezoid integral of max(v - baseline, 0) over t."""
    t = np.asarray(t, dtype=np.float64)
    d = np.clip(np.asarray(v, dtype=np.float64) - baseline, 0.0, None)
    if t.shape[0] < 2:
        return 0.0
    return float(np.sum((d[1:] + d[:-1]) * np.diff(t)) * 0.5)


def smoothed_positive_area(t, v, baseline, window=5):
    return positive_trapezoid(t, rolling_mean(v, window), baseline)


def simple_paths_to(adj, target, max_edges):
    """Depth-limited DFS from every source; returns paths as tuples of node indices.

    ``adj`` is a square 0/1 matrix with ``adj[u, v] == 1`` for an edge u -> v.
    Output order is the DFS discovery order (sources ascending, children ascending).
    """
    adj = np.asarray(adj)
    n = adj.shape[0]
    children = [np.flatnonzero(adj[u]).tolist() for u in range(n)]
    paths = []

    def dfs(path, on_path):
        if len(path) > max_edges:
            return
        last = path[-1]
        if adj[last, target]:
            paths.append(tuple(path) + (target,))
        for u in children[last]:
            if u == target or on_path[u]:
                continue
            on_path[u] = True
            path.append(u)
            dfs(path, on_path)
            path.pop()
            on_path[u] = False

    for s in range(n):
        if s == target:
            continue
        on_path = [False] * n
        on_path[s] = True
        dfs([s], on_path)
    return paths
