"""DTW, soft-DTW and diagonal alignment paths.

The dynamic programs run over anti-diagonals and over a padded batch at
once, so one call handles many cost matrices of different shapes. All
tables are float64. Paths are lists of 1-based ``(note, sylphone)`` pairs.
"""

from __future__ import annotations

from math import comb
from typing import Sequence

import numpy as np

Path = list[tuple[int, int]]

MAX_ENUMERATION_CELLS = 36


def softmin(values, gamma: float) -> float:
    """Soft minimum ``-gamma * log(sum(exp(-a / gamma)))``; the hard minimum at gamma 0."""
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("softmin of an empty sequence")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    lo = a.min()
    if gamma == 0 or not np.isfinite(lo):
        return float(lo)
    return float(lo - gamma * np.log(np.sum(np.exp(-(a - lo) / gamma))))


def _softmin3(a, b, c, gamma):
    lo = np.minimum(np.minimum(a, b), c)
    if gamma == 0:
        return lo
    s = np.exp(-(a - lo) / gamma) + np.exp(-(b - lo) / gamma) + np.exp(-(c - lo) / gamma)
    return lo - gamma * np.log(s)


def _diagonals(n: int, m: int):
    for d in range(2, n + m + 1):
        ii = np.arange(max(1, d - m), min(n, d - 1) + 1)
        yield ii, d - ii


def accumulate(costs: np.ndarray, gamma: float) -> np.ndarray:
    """Accumulated cost tables for a stack of (padded) cost matrices.

    Args:
        costs: (K, N, M) array.
        gamma: 0 for classical DTW, > 0 for soft-DTW.

    Returns:
        (K, N+1, M+1) table ``R`` with ``R[k, i, j]`` the (soft) minimum over
        paths from (1, 1) to (i, j). Padding only affects cells past an
        item's own extent, which never feed back into it.
    """
    costs = np.asarray(costs, dtype=np.float64)
    K, N, M = costs.shape
    R = np.full((K, N + 1, M + 1), np.inf)
    R[:, 0, 0] = 0.0
    for ii, jj in _diagonals(N, M):
        r = _softmin3(R[:, ii - 1, jj - 1], R[:, ii - 1, jj], R[:, ii, jj - 1], gamma)
        R[:, ii, jj] = costs[:, ii - 1, jj - 1] + r
    return R


def soft_alignment(R: np.ndarray, costs: np.ndarray, n, m, gamma: float) -> np.ndarray:
    """Gradient of each item's soft-DTW value with respect to its cost matrix.

    Reverse recursion over the tables produced by :func:`accumulate`.
    Entries outside an item's (n_k, m_k) extent are zero.
    """
    costs = np.asarray(costs, dtype=np.float64)
    K, N, M = costs.shape
    n = np.asarray(n, dtype=int)
    m = np.asarray(m, dtype=int)
    rows = np.arange(N + 2)[None, :, None]
    cols = np.arange(M + 2)[None, None, :]
    valid = (rows >= 1) & (rows <= n[:, None, None]) & (cols >= 1) & (cols <= m[:, None, None])

    Rx = np.full((K, N + 2, M + 2), -np.inf)
    Rx[:, 1:N + 1, 1:M + 1] = R[:, 1:, 1:]
    Rx = np.where(valid, Rx, -np.inf)
    Cx = np.zeros((K, N + 2, M + 2))
    Cx[:, 1:N + 1, 1:M + 1] = costs
    Cx = np.where(valid, Cx, 0.0)
    E = np.zeros((K, N + 2, M + 2))
    kk = np.arange(K)
    Rx[kk, n + 1, m + 1] = R[kk, n, m]
    E[kk, n + 1, m + 1] = 1.0
    Rcur = np.where(valid, Rx, 0.0)

    with np.errstate(over="ignore", invalid="ignore"):
        for d in range(N + M, 1, -1):
            ii = np.arange(max(1, d - M), min(N, d - 1) + 1)
            jj = d - ii
            here = Rcur[:, ii, jj]
            a = np.exp((Rx[:, ii + 1, jj] - here - Cx[:, ii + 1, jj]) / gamma)
            b = np.exp((Rx[:, ii, jj + 1] - here - Cx[:, ii, jj + 1]) / gamma)
            c = np.exp((Rx[:, ii + 1, jj + 1] - here - Cx[:, ii + 1, jj + 1]) / gamma)
            e = a * E[:, ii + 1, jj] + b * E[:, ii, jj + 1] + c * E[:, ii + 1, jj + 1]
            E[:, ii, jj] = np.where(valid[:, ii, jj], e, E[:, ii, jj])
    E = E[:, 1:N + 1, 1:M + 1]
    return np.where(valid[:, 1:N + 1, 1:M + 1], E, 0.0)


def pad_costs(costs: Sequence[np.ndarray]):
    """Stack matrices of different shapes into a zero-padded (K, N, M) array."""
    shapes = [np.shape(c) for c in costs]
    if any(len(s) != 2 or s[0] < 1 or s[1] < 1 for s in shapes):
        raise ValueError("cost matrices must be non-empty 2-D arrays")
    n = np.array([s[0] for s in shapes], dtype=int)
    m = np.array([s[1] for s in shapes], dtype=int)
    out = np.zeros((len(costs), n.max(initial=1), m.max(initial=1)))
    for k, c in enumerate(costs):
        out[k, :n[k], :m[k]] = c
    return out, n, m


def _as_cost(cost) -> np.ndarray:
    cost = np.atleast_2d(np.asarray(cost, dtype=np.float64))
    if cost.ndim != 2 or cost.shape[0] < 1 or cost.shape[1] < 1:
        raise ValueError("cost matrix must be a non-empty 2-D array")
    return cost


def sdtw_forward(cost, gamma: float = 1.0):
    """Soft-DTW value of one cost matrix, plus its DP table for the backward pass."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0 for soft-DTW")
    cost = _as_cost(cost)
    R = accumulate(cost[None], gamma)[0]
    return float(R[-1, -1]), R


def sdtw_backward(R, cost, gamma: float = 1.0) -> np.ndarray:
    """Soft alignment matrix: d sdtw / d cost."""
    cost = _as_cost(cost)
    n, m = cost.shape
    return soft_alignment(np.asarray(R)[None], cost[None], [n], [m], gamma)[0]


def sdtw_batch(costs: Sequence[np.ndarray], gamma: float = 1.0, gradients: bool = True):
    """Soft-DTW over matrices of heterogeneous shapes.

    Returns:
        (values, soft alignments) -- per-item lists in input order; the
        alignments are omitted (None) when ``gradients`` is False.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0 for soft-DTW")
    if len(costs) == 0:
        return [], ([] if gradients else None)
    padded, n, m = pad_costs(costs)
    R = accumulate(padded, gamma)
    kk = np.arange(len(costs))
    values = R[kk, n, m]
    if not gradients:
        return [float(v) for v in values], None
    E = soft_alignment(R, padded, n, m, gamma)
    return [float(v) for v in values], [E[k, :n[k], :m[k]].copy() for k in kk]


def backtrack(R: np.ndarray) -> Path:
    """Optimal path through a hard-min table; ties prefer diagonal, then vertical."""
    i, j = R.shape[0] - 1, R.shape[1] - 1
    path = [(i, j)]
    while (i, j) != (1, 1):
        if i == 1:
            j -= 1
        elif j == 1:
            i -= 1
        else:
            diag, up, left = R[i - 1, j - 1], R[i - 1, j], R[i, j - 1]
            if diag <= up and diag <= left:
                i, j = i - 1, j - 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return path


def dtw(cost) -> tuple[float, Path]:
    """Classical DTW: minimal accumulated cost and the backtracked path."""
    cost = _as_cost(cost)
    R = accumulate(cost[None], 0.0)[0]
    return float(R[-1, -1]), backtrack(R)


def dtw_batch(costs: Sequence[np.ndarray]) -> list[tuple[float, Path]]:
    if len(costs) == 0:
        return []
    padded, n, m = pad_costs(costs)
    R = accumulate(padded, 0.0)
    return [(float(R[k, n[k], m[k]]), backtrack(R[k, :n[k] + 1, :m[k] + 1])) for k in range(len(costs))]


def enumerate_paths(n: int, m: int) -> list[Path]:
    """Every monotone path from (1, 1) to (n, m). Test oracle; small grids only."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    if n * m > MAX_ENUMERATION_CELLS:
        raise ValueError(f"refusing to enumerate paths on a {n}x{m} grid")
    out: list[Path] = []

    def walk(path):
        i, j = path[-1]
        if (i, j) == (n, m):
            out.append(list(path))
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            if i + di <= n and j + dj <= m:
                path.append((i + di, j + dj))
                walk(path)
                path.pop()

    walk([(1, 1)])
    return out


def path_cost(cost, path: Path) -> float:
    cost = np.asarray(cost, dtype=float)
    return float(sum(cost[i - 1, j - 1] for i, j in path))


def bresenham_path(n: int, m: int) -> Path:
    """Rasterized diagonal from (1, 1) to (n, m), made 4/8-connected and monotone.

    Steps along the longer axis one cell at a time and moves the shorter
    index by the rounded line position, so equal lengths give the exact
    diagonal.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    steps = max(n, m) - 1
    if steps == 0:
        return [(1, 1)]
    path = []
    # integer Bresenham along the major axis
    if n >= m:
        dx, dy = n - 1, m - 1
        err, j = 2 * dy - dx, 1
        for i in range(1, n + 1):
            path.append((i, j))
            if err > 0:
                j += 1
                err -= 2 * dx
            err += 2 * dy
    else:
        dx, dy = m - 1, n - 1
        err, i = 2 * dy - dx, 1
        for j in range(1, m + 1):
            path.append((i, j))
            if err > 0:
                i += 1
                err -= 2 * dx
            err += 2 * dy
    return path


def is_valid_path(path: Path, n: int, m: int) -> bool:
    if not path or path[0] != (1, 1) or path[-1] != (n, m):
        return False
    for (i0, j0), (i1, j1) in zip(path, path[1:]):
        if (i1 - i0, j1 - j0) not in ((1, 0), (0, 1), (1, 1)):
            return False
    return True


def cost_matrix(X, Y) -> np.ndarray:
    """Cosine distance ``1 - <x_i, y_j>`` between rows of unit-norm embeddings."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"embedding widths differ: {X.shape[1]} vs {Y.shape[1]}")
    return 1.0 - X @ Y.T


def path_to_json(path: Path) -> dict:
    return {"pairs": [[int(i), int(j)] for i, j in path]}


def path_from_json(obj: dict) -> Path:
    return [(int(i), int(j)) for i, j in obj["pairs"]]


def delannoy(n: int, m: int) -> int:
    """Number of monotone paths on an n x m grid (Delannoy number D(n-1, m-1))."""
    a, b = n - 1, m - 1
    return sum(comb(a, k) * comb(b, k) * 2 ** k for k in range(min(a, b) + 1))
