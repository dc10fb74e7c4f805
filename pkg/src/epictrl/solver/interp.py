"""Point evaluation of a tabulated value function."""

from __future__ import annotations

import itertools

import numpy as np

from .grid import Grid

_SNAPPED = {"multilinear": (), "subspace6": (3, 4), "nearest": tuple(range(8))}


def interpolate(values, grid: Grid, x, mode: str = "multilinear"):
    """Evaluate a value table at info states ``x`` (packed ``(..., 8)`` or an ``InfoState``).

    Parameters
    ----------
    values : (S,) array
        Table in the grid's row-major order.
    mode : {"multilinear", "subspace6", "nearest"}
        ``subspace6`` interpolates over m1, m2, q1, z1, z2, z3 and takes q2
        and rho at the nearest slice; ``nearest`` returns the nearest node.

    Points outside the grid box are clamped onto it first.
    """
    if mode not in _SNAPPED:
        raise ValueError(f"unknown interpolation mode {mode!r}")
    arr = x.as_array() if hasattr(x, "as_array") else np.asarray(x, dtype=float)
    V = np.asarray(values, dtype=float).reshape(grid.shape)
    arr = np.clip(arr, grid.lo, grid.hi)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    idx = np.zeros(arr.shape, dtype=np.int64)
    frac = np.zeros(arr.shape)
    for a in range(8):
        n = grid.counts[a]
        if n == 1:
            continue
        pos = (arr[:, a] - grid.lo[a]) / grid.step[a]
        i = np.clip(np.floor(pos).astype(np.int64), 0, n - 2)
        f = np.clip(pos - i, 0.0, 1.0)
        if a in _SNAPPED[mode]:
            f = (f > 0.5).astype(float)
        idx[:, a] = i
        frac[:, a] = f
    out = np.zeros(len(arr))
    for corner in itertools.product((0, 1), repeat=8):
        c = np.array(corner)
        w = np.prod(np.where(c, frac, 1.0 - frac), axis=1)
        if not np.any(w):
            continue
        ii = np.minimum(idx + c, grid.counts - 1)
        out += w * V[tuple(ii.T)]
    return out[0] if single else out
