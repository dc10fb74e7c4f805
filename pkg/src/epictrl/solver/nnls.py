"""Nonnegative least squares by the Lawson-Hanson active-set method."""

from __future__ import annotations

import warnings

import numpy as np


class RankDeficiencyWarning(UserWarning):
    pass


def _passive_lstsq(A, b, passive):
    z = np.zeros(A.shape[1])
    idx = np.flatnonzero(passive)
    if idx.size:
        z[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
    return z


def nnls(A, b, max_iter: int | None = None, tol: float | None = None):
    """Solve ``min ||A x - b||`` subject to ``x >= 0``.

    Parameters
    ----------
    A : (m, n) array
    b : (m,) array
    max_iter : int, optional
        Outer iteration cap, default ``3 n``.
    tol : float, optional
        Dual feasibility tolerance, default scaled by ``eps * ||A|| * ||b||``.

    Returns
    -------
    x : (n,) array
    rnorm : float
        Residual 2-norm.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if max_iter is None:
        max_iter = 3 * n
    if tol is None:
        tol = 10 * np.finfo(float).eps * np.linalg.norm(A, 1) * max(1.0, np.linalg.norm(b))
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ (b - A @ x)
    it = 0
    while (~passive).any() and np.max(np.where(passive, -np.inf, w)) > tol:
        if it >= max_iter:
            warnings.warn("nnls reached its iteration cap", RuntimeWarning, stacklevel=2)
            break
        it += 1
        j = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[j] = True
        z = _passive_lstsq(A, b, passive)
        # step back toward x until every passive entry is positive
        while passive.any() and np.min(z[passive]) <= 0:
            bad = np.flatnonzero(passive & (z <= 0))
            ratios = x[bad] / (x[bad] - z[bad])
            k = int(np.argmin(ratios))
            x = x + ratios[k] * (z - x)
            # the blocking coordinate leaves exactly; others only if they hit zero
            x[bad[k]] = 0.0
            passive &= x > 0
            x[~passive] = 0.0
            z = _passive_lstsq(A, b, passive)
        x = z
        w = A.T @ (b - A @ x)
    return x, float(np.linalg.norm(A @ x - b))


def fit_nonneg(design, values, rank_tol: float = 1e-10):
    """Nonnegative regression of ``values`` on the columns of ``design``.

    Columns are scaled to unit norm before solving and the scale is folded
    back into the coefficients. All-zero columns get coefficient zero. A
    rank-deficient design triggers :class:`RankDeficiencyWarning`; the
    active-set solution, which is minimum-norm within the passive set, is
    still returned.

    Returns
    -------
    theta : (n,) array
    rnorm : float
    """
    design = np.asarray(design, dtype=float)
    values = np.asarray(values, dtype=float)
    norms = np.linalg.norm(design, axis=0)
    live = norms > 0
    scaled = design[:, live] / norms[live]
    s = np.linalg.svd(scaled, compute_uv=False)
    if s.size and s.min() <= rank_tol * s.max():
        warnings.warn(f"regression design is rank deficient (condition {s.max() / max(s.min(), 1e-300):.2e})",
                      RankDeficiencyWarning, stacklevel=2)
    coef, rnorm = nnls(scaled, values)
    theta = np.zeros(design.shape[1])
    theta[live] = coef / norms[live]
    return theta, rnorm
