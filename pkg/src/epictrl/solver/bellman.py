"""Backward recursion over the discretized information state."""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..costs import CostModel, running_cost_partial_array, terminal_cost_partial_array
from ..filtering import DEFAULT_OPTIONS, FilterOptions, transition_coefficients
from ..model import ControlValue, ModelParams
from ..quantize import Quantizer
from . import kernels
from .basis import basis_matrix, thresholds
from .grid import STATE_AXES, Grid, GridSpec
from .nnls import fit_nonneg
from .solution import BACKENDS, Solution

CHUNK = 256
INTERP_MODES = {"multilinear": kernels.MODE_MULTILINEAR, "subspace6": kernels.MODE_SUBSPACE6,
                "nearest": kernels.MODE_NEAREST}


TIE_RTOL = 1e-12


def tie_argmin(scores, rtol: float = TIE_RTOL):
    """Row-wise smallest column index whose score is within ``rtol`` of the row minimum.

    Scores that agree up to rounding count as ties, so the smallest control
    index wins instead of whichever sum happened to round down.
    """
    lo = scores.min(axis=1, keepdims=True)
    return np.argmax(scores <= lo + rtol * np.abs(lo), axis=1)


class NumericalError(ArithmeticError):
    """A Bellman score came out non-finite."""


def quantizer_hash(q: Quantizer) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(q.nodes, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(q.weights, dtype="<f8").tobytes())
    return h.hexdigest()


@dataclass
class Problem:
    """Everything a Bellman step needs besides the next value source."""

    params: ModelParams
    costs: CostModel
    grid: Grid
    quantizer: Quantizer
    filter_opts: FilterOptions = DEFAULT_OPTIONS
    # bytes allowed for caching per-pair coefficients across steps
    cache_limit: float = 1.5e9
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        g = self.grid
        moving = kernels.MOVING_AXES
        mesh = np.meshgrid(*[np.arange(g.counts[a]) for a in moving], indexing="ij")
        self.base5 = sum(m.reshape(-1) * g.strides[a] for m, a in zip(mesh, moving)).astype(np.int64)
        counts5 = [int(g.counts[a]) for a in moving]
        self.strides5 = np.array([int(np.prod(counts5[k + 1:])) for k in range(5)], dtype=np.int64)
        self.nodes = np.ascontiguousarray(self.quantizer.nodes)
        self.weights = np.ascontiguousarray(self.quantizer.weights)
        self.thr = thresholds(self.costs)
        per_pair = 8 * (2 + 6 + 3 + 3 + 9 + 1)
        self.cacheable = (not self.params.time_dependent
                          and per_pair * g.size * g.n_controls <= self.cache_limit)
        if self.quantizer.dim != 3:
            raise ValueError("the innovation is 3-dimensional; quantizer dim must be 3")

    def chunks(self):
        return [slice(s, min(s + CHUNK, self.grid.size)) for s in range(0, self.grid.size, CHUNK)]

    def pair_data(self, sl: slice, n: int):
        """Transition coefficients and running costs for all pairs of a state chunk."""
        key = (sl.start, sl.stop)
        if self.cacheable and key in self._cache:
            return self._cache[key]
        g = self.grid
        X = g.points[sl]
        U = g.controls
        k, C = len(X), len(U)
        Xp = np.repeat(X, C, axis=0)
        Up = np.tile(U, (k, 1))
        coeffs = [np.ascontiguousarray(a) for a in
                  transition_coefficients(Xp, Up, n, self.params, self.filter_opts)]
        psi = running_cost_partial_array(Xp, Up, self.costs, self.params).reshape(k, C)
        out = (coeffs, psi)
        if self.cacheable:
            self._cache[key] = out
        return out


def _expectations(prob: Problem, coeffs, v_next, backend: str, mode: int):
    fM, gM, fQ, fZ, gZ = coeffs
    out = np.empty(len(fM))
    g = prob.grid
    N = float(prob.params.N)
    if backend == "regress":
        kernels.regress_expectations(np.asarray(v_next, dtype=float), g.lo, g.hi, fM, gM, fQ, fZ, gZ,
                                     prob.nodes, prob.weights, N, prob.thr,
                                     bool(prob.costs.proposition_pools), out)
    else:
        work = np.empty(len(prob.base5))
        kernels.interp_expectations(np.ascontiguousarray(v_next, dtype=float), g.lo, g.hi, g.step,
                                    g.counts, g.strides, prob.base5, prob.strides5,
                                    fM, gM, fQ, fZ, gZ, prob.nodes, prob.weights, N, mode, out, work)
    return out


def bellman_step(v_next, n: int, prob: Problem, backend: str = "interp", interp_mode: str = "multilinear",
                 workers: int = 1):
    """One backward step.

    Parameters
    ----------
    v_next : ndarray
        Value table at ``n + 1`` (interp and nearest backends) or the
        regression coefficients ``theta(n + 1)`` (regress backend).
    n : int
        Time index being solved.
    prob : Problem
    backend : {"interp", "regress", "nearest"}
    interp_mode : {"multilinear", "subspace6"}
        Interpolation rule of the interp backend.
    workers : int
        Threads sharing the state chunks. Results do not depend on it.

    Returns
    -------
    values : (S,) ndarray
    policy : (S,) int32 ndarray of flat control indices
    """
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    mode = kernels.MODE_NEAREST if backend == "nearest" else INTERP_MODES[interp_mode]
    S, C = prob.grid.size, prob.grid.n_controls
    values = np.empty(S)
    policy = np.empty(S, dtype=np.int32)

    def run(sl):
        coeffs, psi = prob.pair_data(sl, n)
        scores = psi + _expectations(prob, coeffs, v_next, backend, mode).reshape(psi.shape)
        if not np.all(np.isfinite(scores)):
            i, c = np.argwhere(~np.isfinite(scores))[0]
            x = prob.grid.points[sl.start + i]
            nu = prob.grid.controls[c]
            raise NumericalError(f"non-finite Bellman score at n={n}, state "
                                 f"{dict(zip(STATE_AXES, x.tolist()))}, control {nu.tolist()}")
        best = tie_argmin(scores)
        values[sl] = scores[np.arange(len(best)), best]
        policy[sl] = best

    chunks = prob.chunks()
    if workers <= 1:
        for sl in chunks:
            run(sl)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, chunks))
    return values, policy


def config_hash(*parts) -> str:
    """Stable hash of JSON-serializable run settings."""
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()


def solve(params: ModelParams, costs: CostModel, spec: GridSpec, quantizer: Quantizer,
          backend: str = "interp", path=None, workers: int = 1, filter_opts: FilterOptions = DEFAULT_OPTIONS,
          interp_mode: str = "multilinear", resume: bool = True, progress=None, run_hash: str | None = None,
          cache_limit: float = 1.5e9) -> Solution:
    """Backward induction from the terminal cost down to step 0.

    Parameters
    ----------
    path : path-like, optional
        Stem of the solution files. With ``resume`` and an index whose
        config hash matches, solving restarts at the first unsolved step.
    progress : callable, optional
        Called as ``progress(n, seconds)`` after each finished step.
    run_hash : str, optional
        Hash of the run configuration stored in the index; computed from the
        arguments when omitted.

    Returns
    -------
    Solution
    """
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if interp_mode not in ("multilinear", "subspace6"):
        raise ValueError(f"unknown interpolation mode {interp_mode!r}")
    qhash = quantizer_hash(quantizer)
    if run_hash is None:
        run_hash = config_hash(repr(params), repr(costs), spec.to_dict(), qhash, backend, interp_mode,
                               repr(filter_opts))
    sol = None
    if path is not None and resume:
        try:
            old = Solution.open(path, mode="r+")
            if old.meta.get("config_hash") == run_hash:
                sol = old
        except (OSError, ValueError, KeyError):
            sol = None
    if sol is None:
        meta = dict(config_hash=run_hash, quantizer_sha256=qhash, interp_mode=interp_mode,
                    wall_time_s=0.0)
        sol = Solution(backend, spec, params.Nt, path, meta)
    if sol.complete:
        return sol

    grid = sol.grid
    prob = Problem(params, costs, grid, quantizer, filter_opts, cache_limit)
    design = basis_matrix(grid.points, costs, params.N) if backend == "regress" else None
    elapsed = float(sol.meta.get("wall_time_s", 0.0))
    Nt = params.Nt
    if sol.first_done > Nt:
        sol.values[Nt] = terminal_cost_partial_array(grid.points, costs)
        if design is not None:
            sol.theta[Nt] = fit_nonneg(design, sol.values[Nt])[0]
        sol.checkpoint(Nt, wall_time_s=elapsed)
    for n in range(sol.first_done - 1, -1, -1):
        t0 = time.perf_counter()
        v_next = np.asarray(sol.theta[n + 1]) if backend == "regress" else np.asarray(sol.values[n + 1])
        vals, pol = bellman_step(v_next, n, prob, backend, interp_mode, workers)
        sol.values[n] = vals
        sol.policy[n] = pol
        if design is not None:
            sol.theta[n] = fit_nonneg(design, vals)[0]
        dt = time.perf_counter() - t0
        elapsed += dt
        sol.checkpoint(n, wall_time_s=elapsed)
        if progress is not None:
            progress(n, dt)
    return sol


def lookahead_scores(sol: Solution, prob: Problem, n: int, X, interp_mode: str = "multilinear"):
    """Bellman scores of every grid control at arbitrary states ``X`` (k, 8).

    Uses the stored step ``n + 1`` value source, so the minimizing control
    is the greedy choice at the state itself rather than at a grid node.
    """
    if not 0 <= n < sol.Nt:
        raise IndexError(f"step {n} outside 0..{sol.Nt - 1}")
    if sol.first_done > n + 1:
        raise ValueError(f"step {n + 1} has not been solved")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = prob.grid.controls
    k, C = len(X), len(U)
    Xp, Up = np.repeat(X, C, axis=0), np.tile(U, (k, 1))
    coeffs = [np.ascontiguousarray(a) for a in transition_coefficients(Xp, Up, n, prob.params, prob.filter_opts)]
    psi = running_cost_partial_array(Xp, Up, prob.costs, prob.params).reshape(k, C)
    backend = sol.backend
    v_next = np.asarray(sol.theta[n + 1]) if backend == "regress" else np.asarray(sol.values[n + 1])
    mode = kernels.MODE_NEAREST if backend == "nearest" else INTERP_MODES[interp_mode]
    return psi + _expectations(prob, coeffs, v_next, backend, mode).reshape(k, C)


def policy_lookup(sol: Solution, n: int, x) -> ControlValue:
    """Control stored at the grid node nearest to ``x`` (info state or packed array)."""
    if not 0 <= n < sol.Nt:
        raise IndexError(f"step {n} outside 0..{sol.Nt - 1}")
    arr = x.as_array() if hasattr(x, "as_array") else np.asarray(x, dtype=float)
    idx = int(sol.grid.nearest_offset(arr))
    c = int(sol.policy[n, idx])
    if c < 0:
        raise ValueError(f"step {n} has not been solved")
    return ControlValue(*map(float, sol.grid.controls[c]))
