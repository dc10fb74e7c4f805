"""Coupled simulation of the epidemic and its filter, batched over seeds.

Each seed owns its generator, so a path is identical whether it runs alone
or inside a larger ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filtering import DEFAULT_OPTIONS, FilterOptions, InfoState, ekf_update_array, info_cov, innovation_array
from .model import ModelParams, clip_array, step_arrays
from .solver.bellman import Problem, lookahead_scores, quantizer_hash, tie_argmin

# benchmark start: a small undetected outbreak, nothing observed yet
BENCHMARK_START = InfoState(m=[80.0, 0.0], q1=10.0, q2=10.0, rho=0.0, z=[0.0, 0.0, 0.0])
# start of the optimal-path experiments
OUTBREAK_START = InfoState(m=[150.0, 50.0], q1=200.0, q2=200.0, rho=0.0, z=[100.0, 50.0, 10.0])
NO_CONTROL = (0.0, 0.001, 0.0)
MODERATE_CONTROL = (0.2, 0.03, 0.015)


@dataclass
class Ensemble:
    """Paths of an ensemble run.

    Attributes
    ----------
    hidden : (K, Nt+1, 2) true undetected compartments.
    obs : (K, Nt+1, 3) observed compartments.
    info : (K, Nt+1, 8) filter state ``(m1, m2, q1, q2, rho, z1, z2, z3)``.
    controls : (K, Nt, 3) applied controls.
    innovations : (K, Nt, 3) standardized observation surprises.
    seeds : (K,) seeds.
    """

    hidden: np.ndarray
    obs: np.ndarray
    info: np.ndarray
    controls: np.ndarray
    innovations: np.ndarray
    seeds: np.ndarray
    N: float = 1000.0

    @property
    def susceptible(self) -> np.ndarray:
        return self.N - self.hidden.sum(-1) - self.obs.sum(-1)


def _initial_hidden(start: InfoState, rng, p: ModelParams) -> np.ndarray:
    # true state drawn from the filter's prior
    cov = info_cov(start.q1, start.q2, start.rho)
    lam, vec = np.linalg.eigh(cov)
    root = vec @ np.diag(np.sqrt(np.maximum(lam, 0.0)))
    y = start.m + root @ rng.standard_normal(2)
    return clip_array(np.concatenate([y, start.z]), p)[:2]


def run_ensemble(p: ModelParams, control, start: InfoState, seeds, opts: FilterOptions = DEFAULT_OPTIONS,
                 Nt: int | None = None) -> Ensemble:
    """Simulate the true epidemic and run the filter on its observations.

    Parameters
    ----------
    control : sequence of 3 floats or callable
        Fixed control, or ``control(n, info)`` mapping the ``(K, 8)`` filter
        states to ``(K, 3)`` controls.
    start : InfoState
        Initial filter state; the true hidden state is drawn from it.
    seeds : sequence of int
    Nt : int, optional
        Horizon, ``p.Nt`` by default.
    """
    seeds = np.asarray(list(seeds), dtype=np.int64)
    K = len(seeds)
    Nt = p.Nt if Nt is None else int(Nt)
    rngs = [np.random.default_rng(int(s)) for s in seeds]
    hidden = np.empty((K, Nt + 1, 2))
    obs = np.empty((K, Nt + 1, 3))
    info = np.empty((K, Nt + 1, 8))
    controls = np.empty((K, Nt, 3))
    innovations = np.empty((K, Nt, 3))
    hidden[:, 0] = [_initial_hidden(start, r, p) for r in rngs]
    obs[:, 0] = start.z
    info[:, 0] = start.as_array()
    for n in range(Nt):
        x = info[:, n]
        if callable(control):
            nu = np.asarray(control(n, x), dtype=float).reshape(K, 3)
        else:
            nu = np.broadcast_to(np.asarray(control, dtype=float), (K, 3))
        b1 = np.array([r.standard_normal(2) for r in rngs])
        b2 = np.array([r.standard_normal(8) for r in rngs])
        y_next, z_next = step_arrays(hidden[:, n], obs[:, n], nu, b1, b2, n, p)
        innovations[:, n] = innovation_array(x, z_next, nu, n, p, opts)
        info[:, n + 1] = ekf_update_array(x, z_next, nu, n, p, opts)
        hidden[:, n + 1] = y_next
        obs[:, n + 1] = z_next
        controls[:, n] = nu
    return Ensemble(hidden, obs, info, controls, innovations, seeds, p.N)


def policy_control(sol):
    """Closed-loop control that reads the solution's policy at the nearest grid node."""
    grid = sol.grid

    def control(n, x):
        idx = grid.nearest_offset(x)
        return grid.controls[np.asarray(sol.policy[n])[idx]]

    return control


def lookahead_control(sol, params: ModelParams, costs, quantizer, opts: FilterOptions = DEFAULT_OPTIONS,
                      interp_mode: str | None = None):
    """Closed-loop control that re-runs the Bellman minimization at the filtered state.

    The stored value function at ``n + 1`` is reused; only the control
    choice moves off the grid. ``quantizer`` must be the one the solution
    was built with.

    Raises
    ------
    ValueError
        If the quantizer differs from the solution's.
    """
    expected = sol.meta.get("quantizer_sha256")
    if expected is not None and expected != quantizer_hash(quantizer):
        raise ValueError("quantizer does not match the one the solution was built with")
    mode = interp_mode or sol.meta.get("interp_mode", "multilinear")
    prob = Problem(params, costs, sol.grid, quantizer, opts, cache_limit=0)
    controls = sol.grid.controls

    def control(n, x):
        return controls[tie_argmin(lookahead_scores(sol, prob, n, x, mode))]

    return control


def clearance_day(ens: Ensemble, level: float = 5.0) -> np.ndarray:
    """First day the estimated plus detected infections ``m1 + z1`` drop below ``level`` (-1 if never)."""
    total = ens.info[:, :, 0] + ens.info[:, :, 5]
    below = total < level
    return np.where(below.any(axis=1), below.argmax(axis=1), -1)
