"""Tabular views of ensembles and solutions, ready for CSV export."""

from __future__ import annotations

import numpy as np

from .scenarios import Ensemble
from .solver.basis import basis_matrix
from .solver.grid import STATE_AXES
from .solver.interp import interpolate

PATH_HEADER = ["n", "t", "Y1", "Y2", "S", "Z1", "Z2", "Z3", "u_L", "u_T", "u_V",
               "m1", "m2", "q1", "q2", "rho"]
PATH_UNITS = ("n: step; t: days; Y1,Y2,S,Z1,Z2,Z3,m1,m2: persons; q1,q2: persons^2; rho: 1; "
              "u_L: 1; u_T,u_V: 1/day; controls on row n apply from day n to n+1")
SUMMARY_HEADER = ["n", "t", "component", "mean", "q10", "q90"]
SUMMARY_UNITS = "t: days; mean,q10,q90: persons for compartments, persons^2 for q1,q2, 1 for rho"
SLICE_HEADER = list(STATE_AXES) + ["V", "u_L", "u_T", "u_V"]
SLICE_UNITS = "m1,m2,z1,z2,z3: persons; q1,q2: persons^2; rho: 1; V: money; u_L: 1; u_T,u_V: 1/day"

SLICES = {
    "small": dict(m2=1.0, q1=1.0, q2=1.0, rho=-0.5, z2=1.0, z3=1.0),
    "moderate": dict(m2=100.0, q1=500.0, q2=500.0, rho=0.5, z2=200.0, z3=30.0),
}


def path_rows(ens: Ensemble, k: int, dt: float):
    """Rows of one path: true compartments, applied control and filter state."""
    Nt = ens.controls.shape[1]
    S = ens.susceptible[k]
    rows = []
    for n in range(Nt + 1):
        ctrl = list(ens.controls[k, n]) if n < Nt else ["", "", ""]
        rows.append([n, n * dt, *ens.hidden[k, n], S[n], *ens.obs[k, n], *ctrl, *ens.info[k, n, :5]])
    return rows


def ensemble_series(ens: Ensemble) -> dict:
    """Per-day mean and 10/90% quantiles of every tracked component."""
    comps = {"Y1": ens.hidden[..., 0], "Y2": ens.hidden[..., 1], "S": ens.susceptible,
             "Z1": ens.obs[..., 0], "Z2": ens.obs[..., 1], "Z3": ens.obs[..., 2]}
    comps.update({name: ens.info[..., j] for j, name in enumerate(STATE_AXES)})
    out = {}
    for name, data in comps.items():
        q10, q90 = np.quantile(data, [0.1, 0.9], axis=0)
        out[name] = (data.mean(axis=0), q10, q90)
    return out


def summary_rows(series: dict, dt: float):
    rows = []
    T = len(next(iter(series.values()))[0])
    for n in range(T):
        for name, (mean, q10, q90) in series.items():
            rows.append([n, n * dt, name, mean[n], q10[n], q90[n]])
    return rows


def slice_points(grid, fixed: dict, resolution: int):
    """Points of an ``(m1, z1)`` lattice with the other coordinates fixed."""
    m1 = np.linspace(grid.lo[0], grid.hi[0], resolution)
    z1 = np.linspace(grid.lo[5], grid.hi[5], resolution)
    M, Z = np.meshgrid(m1, z1, indexing="ij")
    pts = np.empty((M.size, 8))
    pts[:, 0] = M.ravel()
    pts[:, 5] = Z.ravel()
    for name, v in fixed.items():
        pts[:, STATE_AXES.index(name)] = v
    return m1, z1, pts


def slice_values(sol, n: int, pts, costs, N: float, interp_mode: str = "multilinear"):
    """Value function at ``pts``: interpolated table, or the fitted regression surface."""
    if sol.backend == "regress":
        return basis_matrix(pts, costs, N) @ np.asarray(sol.theta[n])
    mode = "nearest" if sol.backend == "nearest" else interp_mode
    return interpolate(np.asarray(sol.values[n]), sol.grid, pts, mode)


def slice_policy(sol, n: int, pts):
    idx = sol.grid.nearest_offset(pts)
    return sol.grid.controls[np.asarray(sol.policy[n])[idx]]
