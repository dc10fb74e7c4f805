"""Acceptance suite: one test and one PASS/FAIL line per criterion.

The lines are printed as each test finishes and collected again in a
summary section at the end of the pytest run. Criteria 8 and 9 solve the
reduced grid with both backends, which takes the bulk of the runtime
(roughly half an hour on one core). Point ``EPICTRL_ACCEPTANCE_DIR`` at a
persistent directory to keep those solutions; later runs with unchanged
settings resume from the stored files instead of re-solving.
"""

import os
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from epictrl import cli, quantize
from epictrl import costs as C
from epictrl import filtering as flt
from epictrl.config import RunConfig
from epictrl.costs import CostModel
from epictrl.model import ModelParams, drift_hidden
from epictrl.reports import SLICES, slice_points, slice_values, slice_policy
from epictrl.scenarios import (BENCHMARK_START, NO_CONTROL, OUTBREAK_START, clearance_day, lookahead_control,
                               policy_control, run_ensemble)
from epictrl.solver import Grid, GridSpec, RankDeficiencyWarning, solve
from epictrl.solver.basis import basis_matrix

from .conftest import ACCEPTANCE_LINES, BUILD_SECONDS, random_controls, random_info_states
from .test_costs import SWEEP, _mc_hidden, _tail_quadrature
from .toy import brute_force_dp, toy_quantizer, toy_spec

pytestmark = pytest.mark.acceptance


def report(number: int, checks: dict, detail: str):
    """Print and record the criterion line, then fail on any unmet check."""
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    if failed:
        line += f" | unmet: {', '.join(failed)}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def median_clearance(days) -> float:
    return float(np.median(np.where(days >= 0, days, np.inf)))


# ---- shared reduced-grid solutions

@pytest.fixture(scope="session")
def solve_dir(tmp_path_factory):
    env = os.environ.get("EPICTRL_ACCEPTANCE_DIR")
    if env:
        Path(env).mkdir(parents=True, exist_ok=True)
        return Path(env)
    return tmp_path_factory.mktemp("acceptance")


def _reduced_solve(backend, q, solve_dir):
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficiencyWarning)
        sol = solve(ModelParams(), CostModel(), GridSpec.reduced(), q, backend=backend,
                    path=solve_dir / f"reduced_{backend}")
    return sol, time.perf_counter() - t0


@pytest.fixture(scope="session")
def interp_solution(lloyd125, solve_dir):
    return _reduced_solve("interp", lloyd125, solve_dir)


@pytest.fixture(scope="session")
def regress_solution(lloyd125, solve_dir):
    return _reduced_solve("regress", lloyd125, solve_dir)


# ---- criteria

def test_criterion_1_tail_closed_form():
    refs = [_tail_quadrature(*row) for row in SWEEP]
    t0 = time.perf_counter()
    got = [float(C.gauss_tail_penalty(*row)) for row in SWEEP]
    seconds = time.perf_counter() - t0
    rel = max(abs(g - r) / abs(r) for g, r in zip(got, refs) if r != 0)
    report(1, {"relative error < 1e-8": rel < 1e-8, "runtime < 1 s": seconds < 1.0},
           f"max rel err {rel:.2e} over {len(SWEEP)} points; closed form {seconds * 1e3:.2f} ms")


def test_criterion_2_filter():
    p = ModelParams()
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    xs, nus = random_info_states(rng, 1000), random_controls(rng, 1000)
    fM, gM, fQ, fZ, gZ = flt.transition_coefficients(xs, nus, 0, p)
    z_next = fZ + np.einsum("kij,kj->ki", gZ, rng.standard_normal((1000, 3)))
    eps = flt.innovation_array(xs, z_next, nus, 0, p)
    via = flt.transition_array(xs, nus, eps, 0, p, clip=False)
    direct = flt.ekf_update_array(xs, z_next, nus, 0, p, clip=False)
    rel = float((np.abs(via - direct) / np.maximum(np.abs(direct), 1.0)).max())

    ens = run_ensemble(ModelParams(Nt=100), (0.2, 0.03, 0.015), BENCHMARK_START, range(100))
    e = ens.innovations
    mean = e.mean(axis=(0, 1))
    var = e.var(axis=(0, 1))
    c = e - mean
    lag1 = (c[:, 1:] * c[:, :-1]).mean(axis=(0, 1)) / var
    seconds = time.perf_counter() - t0
    report(2, {"round trip < 1e-8": rel < 1e-8,
               "mean in (-0.1, 0.1)": bool((np.abs(mean) < 0.1).all()),
               "variance in (0.7, 1.3)": bool(((var > 0.7) & (var < 1.3)).all()),
               "lag-1 in (-0.1, 0.1)": bool((np.abs(lag1) < 0.1).all()),
               "runtime < 30 s": seconds < 30},
           f"round trip {rel:.1e}; {e.shape[0] * e.shape[1]} innovation steps: mean {np.round(mean, 3).tolist()}, "
           f"var {np.round(var, 3).tolist()}, lag-1 {np.round(lag1, 3).tolist()}; {seconds:.1f} s")


def test_criterion_3_jacobian():
    p = ModelParams()
    rng = np.random.default_rng(3)
    h = 1e-3
    worst = 0.0
    for x, nu in zip(random_info_states(rng, 50), random_controls(rng, 50)):
        m, z = x[:2], x[5:]
        analytic = flt.jacobian_f1(0, m, z, nu, p) - np.eye(2)
        fd = np.column_stack([(drift_hidden(0, m + h * u, z, nu, p) - drift_hidden(0, m - h * u, z, nu, p)) / (2 * h)
                              for u in np.eye(2)])
        worst = max(worst, np.linalg.norm(analytic - fd) / np.linalg.norm(fd))
    report(3, {"relative error < 1e-6": worst < 1e-6}, f"max relative error {worst:.2e} at 50 points")


def test_criterion_4_quantizer(lloyd125):
    t0 = time.perf_counter()
    qs = {n: quantize.lloyd(3, n, 1_000_000, seed=0) for n in (8, 27, 64)}
    qs[125] = lloyd125
    dist = {n: quantize.distortion(q) for n, q in qs.items()}
    resid = quantize.stationarity_residual(lloyd125)
    seconds = time.perf_counter() - t0 + BUILD_SECONDS.get("lloyd125", 0.0)
    ns = sorted(dist)
    slope = float(np.polyfit(np.log(ns), np.log([dist[n] for n in ns]), 1)[0])
    decreasing = all(dist[a] > dist[b] for a, b in zip(ns, ns[1:]))
    product = quantize.product_quantizer([quantize.optimal_1d(5, 1_000_000)] * 3)
    report(4, {"strictly decreasing": decreasing, "slope in -1/3 +- 0.15": abs(slope + 1 / 3) <= 0.15,
               "residual < 0.02": resid < 0.02, "runtime < 5 min": seconds < 300},
           f"distortion {', '.join(f'{n}:{dist[n]:.4f}' for n in ns)}; slope {slope:.3f}; residual {resid:.4f}; "
           f"5^3 product distortion {quantize.distortion(product):.4f}; {seconds:.0f} s"
           + ("" if "lloyd125" in BUILD_SECONDS else " (125-node build loaded from file, not timed)"))


def test_criterion_5_exhaustive_dp():
    t0 = time.perf_counter()
    p, cm, spec, q = ModelParams(Nt=3), CostModel(), toy_spec(), toy_quantizer()
    sol = solve(p, cm, spec, q, backend="nearest")
    V, P = brute_force_dp(Grid(spec), q, p, cm, 3)
    seconds = time.perf_counter() - t0
    vdiff = max(float(np.abs(np.asarray(sol.values[n]) - V[n]).max()) for n in range(4))
    same_policy = all((np.asarray(sol.policy[n]) == P[n]).all() for n in range(3))
    report(5, {"values within 1e-10": vdiff <= 1e-10, "policies equal": same_policy, "runtime < 10 s": seconds < 10},
           f"max value diff {vdiff:.1e}; policies {'identical' if same_policy else 'differ'}; {seconds:.1f} s")


def test_criterion_6_tower_property():
    p, cm = ModelParams(), CostModel()
    nu, z = (0.2, 0.03, 0.015), np.array([100.0, 50.0, 10.0])
    part = C.running_cost_partial(flt.InfoState([150, 50], 400, 300, 0.1, z), nu, cm, p)
    mc = _mc_hidden(lambda y1: C.running_cost_full_array(np.column_stack([y1, np.full_like(y1, 50)]), z, nu, cm, p),
                    150.0, 400.0)
    rel = abs(part - mc) / abs(mc)
    report(6, {"3 significant digits": rel < 5e-4}, f"closed form {part:.2f} vs Monte Carlo {mc:.2f}; rel {rel:.1e}")


def test_criterion_7_benchmark():
    p = ModelParams()
    t0 = time.perf_counter()
    ens = run_ensemble(p, NO_CONTROL, BENCHMARK_START, range(100))
    seconds = time.perf_counter() - t0
    m1 = ens.info[:, :, 0].mean(axis=0)
    peak = int(np.argmax(m1)) * p.dt
    at100 = float(m1[int(round(100 / p.dt))])
    report(7, {"peak day in [15, 35]": 15 <= peak <= 35, "m1 < 5 by day 100": at100 < 5, "runtime < 2 min": seconds < 120},
           f"mean m1 peaks on day {peak:g} at {m1.max():.1f}; day 100 mean m1 {at100:.2f}; {seconds:.1f} s")


def test_criterion_8_policy_efficacy(interp_solution):
    sol, seconds = interp_solution
    ens = run_ensemble(ModelParams(), policy_control(sol), OUTBREAK_START, range(50), Nt=sol.Nt)
    days = clearance_day(ens)
    med = median_clearance(days)
    share = float(np.mean(ens.obs[:, :, 2] <= 10.0))
    full_grid = RunConfig.from_dict({}, "paper").grid
    report(8, {"median clearance in [20, 45]": 20 <= med <= 45, "z3 <= 10 on >= 80% of seed-days": share >= 0.8,
               "full grid preset available": Grid(full_grid).size == 559_872},
           f"median clearance day {med:g} ({int((days >= 0).sum())}/50 cleared); z3 <= 10 on {share:.1%} of "
           f"seed-days; solve {seconds / 60:.1f} min ({'resumed' if seconds < 60 else 'fresh'})")


def test_criterion_9_backend_agreement(interp_solution, regress_solution):
    interp, _ = interp_solution
    regress, seconds = regress_solution
    cm = CostModel()
    grid = regress.grid
    terminal = np.asarray(regress.values[regress.Nt])
    fit = basis_matrix(grid.points, cm, 1000.0) @ np.asarray(regress.theta[regress.Nt])
    resid = float(np.abs(fit - terminal).max() / np.ptp(terminal))

    ens = run_ensemble(ModelParams(), policy_control(regress), OUTBREAK_START, range(50), Nt=regress.Nt)
    days = clearance_day(ens)
    med = median_clearance(days)

    worst, over, ratios = -np.inf, [], []
    for n in (100, 118):
        for fixed in SLICES.values():
            _, _, pts = slice_points(grid, fixed, 25)
            r = slice_values(regress, n, pts, cm, 1000.0)
            v = slice_values(interp, n, pts, cm, 1000.0)
            excess = (r - v) / np.abs(v)
            worst = max(worst, float(excess.max()))
            over.append(float(np.mean(excess > 0.10)))
            ratios.append(float(r.mean() / v.mean()))
    report(9, {"terminal residual < 1e-6 of range": resid < 1e-6, "regress clears within 80 days": med <= 80,
               "regress <= 1.1 x interp on slices": worst <= 0.10},
           f"terminal residual {resid:.1e} of range; regress median clearance day {med:g} "
           f"({int((days >= 0).sum())}/50 cleared); largest pointwise regress excess over interp {worst:+.1%}, "
           f"points above +10% per slice {[round(o, 2) for o in over]}, slice-mean ratios regress/interp "
           f"{[round(x, 3) for x in ratios]}; solve {seconds / 60:.1f} min")


def test_criterion_10_determinism(tmp_path):
    import json

    cfg = {"model": {"Nt": 8}, "quantizer": {"N_l": 8, "sample_count": 20_000},
           "grid": {"preset": "reduced", "state": {"m2": [1, 450, 2], "q2": [1, 1200, 1], "rho": [0, 0, 1],
                                                    "z2": [1, 990, 2], "z3": [1, 50, 2]}},
           "slices": {"steps": [0, 6], "resolution": 9},
           "simulate": {"seeds": {"start": 0, "count": 10}},
           "rollout": {"seeds": {"start": 0, "count": 5}}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    runs = {"a": "1", "b": "1", "c": "4"}
    for name, workers in runs.items():
        out = str(tmp_path / name)
        for command in ("quantize", "solve", "rollout", "simulate"):
            code = cli.main([command, "--config", str(tmp_path / "cfg.json"), "--out", out, "--workers", workers,
                             "--no-plots"])
            assert code == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    mismatched = [str(f) for f in files for other in ("b", "c")
                  if (tmp_path / "a" / f).read_bytes() != (tmp_path / other / f).read_bytes()]
    report(10, {"identical across runs": not mismatched, "files compared": len(files) > 10},
           f"{len(files)} CSV files compared across two runs with 1 worker and one with 4"
           + (f"; differing: {sorted(set(mismatched))}" if mismatched else ""))


# ---- beyond the numbered criteria

def test_lookahead_rollout_on_reduced_grid(interp_solution, lloyd125):
    # same solution and seeds as criterion 8, control chosen at the filtered state instead of the nearest node
    sol, _ = interp_solution
    p = ModelParams()
    ens = run_ensemble(p, lookahead_control(sol, p, CostModel(), lloyd125), OUTBREAK_START, range(50), Nt=sol.Nt)
    days = clearance_day(ens)
    med = median_clearance(days)
    share = float(np.mean(ens.obs[:, :, 2] <= 10.0))
    print(f"lookahead rollout: median clearance day {med:g} ({int((days >= 0).sum())}/50 cleared); "
          f"z3 <= 10 on {share:.1%} of seed-days")
    assert 20 <= med <= 45 and share >= 0.8


def test_policy_near_stationary_on_small_slice(interp_solution):
    sol, _ = interp_solution
    _, _, pts = slice_points(sol.grid, SLICES["small"], 25)
    agree = float(np.mean((slice_policy(sol, 100, pts) == slice_policy(sol, 118, pts)).all(axis=1)))
    print(f"policy agreement between n=100 and n=118 on the small slice: {agree:.1%}")
    assert agree >= 0.8
