"""Command line entry point: ``epictrl quantize|simulate|solve|rollout``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io, quantize, reports
from .config import ConfigError, RunConfig, state_from_dict
from .filtering import CovarianceError
from .scenarios import clearance_day, lookahead_control, policy_control, run_ensemble
from .solver import NumericalError, Solution, solve
from .solver.bellman import config_hash, quantizer_hash

log = logging.getLogger("epictrl")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _write_effective(cfg: RunConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.json").write_text(json.dumps(cfg.effective(), indent=2, sort_keys=True) + "\n")


def build_quantizer(cfg: RunConfig, out: Path | None = None, write_cache: bool = True) -> quantize.Quantizer:
    """Load the configured quantizer file, reuse a cached one, or build and cache it."""
    q = cfg.raw["quantizer"]
    if q["file"] is not None:
        return quantize.load(q["file"], dim=3)
    settings = {k: q[k] for k in ("mode", "N_l", "per_dim", "seed", "sample_count", "iters", "sampler")}
    cache = key_file = None
    if out is not None:
        cache = out / "quantizer.csv"
        key_file = out / "quantizer.settings.json"
        if cache.exists() and key_file.exists() and json.loads(key_file.read_text()) == settings:
            return quantize.load(cache, dim=3)
    if q["mode"] == "product":
        factor = quantize.optimal_1d(q["per_dim"], q["sample_count"], seed=q["seed"])
        result = quantize.product_quantizer([factor] * 3)
    else:
        result = quantize.lloyd(3, q["N_l"], q["sample_count"], q["iters"], q["seed"], q["sampler"])
    if cache is not None and write_cache:
        out.mkdir(parents=True, exist_ok=True)
        quantize.save(result, cache)
        key_file.write_text(json.dumps(settings, sort_keys=True) + "\n")
        # use the file's exact contents so cached and fresh runs agree
        result = quantize.load(cache, dim=3)
    return result


def cmd_quantize(cfg: RunConfig, out: Path, plots: bool) -> int:
    q = build_quantizer(cfg, out)
    dist = quantize.distortion(q)
    resid = quantize.stationarity_residual(q)
    print(f"quantizer: {q.size} nodes, dim {q.dim}, file {out / 'quantizer.csv'}")
    print(f"distortion (L2): {dist:.6f}")
    print(f"stationarity residual: {resid:.6f}")
    return EXIT_OK


def _export_ensemble(ens, cfg: RunConfig, out: Path, plots: bool, title: str, write_paths: bool):
    dt = cfg.params.dt
    if write_paths:
        for k, seed in enumerate(ens.seeds):
            io.write_csv(out / "paths" / f"path_{int(seed)}.csv", reports.PATH_HEADER,
                         reports.path_rows(ens, k, dt), reports.PATH_UNITS)
    series = reports.ensemble_series(ens)
    io.write_csv(out / "summary.csv", reports.SUMMARY_HEADER, reports.summary_rows(series, dt),
                 reports.SUMMARY_UNITS)
    if plots:
        from . import plotting

        days = np.arange(ens.info.shape[1]) * dt
        plotting.plot_ensemble(days, {k: series[k] for k in ("m1", "z1", "m2", "z2", "z3", "q1", "q2")},
                               out / "ensemble.png", title)
        plotting.plot_controls(days[:-1], ens.controls, out / "controls.png", title)
    return series


def cmd_simulate(cfg: RunConfig, out: Path, plots: bool) -> int:
    control, start = cfg.simulate_setup()
    seeds = cfg.seeds("simulate")
    ens = run_ensemble(cfg.params, control, start, seeds, cfg.filter_opts)
    series = _export_ensemble(ens, cfg, out, plots, f"fixed control {control}",
                              cfg.raw["simulate"]["write_paths"])
    m1 = series["m1"][0]
    print(f"{len(seeds)} paths; mean m1 peaks on day {int(np.argmax(m1)) * cfg.params.dt:g} "
          f"at {m1.max():.1f}; mean m1 on last day {m1[-1]:.2f}")
    return EXIT_OK


def cmd_solve(cfg: RunConfig, out: Path, plots: bool) -> int:
    q = build_quantizer(cfg, out)
    s = cfg.raw["solver"]
    run_hash = config_hash(cfg.effective()["model"], cfg.effective()["costs"], cfg.grid.to_dict(),
                           cfg.raw["filter"], quantizer_hash(q), s["backend"], s["interp_mode"])
    t0 = time.perf_counter()

    def progress(n, seconds):
        log.info("step %d done in %.2fs", n, seconds)

    sol = solve(cfg.params, cfg.costs, cfg.grid, q, backend=s["backend"], path=out / "solution",
                workers=int(s["workers"]), filter_opts=cfg.filter_opts, interp_mode=s["interp_mode"],
                progress=progress, run_hash=run_hash)
    print(f"solved {sol.grid.size} states x {sol.grid.n_controls} controls x {sol.Nt} steps "
          f"({s['backend']}) in {time.perf_counter() - t0:.1f}s; solution {out / 'solution.json'}")
    export_slices(sol, cfg, out, plots)
    return EXIT_OK


def export_slices(sol: Solution, cfg: RunConfig, out: Path, plots: bool):
    sl = cfg.raw["slices"]
    for n in sl["steps"]:
        if not 0 <= n < sol.Nt:
            log.warning("slice step %d outside the horizon; skipped", n)
            continue
        for name, fixed in reports.SLICES.items():
            m1, z1, pts = reports.slice_points(sol.grid, fixed, int(sl["resolution"]))
            vals = reports.slice_values(sol, n, pts, cfg.costs, cfg.params.N, cfg.raw["solver"]["interp_mode"])
            pol = reports.slice_policy(sol, n, pts)
            rows = [[*pts[i], vals[i], *pol[i]] for i in range(len(pts))]
            stem = f"slice_{name}_n{n}"
            io.write_csv(out / f"{stem}.csv", reports.SLICE_HEADER, rows, reports.SLICE_UNITS)
            if plots:
                from . import plotting

                shape = (len(m1), len(z1))
                plotting.plot_slice(m1, z1, vals.reshape(shape), pol[:, 0].reshape(shape), out / f"{stem}.png",
                                    f"{sol.backend}: {name} slice, n={n}")


def cmd_rollout(cfg: RunConfig, out: Path, plots: bool, solution: str | None) -> int:
    path = solution or cfg.raw["rollout"]["solution"] or str(out / "solution")
    path = Path(path)
    if path.suffix in (".json", ".bin"):
        path = path.with_suffix("")
    sol = Solution.open(path)
    if not sol.complete:
        raise ConfigError(f"solution {path} is incomplete; rerun solve to finish it")
    start = state_from_dict(cfg.raw["rollout"]["initial_state"])
    seeds = cfg.seeds("rollout")
    how = cfg.raw["rollout"]["policy"]
    if how == "lookahead":
        # the quantizer cached next to the solution, or a fresh build from the same settings
        try:
            control = lookahead_control(sol, cfg.params, cfg.costs, build_quantizer(cfg, path.parent, write_cache=False),
                                        cfg.filter_opts)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        control = policy_control(sol)
    ens = run_ensemble(cfg.params, control, start, seeds, cfg.filter_opts, Nt=sol.Nt)
    _export_ensemble(ens, cfg, out, plots, f"closed loop ({sol.backend}, {how} policy)", True)
    days = clearance_day(ens)
    z3 = ens.obs[:, :, 2]
    x_H = cfg.costs.x_H
    rows = [[int(s), int(d), float(z3[k].max()), float(np.mean(z3[k] <= x_H))]
            for k, (s, d) in enumerate(zip(ens.seeds, days))]
    io.write_csv(out / "clearance.csv", ["seed", "clearance_day", "max_z3", "share_days_z3_below_threshold"],
                 rows, "clearance_day: first day with m1+z1 < 5 (-1 if never); max_z3: persons; share: 1")
    cleared = days[days >= 0]
    med = float(np.median(np.where(days >= 0, days, np.inf))) if len(days) else float("nan")
    print(f"{len(seeds)} rollouts; cleared {len(cleared)}; median clearance day {med:g}; "
          f"share of seed-days with z3 <= {x_H:g}: {np.mean(z3 <= x_H):.3f}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epictrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("quantize", "simulate", "solve", "rollout"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration (defaults when omitted)")
        p.add_argument("--backend", choices=["interp", "regress", "nearest"])
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="quantizer seed, or first path seed")
        p.add_argument("--grid", choices=["reduced", "paper"], help="state grid preset")
        p.add_argument("--workers", type=int, help="threads for the Bellman step")
        p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "quantize":
            p.add_argument("--mode", choices=["lloyd", "product"])
            p.add_argument("--per-dim", type=int, help="points per axis in product mode")
            p.add_argument("--N-l", dest="N_l", type=int, help="number of nodes in lloyd mode")
        if name == "rollout":
            p.add_argument("--solution", help="solution stem written by solve")
    return parser


def _apply_overrides(args, d: dict) -> dict:
    d = json.loads(json.dumps(d))
    if args.backend:
        d.setdefault("solver", {})["backend"] = args.backend
    if args.workers is not None:
        d.setdefault("solver", {})["workers"] = args.workers
    if args.out:
        d.setdefault("output", {})["dir"] = args.out
    if args.no_plots:
        d.setdefault("output", {})["plots"] = False
    if args.seed is not None:
        if args.command in ("quantize", "solve"):
            d.setdefault("quantizer", {})["seed"] = args.seed
        else:
            d.setdefault(args.command, {}).setdefault("seeds", {"start": 0, "count": 100 if args.command == "simulate" else 50})
            seeds = d[args.command]["seeds"]
            if isinstance(seeds, dict):
                seeds["start"] = args.seed
    if args.command == "quantize":
        q = d.setdefault("quantizer", {})
        if args.mode:
            q["mode"] = args.mode
        if args.per_dim is not None:
            q["per_dim"] = args.per_dim
        if args.N_l is not None:
            q["N_l"] = args.N_l
    return d


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        raw = {}
        if args.config:
            try:
                raw = json.loads(Path(args.config).read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
        cfg = RunConfig.from_dict(_apply_overrides(args, raw), args.grid)
        out = Path(cfg.raw["output"]["dir"])
        plots = bool(cfg.raw["output"]["plots"])
        _write_effective(cfg, out)
        if args.command == "quantize":
            return cmd_quantize(cfg, out, plots)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, plots)
        if args.command == "solve":
            return cmd_solve(cfg, out, plots)
        return cmd_rollout(cfg, out, plots, args.solution)
    except quantize.QuantizerFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, CovarianceError, io.ExportError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
