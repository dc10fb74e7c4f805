"""JSON run configuration with table defaults.

Every section is optional; omitted keys take the default parameter set.
The merged result is what commands actually use and what they echo back.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .costs import CostModel, CostTriple
from .filtering import FilterOptions, InfoState
from .model import ModelParams
from .scenarios import BENCHMARK_START, MODERATE_CONTROL, NO_CONTROL, OUTBREAK_START
from .solver.grid import GridSpec


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _state_dict(s: InfoState) -> dict:
    x = s.as_array().tolist()
    return dict(zip(("m1", "m2", "q1", "q2", "rho", "z1", "z2", "z3"), x))


SCENARIOS = {
    "benchmark": {"control": list(NO_CONTROL), "initial_state": _state_dict(BENCHMARK_START)},
    "moderate": {"control": list(MODERATE_CONTROL), "initial_state": _state_dict(BENCHMARK_START)},
}

DEFAULTS = {
    "model": {f.name: f.default for f in fields(ModelParams)},
    "costs": {},
    "filter": {"q_cap": None, "literal_riccati": False},
    "grid": {"preset": "paper", "state": {}, "control": {}},
    "quantizer": {"mode": "lloyd", "N_l": 125, "per_dim": 5, "seed": 0, "sample_count": 1_000_000,
                  "iters": 300, "sampler": "sobol", "file": None},
    "solver": {"backend": "interp", "interp_mode": "multilinear", "workers": 1},
    "simulate": {"scenario": "benchmark", "control": None, "initial_state": None,
                 "seeds": {"start": 0, "count": 100}, "write_paths": True},
    "rollout": {"solution": None, "policy": "nearest", "initial_state": _state_dict(OUTBREAK_START),
                "seeds": {"start": 0, "count": 50}},
    "slices": {"steps": [100, 118], "resolution": 25},
    "output": {"dir": "out", "plots": True},
}
_cost_defaults = CostModel()
for f in fields(CostModel):
    v = getattr(_cost_defaults, f.name)
    DEFAULTS["costs"][f.name] = [v.a_bar, v.a, v.b] if isinstance(v, CostTriple) else v


def _merge(base: dict, override: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in out:
            raise ConfigError(f"unknown key {where}{k}")
        if isinstance(out[k], dict) and k not in ("state", "control", "initial_state") and isinstance(v, dict):
            out[k] = _merge(out[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    """Merged configuration plus the parsed objects commands need."""

    raw: dict
    params: ModelParams
    costs: CostModel
    grid: GridSpec
    filter_opts: FilterOptions

    @classmethod
    def from_dict(cls, d: dict | None = None, grid_preset: str | None = None) -> "RunConfig":
        d = d or {}
        if not isinstance(d, dict):
            raise ConfigError("config root must be a JSON object")
        raw = _merge(DEFAULTS, d, "")
        if grid_preset is not None:
            raw["grid"]["preset"] = grid_preset
        try:
            m = dict(raw["model"])
            if m.get("beta_schedule") is not None:
                m["beta_schedule"] = tuple(m["beta_schedule"])
            params = ModelParams(**m)
            c = {k: CostTriple(*v) if isinstance(v, (list, tuple)) else v for k, v in raw["costs"].items()}
            costs = CostModel(**c)
            g = raw["grid"]
            if g["preset"] not in ("reduced", "paper"):
                raise ConfigError(f"grid.preset must be 'reduced' or 'paper', got {g['preset']!r}")
            base = GridSpec.reduced() if g["preset"] == "reduced" else GridSpec.paper()
            overrides = GridSpec.from_dict({"state": g["state"], "control": g["control"]})
            state = {**base.state, **{k: overrides.state[k] for k in g["state"]}}
            control = {**base.control, **{k: overrides.control[k] for k in g["control"]}}
            grid = GridSpec(state=state, control=control)
            filter_opts = FilterOptions(**raw["filter"])
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if params.u_T_min > grid.control["u_T"].hi:
            raise ConfigError("u_T_min exceeds the largest testing rate on the control grid")
        q = raw["quantizer"]
        if q["mode"] not in ("lloyd", "product"):
            raise ConfigError("quantizer.mode must be 'lloyd' or 'product'")
        if q["file"] is not None and not Path(q["file"]).exists():
            raise ConfigError(f"quantizer file {q['file']} does not exist")
        s = raw["solver"]
        if s["backend"] not in ("interp", "regress", "nearest"):
            raise ConfigError("solver.backend must be interp, regress or nearest")
        if s["interp_mode"] not in ("multilinear", "subspace6"):
            raise ConfigError("solver.interp_mode must be multilinear or subspace6")
        if raw["rollout"]["policy"] not in ("nearest", "lookahead"):
            raise ConfigError("rollout.policy must be nearest or lookahead")
        sim = raw["simulate"]
        if sim["scenario"] not in SCENARIOS and sim["scenario"] != "custom":
            raise ConfigError(f"simulate.scenario must be one of {sorted(SCENARIOS)} or 'custom'")
        if sim["scenario"] == "custom" and (sim["control"] is None or sim["initial_state"] is None):
            raise ConfigError("custom scenario needs simulate.control and simulate.initial_state")
        return cls(raw, params, costs, grid, filter_opts)

    @classmethod
    def load(cls, path, grid_preset: str | None = None) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(d, grid_preset)

    def effective(self) -> dict:
        """Merged configuration, JSON-ready; loading it reproduces this run."""
        out = copy.deepcopy(self.raw)
        out["grid"]["state"] = {k: [a.lo, a.hi, a.count] for k, a in self.grid.state.items()}
        out["grid"]["control"] = {k: [a.lo, a.hi, a.count] for k, a in self.grid.control.items()}
        out["model"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.params).items()}
        return out

    def seeds(self, section: str) -> list[int]:
        s = self.raw[section]["seeds"]
        if isinstance(s, list):
            return [int(v) for v in s]
        return list(range(int(s["start"]), int(s["start"]) + int(s["count"])))

    def simulate_setup(self):
        sim = self.raw["simulate"]
        preset = SCENARIOS.get(sim["scenario"], {})
        control = sim["control"] if sim["control"] is not None else preset["control"]
        start = sim["initial_state"] if sim["initial_state"] is not None else preset["initial_state"]
        return tuple(float(c) for c in control), state_from_dict(start)


def state_from_dict(d: dict) -> InfoState:
    try:
        return InfoState(m=[d["m1"], d["m2"]], q1=d["q1"], q2=d["q2"], rho=d["rho"],
                         z=[d["z1"], d["z2"], d["z3"]])
    except KeyError as exc:
        raise ConfigError(f"initial state is missing {exc}") from exc
