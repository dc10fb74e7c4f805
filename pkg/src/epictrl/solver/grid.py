"""Uniform rectilinear grids over the information state and the control set."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATE_AXES = ("m1", "m2", "q1", "q2", "rho", "z1", "z2", "z3")
CONTROL_AXES = ("u_L", "u_T", "u_V")


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise ValueError("axis point count must be a positive integer")
        object.__setattr__(self, "count", int(self.count))
        if self.hi < self.lo or (self.count > 1 and self.hi == self.lo):
            raise ValueError(f"bad axis range [{self.lo}, {self.hi}] for {self.count} points")

    @property
    def points(self) -> np.ndarray:
        if self.count == 1:
            return np.array([float(self.lo)])
        return np.linspace(self.lo, self.hi, self.count)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.count - 1) if self.count > 1 else 1.0


_FULL_STATE = dict(m1=(1, 450, 6), m2=(1, 450, 6), q1=(1, 1200, 6), q2=(1, 1200, 4),
                    rho=(-0.5, 0.5, 3), z1=(1, 350, 6), z2=(1, 990, 6), z3=(1, 50, 6))
_FULL_CONTROL = dict(u_L=(0, 1, 6), u_T=(0.001, 0.07, 3), u_V=(0, 0.1, 3))
# desk-scale counts: extra resolution where costs bend (m1, z1), coarse elsewhere
_REDUCED_COUNTS = dict(m1=4, m2=3, q1=3, q2=3, rho=3, z1=4, z2=3, z3=3)


@dataclass(frozen=True)
class GridSpec:
    """Per-axis ``(lo, hi, count)`` for the eight state and three control coordinates."""

    state: dict = field(default_factory=lambda: {k: Axis(*v) for k, v in _FULL_STATE.items()})
    control: dict = field(default_factory=lambda: {k: Axis(*v) for k, v in _FULL_CONTROL.items()})

    def __post_init__(self):
        state = {k: v if isinstance(v, Axis) else Axis(*v) for k, v in dict(self.state).items()}
        control = {k: v if isinstance(v, Axis) else Axis(*v) for k, v in dict(self.control).items()}
        if set(state) != set(STATE_AXES):
            raise ValueError(f"state axes must be {STATE_AXES}")
        if set(control) != set(CONTROL_AXES):
            raise ValueError(f"control axes must be {CONTROL_AXES}")
        state = {k: state[k] for k in STATE_AXES}
        control = {k: control[k] for k in CONTROL_AXES}
        if state["rho"].lo < -1 or state["rho"].hi > 1:
            raise ValueError("rho range must lie in [-1, 1]")
        for k in ("m1", "m2", "q1", "q2", "z1", "z2", "z3"):
            if state[k].lo < 0:
                raise ValueError(f"{k} range must be nonnegative")
        if control["u_L"].lo < 0 or control["u_L"].hi > 1:
            raise ValueError("u_L range must lie in [0, 1]")
        if control["u_T"].lo < 0 or control["u_V"].lo < 0:
            raise ValueError("u_T and u_V ranges must be nonnegative")
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "control", control)

    @classmethod
    def paper(cls) -> "GridSpec":
        return cls()

    @classmethod
    def reduced(cls) -> "GridSpec":
        state = {k: Axis(lo, hi, _REDUCED_COUNTS[k]) for k, (lo, hi, _) in _FULL_STATE.items()}
        return cls(state=state)

    def to_dict(self) -> dict:
        return {"state": {k: [a.lo, a.hi, a.count] for k, a in self.state.items()},
                "control": {k: [a.lo, a.hi, a.count] for k, a in self.control.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        base = cls()
        state = {**base.state, **{k: Axis(*v) for k, v in d.get("state", {}).items()}}
        control = {**base.control, **{k: Axis(*v) for k, v in d.get("control", {}).items()}}
        unknown = (set(d.get("state", {})) - set(STATE_AXES)) | (set(d.get("control", {})) - set(CONTROL_AXES))
        if unknown:
            raise ValueError(f"unknown grid axes {sorted(unknown)}")
        return cls(state=state, control=control)


class Grid:
    """Materialized state and control grids with row-major multi-index maps."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.axes = [spec.state[k] for k in STATE_AXES]
        self.control_axes = [spec.control[k] for k in CONTROL_AXES]
        self.shape = tuple(a.count for a in self.axes)
        self.control_shape = tuple(a.count for a in self.control_axes)
        self.size = int(np.prod(self.shape))
        self.n_controls = int(np.prod(self.control_shape))
        self.lo = np.array([a.lo for a in self.axes], dtype=float)
        self.hi = np.array([a.hi for a in self.axes], dtype=float)
        self.step = np.array([a.step for a in self.axes], dtype=float)
        self.counts = np.array(self.shape, dtype=np.int64)
        self.strides = np.array([int(np.prod(self.shape[k + 1:])) for k in range(8)], dtype=np.int64)
        self._points = None
        self._controls = None

    @property
    def points(self) -> np.ndarray:
        """All state points, ``(size, 8)`` in row-major order."""
        if self._points is None:
            mesh = np.meshgrid(*[a.points for a in self.axes], indexing="ij")
            self._points = np.stack([g.reshape(-1) for g in mesh], axis=1)
        return self._points

    @property
    def controls(self) -> np.ndarray:
        """All control points, ``(n_controls, 3)``, lexicographic in (u_L, u_T, u_V)."""
        if self._controls is None:
            mesh = np.meshgrid(*[a.points for a in self.control_axes], indexing="ij")
            self._controls = np.stack([g.reshape(-1) for g in mesh], axis=1)
        return self._controls

    def offset(self, multi_index) -> int | np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(multi_index).T), self.shape)

    def multi_index(self, offset) -> np.ndarray:
        return np.stack(np.unravel_index(offset, self.shape), axis=-1)

    def point(self, multi_index) -> np.ndarray:
        idx = np.asarray(multi_index)
        return np.stack([a.points[idx[..., k]] for k, a in enumerate(self.axes)], axis=-1)

    def control_multi_index(self, c) -> np.ndarray:
        return np.stack(np.unravel_index(c, self.control_shape), axis=-1)

    def nearest_index(self, x) -> np.ndarray:
        """Per-axis nearest multi-index after clamping into the box; ties go down."""
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        pos = np.where(self.counts > 1, (x - self.lo) / self.step, 0.0)
        base = np.floor(pos)
        idx = base + (pos - base > 0.5)
        return np.clip(idx, 0, self.counts - 1).astype(np.int64)

    def nearest_offset(self, x):
        return self.offset(self.nearest_index(x))
