"""Diffusion approximation of the SI+-R+-H epidemic and its Euler-Maruyama simulator.

State layout used throughout the package:

* hidden ``y = (I-, R-)``
* observed ``z = (I+, R+, H)``
* control ``nu = (u_L, u_T, u_V)``

All coefficient functions broadcast over leading axes, so ``y`` may have
shape ``(..., 2)``, ``z`` shape ``(..., 3)`` and ``nu`` shape ``(..., 3)``.
Coefficients are returned already scaled by the time step (``dt`` for drifts,
``sqrt(dt)`` for diffusions).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Epidemiological rates (1/day), population size and time grid."""

    beta: float = 0.25
    gamma_minus: float = 0.067
    gamma_plus: float = 0.1
    gamma_H: float = 0.09
    eta_minus: float = 0.002
    eta_plus: float = 0.003
    N: float = 1000.0
    dt: float = 1.0
    Nt: int = 120
    u_T_min: float = 0.001
    # optional per-step infection rate; constant ``beta`` when None
    beta_schedule: tuple[float, ...] | None = None

    def __post_init__(self):
        rates = (self.beta, self.gamma_minus, self.gamma_plus, self.gamma_H,
                 self.eta_minus, self.eta_plus, self.u_T_min)
        if any(r < 0 for r in rates):
            raise ValueError("model rates must be nonnegative")
        if self.N <= 0 or self.dt <= 0:
            raise ValueError("N and dt must be positive")
        if int(self.Nt) != self.Nt or self.Nt < 0:
            raise ValueError("Nt must be a nonnegative integer")
        if self.beta_schedule is not None:
            if any(b < 0 for b in self.beta_schedule):
                raise ValueError("beta_schedule entries must be nonnegative")
            object.__setattr__(self, "beta_schedule", tuple(float(b) for b in self.beta_schedule))

    def beta_at(self, n: int) -> float:
        if self.beta_schedule is None:
            return self.beta
        sched = self.beta_schedule
        return sched[min(int(n), len(sched) - 1)]

    @property
    def time_dependent(self) -> bool:
        return self.beta_schedule is not None


class ControlValue(NamedTuple):
    """Lockdown level in [0, 1], testing rate and vaccination rate (1/day)."""

    u_L: float
    u_T: float
    u_V: float

    def validate(self) -> "ControlValue":
        if not 0.0 <= self.u_L <= 1.0:
            raise ValueError(f"u_L={self.u_L} outside [0, 1]")
        if self.u_T < 0 or self.u_V < 0:
            raise ValueError("u_T and u_V must be nonnegative")
        return self


@dataclass(frozen=True)
class FullState:
    """Full-information state: hidden ``y = (I-, R-)``, observed ``z = (I+, R+, H)``."""

    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).reshape(2))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float).reshape(3))

    def susceptible(self, N: float) -> float:
        return float(N - self.y.sum() - self.z.sum())

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.y, self.z])

    @classmethod
    def from_array(cls, x) -> "FullState":
        x = np.asarray(x, dtype=float)
        return cls(x[:2], x[2:5])


@dataclass
class Trajectory:
    states: list[FullState]
    controls: list[ControlValue]
    seed: int | None = None

    def __post_init__(self):
        if len(self.states) != len(self.controls) + 1:
            raise ValueError("a trajectory needs exactly one more state than controls")

    @property
    def Nt(self) -> int:
        return len(self.controls)

    def state_array(self) -> np.ndarray:
        """States as an ``(Nt+1, 5)`` array ordered (Y1, Y2, Z1, Z2, Z3)."""
        return np.array([s.as_array() for s in self.states])

    def control_array(self) -> np.ndarray:
        return np.array(self.controls, dtype=float).reshape(-1, 3)


def _split_nu(nu):
    nu = np.asarray(nu, dtype=float)
    return nu[..., 0], nu[..., 1], nu[..., 2]


def _sqrt0(x):
    # discretization can push rate*population products slightly negative
    return np.sqrt(np.maximum(x, 0.0))


def susceptibles(y, z, p: ModelParams):
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    return p.N - y.sum(axis=-1) - z.sum(axis=-1)


def _infection_rate(n, y, z, nu, p):
    uL = _split_nu(nu)[0]
    y = np.asarray(y, dtype=float)
    return (1.0 - uL) * p.beta_at(n) * y[..., 0] * susceptibles(y, z, p) / p.N


def drift_hidden(n, y, z, nu, p: ModelParams) -> np.ndarray:
    """Drift of the hidden compartments over one step, ``f = f_bar * dt``."""
    y = np.asarray(y, dtype=float)
    _, uT, uV = _split_nu(nu)
    y1, y2 = y[..., 0], y[..., 1]
    f1 = _infection_rate(n, y, z, nu, p) - (p.gamma_minus + p.eta_minus + uT + uV) * y1
    f2 = p.gamma_minus * y1 - uV * y2
    return np.stack([f1, f2], axis=-1) * p.dt


def obs_drift_terms(n, z, nu, p: ModelParams):
    """Return ``(h0, h1)``: observation drift offset ``(..., 3)`` and loading ``(..., 3, 2)``."""
    z = np.asarray(z, dtype=float)
    _, uT, uV = _split_nu(nu)
    z1, z2, z3 = z[..., 0], z[..., 1], z[..., 2]
    h0 = np.stack([
        -(p.gamma_plus + p.eta_plus) * z1,
        p.gamma_plus * z1 + p.gamma_H * z3 + uV * (p.N - (z1 + z2 + z3)),
        p.eta_plus * z1 - p.gamma_H * z3,
    ], axis=-1) * p.dt
    shape = np.broadcast(z1, uT).shape
    h1 = np.zeros(shape + (3, 2))
    h1[..., 0, 0] = uT * p.dt
    h1[..., 2, 0] = p.eta_minus * p.dt
    return h0, h1


def drift_obs(n, y, z, nu, p: ModelParams) -> np.ndarray:
    """Observation drift over one step, ``h0 + h1 @ y``."""
    h0, h1 = obs_drift_terms(n, z, nu, p)
    y = np.asarray(y, dtype=float)
    return h0 + np.einsum("...ij,...j->...i", h1, y)


def diffusion_blocks(n, y, z, nu, p: ModelParams):
    """Diffusion matrices ``(sigma, g, ell)`` with shapes ``(...,2,2)``, ``(...,2,8)``, ``(...,3,8)``.

    Columns of ``g`` and ``ell`` share the eight transition noises
    (detection, I+ recovery, vaccination of S / I- / R-, I- and I+
    hospitalization, hospital recovery).
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    _, uT, uV = _split_nu(nu)
    y1, y2 = y[..., 0], y[..., 1]
    z1, z3 = z[..., 0], z[..., 2]
    s = susceptibles(y, z, p)
    shape = np.broadcast(y1, z1, uT).shape

    r_inf = _sqrt0(_infection_rate(n, y, z, nu, p))
    r_rec = _sqrt0(p.gamma_minus * y1)
    r_det = _sqrt0(uT * y1)
    r_rplus = _sqrt0(p.gamma_plus * z1)
    r_vs = _sqrt0(uV * s)
    r_vi = _sqrt0(uV * y1)
    r_vr = _sqrt0(uV * y2)
    r_hm = _sqrt0(p.eta_minus * y1)
    r_hp = _sqrt0(p.eta_plus * z1)
    r_hr = _sqrt0(p.gamma_H * z3)

    sigma = np.zeros(shape + (2, 2))
    sigma[..., 0, 0] = r_inf
    sigma[..., 0, 1] = -r_rec
    sigma[..., 1, 1] = r_rec

    g = np.zeros(shape + (2, 8))
    g[..., 0, 0] = -r_det
    g[..., 0, 3] = -r_vi
    g[..., 0, 5] = -r_hm
    g[..., 1, 4] = -r_vr

    ell = np.zeros(shape + (3, 8))
    ell[..., 0, 0] = r_det
    ell[..., 0, 1] = -r_rplus
    ell[..., 0, 6] = -r_hp
    ell[..., 1, 1] = r_rplus
    ell[..., 1, 2] = r_vs
    ell[..., 1, 3] = r_vi
    ell[..., 1, 4] = r_vr
    ell[..., 1, 7] = r_hr
    ell[..., 2, 5] = r_hm
    ell[..., 2, 6] = r_hp
    ell[..., 2, 7] = -r_hr

    sq = np.sqrt(p.dt)
    return sigma * sq, g * sq, ell * sq


def clip_array(x, p: ModelParams) -> np.ndarray:
    """Array version of :func:`clip_state` on ``(..., 5)`` arrays ordered (Y1, Y2, Z1, Z2, Z3)."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, p.N)
    excess = x.sum(axis=-1) - p.N
    if np.any(excess > 0):
        x = x.copy()
        excess = np.maximum(excess, 0.0)
        # Y2, Z2 first; the rest only matters for pathological inputs
        for k in (1, 3, 0, 2, 4):
            take = np.minimum(excess, x[..., k])
            x[..., k] -= take
            excess = excess - take
    return x


def clip_state(state: FullState, p: ModelParams) -> FullState:
    """Clamp compartments to ``[0, N]`` and restore ``S >= 0`` by draining R- then R+."""
    return FullState.from_array(clip_array(state.as_array(), p))


def step_arrays(y, z, nu, b1, b2, n, p: ModelParams):
    """One Euler-Maruyama step on arrays; returns clipped ``(y_next, z_next)``."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    f = drift_hidden(n, y, z, nu, p)
    h0, h1 = obs_drift_terms(n, z, nu, p)
    sigma, g, ell = diffusion_blocks(n, y, z, nu, p)
    y_next = y + f + np.einsum("...ij,...j->...i", sigma, b1) + np.einsum("...ij,...j->...i", g, b2)
    z_next = z + h0 + np.einsum("...ij,...j->...i", h1, y) + np.einsum("...ij,...j->...i", ell, b2)
    x = clip_array(np.concatenate([y_next, z_next], axis=-1), p)
    return x[..., :2], x[..., 2:]


def step(state: FullState, nu, b1, b2, n: int, p: ModelParams) -> FullState:
    """Advance one time step given standard-normal draws ``b1`` (2,) and ``b2`` (8,)."""
    y, z = step_arrays(state.y, state.z, nu, np.asarray(b1, float), np.asarray(b2, float), n, p)
    return FullState(y, z)


ControlSource = Union[ControlValue, Sequence[float], Callable[[int, FullState], ControlValue]]


def simulate(p: ModelParams, schedule: ControlSource, x0: FullState, seed: int | None = 0,
             zero_noise: bool = False) -> Trajectory:
    """Simulate ``Nt`` steps from ``x0``.

    ``schedule`` is either a fixed control or a callable ``(n, state) -> control``.
    """
    rng = np.random.default_rng(seed)
    states = [clip_state(x0, p)]
    controls = []
    for n in range(p.Nt):
        nu = schedule(n, states[-1]) if callable(schedule) else schedule
        nu = ControlValue(*map(float, nu))
        if zero_noise:
            b1, b2 = np.zeros(2), np.zeros(8)
        else:
            b1 = rng.standard_normal(2)
            b2 = rng.standard_normal(8)
        states.append(step(states[-1], nu, b1, b2, n, p))
        controls.append(nu)
    return Trajectory(states, controls, seed)
