"""Running and terminal costs under full and partial information.

Every cost is built from one primitive, a fixed charge for any positive
activity plus a linear rate plus a quadratic penalty above a threshold.
Under partial information the undetected-infected term is replaced by its
conditional expectation given a Gaussian filter, which has a closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np
from scipy.special import ndtr

from .model import ControlValue, FullState, ModelParams

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class CostTriple:
    """Fixed cost ``a_bar``, linear rate ``a`` and quadratic weight ``b``."""

    a_bar: float
    a: float
    b: float

    def __post_init__(self):
        if min(self.a_bar, self.a, self.b) < 0:
            raise ValueError(f"cost coefficients must be nonnegative, got {self}")

    def scaled(self, lam: float) -> "CostTriple":
        return CostTriple(lam * self.a_bar, lam * self.a, lam * self.b)


@dataclass(frozen=True)
class CostModel:
    L: CostTriple = CostTriple(10000.0, 80.0, 0.8)
    T: CostTriple = CostTriple(2000.0, 1200.0, 80.0)
    V: CostTriple = CostTriple(4000.0, 1500.0, 90.0)
    H: CostTriple = CostTriple(1000.0, 2000.0, 100.0)
    I_minus: CostTriple = CostTriple(0.0, 1500.0, 150.0)
    I_plus: CostTriple = CostTriple(0.0, 1000.0, 100.0)
    term_I_minus: CostTriple = CostTriple(0.0, 15000.0, 1500.0)
    term_I_plus: CostTriple = CostTriple(0.0, 10000.0, 1000.0)
    term_H: CostTriple = CostTriple(10000.0, 20000.0, 1000.0)
    x_test: float = 50.0
    x_vacc: float = 40.0
    x_H: float = 10.0
    x_I_minus: float = 100.0
    x_I_plus: float = 150.0
    xT_I_minus: float = 100.0
    xT_I_plus: float = 150.0
    xT_H: float = 10.0
    # N - z1 and N - z1 - z2 instead of excluding hospitalized people
    proposition_pools: bool = False

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and v < 0:
                raise ValueError(f"threshold {f.name} must be nonnegative")

    def scaled(self, lam: float) -> "CostModel":
        """Same thresholds, every coefficient multiplied by ``lam``."""
        changes = {f.name: getattr(self, f.name).scaled(lam)
                   for f in fields(self) if isinstance(getattr(self, f.name), CostTriple)}
        return replace(self, **changes)

    def pools(self, z, N):
        """Workforce and testable population for observations ``z``."""
        z = np.asarray(z, dtype=float)
        z1, z2, z3 = z[..., 0], z[..., 1], z[..., 2]
        if self.proposition_pools:
            return N - z1, N - z1 - z2
        return N - z1 - z3, N - z1 - z2 - z3


def cost_primitive(x, xbar, c: CostTriple):
    """``a_bar 1{x>0} + a x + b (x - xbar)^2 1{x > xbar}``; broadcasts over ``x``."""
    x = np.asarray(x, dtype=float)
    excess = np.maximum(x - xbar, 0.0)
    return c.a_bar * (x > 0) + c.a * x + c.b * excess * excess


def _tail(m1, q1, xbar):
    # q1 <= 0 degenerates to the point mass at m1
    d = np.asarray(m1, dtype=float) - xbar
    q1 = np.asarray(q1, dtype=float)
    pos = q1 > 0
    sq = np.sqrt(np.where(pos, q1, 1.0))
    # the clamp only bites where exp underflows anyway; it keeps t*t finite
    t = np.clip(d / sq, -1e100, 1e100)
    closed = (d * d + q1) * ndtr(t) + d * sq * _INV_SQRT_2PI * np.exp(-0.5 * t * t)
    hinge = np.maximum(d, 0.0)
    return np.where(pos, closed, hinge * hinge)


def gauss_tail_penalty(m1, q1, xbar):
    """Expected squared excess ``E[(Y - xbar)_+^2]`` for ``Y ~ N(m1, q1)``.

    Parameters
    ----------
    m1 : array_like
        Mean.
    q1 : array_like
        Variance, strictly positive.
    xbar : float
        Threshold.

    Raises
    ------
    ValueError
        If any variance is not strictly positive.
    """
    if np.any(np.asarray(q1) <= 0):
        raise ValueError("gauss_tail_penalty needs q1 > 0; use max(m1 - xbar, 0)**2 for a point mass")
    return _tail(m1, q1, xbar)


def _prob_positive(m1, q1):
    m1 = np.asarray(m1, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    pos = q1 > 0
    return np.where(pos, ndtr(m1 / np.sqrt(np.where(pos, q1, 1.0))), (m1 > 0).astype(float))


def _control_costs(z, nu, cm: CostModel, p: ModelParams):
    nu = np.asarray(nu, dtype=float)
    work, test = cm.pools(z, p.N)
    return (cost_primitive(nu[..., 0] * work, 0.0, cm.L)
            + cost_primitive(nu[..., 1] * test, cm.x_test, cm.T)
            + cost_primitive(nu[..., 2] * test, cm.x_vacc, cm.V))


def running_cost_full_array(y, z, nu, cm: CostModel, p: ModelParams):
    """Broadcasting form of :func:`running_cost_full` on ``y (..., 2)``, ``z (..., 3)``."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    total = (_control_costs(z, nu, cm, p)
             + cost_primitive(z[..., 2], cm.x_H, cm.H)
             + cost_primitive(y[..., 0], cm.x_I_minus, cm.I_minus)
             + cost_primitive(z[..., 0], cm.x_I_plus, cm.I_plus))
    return total * p.dt


def running_cost_full(x: FullState, nu, cm: CostModel, p: ModelParams) -> float:
    """One-period cost when every compartment is observed."""
    return float(running_cost_full_array(x.y, x.z, np.asarray(nu, float), cm, p))


def terminal_cost_full(x: FullState, cm: CostModel) -> float:
    return float(cost_primitive(x.y[0], cm.xT_I_minus, cm.term_I_minus)
                 + cost_primitive(x.z[0], cm.xT_I_plus, cm.term_I_plus)
                 + cost_primitive(x.z[2], cm.xT_H, cm.term_H))


def _expected_hidden_cost(m1, q1, xbar, c: CostTriple):
    return c.a_bar * _prob_positive(m1, q1) + c.a * np.asarray(m1, float) + c.b * _tail(m1, q1, xbar)


def running_cost_partial_array(x, nu, cm: CostModel, p: ModelParams):
    """Partial-information running cost on packed info states ``(..., 8)``.

    Only ``m1``, ``q1`` and ``z`` enter; ``m2``, ``q2`` and ``rho`` do not.
    """
    x = np.asarray(x, dtype=float)
    z = x[..., 5:8]
    total = (_control_costs(z, nu, cm, p)
             + cost_primitive(z[..., 2], cm.x_H, cm.H)
             + cost_primitive(z[..., 0], cm.x_I_plus, cm.I_plus)
             + _expected_hidden_cost(x[..., 0], x[..., 2], cm.x_I_minus, cm.I_minus))
    return total * p.dt


def terminal_cost_partial_array(x, cm: CostModel):
    x = np.asarray(x, dtype=float)
    return (_expected_hidden_cost(x[..., 0], x[..., 2], cm.xT_I_minus, cm.term_I_minus)
            + cost_primitive(x[..., 5], cm.xT_I_plus, cm.term_I_plus)
            + cost_primitive(x[..., 7], cm.xT_H, cm.term_H))


def running_cost_partial(s, nu, cm: CostModel, p: ModelParams) -> float:
    """Expected running cost given the filter ``s`` (an :class:`~epictrl.filtering.InfoState`)."""
    if isinstance(nu, ControlValue):
        nu = tuple(nu)
    return float(running_cost_partial_array(s.as_array(), np.asarray(nu, float), cm, p))


def terminal_cost_partial(s, cm: CostModel) -> float:
    return float(terminal_cost_partial_array(s.as_array(), cm))
