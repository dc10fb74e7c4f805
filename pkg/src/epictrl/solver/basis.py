"""Ansatz functions for the regression backend.

Constant, the six linear coordinates ``z1, z2, z3, m1, m2, q1``, squared
hinges of the cost thresholds, the squared workforce, and the expected
squared excess of undetected infections.
"""

from __future__ import annotations

import numpy as np

from ..costs import CostModel, _tail

N_BASIS = 14


def _sqhinge(x):
    h = np.maximum(x, 0.0)
    return h * h


def basis_matrix(x, cm: CostModel, N: float) -> np.ndarray:
    """Evaluate all ansatz functions at packed info states ``(..., 8)``; returns ``(..., 14)``."""
    x = np.asarray(x, dtype=float)
    m1, m2, q1 = x[..., 0], x[..., 1], x[..., 2]
    z1, z2, z3 = x[..., 5], x[..., 6], x[..., 7]
    work, test = cm.pools(x[..., 5:8], N)
    cols = [np.ones_like(m1), z1, z2, z3, m1, m2, q1,
            _sqhinge(z1 - cm.x_I_plus),
            _sqhinge(m1 - cm.x_I_minus),
            _sqhinge(test - cm.x_test),
            _sqhinge(test - cm.x_vacc),
            work * work,
            _sqhinge(z3 - cm.x_H),
            _tail(m1, q1, cm.x_I_minus)]
    return np.stack(cols, axis=-1)


def ansatz_eval(j: int, s, cm: CostModel, p) -> float:
    """Value of ansatz function ``j`` at the info state ``s``."""
    if not 0 <= j < N_BASIS:
        raise IndexError(f"ansatz index {j} outside 0..{N_BASIS - 1}")
    return float(basis_matrix(s.as_array(), cm, p.N)[j])


def thresholds(cm: CostModel) -> np.ndarray:
    """Threshold vector in the order the compiled basis expects."""
    return np.array([cm.x_I_plus, cm.x_I_minus, cm.x_test, cm.x_vacc, cm.x_H])
