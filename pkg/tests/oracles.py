"""Straight-line scalar transcriptions used as independent references in tests."""

import math

import numpy as np


def drift_hidden(y1, y2, z1, z2, z3, uL, uT, uV, p):
    s = p.N - (y1 + y2 + z1 + z2 + z3)
    f1 = (1 - uL) * p.beta * y1 * s / p.N - (p.gamma_minus + p.eta_minus + uT + uV) * y1
    f2 = p.gamma_minus * y1 - uV * y2
    return np.array([f1 * p.dt, f2 * p.dt])


def drift_obs(y1, y2, z1, z2, z3, uL, uT, uV, p):
    a = -(p.gamma_plus + p.eta_plus) * z1 + uT * y1
    b = p.gamma_plus * z1 + p.gamma_H * z3 + uV * (p.N - z1 - z2 - z3)
    c = p.eta_plus * z1 - p.gamma_H * z3 + p.eta_minus * y1
    return np.array([a, b, c]) * p.dt


def sigma_11(y1, y2, z1, z2, z3, uL, p):
    s = p.N - (y1 + y2 + z1 + z2 + z3)
    return math.sqrt((1 - uL) * p.beta * y1 * s / p.N * p.dt)


def ekf_step(m, Q, z, z_next, nu, p, with_ggT=True):
    """One filter step written out entry by entry, without the package's helpers."""
    m1, m2 = m
    z1, z2, z3 = z
    uL, uT, uV = nu
    dt, N = p.dt, p.N
    s = N - m1 - m2 - z1 - z2 - z3
    f = drift_hidden(m1, m2, z1, z2, z3, uL, uT, uV, p)
    k = (1 - uL) * p.beta / N
    f1 = np.array([[1 + dt * (k * (s - m1) - (p.gamma_minus + p.eta_minus + uT + uV)), -dt * k * m1],
                   [dt * p.gamma_minus, 1 - dt * uV]])
    h0 = np.array([-(p.gamma_plus + p.eta_plus) * z1,
                   p.gamma_plus * z1 + p.gamma_H * z3 + uV * (N - z1 - z2 - z3),
                   p.eta_plus * z1 - p.gamma_H * z3]) * dt
    h1 = np.array([[uT, 0], [0, 0], [p.eta_minus, 0]]) * dt
    r = lambda v: math.sqrt(max(v, 0.0))  # noqa: E731
    inf = (1 - uL) * p.beta * m1 * s / N
    sig = np.array([[r(inf), -r(p.gamma_minus * m1)], [0, r(p.gamma_minus * m1)]]) * math.sqrt(dt)
    g = np.zeros((2, 8))
    g[0, 0] = -r(uT * m1)
    g[0, 3] = -r(uV * m1)
    g[0, 5] = -r(p.eta_minus * m1)
    g[1, 4] = -r(uV * m2)
    ell = np.zeros((3, 8))
    ell[0, 0] = r(uT * m1)
    ell[0, 1] = -r(p.gamma_plus * z1)
    ell[0, 6] = -r(p.eta_plus * z1)
    ell[1, 1] = r(p.gamma_plus * z1)
    ell[1, 2] = r(uV * s)
    ell[1, 3] = r(uV * m1)
    ell[1, 4] = r(uV * m2)
    ell[1, 7] = r(p.gamma_H * z3)
    ell[2, 5] = r(p.eta_minus * m1)
    ell[2, 6] = r(p.eta_plus * z1)
    ell[2, 7] = -r(p.gamma_H * z3)
    g *= math.sqrt(dt)
    ell *= math.sqrt(dt)
    A = g @ ell.T + f1 @ Q @ h1.T
    S = ell @ ell.T + h1 @ Q @ h1.T
    K = A @ np.linalg.pinv(S, rcond=1e-10)
    m_new = np.asarray(m) + f + K @ (np.asarray(z_next) - np.asarray(z) - h0 - h1 @ np.asarray(m))
    Q_new = -K @ A.T + f1 @ Q @ f1.T + sig @ sig.T
    if with_ggT:
        Q_new = Q_new + g @ g.T
    return m_new, Q_new


def cost(x, xbar, a_bar, a, b):
    return (a_bar if x > 0 else 0.0) + a * x + (b * (x - xbar) ** 2 if x > xbar else 0.0)
