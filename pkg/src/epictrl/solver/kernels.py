"""Compiled inner loops of the Bellman step.

Each (state, control) pair is handled independently: the deterministic
covariance image fixes three interpolation coordinates, the quantizer nodes
move the mean and observation coordinates. Results for a pair never depend
on how pairs are batched, which keeps solves independent of worker count.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

MODE_MULTILINEAR = 0
MODE_SUBSPACE6 = 1
MODE_NEAREST = 2

# axes that move with the innovation, in table order
MOVING_AXES = np.array([0, 1, 5, 6, 7], dtype=np.int64)
COV_AXES = np.array([2, 3, 4], dtype=np.int64)


@njit(cache=True, nogil=True)
def _locate(x, lo, hi, step, count, snap):
    """Cell index and fraction of ``x`` on a uniform axis, after box clamping."""
    if x < lo:
        x = lo
    if x > hi:
        x = hi
    if count == 1:
        return 0, 0.0
    pos = (x - lo) / step
    i = int(math.floor(pos))
    if i >= count - 1:
        i = count - 2
    if i < 0:
        i = 0
    f = pos - i
    if f > 1.0:
        f = 1.0
    if snap:
        # ties go to the lower node
        f = 1.0 if f > 0.5 else 0.0
    return i, f


@njit(cache=True, nogil=True)
def _clamp(x, lo, hi):
    return lo if x < lo else (hi if x > hi else x)


@njit(cache=True, nogil=True)
def interp_expectations(V, lo, hi, step, counts, strides, base5, strides5,
                        fM, gM, fQ, fZ, gZ, nodes, weights, N, mode, out, work):
    """Quantized expectation of the interpolated value table for every pair.

    Parameters
    ----------
    V : (S,) value table in row-major grid order.
    base5 : (S5,) offsets in ``V`` of every multi-index over the moving axes
        with covariance axes at index 0.
    strides5 : (5,) row-major strides of the contracted moving-axis table.
    fM, gM, fQ, fZ, gZ : per-pair transition coefficients.
    nodes, weights : quantizer.
    mode : MODE_* constant.
    out : (P,) result.
    work : (S5,) scratch buffer.
    """
    P = fM.shape[0]
    L = nodes.shape[0]
    S5 = base5.shape[0]
    snap_all = mode == MODE_NEAREST
    snap_cov = mode != MODE_MULTILINEAR
    ci = np.empty(3, dtype=np.int64)
    cf = np.empty(3)
    coords = np.empty(5)
    lo5 = np.empty(5)
    hi5 = np.empty(5)
    step5 = np.empty(5)
    cnt5 = np.empty(5, dtype=np.int64)
    up5 = np.empty(5, dtype=np.int64)
    for k in range(5):
        a = MOVING_AXES[k]
        lo5[k] = lo[a]
        hi5[k] = hi[a]
        step5[k] = step[a]
        cnt5[k] = counts[a]
        # offset of the upper neighbour; frozen axes have none
        up5[k] = strides5[k] if counts[a] > 1 else 0
    mi = np.empty(5, dtype=np.int64)
    mf = np.empty(5)
    for p in range(P):
        # covariance image: up to eight corners with fixed weights
        for k in range(3):
            a = COV_AXES[k]
            snap = snap_all or (snap_cov and k > 0)
            ci[k], cf[k] = _locate(fQ[p, k], lo[a], hi[a], step[a], counts[a], snap)
        for j in range(S5):
            work[j] = 0.0
        for corner in range(8):
            w = 1.0
            off = 0
            for k in range(3):
                a = COV_AXES[k]
                if (corner >> k) & 1:
                    w *= cf[k]
                    if counts[a] > 1:
                        off += (ci[k] + 1) * strides[a]
                else:
                    w *= 1.0 - cf[k]
                    off += ci[k] * strides[a]
            if w == 0.0:
                continue
            for j in range(S5):
                work[j] += w * V[base5[j] + off]

        acc = 0.0
        for l in range(L):
            e0 = nodes[l, 0]
            e1 = nodes[l, 1]
            e2 = nodes[l, 2]
            coords[0] = fM[p, 0] + gM[p, 0, 0] * e0 + gM[p, 0, 1] * e1 + gM[p, 0, 2] * e2
            coords[1] = fM[p, 1] + gM[p, 1, 0] * e0 + gM[p, 1, 1] * e1 + gM[p, 1, 2] * e2
            for r in range(3):
                coords[2 + r] = fZ[p, r] + gZ[p, r, 0] * e0 + gZ[p, r, 1] * e1 + gZ[p, r, 2] * e2
            base = 0
            for k in range(5):
                x = _clamp(coords[k], 0.0, N)
                i, f = _locate(x, lo5[k], hi5[k], step5[k], cnt5[k], snap_all)
                mi[k] = i
                mf[k] = f
                base += i * strides5[k]
            # nested lerp over the 32 corners, skipping zero weights
            val = 0.0
            for b0 in range(2):
                w0 = mf[0] if b0 else 1.0 - mf[0]
                if w0 == 0.0:
                    continue
                o0 = base + b0 * up5[0]
                for b1 in range(2):
                    w1 = w0 * (mf[1] if b1 else 1.0 - mf[1])
                    if w1 == 0.0:
                        continue
                    o1 = o0 + b1 * up5[1]
                    for b2 in range(2):
                        w2 = w1 * (mf[2] if b2 else 1.0 - mf[2])
                        if w2 == 0.0:
                            continue
                        o2 = o1 + b2 * up5[2]
                        for b3 in range(2):
                            w3 = w2 * (mf[3] if b3 else 1.0 - mf[3])
                            if w3 == 0.0:
                                continue
                            o3 = o2 + b3 * up5[3]
                            f4 = mf[4]
                            if f4 != 1.0:
                                val += w3 * (1.0 - f4) * work[o3]
                            if f4 != 0.0:
                                val += w3 * f4 * work[o3 + up5[4]]
            acc += weights[l] * val
        out[p] = acc


@njit(cache=True, nogil=True)
def _gauss_tail(m1, q1, xbar):
    d = m1 - xbar
    if q1 <= 0.0:
        h = d if d > 0.0 else 0.0
        return h * h
    s = math.sqrt(q1)
    t = d / s
    return (d * d + q1) * 0.5 * math.erfc(-t / math.sqrt(2.0)) + d * s * math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)


@njit(cache=True, nogil=True)
def _sqhinge(x):
    return x * x if x > 0.0 else 0.0


@njit(cache=True, nogil=True)
def basis_into(m1, m2, q1, z1, z2, z3, N, thr, prop_pools, out):
    """Fill ``out`` with the 14 ansatz functions.

    ``thr`` holds the thresholds (I+, I-, test, vaccination, hospital).
    """
    if prop_pools:
        work = N - z1
        test = N - z1 - z2
    else:
        work = N - z1 - z3
        test = N - z1 - z2 - z3
    out[0] = 1.0
    out[1] = z1
    out[2] = z2
    out[3] = z3
    out[4] = m1
    out[5] = m2
    out[6] = q1
    out[7] = _sqhinge(z1 - thr[0])
    out[8] = _sqhinge(m1 - thr[1])
    out[9] = _sqhinge(test - thr[2])
    out[10] = _sqhinge(test - thr[3])
    out[11] = work * work
    out[12] = _sqhinge(z3 - thr[4])
    out[13] = _gauss_tail(m1, q1, thr[1])


@njit(cache=True, nogil=True)
def regress_expectations(theta, lo, hi, fM, gM, fQ, fZ, gZ, nodes, weights, N, thr, prop_pools, out):
    """Quantized expectation of ``sum_j theta_j phi_j`` at every pair's images.

    Expectations are accumulated per basis function and combined with
    ``theta`` at the end. Images are clamped into the grid box.
    """
    P = fM.shape[0]
    L = nodes.shape[0]
    nb = theta.shape[0]
    phi = np.empty(nb)
    expect = np.empty(nb)
    for p in range(P):
        for j in range(nb):
            expect[j] = 0.0
        q1 = _clamp(fQ[p, 0], lo[2], hi[2])
        for l in range(L):
            e0 = nodes[l, 0]
            e1 = nodes[l, 1]
            e2 = nodes[l, 2]
            m1 = fM[p, 0] + gM[p, 0, 0] * e0 + gM[p, 0, 1] * e1 + gM[p, 0, 2] * e2
            m2 = fM[p, 1] + gM[p, 1, 0] * e0 + gM[p, 1, 1] * e1 + gM[p, 1, 2] * e2
            z1 = fZ[p, 0] + gZ[p, 0, 0] * e0 + gZ[p, 0, 1] * e1 + gZ[p, 0, 2] * e2
            z2 = fZ[p, 1] + gZ[p, 1, 0] * e0 + gZ[p, 1, 1] * e1 + gZ[p, 1, 2] * e2
            z3 = fZ[p, 2] + gZ[p, 2, 0] * e0 + gZ[p, 2, 1] * e1 + gZ[p, 2, 2] * e2
            m1 = _clamp(_clamp(m1, 0.0, N), lo[0], hi[0])
            m2 = _clamp(_clamp(m2, 0.0, N), lo[1], hi[1])
            z1 = _clamp(_clamp(z1, 0.0, N), lo[5], hi[5])
            z2 = _clamp(_clamp(z2, 0.0, N), lo[6], hi[6])
            z3 = _clamp(_clamp(z3, 0.0, N), lo[7], hi[7])
            basis_into(m1, m2, q1, z1, z2, z3, N, thr, prop_pools, phi)
            w = weights[l]
            for j in range(nb):
                expect[j] += w * phi[j]
        acc = 0.0
        for j in range(nb):
            acc += theta[j] * expect[j]
        out[p] = acc
