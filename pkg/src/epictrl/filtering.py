"""Extended Kalman filter reduction of the partially observed epidemic.

The information state ``(m, Q, z)`` is stored packed as an 8-vector
``(m1, m2, q1, q2, rho, z1, z2, z3)``; the covariance is kept as two
variances plus a correlation so every representable value is PSD.

Observation increments are measured relative to the current observation:
the predicted next observation is ``z + h0 + h1 m``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, diffusion_blocks, drift_hidden, obs_drift_terms

PINV_RTOL = 1e-10


class CovarianceError(ValueError):
    """A matrix expected to be symmetric PSD is not (upstream corruption)."""


@dataclass(frozen=True)
class FilterOptions:
    # eigenvalue cap for the projected covariance; None means N**2 / 4
    q_cap: float | None = None
    # drop the g g^T term from the covariance recursion (printed form)
    literal_riccati: bool = False

    def cap(self, p: ModelParams) -> float:
        return p.N ** 2 / 4.0 if self.q_cap is None else float(self.q_cap)


DEFAULT_OPTIONS = FilterOptions()


@dataclass(frozen=True)
class NoiseDraw:
    """Standardized 3-D innovation."""

    eps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eps", np.asarray(self.eps, dtype=float).reshape(3))


@dataclass(frozen=True)
class InfoState:
    """Conditional mean ``m`` of (I-, R-), variances ``q1, q2``, correlation ``rho``, observation ``z``."""

    m: np.ndarray
    q1: float
    q2: float
    rho: float
    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "m", np.asarray(self.m, dtype=float).reshape(2))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float).reshape(3))
        for name in ("q1", "q2", "rho"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def cov(self) -> np.ndarray:
        return info_cov(np.array([self.q1]), np.array([self.q2]), np.array([self.rho]))[0]

    def as_array(self) -> np.ndarray:
        return np.array([self.m[0], self.m[1], self.q1, self.q2, self.rho, *self.z])

    @classmethod
    def from_array(cls, x) -> "InfoState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:2], x[2], x[3], x[4], x[5:8])

    def validate(self, p: ModelParams) -> "InfoState":
        if self.q1 < 0 or self.q2 < 0 or not -1.0 <= self.rho <= 1.0:
            raise ValueError("covariance coordinates out of range")
        if np.any(self.m < 0) or np.any(self.m > p.N) or np.any(self.z < 0) or np.any(self.z > p.N):
            raise ValueError("mean or observation outside [0, N]")
        return self


# ---------------------------------------------------------------- matrix helpers

def pinv(A, tol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse by SVD; singular values below ``tol * max(s)`` are dropped."""
    A = np.asarray(A, dtype=float)
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    smax = s.max(axis=-1, keepdims=True) if s.size else s
    keep = s > tol * smax
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return np.einsum("...ji,...j,...kj->...ik", vt, s_inv, u)


def sqrt_psd(A, tol: float = 1e-9) -> np.ndarray:
    """Symmetric PSD square root ``B`` with ``B @ B = A``.

    Asymmetry or negative eigenvalues beyond ``tol`` (relative to the matrix
    scale) raise :class:`CovarianceError`; smaller negatives are clamped.
    """
    A = np.asarray(A, dtype=float)
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if np.max(np.abs(A - np.swapaxes(A, -1, -2)), initial=0.0) > tol * scale:
        raise CovarianceError("matrix is not symmetric")
    lam, vec = np.linalg.eigh(0.5 * (A + np.swapaxes(A, -1, -2)))
    if np.min(lam, initial=0.0) < -tol * scale:
        raise CovarianceError(f"matrix has negative eigenvalue {lam.min():.3e}")
    root = np.sqrt(np.maximum(lam, 0.0))
    return np.einsum("...ij,...j,...kj->...ik", vec, root, vec)


def _sym_factors(Smat):
    """``(S^+, S^{1/2}, (S^+)^{1/2})`` for a batch of symmetric PSD matrices."""
    lam, vec = np.linalg.eigh(0.5 * (Smat + np.swapaxes(Smat, -1, -2)))
    lam = np.maximum(lam, 0.0)
    keep = lam > PINV_RTOL * lam.max(axis=-1, keepdims=True)
    inv = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)

    def rebuild(d):
        return np.einsum("...ij,...j,...kj->...ik", vec, d, vec)

    return rebuild(inv), rebuild(np.sqrt(lam)), rebuild(np.sqrt(inv))


def info_cov(q1, q2, rho) -> np.ndarray:
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    off = np.asarray(rho, dtype=float) * np.sqrt(np.maximum(q1, 0) * np.maximum(q2, 0))
    shape = np.broadcast(q1, q2, off).shape
    Q = np.empty(shape + (2, 2))
    Q[..., 0, 0] = q1
    Q[..., 1, 1] = q2
    Q[..., 0, 1] = off
    Q[..., 1, 0] = off
    return Q


def project_cov(Q, cap: float):
    """Symmetrize, clamp eigenvalues to ``[0, cap]``, return ``(q1, q2, rho)``."""
    lam, vec = np.linalg.eigh(0.5 * (Q + np.swapaxes(Q, -1, -2)))
    lam = np.clip(lam, 0.0, cap)
    P = np.einsum("...ij,...j,...kj->...ik", vec, lam, vec)
    q1 = np.maximum(P[..., 0, 0], 0.0)
    q2 = np.maximum(P[..., 1, 1], 0.0)
    denom = np.sqrt(q1 * q2)
    rho = np.where(denom > 0, P[..., 0, 1] / np.where(denom > 0, denom, 1.0), 0.0)
    return q1, q2, np.clip(rho, -1.0, 1.0)


# ---------------------------------------------------------------- EKF pieces

def jacobian_f1(n, m, z, nu, p: ModelParams) -> np.ndarray:
    """``I + df/dy`` evaluated at ``(m, z)``."""
    m = np.asarray(m, dtype=float)
    z = np.asarray(z, dtype=float)
    nu = np.asarray(nu, dtype=float)
    uL, uT, uV = nu[..., 0], nu[..., 1], nu[..., 2]
    m1 = m[..., 0]
    s = p.N - m.sum(axis=-1) - z.sum(axis=-1)
    k = (1.0 - uL) * p.beta_at(n) / p.N
    shape = np.broadcast(m1, s, uL).shape
    J = np.zeros(shape + (2, 2))
    J[..., 0, 0] = k * (s - m1) - (p.gamma_minus + p.eta_minus + uT + uV)
    J[..., 0, 1] = -k * m1
    J[..., 1, 0] = p.gamma_minus
    J[..., 1, 1] = -uV
    return np.eye(2) + J * p.dt


def filter_terms(n, m, Q, z, nu, p: ModelParams, opts: FilterOptions = DEFAULT_OPTIONS):
    """Every coefficient of one EKF step, linearized at ``(n, m, z, nu)``.

    Returns a dict with the drift ``f``, ``h0``, ``h1``, the cross term
    ``A = g ell^T + f1 Q h1^T``, the innovation covariance ``Smat`` and its
    factors, the gain ``K`` and the unprojected next covariance ``Q_next``.
    """
    m = np.asarray(m, dtype=float)
    z = np.asarray(z, dtype=float)
    f = drift_hidden(n, m, z, nu, p)
    h0, h1 = obs_drift_terms(n, z, nu, p)
    sigma, g, ell = diffusion_blocks(n, m, z, nu, p)
    f1 = jacobian_f1(n, m, z, nu, p)
    h1t = np.swapaxes(h1, -1, -2)
    A = g @ np.swapaxes(ell, -1, -2) + f1 @ Q @ h1t
    Smat = ell @ np.swapaxes(ell, -1, -2) + h1 @ Q @ h1t
    S_pinv, S_half, S_pinv_half = _sym_factors(Smat)
    K = A @ S_pinv
    Q_next = -K @ np.swapaxes(A, -1, -2) + f1 @ Q @ np.swapaxes(f1, -1, -2) + sigma @ np.swapaxes(sigma, -1, -2)
    if not opts.literal_riccati:
        Q_next = Q_next + g @ np.swapaxes(g, -1, -2)
    return dict(f=f, h0=h0, h1=h1, f1=f1, sigma=sigma, g=g, ell=ell, A=A, Smat=Smat,
                S_pinv=S_pinv, S_half=S_half, S_pinv_half=S_pinv_half, K=K, Q_next=Q_next)


def _predicted_obs(t, m, z):
    return z + t["h0"] + np.einsum("...ij,...j->...i", t["h1"], m)


def _unpack(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0:2], info_cov(x[..., 2], x[..., 3], x[..., 4]), x[..., 5:8]


def _pack(m, q1, q2, rho, z, p: ModelParams, clip: bool):
    if clip:
        m = np.clip(m, 0.0, p.N)
        z = np.clip(z, 0.0, p.N)
    return np.concatenate([m, q1[..., None], q2[..., None], rho[..., None], z], axis=-1)


def ekf_update_array(x, z_next, nu, n, p: ModelParams, opts: FilterOptions = DEFAULT_OPTIONS,
                     clip: bool = True) -> np.ndarray:
    """Batched EKF step on packed info states ``(..., 8)``."""
    m, Q, z = _unpack(x)
    t = filter_terms(n, m, Q, z, nu, p, opts)
    d = np.asarray(z_next, dtype=float) - _predicted_obs(t, m, z)
    m_next = m + t["f"] + np.einsum("...ij,...j->...i", t["K"], d)
    q1, q2, rho = project_cov(t["Q_next"], opts.cap(p))
    z_next = np.broadcast_to(np.asarray(z_next, dtype=float), m_next.shape[:-1] + (3,))
    return _pack(m_next, q1, q2, rho, z_next, p, clip)


def ekf_update(s: InfoState, z_next, nu, n: int, p: ModelParams,
               opts: FilterOptions = DEFAULT_OPTIONS) -> InfoState:
    """One EKF recursion driven by the new observation ``z_next``."""
    return InfoState.from_array(ekf_update_array(s.as_array(), z_next, nu, n, p, opts))


def innovation_array(x, z_next, nu, n, p: ModelParams, opts: FilterOptions = DEFAULT_OPTIONS):
    m, Q, z = _unpack(x)
    t = filter_terms(n, m, Q, z, nu, p, opts)
    d = np.asarray(z_next, dtype=float) - _predicted_obs(t, m, z)
    return np.einsum("...ij,...j->...i", t["S_pinv_half"], d)


def innovation(s: InfoState, z_next, nu, n: int, p: ModelParams,
               opts: FilterOptions = DEFAULT_OPTIONS) -> NoiseDraw:
    """Standardized observation surprise ``(S^+)^{1/2} (z_next - z - h0 - h1 m)``."""
    return NoiseDraw(innovation_array(s.as_array(), z_next, nu, n, p, opts))


def transition_coefficients(x, nu, n, p: ModelParams, opts: FilterOptions = DEFAULT_OPTIONS):
    """Affine-in-noise form of the information-state transition.

    Returns ``(fM, gM, fQ, fZ, gZ)`` so that the next state is
    ``m' = fM + gM eps``, ``(q1, q2, rho)' = fQ``, ``z' = fZ + gZ eps``
    before clamping. ``fQ`` is already PSD-projected.
    """
    m, Q, z = _unpack(x)
    t = filter_terms(n, m, Q, z, nu, p, opts)
    fM = m + t["f"]
    gM = t["A"] @ t["S_pinv_half"]
    fZ = _predicted_obs(t, m, z)
    gZ = t["S_half"]
    fQ = np.stack(project_cov(t["Q_next"], opts.cap(p)), axis=-1)
    return fM, gM, fQ, fZ, gZ


def transition_array(x, nu, eps, n, p: ModelParams, opts: FilterOptions = DEFAULT_OPTIONS,
                     clip: bool = True) -> np.ndarray:
    fM, gM, fQ, fZ, gZ = transition_coefficients(x, nu, n, p, opts)
    eps = np.asarray(eps, dtype=float)
    m_next = fM + np.einsum("...ij,...j->...i", gM, eps)
    z_next = fZ + np.einsum("...ij,...j->...i", gZ, eps)
    return _pack(m_next, fQ[..., 0], fQ[..., 1], fQ[..., 2], z_next, p, clip)


def transition(s: InfoState, nu, eps: NoiseDraw | np.ndarray, n: int, p: ModelParams,
               opts: FilterOptions = DEFAULT_OPTIONS) -> InfoState:
    """Apply the mean, covariance and observation transition operators for innovation ``eps``."""
    if isinstance(eps, NoiseDraw):
        eps = eps.eps
    return InfoState.from_array(transition_array(s.as_array(), nu, eps, n, p, opts))
