import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epictrl import model
from epictrl.model import ControlValue, FullState, ModelParams, Trajectory

from . import oracles

REF_Y = np.array([150.0, 50.0])
REF_Z = np.array([100.0, 50.0, 10.0])


def feasible_state(rng, N=1000.0):
    frac = rng.dirichlet(np.ones(6))[:5] * rng.uniform(0.2, 1.0)
    return frac[:2] * N, frac[2:] * N


def full_cov(sigma, g, ell):
    top = np.hstack([sigma @ sigma.T + g @ g.T, g @ ell.T])
    bot = np.hstack([ell @ g.T, ell @ ell.T])
    return np.vstack([top, bot])


# ---- drift_hidden

def test_drift_hidden_vanishes_without_infected(params):
    out = model.drift_hidden(0, [0, 0], [300, 20, 5], (0.4, 0.02, 0.01), params)
    np.testing.assert_array_equal(out, [0.0, 0.0])


def test_drift_hidden_full_lockdown(params):
    p = params
    out = model.drift_hidden(0, [10, 0], [0, 0, 0], (1.0, 0.0, 0.0), p)
    np.testing.assert_allclose(out, [-(p.gamma_minus + p.eta_minus) * 10, p.gamma_minus * 10], rtol=1e-15)


@pytest.mark.parametrize("nu", [(0, 0.001, 0), (0.2, 0.03, 0.015), (1.0, 0.06, 0.03)])
def test_drift_hidden_matches_scalar_oracle(params, nu):
    got = model.drift_hidden(0, REF_Y, REF_Z, nu, params)
    np.testing.assert_allclose(got, oracles.drift_hidden(*REF_Y, *REF_Z, *nu, params), rtol=1e-13)


def test_drift_hidden_reference_numbers(params):
    # hand evaluation: S = 640, infection 0.25*150*640/1000 = 24, removal (0.067+0.002+0.001)*150 = 10.5
    got = model.drift_hidden(0, REF_Y, REF_Z, (0, 0.001, 0), params)
    np.testing.assert_allclose(got, [13.5, 10.05], rtol=1e-13)


def test_drift_uses_beta_schedule():
    p = ModelParams(beta_schedule=(0.25, 0.5))
    d0 = model.drift_hidden(0, REF_Y, REF_Z, (0, 0, 0), p)
    d9 = model.drift_hidden(9, REF_Y, REF_Z, (0, 0, 0), p)
    assert d9[0] - d0[0] == pytest.approx(0.25 * 150 * 640 / 1000)


# ---- drift_obs

def test_drift_obs_zero_state(params):
    np.testing.assert_array_equal(model.drift_obs(0, [0, 0], [0, 0, 0], (0.3, 0.02, 0.0), params), np.zeros(3))


def test_drift_obs_vaccination_inflow(params):
    out = model.drift_obs(0, [0, 0], [0, 0, 0], (0, 0, 0.02), params)
    np.testing.assert_allclose(out, [0, 0.02 * params.N * params.dt, 0], atol=1e-12)


def test_drift_obs_matches_scalar_oracle(params):
    nu = (0.2, 0.03, 0.015)
    got = model.drift_obs(0, REF_Y, REF_Z, nu, params)
    np.testing.assert_allclose(got, oracles.drift_obs(*REF_Y, *REF_Z, *nu, params), rtol=1e-13)


def test_obs_loading_shape(params):
    _, h1 = model.obs_drift_terms(0, REF_Z, (0.1, 0.02, 0.01), params)
    np.testing.assert_array_equal(h1, [[0.02, 0], [0, 0], [params.eta_minus, 0]])


# ---- diffusion

def test_diffusion_disease_free_is_zero(params):
    blocks = model.diffusion_blocks(0, [0, 0], [0, 0, 0], (0.5, 0.02, 0.0), params)
    for b in blocks:
        assert not b.any()


def test_sigma_entry_matches_oracle(params):
    sigma, _, _ = model.diffusion_blocks(0, REF_Y, REF_Z, (0.3, 0.01, 0.0), params)
    assert sigma[0, 0] == pytest.approx(oracles.sigma_11(*REF_Y, *REF_Z, 0.3, params), rel=1e-14)


def test_diffusion_shapes_and_dt_scaling():
    p1, p4 = ModelParams(dt=1.0), ModelParams(dt=4.0)
    for a, b in zip(model.diffusion_blocks(0, REF_Y, REF_Z, (0.1, 0.02, 0.01), p1),
                    model.diffusion_blocks(0, REF_Y, REF_Z, (0.1, 0.02, 0.01), p4)):
        np.testing.assert_allclose(b, 2 * a)
    shapes = [b.shape for b in model.diffusion_blocks(0, REF_Y, REF_Z, (0, 0, 0), p1)]
    assert shapes == [(2, 2), (2, 8), (3, 8)]


def test_negative_root_arguments_clamp(params):
    # y1 < 0 after a discretization overshoot must not produce NaN
    sigma, g, ell = model.diffusion_blocks(0, [-1e-9, 0], [0, 0, 0], (0, 0.01, 0.01), params)
    assert np.isfinite(sigma).all() and np.isfinite(g).all() and np.isfinite(ell).all()


def test_full_covariance_psd_random_states(params):
    rng = np.random.default_rng(7)
    for _ in range(100):
        y, z = feasible_state(rng)
        nu = (rng.uniform(), rng.uniform(0.001, 0.06), rng.uniform(0, 0.03))
        C = full_cov(*model.diffusion_blocks(0, y, z, nu, params))
        np.testing.assert_allclose(C, C.T, atol=1e-12)
        assert np.linalg.eigvalsh(C).min() > -1e-9 * max(1.0, np.abs(C).max())


# ---- step, clip

def test_step_disease_free_fixed_point(params):
    s = FullState([0, 0], [0, 0, 0])
    out = model.step(s, (0, 0, 0), np.zeros(2), np.zeros(8), 0, params)
    np.testing.assert_array_equal(out.as_array(), np.zeros(5))


def test_step_zero_noise_is_euler(params):
    s = FullState(REF_Y, REF_Z)
    nu = (0.2, 0.03, 0.015)
    out = model.step(s, nu, np.zeros(2), np.zeros(8), 0, params)
    np.testing.assert_allclose(out.y - s.y, model.drift_hidden(0, s.y, s.z, nu, params), rtol=1e-12)
    np.testing.assert_allclose(out.z - s.z, model.drift_obs(0, s.y, s.z, nu, params), rtol=1e-12)


def test_step_is_deterministic_given_draws(params):
    rng = np.random.default_rng(3)
    b1, b2 = rng.standard_normal(2), rng.standard_normal(8)
    s = FullState(REF_Y, REF_Z)
    a = model.step(s, (0.1, 0.02, 0.01), b1, b2, 4, params)
    b = model.step(s, (0.1, 0.02, 0.01), b1, b2, 4, params)
    np.testing.assert_array_equal(a.as_array(), b.as_array())


def test_clip_identity_on_feasible(params):
    s = FullState(REF_Y, REF_Z)
    np.testing.assert_array_equal(model.clip_state(s, params).as_array(), s.as_array())


def test_clip_lower_bound(params):
    out = model.clip_state(FullState([-3, 10], [5, 5, 5]), params)
    assert out.y[0] == 0.0


def test_clip_overflow_drains_undetected_recovered(params):
    s = FullState([300, 200], [300, 200, 10])  # sums to N + 10
    out = model.clip_state(s, params)
    assert out.y[1] == 190.0
    assert out.as_array().sum() == pytest.approx(params.N)
    np.testing.assert_array_equal(np.delete(out.as_array(), 1), np.delete(s.as_array(), 1))


def test_clip_overflow_spills_into_detected_recovered(params):
    out = model.clip_state(FullState([600, 5], [300, 200, 0]), params)
    assert out.y[1] == 0.0
    assert out.z[1] == 100.0  # excess 105: 5 from Y2, 100 from Z2


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-2000, 3000, allow_nan=False), min_size=5, max_size=5))
def test_clip_always_feasible(values):
    p = ModelParams()
    x = model.clip_array(np.array(values), p)
    assert (x >= 0).all() and (x <= p.N).all()
    assert x.sum() <= p.N * (1 + 1e-12)


# ---- simulate

def test_simulate_without_control_peaks_then_fades(params):
    x0 = FullState([80, 0], [0, 0, 0])
    paths = np.array([model.simulate(params, (0, 0.001, 0), x0, seed=s).state_array()[:, 0] for s in range(100)])
    mean = paths.mean(axis=0)
    peak = int(mean.argmax())
    assert 5 < peak < 60
    assert mean[85] < 0.05 * mean.max()


def test_moderate_control_lowers_peak(params):
    x0 = FullState([80, 0], [0, 0, 0])
    seeds = range(100)
    free = np.mean([model.simulate(params, (0, 0.001, 0), x0, s).state_array()[:, 0].max() for s in seeds])
    mod = np.mean([model.simulate(params, (0.2, 0.03, 0.015), x0, s).state_array()[:, 0].max() for s in seeds])
    assert mod < free


def test_simulate_empty_horizon():
    p = ModelParams(Nt=0)
    x0 = FullState(REF_Y, REF_Z)
    traj = model.simulate(p, (0, 0, 0), x0)
    assert traj.Nt == 0 and len(traj.states) == 1
    np.testing.assert_array_equal(traj.states[0].as_array(), x0.as_array())


def test_simulate_zero_noise_reproduces_euler_map():
    p = ModelParams(Nt=30)
    x = FullState([80, 0], [0, 0, 0])
    traj = model.simulate(p, (0.2, 0.03, 0.015), x, zero_noise=True)
    for n in range(30):
        x = model.clip_state(FullState(x.y + model.drift_hidden(n, x.y, x.z, (0.2, 0.03, 0.015), p),
                                       x.z + model.drift_obs(n, x.y, x.z, (0.2, 0.03, 0.015), p)), p)
        np.testing.assert_allclose(traj.states[n + 1].as_array(), x.as_array(), rtol=1e-13, atol=1e-12)


def test_simulate_feedback_schedule(params):
    seen = []

    def sched(n, state):
        seen.append(n)
        return ControlValue(1.0 if state.y[0] > 50 else 0.0, 0.01, 0.0)

    traj = model.simulate(ModelParams(Nt=10), sched, FullState([80, 0], [0, 0, 0]), seed=1)
    assert seen == list(range(10))
    assert traj.controls[0].u_L == 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 1), st.floats(0, 0.1), st.floats(0, 0.05))
def test_simulated_states_stay_feasible(seed, uL, uT, uV):
    p = ModelParams(Nt=40)
    traj = model.simulate(p, (uL, uT, uV), FullState([150, 50], [100, 50, 10]), seed)
    X = traj.state_array()
    assert (X >= 0).all() and (X <= p.N).all()
    assert (X.sum(axis=1) <= p.N * (1 + 1e-12)).all()


# ---- derivatives and monotonicity

def _fd_jacobian(fn, x, h=1e-4):
    cols = []
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.column_stack(cols)


def _analytic_jacobian(x, nu, p):
    y1, y2, z1, z2, z3 = x
    uL, uT, uV = nu
    s = p.N - x.sum()
    k = (1 - uL) * p.beta / p.N
    rem = p.gamma_minus + p.eta_minus + uT + uV
    Jf = np.array([[k * (s - y1) - rem, -k * y1, -k * y1, -k * y1, -k * y1],
                   [p.gamma_minus, -uV, 0, 0, 0]])
    Jh = np.array([[uT, 0, -(p.gamma_plus + p.eta_plus), 0, 0],
                   [0, 0, p.gamma_plus - uV, -uV, p.gamma_H - uV],
                   [p.eta_minus, 0, p.eta_plus, 0, -p.gamma_H]])
    return Jf * p.dt, Jh * p.dt


def test_drift_jacobians_match_finite_differences(params):
    rng = np.random.default_rng(11)
    for _ in range(50):
        y, z = feasible_state(rng)
        x = np.concatenate([y, z])
        nu = (rng.uniform(), rng.uniform(0, 0.06), rng.uniform(0, 0.03))
        Jf, Jh = _analytic_jacobian(x, nu, params)
        fd_f = _fd_jacobian(lambda v: model.drift_hidden(0, v[:2], v[2:], nu, params), x)
        fd_h = _fd_jacobian(lambda v: model.drift_obs(0, v[:2], v[2:], nu, params), x)
        np.testing.assert_allclose(fd_f, Jf, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(fd_h, Jh, rtol=1e-6, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 0.1), st.floats(0, 0.05),
       st.floats(0, 400), st.floats(0, 100), st.floats(0, 300))
def test_lockdown_never_raises_infection_drift(a, b, uT, uV, y1, y2, z1):
    p = ModelParams()
    lo, hi = sorted((a, b))
    d_lo = model.drift_hidden(0, [y1, y2], [z1, 20, 5], (lo, uT, uV), p)[0]
    d_hi = model.drift_hidden(0, [y1, y2], [z1, 20, 5], (hi, uT, uV), p)[0]
    assert d_hi <= d_lo + 1e-12


# ---- types

def test_control_value_validation():
    ControlValue(0.5, 0.01, 0.0).validate()
    with pytest.raises(ValueError):
        ControlValue(1.5, 0.01, 0.0).validate()
    with pytest.raises(ValueError):
        ControlValue(0.5, -0.01, 0.0).validate()


@pytest.mark.parametrize("kwargs", [dict(beta=-0.1), dict(N=0), dict(dt=0), dict(Nt=-1), dict(Nt=2.5),
                                    dict(beta_schedule=(0.2, -0.1))])
def test_params_reject_invalid(kwargs):
    with pytest.raises(ValueError):
        ModelParams(**kwargs)


def test_trajectory_length_invariant():
    s = FullState([1, 0], [0, 0, 0])
    with pytest.raises(ValueError):
        Trajectory([s], [ControlValue(0, 0, 0)])
