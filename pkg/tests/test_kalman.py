import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kfnoc.kalman import (KalmanModel, KalmanState, Normalizer, TelemetryScaler,
                          default_model, initial_state, kf_step, predict,
                          signal_from_state, update)
from kfnoc.traffic import EpochCounters, collect_epoch

from kf_oracle import oracle_predict, oracle_update_1, oracle_update_3


def test_predict_frozen_example():
    model = KalmanModel(a=[[0.9]], h=[[1.0]], q=[[0.01]], r=[[1.0]])
    state = KalmanState(x=[1.0], p=[[0.5]])
    x_prior, p_prior = predict(model, state)
    assert x_prior[0] == pytest.approx(0.9, abs=1e-12)
    assert p_prior[0][0] == pytest.approx(0.415, abs=1e-12)


def test_update_scalar_gain_half():
    # p_prior = 1, H = 1, R = 1 -> gain exactly 0.5
    model = KalmanModel(a=[[1.0]], h=[[1.0]], q=[[0.0]], r=[[1.0]])
    state = update(model, np.array([0.0]), np.array([[1.0]]), np.array([2.0]))
    assert state.last_gain[0][0] == pytest.approx(0.5, abs=1e-12)
    assert state.x[0] == pytest.approx(1.0, abs=1e-12)
    assert state.p[0][0] == pytest.approx(0.5, abs=1e-12)


def test_default_model_shapes():
    model = default_model()
    assert model.state_dim == 1
    assert model.obs_dim == 3
    assert model.a[0][0] == 1.0
    assert model.q[0][0] == 0.01
    assert list(model.h[:, 0]) == [0.6, 0.5, 0.7]
    assert np.allclose(model.r, 0.05 * np.eye(3))
    assert model.b is None


def test_initial_state_defaults():
    state = initial_state(default_model())
    assert state.x[0] == 0.0
    assert state.p[0][0] == 1.0


def test_model_validation():
    with pytest.raises(ValueError, match="square"):
        KalmanModel(a=np.ones((1, 2)), h=[[1.0]], q=[[1.0]], r=[[1.0]])
    with pytest.raises(ValueError, match="observation matrix"):
        KalmanModel(a=[[1.0]], h=np.ones((3, 2)), q=[[1.0]], r=np.eye(3))
    with pytest.raises(ValueError, match="observation noise"):
        KalmanModel(a=[[1.0]], h=np.ones((3, 1)), q=[[1.0]], r=np.eye(2))
    with pytest.raises(ValueError, match="process noise"):
        KalmanModel(a=[[1.0]], h=[[1.0]], q=np.eye(2), r=[[1.0]])


def test_filter_matches_oracle_over_random_trace():
    rng = np.random.default_rng(7)
    model = default_model()
    state = initial_state(model)
    x_o, p_o = 0.0, 1.0
    h = [0.6, 0.5, 0.7]
    for _ in range(200):
        z = rng.uniform(-1.0, 1.0, size=3)
        x_prior, p_prior = predict(model, state)
        xo_prior, po_prior = oracle_predict(1.0, 0.01, x_o, p_o)
        assert x_prior[0] == pytest.approx(xo_prior, rel=1e-12, abs=1e-12)
        assert p_prior[0][0] == pytest.approx(po_prior, rel=1e-12, abs=1e-12)
        state = update(model, x_prior, p_prior, z)
        x_o, p_o, gain_o = oracle_update_3(h, [0.05] * 3, xo_prior, po_prior,
                                           list(z))
        assert state.x[0] == pytest.approx(x_o, rel=1e-9, abs=1e-12)
        assert state.p[0][0] == pytest.approx(p_o, rel=1e-9, abs=1e-12)
        for j in range(3):
            assert state.last_gain[0][j] == pytest.approx(gain_o[j], rel=1e-9,
                                                          abs=1e-12)


def test_scalar_observation_matches_oracle():
    model = KalmanModel(a=[[0.95]], h=[[0.8]], q=[[0.02]], r=[[0.3]])
    state = KalmanState(x=[0.4], p=[[0.9]])
    x_o, p_o = 0.4, 0.9
    for step in range(50):
        z = math.sin(step * 0.37)
        x_prior, p_prior = predict(model, state)
        state = update(model, x_prior, p_prior, np.array([z]))
        xo_prior, po_prior = oracle_predict(0.95, 0.02, x_o, p_o)
        x_o, p_o, _ = oracle_update_1(0.8, 0.3, xo_prior, po_prior, z)
        assert state.x[0] == pytest.approx(x_o, rel=1e-10)
        assert state.p[0][0] == pytest.approx(p_o, rel=1e-10)


def test_tiny_observation_noise_trusts_measurement():
    model = KalmanModel(a=[[1.0]], h=[[1.0]], q=[[0.01]], r=[[1e-12]])
    state = initial_state(model)
    x_prior, p_prior = predict(model, state)
    state = update(model, x_prior, p_prior, np.array([0.731]))
    assert abs(state.x[0] - 0.731) <= 1e-6


def test_huge_observation_noise_keeps_prior():
    model = KalmanModel(a=[[1.0]], h=[[1.0]], q=[[0.01]], r=[[1e12]])
    state = KalmanState(x=[0.25], p=[[0.5]])
    x_prior, p_prior = predict(model, state)
    state = update(model, x_prior, p_prior, np.array([100.0]))
    assert abs(state.x[0] - x_prior[0]) <= 1e-6
    assert abs(state.p[0][0] - p_prior[0][0]) <= 1e-6


def test_covariance_stays_symmetric_and_nonnegative():
    rng = np.random.default_rng(3)
    model = default_model()
    state = initial_state(model)
    for _ in range(500):
        x_prior, p_prior = predict(model, state)
        state = update(model, x_prior, p_prior, rng.uniform(-1, 1, 3))
        assert state.p[0][0] >= 0.0
        assert np.allclose(state.p, state.p.T)


def test_update_shrinks_variance():
    model = default_model()
    state = initial_state(model)
    x_prior, p_prior = predict(model, state)
    state = update(model, x_prior, p_prior, np.zeros(3))
    assert state.p[0][0] < p_prior[0][0]


def test_signal_strictly_positive():
    assert signal_from_state(KalmanState(x=[0.0], p=[[1.0]])) == 0
    assert signal_from_state(KalmanState(x=[-0.3], p=[[1.0]])) == 0
    assert signal_from_state(KalmanState(x=[1e-12], p=[[1.0]])) == 1


def test_normalizer_frozen_example():
    norm = Normalizer()
    assert norm.normalize(0.0) == 0.0
    assert norm.normalize(100.0) == 1.0
    assert norm.normalize(25.0) == -0.5


def test_normalizer_constant_stream_is_zero():
    norm = Normalizer()
    for _ in range(10):
        assert norm.normalize(7.0) == 0.0


@given(st.lists(st.floats(min_value=-1e6, max_value=1e6,
                          allow_nan=False), min_size=1, max_size=50))
@settings(max_examples=200, deadline=None)
def test_normalizer_range_and_monotone_bounds(values):
    norm = Normalizer()
    lo = hi = values[0]
    for v in values:
        out = norm.normalize(v)
        lo, hi = min(lo, v), max(hi, v)
        assert -1.0 <= out <= 1.0
        assert norm.seen_min == lo and norm.seen_max == hi


def test_normalizer_never_resets():
    norm = Normalizer()
    norm.normalize(0.0)
    norm.normalize(100.0)
    # a later mid-range value keeps the old extremes
    assert norm.normalize(50.0) == 0.0
    assert norm.seen_max == 100.0


def test_kf_step_on_telemetry():
    model = default_model()
    state = initial_state(model)
    scaler = TelemetryScaler()
    counters = EpochCounters(gpu_icnt_push=100, gpu_stall_icnt_shader=40,
                             gpu_stall_dramfull=10, gpu_reply_flits=300)
    tele = collect_epoch(0, 1000, counters, 1000)
    new_state, signal, x_prior = kf_step(model, state, tele, scaler)
    # first epoch: every channel normalizes to 0, so the state stays 0
    assert x_prior[0] == 0.0
    assert new_state.x[0] == pytest.approx(0.0, abs=1e-12)
    assert signal == 0
    # a heavier epoch pushes every channel to +1 -> positive estimate
    counters2 = EpochCounters(gpu_icnt_push=200, gpu_stall_icnt_shader=80,
                              gpu_stall_dramfull=20, gpu_reply_flits=100)
    tele2 = collect_epoch(1, 2000, counters2, 1000)
    new_state2, signal2, _ = kf_step(model, new_state, tele2, scaler)
    assert new_state2.x[0] > 0.0
    assert signal2 == 1


def test_update_rejects_wrong_dimension():
    model = default_model()
    state = initial_state(model)
    x_prior, p_prior = predict(model, state)
    with pytest.raises(ValueError):
        update(model, x_prior, p_prior, np.zeros(2))
