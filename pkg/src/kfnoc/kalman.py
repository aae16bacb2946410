"""Scalar-state Kalman filter over normalized network telemetry.

Once per epoch the filter fuses three congestion observations for the
GPU class (memory-queue stalls, packets injected, ejection stalls) into
a one-dimensional congestion estimate.  A positive estimate predicts
that GPU throughput is about to degrade and raises the reconfiguration
signal.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .traffic import EpochTelemetry


@dataclass
class KalmanModel:
    """Time-invariant system matrices.

    Parameters
    ----------
    a : (n, n) state transition
    h : (m, n) observation matrix
    q : (n, n) process noise covariance
    r : (m, m) observation noise covariance
    b : (n, l) control matrix, or None when there is no control input
    """

    a: np.ndarray
    h: np.ndarray
    q: np.ndarray
    r: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.h = np.atleast_2d(np.asarray(self.h, dtype=float))
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        self.r = np.atleast_2d(np.asarray(self.r, dtype=float))
        if self.b is not None:
            self.b = np.atleast_2d(np.asarray(self.b, dtype=float))
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise ValueError("state transition matrix must be square")
        if self.q.shape != (n, n):
            raise ValueError("process noise must match the state dimension")
        if self.h.shape[1] != n:
            raise ValueError("observation matrix has wrong state dimension")
        m = self.h.shape[0]
        if self.r.shape != (m, m):
            raise ValueError("observation noise must match the observation dimension")
        if self.b is not None and self.b.shape[0] != n:
            raise ValueError("control matrix has wrong state dimension")

    @property
    def state_dim(self) -> int:
        return self.a.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.h.shape[0]


@dataclass
class KalmanState:
    """Posterior estimate after the latest update."""

    x: np.ndarray
    p: np.ndarray
    last_gain: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))


def default_model() -> KalmanModel:
    """Congestion model: one state, three observations.

    Observation order is (stall_dramfull, icnt_push, stall_icnt_shader)
    with weights 0.6, 0.5 and 0.7; all three grow with congestion, so a
    single positive state direction captures them jointly.
    """
    return KalmanModel(
        a=np.array([[1.0]]),
        h=np.array([[0.6], [0.5], [0.7]]),
        q=np.array([[0.01]]),
        r=0.05 * np.eye(3),
        b=None,
    )


def initial_state(model: KalmanModel, x0: float = 0.0,
                  p0: float = 1.0) -> KalmanState:
    n = model.state_dim
    return KalmanState(x=np.full(n, x0), p=p0 * np.eye(n))


def predict(model: KalmanModel, state: KalmanState,
            u: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """A-priori estimate (x_prior, p_prior) for the next step.

    x_prior = A x + B u        (the control term only when both B and u
    p_prior = A P A^T + Q       are present)
    """
    x_prior = model.a @ state.x
    if model.b is not None and u is not None:
        x_prior = x_prior + model.b @ np.asarray(u, dtype=float).reshape(-1)
    p_prior = model.a @ state.p @ model.a.T + model.q
    return x_prior, p_prior


def update(model: KalmanModel, x_prior: np.ndarray, p_prior: np.ndarray,
           z: np.ndarray) -> KalmanState:
    """Fold one observation vector into the prediction.

    K = p_prior H^T (H p_prior H^T + R)^-1
    x = x_prior + K (z - H x_prior)
    P = (I - K H) p_prior, re-symmetrized to keep the covariance from
    drifting off the symmetric cone through float round-off.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != model.obs_dim:
        raise ValueError("observation vector has wrong dimension")
    s = model.h @ p_prior @ model.h.T + model.r
    gain = np.linalg.solve(s, model.h @ p_prior).T
    x = x_prior + gain @ (z - model.h @ x_prior)
    p = (np.eye(model.state_dim) - gain @ model.h) @ p_prior
    p = (p + p.T) / 2.0
    return KalmanState(x=x, p=p, last_gain=gain)


def signal_from_state(state: KalmanState) -> int:
    """Reconfiguration signal: 1 when the congestion estimate is
    strictly positive."""
    return 1 if state.x[0] > 0.0 else 0


@dataclass
class Normalizer:
    """Running min-max scaler onto [-1, 1].

    The range only ever widens; it is never reset, so early epochs may
    map to the extremes until representative values have been seen.
    While max == min (including the very first sample) the output is 0.
    """

    seen_min: float | None = None
    seen_max: float | None = None

    def normalize(self, raw: float) -> float:
        raw = float(raw)
        if self.seen_min is None or raw < self.seen_min:
            self.seen_min = raw
        if self.seen_max is None or raw > self.seen_max:
            self.seen_max = raw
        if self.seen_max == self.seen_min:
            return 0.0
        return 2.0 * (raw - self.seen_min) / (self.seen_max - self.seen_min) - 1.0


@dataclass
class TelemetryScaler:
    """One normalizer per observation channel, applied in filter order."""

    dramfull: Normalizer = field(default_factory=Normalizer)
    icnt_push: Normalizer = field(default_factory=Normalizer)
    shader: Normalizer = field(default_factory=Normalizer)

    def observe(self, telemetry: EpochTelemetry) -> np.ndarray:
        return np.array([
            self.dramfull.normalize(telemetry.gpu_stall_dramfull),
            self.icnt_push.normalize(telemetry.gpu_icnt_push),
            self.shader.normalize(telemetry.gpu_stall_icnt_shader),
        ])


def kf_step(model: KalmanModel, state: KalmanState,
            telemetry: EpochTelemetry,
            scaler: TelemetryScaler) -> tuple[KalmanState, int, np.ndarray]:
    """One epoch of the filter: normalize, predict, update, threshold.

    Returns (posterior state, signal, predicted state before update).
    """
    z = scaler.observe(telemetry)
    x_prior, p_prior = predict(model, state)
    new_state = update(model, x_prior, p_prior, z)
    return new_state, signal_from_state(new_state), x_prior
