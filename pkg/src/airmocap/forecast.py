"""Constant-velocity Kalman filter for actor tracking and short-horizon forecasting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_I6 = np.eye(6)
_H = np.hstack([np.eye(3), np.zeros((3, 3))])  # position-only measurement


@dataclass(frozen=True)
class ActorState:
    """Filter state: position/velocity mean and 6x6 covariance
    (ordering: px, py, pz, vx, vy, vz)."""

    position: np.ndarray
    velocity: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        p = np.array(self.position, dtype=float)
        v = np.array(self.velocity, dtype=float)
        c = np.array(self.covariance, dtype=float)
        if p.shape != (3,) or v.shape != (3,):
            raise ValueError("position and velocity must be 3-vectors")
        if c.shape != (6, 6):
            raise ValueError(f"covariance must be 6x6, got {c.shape}")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v)) and np.all(np.isfinite(c))):
            raise ValueError("non-finite actor state")
        c = 0.5 * (c + c.T)
        for a in (p, v, c):
            a.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "covariance", c)

    @property
    def mean(self):
        return np.concatenate([self.position, self.velocity])


def initial_state(position, velocity=(0.0, 0.0, 0.0), position_var: float = 1.0,
                  velocity_var: float = 1.0) -> ActorState:
    cov = np.diag([position_var] * 3 + [velocity_var] * 3).astype(float)
    return ActorState(np.asarray(position, float), np.asarray(velocity, float), cov)


def kf_predict(state: ActorState, dt: float, process_noise: float = 1.0) -> ActorState:
    """Propagate the state dt seconds under the constant-velocity model.

    process_noise is the white-acceleration variance (m/s^2)^2 used to build
    the discretized Q.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if process_noise < 0:
        raise ValueError(f"process_noise must be >= 0, got {process_noise}")
    F = _I6.copy()
    F[:3, 3:] = dt * np.eye(3)
    q = process_noise * np.array(
        [[dt ** 4 / 4.0, dt ** 3 / 2.0], [dt ** 3 / 2.0, dt ** 2]]
    )
    Q = np.kron(q, np.eye(3))
    mean = F @ state.mean
    cov = F @ state.covariance @ F.T + Q
    return ActorState(mean[:3], mean[3:], cov)


def kf_update(state: ActorState, observation, obs_noise: float = 0.09) -> ActorState:
    """Fuse a position observation. obs_noise is the per-axis measurement
    variance (m^2)."""
    z = np.asarray(observation, dtype=float)
    if z.shape != (3,) or not np.all(np.isfinite(z)):
        raise ValueError(f"observation must be a finite 3-vector, got {observation}")
    if not obs_noise > 0:
        raise ValueError(f"obs_noise must be > 0, got {obs_noise}")
    P = state.covariance
    R = obs_noise * np.eye(3)
    S = _H @ P @ _H.T + R
    K = P @ _H.T @ np.linalg.inv(S)
    mean = state.mean + K @ (z - _H @ state.mean)
    # Joseph form keeps the posterior covariance symmetric PSD
    ikh = _I6 - K @ _H
    cov = ikh @ P @ ikh.T + K @ R @ K.T
    return ActorState(mean[:3], mean[3:], cov)


@dataclass(frozen=True)
class ActorPath:
    """Forecast waypoints: strictly increasing timestamps (T,) and
    positions (T, 3)."""

    timestamps: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        t = np.array(self.timestamps, dtype=float)
        p = np.array(self.positions, dtype=float)
        if t.ndim != 1 or p.shape != (len(t), 3):
            raise ValueError(f"inconsistent path shapes {t.shape} vs {p.shape}")
        if len(t) and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        t.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "positions", p)

    def __len__(self):
        return len(self.timestamps)


def forecast_path(state: ActorState, horizon: float, dt: float, t0: float = 0.0) -> ActorPath:
    """Extrapolate the filter mean at fixed spacing: floor(horizon/dt) + 1
    waypoints at t0, t0+dt, ..."""
    if not (horizon > 0 and dt > 0):
        raise ValueError(f"horizon and dt must be > 0, got {horizon}, {dt}")
    n_steps = int(np.floor(horizon / dt + 1e-9)) + 1
    offsets = dt * np.arange(n_steps)
    positions = state.position[None, :] + offsets[:, None] * state.velocity[None, :]
    return ActorPath(timestamps=t0 + offsets, positions=positions)
