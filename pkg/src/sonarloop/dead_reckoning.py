"""Trajectory estimation from IMU and DVL streams.

Orientation comes from a Madgwick-style MARG filter: the quaternion rate from
the gyro minus a beta-scaled normalized gradient step that pulls the attitude
toward the measured gravity (and, when present, magnetic field) directions.
Position and velocity come from a loosely coupled constant-velocity Kalman
filter whose measurement is the DVL body velocity rotated into the world
frame by the current orientation.

Frame conventions: world is z-up; at rest the accelerometer reads (0, 0, -g)
with g = 9.80665 m/s^2, i.e. the normalized accelerometer output is the body
direction of world "down".  Without a magnetometer, yaw is gyro-only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import RejectedInputError
from .geometry import Pose, quaternion_to_matrix, matrix_to_quaternion, _readonly

GRAVITY_MSS = 9.80665
_DOWN = np.array([0.0, 0.0, -1.0])


class NumericalHealthWarning(RuntimeWarning):
    """Covariance needed eigenvalue clamping to stay positive semidefinite."""


@dataclass(frozen=True)
class ImuSample:
    timestamp: float
    angular_velocity: np.ndarray      # rad/s, body
    linear_acceleration: np.ndarray   # m/s^2, body, includes gravity
    magnetic_field: np.ndarray | None = None  # unit direction, body

    def __post_init__(self):
        object.__setattr__(self, "angular_velocity",
                           _readonly(self.angular_velocity))
        object.__setattr__(self, "linear_acceleration",
                           _readonly(self.linear_acceleration))
        if self.magnetic_field is not None:
            object.__setattr__(self, "magnetic_field",
                               _readonly(self.magnetic_field))


@dataclass(frozen=True)
class DvlSample:
    timestamp: float
    velocity: np.ndarray  # m/s, body frame

    def __post_init__(self):
        object.__setattr__(self, "velocity", _readonly(self.velocity))


@dataclass(frozen=True)
class FilterState:
    orientation: np.ndarray  # unit quaternion (w, x, y, z), world<-body
    position: np.ndarray     # m, world
    velocity: np.ndarray     # m/s, world
    covariance: np.ndarray   # 6x6 over (position, velocity)

    def __post_init__(self):
        q = np.asarray(self.orientation, dtype=float)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError("orientation quaternion must be unit norm")
        p = np.asarray(self.covariance, dtype=float)
        if p.shape != (6, 6) or np.max(np.abs(p - p.T)) > 1e-9:
            raise ValueError("covariance must be symmetric 6x6")
        object.__setattr__(self, "orientation", _readonly(q))
        object.__setattr__(self, "position", _readonly(self.position))
        object.__setattr__(self, "velocity", _readonly(self.velocity))
        object.__setattr__(self, "covariance", _readonly(p))


@dataclass(frozen=True)
class DeadReckoningConfig:
    beta: float = 0.1                     # Madgwick gradient gain
    process_noise: float = 1e-3           # (m/s^2)^2 white-acceleration PSD per axis
    measurement_noise: float = 1e-4       # (m/s)^2 DVL variance per axis
    init_from_first_sample: bool = True   # align initial attitude to accel/mag
    initial_position: tuple = (0.0, 0.0, 0.0)
    initial_position_variance: float = 0.0
    initial_velocity_variance: float = 1.0


def initial_state(config: DeadReckoningConfig = DeadReckoningConfig()) -> FilterState:
    cov = np.diag([config.initial_position_variance] * 3
                  + [config.initial_velocity_variance] * 3).astype(float)
    return FilterState(orientation=np.array([1.0, 0.0, 0.0, 0.0]),
                       position=np.asarray(config.initial_position, dtype=float),
                       velocity=np.zeros(3), covariance=cov)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, av = a[0], a[1:]
    bw, bv = b[0], b[1:]
    return np.concatenate([[aw * bw - av @ bv],
                           aw * bv + bw * av + np.cross(av, bv)])


def _objective_gradient(q: np.ndarray, measured: np.ndarray,
                        reference: np.ndarray) -> np.ndarray:
    """Gradient (w.r.t. q) of 1/2 || R(q)^T d - m ||^2 for a unit direction d.

    Uses R(q)^T d = (2w^2 - 1) d + 2 (v . d) v - 2 w (v x d) with v the
    quaternion vector part, differentiated in closed form.
    """
    w, v = q[0], q[1:]
    d = reference
    f = (2.0 * w * w - 1.0) * d + 2.0 * (v @ d) * v - 2.0 * w * np.cross(v, d) \
        - measured
    jac = np.empty((3, 4))
    jac[:, 0] = 4.0 * w * d - 2.0 * np.cross(v, d)
    dx = np.array([[0.0, -d[2], d[1]],
                   [d[2], 0.0, -d[0]],
                   [-d[1], d[0], 0.0]])
    jac[:, 1:] = 2.0 * np.outer(v, d) + 2.0 * (v @ d) * np.eye(3) + 2.0 * w * dx
    return jac.T @ f


def madgwick_update(state: FilterState, imu: ImuSample, dt: float,
                    beta: float = 0.1) -> FilterState:
    """One MARG orientation step; position/velocity are untouched.

    A zero-norm accelerometer sample disables the corrective gradient step
    for this update (gyro integration only).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    q = np.asarray(state.orientation)
    qdot = 0.5 * quat_multiply(q, np.concatenate([[0.0], imu.angular_velocity]))

    accel_norm = np.linalg.norm(imu.linear_acceleration)
    if beta > 0.0 and accel_norm > 0.0:
        grad = _objective_gradient(q, imu.linear_acceleration / accel_norm, _DOWN)
        mag = imu.magnetic_field
        if mag is not None:
            mag_norm = np.linalg.norm(mag)
            if mag_norm > 0.0:
                m_hat = mag / mag_norm
                h = quaternion_to_matrix(q) @ m_hat
                field = np.array([np.hypot(h[0], h[1]), 0.0, h[2]])
                grad += _objective_gradient(q, m_hat, field)
        grad_norm = np.linalg.norm(grad)
        if grad_norm > 0.0:
            qdot = qdot - beta * grad / grad_norm

    q_new = q + qdot * dt
    q_new /= np.linalg.norm(q_new)
    return replace(state, orientation=q_new)


def _clamp_psd(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    try:
        np.linalg.cholesky(cov + 1e-15 * np.eye(6))
        return cov
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(cov)
    if w[0] < -1e-9:
        warnings.warn(f"covariance lost positive semidefiniteness "
                      f"(min eigenvalue {w[0]:.3e}); clamping",
                      NumericalHealthWarning)
    cov = (v * np.maximum(w, 0.0)) @ v.T
    return 0.5 * (cov + cov.T)


def ekf_step(state: FilterState, dvl: DvlSample | None, dt: float,
             process_noise: float = 1e-3,
             measurement_noise: float = 1e-4) -> FilterState:
    """Constant-velocity predict plus optional DVL velocity update.

    The DVL body velocity is rotated into the world frame with the current
    orientation; isotropic measurement noise is unchanged by that rotation.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    p = np.asarray(state.position) + np.asarray(state.velocity) * dt
    v = np.asarray(state.velocity).copy()
    cov = np.asarray(state.covariance).copy()

    f = np.eye(6)
    f[:3, 3:] = dt * np.eye(3)
    q_noise = np.zeros((6, 6))
    q_noise[:3, :3] = 0.25 * dt ** 4 * np.eye(3)
    q_noise[:3, 3:] = q_noise[3:, :3] = 0.5 * dt ** 3 * np.eye(3)
    q_noise[3:, 3:] = dt ** 2 * np.eye(3)
    cov = f @ cov @ f.T + process_noise * q_noise

    if dvl is not None:
        r_wb = quaternion_to_matrix(state.orientation)
        z = r_wb @ np.asarray(dvl.velocity)
        s = cov[3:, 3:] + measurement_noise * np.eye(3)
        k = cov[:, 3:] @ np.linalg.inv(s)
        innovation = z - v
        dx = k @ innovation
        p = p + dx[:3]
        v = v + dx[3:]
        ikh = np.eye(6)
        ikh[:, 3:] -= k
        cov = ikh @ cov @ ikh.T + measurement_noise * (k @ k.T)

    cov = _clamp_psd(cov)
    return replace(state, position=p, velocity=v, covariance=cov)


def _triad(body_down: np.ndarray, body_mag: np.ndarray | None) -> np.ndarray:
    """World<-body rotation from measured gravity (and optionally mag) axes."""
    w1 = _DOWN
    b1 = body_down / np.linalg.norm(body_down)
    if body_mag is not None and np.linalg.norm(body_mag) > 0:
        b2 = body_mag / np.linalg.norm(body_mag)
        vertical = b2 @ (-b1)
        horizontal = np.sqrt(max(1.0 - vertical * vertical, 0.0))
        w2 = np.array([horizontal, 0.0, vertical])
        if np.linalg.norm(np.cross(b1, b2)) > 1e-6:
            def triad_axes(x1, x2):
                t2 = np.cross(x1, x2)
                t2 /= np.linalg.norm(t2)
                return np.column_stack([x1, t2, np.cross(x1, t2)])
            return triad_axes(w1, w2) @ triad_axes(b1, b2).T
    # Accel only: minimal rotation taking the measured down axis onto world
    # down (roll/pitch with zero yaw).
    axis = np.cross(b1, w1)
    s = np.linalg.norm(axis)
    c = float(b1 @ w1)
    if s < 1e-12:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    axis /= s
    ax = np.array([[0.0, -axis[2], axis[1]],
                   [axis[2], 0.0, -axis[0]],
                   [-axis[1], axis[0], 0.0]])
    angle = np.arctan2(s, c)
    return np.eye(3) + np.sin(angle) * ax + (1 - np.cos(angle)) * (ax @ ax)


def _check_sorted(samples, name: str):
    last = None
    for s in samples:
        if last is not None and s.timestamp <= last:
            raise RejectedInputError(
                f"{name} stream out of order at t={s.timestamp!r}")
        last = s.timestamp


def run_dead_reckoning(imu: list[ImuSample], dvl: list[DvlSample],
                       config: DeadReckoningConfig = DeadReckoningConfig()
                       ) -> list[Pose]:
    """Fuse the streams into one Pose per IMU sample, in timestamp order."""
    _check_sorted(imu, "imu")
    _check_sorted(dvl, "dvl")
    if not imu:
        return []

    # Merge events; at equal timestamps the IMU is processed first so the
    # orientation used by a simultaneous DVL update is current.
    events = sorted([(s.timestamp, 0, s) for s in imu]
                    + [(s.timestamp, 1, s) for s in dvl],
                    key=lambda e: (e[0], e[1]))

    state = initial_state(config)
    poses: list[Pose] = []
    t_last_event: float | None = None
    t_last_imu: float | None = None

    for t, kind, sample in events:
        dt_event = 0.0 if t_last_event is None else t - t_last_event
        if kind == 0:
            if t_last_imu is None:
                if dt_event > 0:
                    state = ekf_step(state, None, dt_event,
                                     config.process_noise, config.measurement_noise)
                if config.init_from_first_sample and \
                        np.linalg.norm(sample.linear_acceleration) > 0:
                    r0 = _triad(sample.linear_acceleration, sample.magnetic_field)
                    state = replace(state, orientation=matrix_to_quaternion(r0))
            else:
                state = madgwick_update(state, sample, t - t_last_imu, config.beta)
                if dt_event > 0:
                    state = ekf_step(state, None, dt_event,
                                     config.process_noise, config.measurement_noise)
            t_last_imu = t
            poses.append(Pose(orientation=quaternion_to_matrix(state.orientation),
                              position=state.position, timestamp=t))
        else:
            if dt_event > 0:
                state = ekf_step(state, sample, dt_event,
                                 config.process_noise, config.measurement_noise)
            else:
                # Zero elapsed time: measurement update only.
                state = _dvl_update_only(state, sample, config.measurement_noise)
        t_last_event = t
    return poses


def _dvl_update_only(state: FilterState, dvl: DvlSample,
                     measurement_noise: float) -> FilterState:
    r_wb = quaternion_to_matrix(state.orientation)
    z = r_wb @ np.asarray(dvl.velocity)
    cov = np.asarray(state.covariance).copy()
    s = cov[3:, 3:] + measurement_noise * np.eye(3)
    k = cov[:, 3:] @ np.linalg.inv(s)
    dx = k @ (z - state.velocity)
    ikh = np.eye(6)
    ikh[:, 3:] -= k
    cov = _clamp_psd(ikh @ cov @ ikh.T + measurement_noise * (k @ k.T))
    return replace(state, position=state.position + dx[:3],
                   velocity=state.velocity + dx[3:], covariance=cov)
