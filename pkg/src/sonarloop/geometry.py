"""Geometric primitives: poses, rigid transforms, timestamped point clouds.

Conventions fixed here and inherited by every other module:

* Rotation matrices map body-frame vectors into the world frame (world<-body).
* Point arrays are row-stacked, shape (n, 3); applying a transform computes
  ``points @ R.T + t`` so that each point transforms as ``R p + t``.
* Angles are radians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidPoseError

ORTHONORMAL_TOL = 1e-9

FRAME_SENSOR = "sensor"
FRAME_VEHICLE = "vehicle"
FRAME_WORLD = "world"
FRAME_SUBMAP = "submap-reference"
FRAMES = (FRAME_SENSOR, FRAME_VEHICLE, FRAME_WORLD, FRAME_SUBMAP)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def check_rotation(matrix: np.ndarray, tol: float = ORTHONORMAL_TOL) -> np.ndarray:
    """Validate a 3x3 proper rotation (R^T R = I, det = +1) within tol."""
    r = np.asarray(matrix, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise InvalidPoseError(f"rotation must be a finite 3x3 matrix, got shape {r.shape}")
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
        raise InvalidPoseError("rotation matrix is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise InvalidPoseError("rotation matrix determinant is not +1")
    return r


@dataclass(frozen=True)
class Pose:
    """Vehicle orientation (world<-body) and world position at a timestamp."""

    orientation: np.ndarray
    position: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        r = check_rotation(self.orientation)
        t = np.asarray(self.position, dtype=float)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise InvalidPoseError("position must be a finite 3-vector")
        ts = float(self.timestamp)
        if not np.isfinite(ts) or ts < 0.0:
            raise InvalidPoseError(f"timestamp must be finite and non-negative, got {ts}")
        object.__setattr__(self, "orientation", _readonly(r))
        object.__setattr__(self, "position", _readonly(t))
        object.__setattr__(self, "timestamp", ts)


@dataclass(frozen=True)
class RelativeTransform:
    """Rigid transform of points from one body frame into a reference frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = check_rotation(self.rotation)
        t = np.asarray(self.translation, dtype=float)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise InvalidPoseError("translation must be a finite 3-vector")
        object.__setattr__(self, "rotation", _readonly(r))
        object.__setattr__(self, "translation", _readonly(t))


@dataclass(frozen=True)
class PointCloud:
    """Row-stacked 3D points tagged with the frame they are expressed in."""

    points: np.ndarray
    frame: str = FRAME_SENSOR

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.size == 0:
            p = p.reshape(0, 3)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("points must be finite")
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame {self.frame!r}, expected one of {FRAMES}")
        object.__setattr__(self, "points", _readonly(p))

    def __len__(self) -> int:
        return self.points.shape[0]


def relative_transform(reference: Pose, other: Pose) -> RelativeTransform:
    """Transform taking points in ``other``'s body frame into ``reference``'s.

    rotation = R_ref^-1 R_other, translation = R_ref^-1 (t_other - t_ref).
    """
    r0 = reference.orientation
    dr = r0.T @ other.orientation
    dt = r0.T @ (other.position - reference.position)
    return RelativeTransform(rotation=dr, translation=dt)


def transform_points(cloud: PointCloud, xform: RelativeTransform,
                     frame: str | None = None) -> PointCloud:
    """Apply ``p -> R p + t`` to every point (row-vector storage)."""
    pts = cloud.points @ xform.rotation.T + xform.translation
    return PointCloud(points=pts, frame=frame if frame is not None else cloud.frame)


def rotation_about_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for a unit quaternion (w, x, y, z), world<-body."""
    w, x, y, z = np.asarray(q, dtype=float)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quaternion(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a rotation matrix, w >= 0."""
    r = np.asarray(r, dtype=float)
    t = np.trace(r)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (r[2, 1] - r[1, 2]) / s,
                      (r[0, 2] - r[2, 0]) / s,
                      (r[1, 0] - r[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(r[i, i] - r[j, j] - r[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)
