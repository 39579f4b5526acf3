"""Submap construction: ping geometry, accumulation windows, cropping.

A submap is the union of 2n+1 consecutive ping clouds expressed in the frame
of the middle (reference) pose, cropped on the reference x-y plane either to
a Chebyshev square (default) or to a Euclidean disk ("cylinder") of
half-extent d.  Square cropping is the primary mode; the cylinder exists for
the ablation comparison.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import (FRAME_SENSOR, FRAME_SUBMAP, PointCloud, Pose,
                       relative_transform, transform_points, _readonly)

log = logging.getLogger(__name__)

CROP_SQUARE = "square"
CROP_CYLINDER = "cylinder"
CROP_MODES = (CROP_SQUARE, CROP_CYLINDER)


@dataclass(frozen=True)
class SonarPing:
    """One multibeam sequence: across-track (angle, range) beams."""

    timestamp: float
    beams: np.ndarray  # (k, 2): beam angle [rad], range [m]

    def __post_init__(self):
        b = np.asarray(self.beams, dtype=float)
        if b.size == 0:
            b = b.reshape(0, 2)
        if b.ndim != 2 or b.shape[1] != 2:
            raise ValueError(f"beams must have shape (k, 2), got {b.shape}")
        object.__setattr__(self, "beams", _readonly(b))


@dataclass(frozen=True)
class Submap:
    reference_pose: Pose
    points: PointCloud          # in the reference-pose frame
    sequence_index: int
    crop_mode: str
    crop_distance: float
    sparse: bool = False        # below the configured minimum point count


@dataclass(frozen=True)
class SubmapConfig:
    n: int = 10                  # half accumulation window (2n+1 pings)
    d: float = 10.0              # crop half-extent [m]
    stride: int = 1
    mode: str = CROP_SQUARE
    min_points: int = 100        # below this a submap is flagged sparse
    match_tolerance: float | None = None  # ping-to-pose matching [s];
                                          # default 0.5 * median ping interval


@dataclass
class DropStats:
    """Counts of discarded inputs, reported after building."""

    beams: int = 0
    pings: int = 0


def ping_to_points(ping: SonarPing, drops: DropStats | None = None) -> PointCloud:
    """Beams to sensor-frame points: (theta, r) -> (0, r sin theta, -r cos theta).

    Sensor frame is x forward, y starboard, z up.  Non-positive ranges are
    dropped and counted.
    """
    angles = ping.beams[:, 0]
    ranges = ping.beams[:, 1]
    valid = ranges > 0
    if drops is not None:
        drops.beams += int(np.count_nonzero(~valid))
    a, r = angles[valid], ranges[valid]
    pts = np.column_stack([np.zeros_like(r), r * np.sin(a), -r * np.cos(a)])
    return PointCloud(points=pts, frame=FRAME_SENSOR)


def accumulate(sequences: list[tuple[Pose, PointCloud]], reference_index: int,
               n: int) -> PointCloud:
    """Union of the clouds at indices reference_index +/- n, re-expressed in
    the reference pose's frame.  Indices outside the stream are skipped."""
    if not 0 <= reference_index < len(sequences):
        raise IndexError(f"reference index {reference_index} out of range")
    ref_pose = sequences[reference_index][0]
    lo = max(0, reference_index - n)
    hi = min(len(sequences) - 1, reference_index + n)
    parts = []
    for k in range(lo, hi + 1):
        pose_k, cloud_k = sequences[k]
        moved = transform_points(cloud_k, relative_transform(ref_pose, pose_k),
                                 frame=FRAME_SUBMAP)
        parts.append(moved.points)
    if not parts:
        return PointCloud(points=np.zeros((0, 3)), frame=FRAME_SUBMAP)
    return PointCloud(points=np.concatenate(parts, axis=0), frame=FRAME_SUBMAP)


def crop(cloud: PointCloud, center, d: float, mode: str = CROP_SQUARE) -> PointCloud:
    """Keep points within d of center on the x-y plane; z unconstrained.

    Square mode uses the Chebyshev norm max(|dx|, |dy|) <= d, cylinder mode
    the Euclidean norm.  Input order is preserved.
    """
    if d <= 0:
        raise ValueError("crop distance must be positive")
    if mode not in CROP_MODES:
        raise ValueError(f"unknown crop mode {mode!r}")
    cx, cy = float(center[0]), float(center[1])
    dx = cloud.points[:, 0] - cx
    dy = cloud.points[:, 1] - cy
    if mode == CROP_SQUARE:
        keep = np.maximum(np.abs(dx), np.abs(dy)) <= d
    else:
        keep = np.hypot(dx, dy) <= d
    return PointCloud(points=cloud.points[keep], frame=cloud.frame)


def match_pings_to_poses(trajectory: list[Pose], pings: list[SonarPing],
                         tolerance: float | None = None,
                         drops: DropStats | None = None
                         ) -> list[tuple[int, Pose, SonarPing]]:
    """Nearest-timestamp association of pings to trajectory poses.

    Pings with no pose within the tolerance (default half the median ping
    interval) are dropped with a warning.  Returns (ping index, pose, ping).
    """
    if not trajectory:
        return []
    times = np.array([p.timestamp for p in trajectory])
    if tolerance is None:
        if len(pings) > 1:
            intervals = np.diff([p.timestamp for p in pings])
            tolerance = 0.5 * float(np.median(intervals))
        else:
            tolerance = np.inf
    matched = []
    for idx, ping in enumerate(pings):
        k = int(np.searchsorted(times, ping.timestamp))
        best = min((j for j in (k - 1, k) if 0 <= j < len(times)),
                   key=lambda j: abs(times[j] - ping.timestamp))
        if abs(times[best] - ping.timestamp) > tolerance:
            if drops is not None:
                drops.pings += 1
            warnings.warn(f"ping at t={ping.timestamp!r} has no pose within "
                          f"{tolerance:.3g} s; dropped")
            continue
        matched.append((idx, trajectory[best], ping))
    return matched


def build_submaps(trajectory: list[Pose], pings: list[SonarPing],
                  config: SubmapConfig = SubmapConfig(),
                  drops: DropStats | None = None) -> list[Submap]:
    """Accumulate and crop one submap per stride-th ping sequence."""
    if config.mode not in CROP_MODES:
        raise ValueError(f"unknown crop mode {config.mode!r}")
    matched = match_pings_to_poses(trajectory, pings,
                                   tolerance=config.match_tolerance, drops=drops)
    sequences = [(pose, ping_to_points(ping, drops=drops))
                 for _, pose, ping in matched]
    indices = [idx for idx, _, _ in matched]

    submaps = []
    for pos in range(0, len(sequences), config.stride):
        cloud = accumulate(sequences, pos, config.n)
        cropped = crop(cloud, (0.0, 0.0), config.d, config.mode)
        sparse = len(cropped) < config.min_points
        if sparse:
            log.debug("submap %d is sparse (%d points)", indices[pos], len(cropped))
        submaps.append(Submap(reference_pose=sequences[pos][0], points=cropped,
                              sequence_index=indices[pos], crop_mode=config.mode,
                              crop_distance=config.d, sparse=sparse))
    return submaps
