"""Deterministic synthetic bathymetric surveys for desk-scale experiments.

Terrain is an analytic heightfield (base depth + planar slope + Gaussian
bumps + optional sinusoidal ripple).  The vehicle runs a boustrophedon
lawnmower pattern with constant speed and constant-rate turns, then revisits
the surveyed area with a perpendicular crossing leg and a reversed rerun of
the middle leg, so the track contains loop closures at 90 and 180 degrees.
Sensors (IMU, DVL, downward multibeam) are sampled from the analytic truth
with configurable Gaussian noise; beam ranges come from bisection of the ray
against the heightfield.  Everything is reproducible from the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dead_reckoning import GRAVITY_MSS, DvlSample, ImuSample
from .evaluation import GroundTruthLabel, label_pairs
from .geometry import Pose, quaternion_to_matrix
from .submaps import SonarPing

# World magnetic field direction (unit, z-up world): north with 60 deg dip.
MAG_WORLD = np.array([0.5, 0.0, -np.sqrt(3.0) / 2.0])


@dataclass(frozen=True)
class Terrain:
    """Analytic seafloor heightfield z = h(x, y), negative down.

    Bumps are Gaussian mounds/basins (cx, cy, amplitude, width).  Ripples are
    sinusoids with a Gaussian envelope (kx, ky, phase, amplitude, cx, cy,
    sigma), giving localized roughness patches; a very large sigma makes a
    ripple effectively global.
    """

    base_depth: float
    slope: tuple[float, float] = (0.0, 0.0)
    bumps: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    ripples: np.ndarray = field(default_factory=lambda: np.zeros((0, 7)))
    seed: int = 0

    def height(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = -self.base_depth + self.slope[0] * x + self.slope[1] * y
        for cx, cy, amp, width in np.atleast_2d(self.bumps):
            r2 = (x - cx) ** 2 + (y - cy) ** 2
            z = z + amp * np.exp(-r2 / (2.0 * width * width))
        for kx, ky, phase, amp, cx, cy, sigma in np.atleast_2d(self.ripples):
            r2 = (x - cx) ** 2 + (y - cy) ** 2
            envelope = np.exp(-r2 / (2.0 * sigma * sigma))
            z = z + amp * envelope * np.sin(kx * x + ky * y + phase)
        return z


# (count, amplitude lo, amplitude hi, width lo, width hi); amplitudes get a
# random sign so families produce both mounds and basins.
BumpFamily = tuple[int, float, float, float, float]
# (count, amplitude, wavelength lo, wavelength hi, envelope sigma lo, hi)
RipplePatch = tuple[int, float, float, float, float, float]


def make_terrain(seed: int, base_depth: float, slope: tuple[float, float],
                 bump_families: tuple[BumpFamily, ...],
                 ripple_patches: tuple[RipplePatch, ...],
                 area: tuple[float, float, float, float]) -> Terrain:
    """Scatter bump families and ripple patches over ``area``."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB0B]))
    bump_rows = []
    for count, amp_lo, amp_hi, w_lo, w_hi in bump_families:
        fam = np.zeros((count, 4))
        fam[:, 0] = rng.uniform(area[0], area[1], count)
        fam[:, 1] = rng.uniform(area[2], area[3], count)
        fam[:, 2] = rng.uniform(amp_lo, amp_hi, count) \
            * rng.choice([-1.0, 1.0], count)
        fam[:, 3] = rng.uniform(w_lo, w_hi, count)
        bump_rows.append(fam)
    bumps = np.concatenate(bump_rows) if bump_rows else np.zeros((0, 4))

    ripple_rows = []
    for count, amp, wl_lo, wl_hi, sig_lo, sig_hi in ripple_patches:
        pat = np.zeros((count, 7))
        k = 2.0 * np.pi / rng.uniform(wl_lo, wl_hi, count)
        direction = rng.uniform(0.0, 2.0 * np.pi, count)
        pat[:, 0] = k * np.cos(direction)
        pat[:, 1] = k * np.sin(direction)
        pat[:, 2] = rng.uniform(0.0, 2.0 * np.pi, count)
        pat[:, 3] = amp
        pat[:, 4] = rng.uniform(area[0], area[1], count)
        pat[:, 5] = rng.uniform(area[2], area[3], count)
        pat[:, 6] = rng.uniform(sig_lo, sig_hi, count)
        ripple_rows.append(pat)
    ripples = np.concatenate(ripple_rows) if ripple_rows else np.zeros((0, 7))
    return Terrain(base_depth=base_depth, slope=slope, bumps=bumps,
                   ripples=ripples, seed=seed)


@dataclass(frozen=True)
class NoiseConfig:
    gyro_std: float = 0.0       # rad/s
    accel_std: float = 0.0      # m/s^2
    mag_std: float = 0.0        # unit-vector components
    dvl_std: float = 0.0        # m/s
    range_std: float = 0.0      # m
    gyro_bias: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SurveyPlan:
    """Lawnmower coverage plus a perpendicular crossing leg and a reversed
    rerun of the middle leg.  ``legs`` must be odd so the mower exits on the
    same heading it entered."""

    legs: int = 5
    leg_length: float = 120.0
    spacing: float = 25.0
    speed: float = 2.0
    turn_rate: float = 0.2          # rad/s
    start: tuple = (0.0, 0.0)
    start_heading: float = 0.0
    crossing_fraction: float = 0.3  # crossing-leg x as fraction of leg length
    crossing: bool = True
    retrace: bool = True
    imu_rate: float = 10.0
    dvl_rate: float = 2.0
    ping_rate: float = 1.0
    swath: float = math.radians(120.0)  # full across-track angle
    beam_count: int = 48
    max_range: float = 100.0

    def __post_init__(self):
        if self.legs % 2 == 0:
            raise ValueError("legs must be odd")
        radius = self.speed / self.turn_rate
        if self.spacing < 2.0 * radius:
            raise ValueError(f"spacing {self.spacing} too tight for turn radius "
                             f"{radius:.1f}")

    @property
    def turn_radius(self) -> float:
        return self.speed / self.turn_rate

    def segments(self) -> list[tuple[str, float]]:
        """("straight", length [m]) / ("arc", signed angle [rad]) sequence."""
        r = self.turn_radius
        quarter = math.pi / 2.0
        gap = self.spacing - 2.0 * r
        segs: list[tuple[str, float]] = []
        for leg in range(self.legs):
            segs.append(("straight", self.leg_length))
            if leg < self.legs - 1:
                sign = 1.0 if leg % 2 == 0 else -1.0
                segs += [("arc", sign * quarter)]
                if gap > 0:
                    segs.append(("straight", gap))
                segs.append(("arc", sign * quarter))
        top = (self.legs - 1) * self.spacing
        xc = self.crossing_fraction * self.leg_length
        if self.crossing:
            segs += [
                ("arc", -quarter),                       # exit mower, head -y
                ("straight", top + r),                   # down the east side
                ("arc", -quarter),                       # head -x along bottom
                ("straight", self.leg_length - xc - r),
                ("arc", -quarter),                       # head +y: crossing leg
                ("straight", top + 4.0 * r),
            ]
        if self.retrace:
            mid_y = ((self.legs - 1) // 2) * self.spacing
            segs += [
                ("arc", -quarter),                       # head +x above the grid
                ("straight", self.leg_length - xc),
                ("arc", -quarter),                       # head -y on the east side
                ("straight", top + r - mid_y),
                ("arc", -quarter),                       # head -x: retrace mid leg
                ("straight", self.leg_length + 2.0 * r),
            ]
        return segs


class Trajectory:
    """Closed-form constant-speed trajectory over a plan's segments."""

    def __init__(self, plan: SurveyPlan):
        self.plan = plan
        x, y = plan.start
        psi = plan.start_heading
        t = 0.0
        rows = []  # t0, duration, x0, y0, psi0, yaw_rate
        for kind, value in plan.segments():
            if kind == "straight":
                dur = value / plan.speed
                rows.append((t, dur, x, y, psi, 0.0))
                x += value * math.cos(psi)
                y += value * math.sin(psi)
            else:
                rate = math.copysign(plan.turn_rate, value)
                dur = abs(value) / plan.turn_rate
                rows.append((t, dur, x, y, psi, rate))
                radius = plan.speed / rate
                psi1 = psi + value
                x += radius * (math.sin(psi1) - math.sin(psi))
                y -= radius * (math.cos(psi1) - math.cos(psi))
                psi = psi1
            t += dur
        self._rows = np.array(rows)
        self.duration = t
        self.path_length = plan.speed * t

    def state_at(self, t):
        """Vectorized (x, y, heading, yaw_rate) at times t."""
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self._rows[:, 0], t, side="right") - 1,
                    0, len(self._rows) - 1)
        seg = self._rows[k]
        tau = np.clip(t - seg[:, 0], 0.0, seg[:, 1])
        psi0, rate = seg[:, 4], seg[:, 5]
        v = self.plan.speed
        arc = rate != 0.0
        psi = psi0 + rate * tau
        x = seg[:, 2] + v * tau * np.cos(psi0)
        y = seg[:, 3] + v * tau * np.sin(psi0)
        with np.errstate(divide="ignore", invalid="ignore"):
            radius = np.where(arc, v / np.where(arc, rate, 1.0), 0.0)
        x = np.where(arc, seg[:, 2] + radius * (np.sin(psi) - np.sin(psi0)), x)
        y = np.where(arc, seg[:, 3] - radius * (np.cos(psi) - np.cos(psi0)), y)
        return x, y, psi, rate

    def straight_segments(self) -> list[tuple[float, float, float, float]]:
        """(x0, y0, x1, y1) of every straight segment."""
        out = []
        v = self.plan.speed
        for t0, dur, x0, y0, psi0, rate in self._rows:
            if rate == 0.0:
                out.append((x0, y0, x0 + v * dur * math.cos(psi0),
                            y0 + v * dur * math.sin(psi0)))
        return out


def count_crossings(traj: Trajectory) -> int:
    """Transversal intersections between non-adjacent straight segments."""
    segs = traj.straight_segments()

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    hits = 0
    for i in range(len(segs)):
        p1, p2 = segs[i][:2], segs[i][2:]
        for j in range(i + 2, len(segs)):
            q1, q2 = segs[j][:2], segs[j][2:]
            d1, d2 = cross(q1, q2, p1), cross(q1, q2, p2)
            d3, d4 = cross(p1, p2, q1), cross(p1, p2, q2)
            if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
                hits += 1
    return hits


@dataclass(frozen=True)
class SurveyData:
    truth: np.ndarray  # (n, 8) rows: t, x, y, z, qw, qx, qy, qz
    imu: list[ImuSample]
    dvl: list[DvlSample]
    pings: list[SonarPing]
    stats: dict

    @property
    def truth_poses(self) -> list[Pose]:
        return [Pose(orientation=quaternion_to_matrix(row[4:8]),
                     position=row[1:4], timestamp=row[0])
                for row in self.truth]


def _yaw_quat(psi: np.ndarray) -> np.ndarray:
    q = np.zeros((len(psi), 4))
    q[:, 0] = np.cos(psi / 2.0)
    q[:, 3] = np.sin(psi / 2.0)
    return q


def _sample_times(duration: float, rate: float) -> np.ndarray:
    count = int(math.floor(duration * rate)) + 1
    return np.arange(count) / rate


_RAY_GRID = 256


def _beam_ranges(terrain: Terrain, x0: float, y0: float, psi: float,
                 angles: np.ndarray, max_range: float,
                 tol: float = 1e-4) -> np.ndarray:
    """First intersection of each beam ray with the heightfield.

    Rays start at (x0, y0, 0).  A coarse march locates the first
    above-to-below crossing (so occluding terrain shadows what lies behind
    it, matching a real echo), then bisection refines it to ``tol``.
    Returns the range per beam, NaN where the ray stays above the terrain
    within max_range.
    """
    dx = -np.sin(psi) * np.sin(angles)
    dy = np.cos(psi) * np.sin(angles)
    dz = -np.cos(angles)

    def above(s):
        return s * dz - terrain.height(x0 + s * dx, y0 + s * dy) > 0.0

    grid = np.linspace(0.0, max_range, _RAY_GRID + 1)
    s_mat = np.multiply.outer(np.ones_like(angles), grid)
    table = (s_mat * dz[:, None]
             - terrain.height(x0 + s_mat * dx[:, None],
                              y0 + s_mat * dy[:, None])) > 0.0
    below = ~table
    below[:, 0] = False  # the vehicle itself must start above the terrain
    first = np.argmax(below, axis=1)
    valid = below.any(axis=1) & table[:, 0]

    lo = grid[np.maximum(first - 1, 0)]
    hi = grid[first]
    steps = int(math.ceil(math.log2(max(max_range / _RAY_GRID / tol, 2.0))))
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        up = above(mid)
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    out = 0.5 * (lo + hi)
    out[~valid] = np.nan
    return out


def generate_survey(terrain: Terrain, plan: SurveyPlan, noise: NoiseConfig,
                    seed: int) -> SurveyData:
    """Simulate one survey: analytic truth plus noisy sensor streams."""
    traj = Trajectory(plan)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EA]))

    # Ground truth at IMU rate.
    imu_t = _sample_times(traj.duration, plan.imu_rate)
    tx, ty, tpsi, trate = traj.state_at(imu_t)
    truth = np.zeros((len(imu_t), 8))
    truth[:, 0] = imu_t
    truth[:, 1], truth[:, 2] = tx, ty
    truth[:, 4:8] = _yaw_quat(tpsi)

    # IMU: gyro is the analytic yaw rate; the accelerometer reads the body
    # frame sum of kinematic acceleration and the (0, 0, -g) rest convention.
    gyro = np.zeros((len(imu_t), 3))
    gyro[:, 2] = trate
    gyro += np.asarray(noise.gyro_bias)
    gyro += rng.normal(0.0, noise.gyro_std, gyro.shape) if noise.gyro_std else 0.0

    a_world = np.zeros((len(imu_t), 3))
    a_world[:, 0] = -plan.speed * trate * np.sin(tpsi)
    a_world[:, 1] = plan.speed * trate * np.cos(tpsi)
    a_world[:, 2] -= GRAVITY_MSS
    cos_p, sin_p = np.cos(tpsi), np.sin(tpsi)
    accel = np.column_stack([cos_p * a_world[:, 0] + sin_p * a_world[:, 1],
                             -sin_p * a_world[:, 0] + cos_p * a_world[:, 1],
                             a_world[:, 2]])
    accel += rng.normal(0.0, noise.accel_std, accel.shape) if noise.accel_std else 0.0

    mag = np.column_stack([cos_p * MAG_WORLD[0] + sin_p * MAG_WORLD[1],
                           -sin_p * MAG_WORLD[0] + cos_p * MAG_WORLD[1],
                           np.full(len(imu_t), MAG_WORLD[2])])
    mag += rng.normal(0.0, noise.mag_std, mag.shape) if noise.mag_std else 0.0
    mag /= np.linalg.norm(mag, axis=1, keepdims=True)

    imu = [ImuSample(timestamp=float(t), angular_velocity=g,
                     linear_acceleration=a, magnetic_field=m)
           for t, g, a, m in zip(imu_t, gyro, accel, mag)]

    # DVL: body velocity is (speed, 0, 0) along the track.
    dvl_t = _sample_times(traj.duration, plan.dvl_rate)
    dvl_v = np.zeros((len(dvl_t), 3))
    dvl_v[:, 0] = plan.speed
    dvl_v += rng.normal(0.0, noise.dvl_std, dvl_v.shape) if noise.dvl_std else 0.0
    dvl = [DvlSample(timestamp=float(t), velocity=v)
           for t, v in zip(dvl_t, dvl_v)]

    # Multibeam pings.
    ping_t = _sample_times(traj.duration, plan.ping_rate)
    px, py, ppsi, _ = traj.state_at(ping_t)
    angles = np.linspace(-plan.swath / 2.0, plan.swath / 2.0, plan.beam_count)
    pings = []
    dropped_beams = 0
    for t, x0, y0, psi in zip(ping_t, px, py, ppsi):
        ranges = _beam_ranges(terrain, float(x0), float(y0), float(psi),
                              angles, plan.max_range)
        if noise.range_std:
            ranges = ranges + rng.normal(0.0, noise.range_std, ranges.shape)
        keep = np.isfinite(ranges) & (ranges > 0)
        dropped_beams += int(np.count_nonzero(~keep))
        if not keep.any():
            continue
        pings.append(SonarPing(timestamp=float(t),
                               beams=np.column_stack([angles[keep], ranges[keep]])))

    stats = {
        "legs": plan.legs,
        "crossings": count_crossings(traj),
        "path_length": traj.path_length,
        "duration": traj.duration,
        "pings": len(pings),
        "dropped_beams": dropped_beams,
    }
    return SurveyData(truth=truth, imu=imu, dvl=dvl, pings=pings, stats=stats)


def truth_loops(truth_poses: list[Pose], d: float,
                exclusion: int = 0) -> list[GroundTruthLabel]:
    """Ground-truth pair labels straight from simulator truth."""
    return label_pairs(truth_poses, d, exclusion=exclusion)


@dataclass(frozen=True)
class Scenario:
    """Named synthetic setting: terrain family, plan, noise, crop distance."""

    name: str
    d: float
    base_depth: float
    slope: tuple[float, float]
    bump_families: tuple[BumpFamily, ...]
    ripple_patches: tuple[RipplePatch, ...]
    plan: SurveyPlan
    noise: NoiseConfig

    def terrain(self, seed: int) -> Terrain:
        p = self.plan
        top = (p.legs - 1) * p.spacing
        margin = 0.15 * p.leg_length
        area = (p.start[0] - margin, p.start[0] + p.leg_length + margin,
                p.start[1] - margin, p.start[1] + top + margin)
        return make_terrain(seed, self.base_depth, self.slope,
                            self.bump_families, self.ripple_patches, area)

    def generate(self, seed: int) -> SurveyData:
        return generate_survey(self.terrain(seed), self.plan, self.noise, seed)


_POND_PLAN = SurveyPlan(
    legs=5, leg_length=100.0, spacing=25.0, speed=2.0, turn_rate=0.2,
    start=(-50.0, -50.0), crossing_fraction=0.3,
    imu_rate=10.0, dvl_rate=2.0, ping_rate=0.8,
    swath=math.radians(120.0), beam_count=48, max_range=120.0,
)

_POND_NOISE = NoiseConfig(gyro_std=2e-4, accel_std=2e-3, mag_std=1e-3,
                          dvl_std=2e-3, range_std=0.01)

_ABYSS_PLAN = SurveyPlan(
    legs=3, leg_length=700.0, spacing=220.0, speed=3.0, turn_rate=0.06,
    start=(-350.0, -220.0), crossing_fraction=0.3,
    imu_rate=10.0, dvl_rate=2.0, ping_rate=0.25,
    swath=math.radians(120.0), beam_count=64, max_range=3000.0,
)

SCENARIOS = {
    # Shallow basin with a pronounced depth trend, a few large mounds and
    # hollows, mid-scale bumps, and patchy fine roughness.
    "pond": Scenario(
        name="pond", d=10.0, base_depth=20.0, slope=(0.05, 0.07),
        bump_families=((4, 5.0, 9.0, 18.0, 35.0),
                       (18, 1.5, 4.5, 5.0, 14.0)),
        ripple_patches=((8, 0.5, 4.0, 12.0, 10.0, 25.0),),
        plan=_POND_PLAN, noise=_POND_NOISE,
    ),
    # Deep open water; same structure scaled up, wide crop.
    "abyss": Scenario(
        name="abyss", d=100.0, base_depth=500.0, slope=(0.06, 0.08),
        bump_families=((4, 60.0, 110.0, 150.0, 300.0),
                       (16, 15.0, 45.0, 50.0, 140.0)),
        ripple_patches=((8, 5.0, 40.0, 120.0, 100.0, 250.0),),
        plan=_ABYSS_PLAN, noise=NoiseConfig(gyro_std=2e-4, accel_std=2e-3,
                                            mag_std=1e-3, dvl_std=3e-3,
                                            range_std=0.05),
    ),
    # Feature-poor: a plain slope, no bumps, no ripple.
    "flats": Scenario(
        name="flats", d=10.0, base_depth=20.0, slope=(0.06, 0.09),
        bump_families=(), ripple_patches=(),
        plan=_POND_PLAN, noise=_POND_NOISE,
    ),
}
