"""Dataset files: the one place sensor-stream formats live.

A dataset directory holds UTF-8 CSVs with required headers, `.` decimals,
and float seconds timestamps:

* ``imu.csv``: t,gx,gy,gz,ax,ay,az,mx,my,mz (rad/s, m/s^2; mag columns may
  be empty for magnetometer-less records, all three at once)
* ``dvl.csv``: t,vx,vy,vz (m/s, body)
* ``mbes.csv``: t,beam_angle,range (rad, m), one row per beam; consecutive
  rows sharing t form one ping
* ``truth_poses.csv`` (optional): t,x,y,z,qw,qx,qy,qz (unit quaternion)
* ``metadata.json`` (optional): {"name": str, "d": float, "units": {...}}

Floats are written with ``repr`` so canonical files round-trip byte for byte.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .dead_reckoning import DvlSample, ImuSample
from .errors import DatasetFormatError
from .geometry import Pose, quaternion_to_matrix
from .submaps import SonarPing

IMU_HEADER = "t,gx,gy,gz,ax,ay,az,mx,my,mz"
DVL_HEADER = "t,vx,vy,vz"
MBES_HEADER = "t,beam_angle,range"
TRUTH_HEADER = "t,x,y,z,qw,qx,qy,qz"

EXPECTED_UNITS = {
    "timestamps": "s",
    "lengths": "m",
    "angles": "rad",
    "velocities": "m/s",
}

REQUIRED_FILES = ("imu.csv", "dvl.csv", "mbes.csv")


@dataclass(frozen=True)
class DatasetMetadata:
    name: str = ""
    d: float | None = None
    units: dict = field(default_factory=lambda: dict(EXPECTED_UNITS))


@dataclass(frozen=True)
class Dataset:
    imu: list[ImuSample]
    dvl: list[DvlSample]
    pings: list[SonarPing]
    truth: np.ndarray | None          # raw (n, 8) rows of truth_poses.csv
    metadata: DatasetMetadata

    @property
    def truth_poses(self) -> list[Pose] | None:
        if self.truth is None:
            return None
        return [Pose(orientation=quaternion_to_matrix(row[4:8]),
                     position=row[1:4], timestamp=row[0])
                for row in self.truth]


def _read_rows(path: str, header: str):
    """Yield (line number, column strings); validates the header."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != header:
            raise DatasetFormatError(
                f"unexpected header {first!r} (unit/format mismatch; "
                f"expected {header!r})", path=path, line=1)
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            yield lineno, line.split(",")


def _floats(path: str, lineno: int, cols: list[str], expected: int) -> list[float]:
    if len(cols) != expected:
        raise DatasetFormatError(f"expected {expected} columns, got {len(cols)}",
                                 path=path, line=lineno)
    try:
        values = [float(c) for c in cols]
    except ValueError as exc:
        raise DatasetFormatError(f"non-numeric value ({exc})",
                                 path=path, line=lineno) from None
    if not all(math.isfinite(v) for v in values):
        raise DatasetFormatError("non-finite value", path=path, line=lineno)
    return values


def _check_increasing(path: str, lineno: int, t: float, last: float | None):
    if last is not None and t <= last:
        raise DatasetFormatError(
            f"timestamp {t!r} not increasing (previous {last!r})",
            path=path, line=lineno)


def load_imu(path: str) -> list[ImuSample]:
    samples = []
    last = None
    for lineno, cols in _read_rows(path, IMU_HEADER):
        if len(cols) != 10:
            raise DatasetFormatError(f"expected 10 columns, got {len(cols)}",
                                     path=path, line=lineno)
        mag_cols = cols[7:]
        empties = sum(1 for c in mag_cols if c.strip() == "")
        if empties == 3:
            values = _floats(path, lineno, cols[:7], 7)
            mag = None
        elif empties == 0:
            values = _floats(path, lineno, cols, 10)
            mag = np.array(values[7:])
        else:
            raise DatasetFormatError("magnetometer columns must be all present "
                                     "or all empty", path=path, line=lineno)
        _check_increasing(path, lineno, values[0], last)
        last = values[0]
        samples.append(ImuSample(timestamp=values[0],
                                 angular_velocity=np.array(values[1:4]),
                                 linear_acceleration=np.array(values[4:7]),
                                 magnetic_field=mag))
    return samples


def load_dvl(path: str) -> list[DvlSample]:
    samples = []
    last = None
    for lineno, cols in _read_rows(path, DVL_HEADER):
        values = _floats(path, lineno, cols, 4)
        _check_increasing(path, lineno, values[0], last)
        last = values[0]
        samples.append(DvlSample(timestamp=values[0],
                                 velocity=np.array(values[1:4])))
    return samples


def load_mbes(path: str) -> list[SonarPing]:
    pings = []
    current_t = None
    current_beams: list[list[float]] = []
    last_ping_t = None

    def flush():
        nonlocal last_ping_t
        if current_t is None:
            return
        if last_ping_t is not None and current_t <= last_ping_t:
            raise DatasetFormatError(
                f"ping timestamp {current_t!r} not increasing", path=path)
        last_ping_t = current_t
        pings.append(SonarPing(timestamp=current_t,
                               beams=np.array(current_beams)))

    for lineno, cols in _read_rows(path, MBES_HEADER):
        t, angle, rng = _floats(path, lineno, cols, 3)
        if current_t is None or t != current_t:
            flush()
            current_t = t
            current_beams = []
        current_beams.append([angle, rng])
    flush()
    return pings


def load_truth(path: str) -> np.ndarray:
    rows = []
    last = None
    for lineno, cols in _read_rows(path, TRUTH_HEADER):
        values = _floats(path, lineno, cols, 8)
        _check_increasing(path, lineno, values[0], last)
        last = values[0]
        norm = math.sqrt(sum(v * v for v in values[4:8]))
        if abs(norm - 1.0) > 1e-6:
            raise DatasetFormatError(f"quaternion norm {norm!r} is not 1",
                                     path=path, line=lineno)
        rows.append(values)
    return np.array(rows).reshape(-1, 8)


def load_metadata(path: str) -> DatasetMetadata:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"invalid JSON ({exc})", path=path) from None
    units = raw.get("units", dict(EXPECTED_UNITS))
    if units != EXPECTED_UNITS:
        raise DatasetFormatError(f"unit mismatch: {units!r} != {EXPECTED_UNITS!r}",
                                 path=path)
    d = raw.get("d")
    return DatasetMetadata(name=str(raw.get("name", "")),
                           d=None if d is None else float(d), units=units)


def load_dataset(directory: str) -> Dataset:
    """Parse and validate a dataset directory."""
    for name in REQUIRED_FILES:
        if not os.path.exists(os.path.join(directory, name)):
            raise DatasetFormatError(f"required file {name} missing from "
                                     f"{directory}")
    imu = load_imu(os.path.join(directory, "imu.csv"))
    dvl = load_dvl(os.path.join(directory, "dvl.csv"))
    pings = load_mbes(os.path.join(directory, "mbes.csv"))

    truth_path = os.path.join(directory, "truth_poses.csv")
    truth = load_truth(truth_path) if os.path.exists(truth_path) else None

    meta_path = os.path.join(directory, "metadata.json")
    if os.path.exists(meta_path):
        metadata = load_metadata(meta_path)
    else:
        metadata = DatasetMetadata(name=os.path.basename(os.path.normpath(directory)))
    return Dataset(imu=imu, dvl=dvl, pings=pings, truth=truth, metadata=metadata)


def _fmt(value: float) -> str:
    return repr(float(value))


def save_dataset(directory: str, imu: list[ImuSample], dvl: list[DvlSample],
                 pings: list[SonarPing], truth: np.ndarray | None = None,
                 metadata: DatasetMetadata | None = None) -> None:
    """Write a dataset directory in canonical (round-trippable) form."""
    os.makedirs(directory, exist_ok=True)

    with open(os.path.join(directory, "imu.csv"), "w", encoding="utf-8") as fh:
        fh.write(IMU_HEADER + "\n")
        for s in imu:
            cols = [_fmt(s.timestamp)] + [_fmt(v) for v in s.angular_velocity] \
                + [_fmt(v) for v in s.linear_acceleration]
            if s.magnetic_field is None:
                cols += ["", "", ""]
            else:
                cols += [_fmt(v) for v in s.magnetic_field]
            fh.write(",".join(cols) + "\n")

    with open(os.path.join(directory, "dvl.csv"), "w", encoding="utf-8") as fh:
        fh.write(DVL_HEADER + "\n")
        for s in dvl:
            fh.write(",".join([_fmt(s.timestamp)] +
                              [_fmt(v) for v in s.velocity]) + "\n")

    with open(os.path.join(directory, "mbes.csv"), "w", encoding="utf-8") as fh:
        fh.write(MBES_HEADER + "\n")
        for ping in pings:
            t = _fmt(ping.timestamp)
            for angle, rng in ping.beams:
                fh.write(f"{t},{_fmt(angle)},{_fmt(rng)}\n")

    if truth is not None:
        with open(os.path.join(directory, "truth_poses.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write(TRUTH_HEADER + "\n")
            for row in truth:
                fh.write(",".join(_fmt(v) for v in row) + "\n")

    if metadata is not None:
        with open(os.path.join(directory, "metadata.json"), "w",
                  encoding="utf-8") as fh:
            json.dump({"name": metadata.name, "d": metadata.d,
                       "units": metadata.units}, fh, indent=2, sort_keys=True)
            fh.write("\n")
