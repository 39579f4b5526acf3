"""Command-line pipeline: simulate | detect | evaluate.

``simulate`` writes a synthetic dataset directory; ``detect`` runs dead
reckoning, submap building, feature extraction and pair scoring on a dataset;
``evaluate`` labels scored pairs against ground-truth poses and produces the
precision-recall outputs.  Every command is deterministic given its inputs,
flags, and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .dead_reckoning import DeadReckoningConfig, run_dead_reckoning
from .errors import DatasetFormatError, EvaluationError, SonarLoopError
from .evaluation import (average_precision, _pr_from_arrays,
                         pair_labels_for_scores, render_pr_svg, write_pr_csv)
from .features import compute_feature_set
from .ingestion import DatasetMetadata, load_dataset, save_dataset
from .similarity import (SubmapRecord, detect_loops, write_loops_csv,
                         write_scores_csv)
from .submaps import CROP_MODES, SubmapConfig, build_submaps
from .synth import SCENARIOS

_DEFAULTS = {
    "d": None,          # crop half-extent; falls back to dataset metadata
    "n": 10,            # accumulation half window
    "M": 16,            # neighbors per point
    "epsilon": 1e-8,
    "gamma": None,      # no threshold: score-only run
    "crop": "square",
    "cap": 2000,
    "exclusion": None,  # default 2n+5
    "seed": 0,
    "threads": 1,
    "flagged_only": False,
    "distance_2d": False,
}


@dataclass
class RunConfig:
    dataset: str
    out: str
    d: float | None
    n: int
    M: int
    epsilon: float
    gamma: float | None
    crop: str
    cap: int
    exclusion: int | None
    seed: int
    threads: int
    flagged_only: bool
    distance_2d: bool

    def effective_exclusion(self) -> int:
        return self.exclusion if self.exclusion is not None else 2 * self.n + 5


class _Stage:
    """Context manager printing the wall time of one pipeline stage."""

    def __init__(self, label: str):
        self.label = label

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            print(f"  {self.label}: {time.perf_counter() - self.start:.2f} s")
        else:
            print(f"error in stage {self.label}: {exc}", file=sys.stderr)
        return False


def _merge_config(args: argparse.Namespace) -> RunConfig:
    """flags > config file > defaults."""
    merged = dict(_DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(_DEFAULTS)
        if unknown:
            raise SonarLoopError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if merged["crop"] not in CROP_MODES:
        raise SonarLoopError(f"crop mode must be one of {CROP_MODES}")
    return RunConfig(dataset=args.dataset, out=args.out, **merged)


def cmd_simulate(args) -> int:
    if args.scenario not in SCENARIOS:
        print(f"error in stage simulate: unknown scenario {args.scenario!r} "
              f"(have {sorted(SCENARIOS)})", file=sys.stderr)
        return 1
    scenario = SCENARIOS[args.scenario]
    with _Stage("generate"):
        survey = scenario.generate(args.seed)
    with _Stage("write"):
        save_dataset(args.out, survey.imu, survey.dvl, survey.pings,
                     truth=survey.truth,
                     metadata=DatasetMetadata(name=scenario.name, d=scenario.d))
    s = survey.stats
    print(f"scenario {scenario.name} seed {args.seed}: {s['pings']} pings, "
          f"{s['legs']} legs, {s['crossings']} crossings, "
          f"{s['path_length']:.0f} m path, {s['duration']:.0f} s")
    return 0


def cmd_detect(args) -> int:
    cfg = _merge_config(args)
    os.makedirs(cfg.out, exist_ok=True)

    with _Stage("ingest"):
        dataset = load_dataset(cfg.dataset)
        if cfg.d is None:
            cfg.d = dataset.metadata.d
        if cfg.d is None:
            raise SonarLoopError("crop distance d not given and dataset "
                                 "metadata has none")

    with _Stage("dead_reckoning"):
        poses = run_dead_reckoning(dataset.imu, dataset.dvl,
                                   DeadReckoningConfig())

    with _Stage("submaps"):
        sub_cfg = SubmapConfig(n=cfg.n, d=cfg.d, mode=cfg.crop)
        submaps = build_submaps(poses, dataset.pings, sub_cfg)

    with _Stage("features"):
        records = []
        skipped = 0
        for sm in submaps:
            if len(sm.points) < 2:
                skipped += 1
                continue
            records.append(SubmapRecord(
                sequence_index=sm.sequence_index,
                reference_pose=sm.reference_pose,
                feature_set=compute_feature_set(sm, m=cfg.M),
                point_count=len(sm.points)))
        if skipped:
            warnings.warn(f"{skipped} submaps below 2 points were skipped")

    with _Stage("scoring"):
        candidates = detect_loops(records, cfg.gamma,
                                  exclusion=cfg.effective_exclusion(),
                                  cap=cfg.cap, eps=cfg.epsilon,
                                  threads=cfg.threads, seed=cfg.seed)

    with _Stage("write"):
        write_scores_csv(os.path.join(cfg.out, "scores.csv"), candidates)
        if cfg.gamma is not None:
            write_loops_csv(os.path.join(cfg.out, "loops.csv"), candidates,
                            flagged_only=cfg.flagged_only)
        echo = asdict(cfg)
        echo["exclusion"] = cfg.effective_exclusion()
        with open(os.path.join(cfg.out, "config.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(echo, fh, indent=2, sort_keys=True)
            fh.write("\n")

    print(f"{len(records)} submaps, {len(candidates)} pairs scored"
          + (f", {sum(c.is_loop for c in candidates)} loops" if cfg.gamma is not None
             else ""))
    return 0


def _read_scores(path: str):
    ii, jj, gg = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "i,j,gamma":
            raise DatasetFormatError(f"unexpected scores header {header!r}",
                                     path=path, line=1)
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split(",")
            if len(cols) != 3:
                raise DatasetFormatError("expected 3 columns", path=path,
                                         line=lineno)
            ii.append(int(cols[0]))
            jj.append(int(cols[1]))
            gg.append(float(cols[2]))
    return np.array(ii), np.array(jj), np.array(gg)


def cmd_evaluate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    exclusion = args.exclusion
    d = args.d

    # Defaults recorded by the detect run that produced the scores.
    detect_cfg_path = os.path.join(os.path.dirname(os.path.abspath(args.scores)),
                                   "config.json")
    if os.path.exists(detect_cfg_path):
        with open(detect_cfg_path, "r", encoding="utf-8") as fh:
            detect_cfg = json.load(fh)
        if exclusion is None:
            exclusion = detect_cfg.get("exclusion")
        if d is None:
            d = detect_cfg.get("d")

    with _Stage("ingest"):
        index_i, index_j, scores = _read_scores(args.scores)
        dataset = load_dataset(args.dataset)
        if dataset.truth is None:
            raise EvaluationError("dataset has no truth_poses.csv; cannot label")
        if d is None:
            d = dataset.metadata.d
        if d is None:
            raise EvaluationError("distance parameter d unknown (flag, detect "
                                  "config, and metadata all missing)")
        if exclusion is None:
            exclusion = 2 * _DEFAULTS["n"] + 5

    with _Stage("label"):
        # Submap index k refers to ping k; label with the truth pose nearest
        # to that ping's timestamp.
        ping_times = np.array([p.timestamp for p in dataset.pings])
        truth_times = dataset.truth[:, 0]
        nearest = np.clip(np.searchsorted(truth_times, ping_times), 1,
                          len(truth_times) - 1)
        nearest -= (ping_times - truth_times[nearest - 1]
                    < truth_times[nearest] - ping_times)
        positions = dataset.truth[nearest][:, 1:4]
        keep, positive = pair_labels_for_scores(
            index_i, index_j, positions, d, exclusion=int(exclusion),
            use_2d=bool(args.distance_2d))
        if not np.any(positive):
            raise EvaluationError("no positive pairs among scored pairs; "
                                  "recall undefined")

    with _Stage("evaluate"):
        curve = _pr_from_arrays(scores[keep], positive[keep])
        ap = average_precision(curve)

    with _Stage("write"):
        write_pr_csv(os.path.join(args.out, "pr.csv"), curve)
        with open(os.path.join(args.out, "summary.json"), "w",
                  encoding="utf-8") as fh:
            json.dump({"ap": ap, "pairs": int(np.count_nonzero(keep)),
                       "positives": int(np.count_nonzero(positive))}, fh)
            fh.write("\n")
        svg = render_pr_svg([(f"AP={ap:.3f}", curve)],
                            title="Precision-Recall")
        with open(os.path.join(args.out, "pr.svg"), "w", encoding="utf-8") as fh:
            fh.write(svg)

    print(f"ap={ap:.6f} over {int(np.count_nonzero(keep))} pairs "
          f"({int(np.count_nonzero(positive))} positives)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sonarloop",
        description="Structural-similarity loop detection for multibeam "
                    "sonar surveys")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset")
    p_sim.add_argument("--scenario", required=True,
                       help=f"one of {sorted(SCENARIOS)}")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_det = sub.add_parser("detect", help="score submap pairs of a dataset")
    p_det.add_argument("--dataset", required=True)
    p_det.add_argument("--out", required=True)
    p_det.add_argument("--config", help="JSON config file (flags override it)")
    p_det.add_argument("--d", type=float)
    p_det.add_argument("--n", type=int)
    p_det.add_argument("--M", type=int)
    p_det.add_argument("--epsilon", type=float)
    p_det.add_argument("--gamma", type=float)
    p_det.add_argument("--crop", choices=CROP_MODES)
    p_det.add_argument("--cap", type=int)
    p_det.add_argument("--exclusion", type=int)
    p_det.add_argument("--seed", type=int)
    p_det.add_argument("--threads", type=int)
    p_det.add_argument("--flagged-only", dest="flagged_only",
                       action="store_true", default=None)
    p_det.set_defaults(func=cmd_detect)

    p_eval = sub.add_parser("evaluate", help="precision-recall of a scores file")
    p_eval.add_argument("--scores", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--d", type=float)
    p_eval.add_argument("--exclusion", type=int)
    p_eval.add_argument("--distance-2d", dest="distance_2d",
                        action="store_true", default=False)
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SonarLoopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
