"""Scratch harness for scenario tuning (not part of the package)."""
import sys
import time
import numpy as np
from sonarloop.synth import SCENARIOS, Scenario, SurveyPlan, NoiseConfig, generate_survey
from sonarloop.submaps import SubmapConfig, build_submaps
from sonarloop.features import compute_feature_set
from sonarloop.similarity import SubmapRecord, detect_loops
from sonarloop.evaluation import pair_labels_for_scores, _pr_from_arrays, average_precision
from sonarloop.dead_reckoning import run_dead_reckoning, DeadReckoningConfig
import dataclasses


def run_ap(scenario, seed, n=10, use_truth_poses=True, crop="square", m=16,
           exclusion=25, threads=2, verbose=True):
    data = scenario.generate(seed)
    if use_truth_poses:
        poses = data.truth_poses
    else:
        poses = run_dead_reckoning(data.imu, data.dvl, DeadReckoningConfig())
    t0 = time.perf_counter()
    submaps = build_submaps(poses, data.pings,
                            SubmapConfig(n=n, d=scenario.d, mode=crop))
    records = [SubmapRecord(s.sequence_index, s.reference_pose,
                            compute_feature_set(s, m), len(s.points))
               for s in submaps if len(s.points) >= 2]
    t_feat = time.perf_counter() - t0
    t0 = time.perf_counter()
    cands = detect_loops(records, None, exclusion=exclusion, threads=threads)
    t_score = time.perf_counter() - t0
    ii = np.array([c.i for c in cands]); jj = np.array([c.j for c in cands])
    gg = np.array([c.score for c in cands])
    ping_t = np.array([p.timestamp for p in data.pings]); tt = data.truth[:, 0]
    nearest = np.clip(np.searchsorted(tt, ping_t), 1, len(tt) - 1)
    nearest -= (ping_t - tt[nearest - 1] < tt[nearest] - ping_t)
    positions = data.truth[nearest][:, 1:4]
    keep, pos = pair_labels_for_scores(ii, jj, positions, scenario.d, exclusion=exclusion)
    curve = _pr_from_arrays(gg[keep], pos[keep])
    ap = average_precision(curve)
    gpos = gg[keep & pos.astype(bool)] if pos.dtype != bool else gg[keep & pos]
    gneg = gg[keep & ~pos]
    if verbose:
        print(f"  seed={seed} n={n} crop={crop}: AP={ap:.4f} "
              f"(pos {int(pos.sum())}, pairs {int(keep.sum())}, "
              f"Gpos {gpos.mean():.4f}+-{gpos.std():.4f}, "
              f"Gneg {gneg.mean():.4f}+-{gneg.std():.4f}, "
              f"sub {np.mean([len(s.points) for s in submaps]):.0f}pts, "
              f"feat {t_feat:.1f}s score {t_score:.1f}s)")
    return ap


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "pond"
    sc = SCENARIOS[which]
    overrides = {}
    for kv in sys.argv[2:]:
        k, v = kv.split("=")
        overrides[k] = eval(v)
    plan_over = {k[5:]: v for k, v in overrides.items() if k.startswith("plan_")}
    noise_over = {k[6:]: v for k, v in overrides.items() if k.startswith("noise_")}
    sc_over = {k: v for k, v in overrides.items()
               if not k.startswith(("plan_", "noise_", "run_"))}
    if plan_over:
        sc_over["plan"] = dataclasses.replace(sc.plan, **plan_over)
    if noise_over:
        sc_over["noise"] = dataclasses.replace(sc.noise, **noise_over)
    if sc_over:
        sc = dataclasses.replace(sc, **sc_over)
    run_kw = {k[4:]: v for k, v in overrides.items() if k.startswith("run_")}
    run_ap(sc, run_kw.pop("seed", 0), **run_kw)
