"""Ground-truth labeling and precision-recall evaluation of pair scores.

Pairs are labeled from ground-truth vehicle poses: positive when the pose
distance is below 0.5 d, negative above 2 d, ignored in between (and inside
the temporal-exclusion window).  The PR curve sweeps the distinct scores
descending; average precision is the step-interpolated area under it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError
from .geometry import Pose

LABEL_POSITIVE = "positive"
LABEL_NEGATIVE = "negative"
LABEL_IGNORED = "ignored"


@dataclass(frozen=True)
class GroundTruthLabel:
    i: int
    j: int
    label: str
    pose_distance: float


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


def classify_distance(distance: float, d: float) -> str:
    if distance < 0.5 * d:
        return LABEL_POSITIVE
    if distance > 2.0 * d:
        return LABEL_NEGATIVE
    return LABEL_IGNORED


def label_pairs(poses: list[Pose], d: float, exclusion: int = 0,
                use_2d: bool = False) -> list[GroundTruthLabel]:
    """Label every pair (i, j), j < i, from ground-truth pose distance.

    Pairs with i - j <= exclusion are ignored regardless of distance.
    Distances are 3D Euclidean by default; ``use_2d`` restricts to x-y.
    """
    positions = np.array([p.position for p in poses], dtype=float)
    if use_2d:
        positions = positions[:, :2]
    labels = []
    for i in range(len(poses)):
        diffs = positions[i] - positions[:i]
        dists = np.sqrt(np.sum(diffs * diffs, axis=1))
        for j in range(i):
            if i - j <= exclusion:
                lab = LABEL_IGNORED
            else:
                lab = classify_distance(float(dists[j]), d)
            labels.append(GroundTruthLabel(i=i, j=j, label=lab,
                                           pose_distance=float(dists[j])))
    return labels


def pair_labels_for_scores(index_i: np.ndarray, index_j: np.ndarray,
                           positions: np.ndarray, d: float, exclusion: int = 0,
                           use_2d: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized labeling of specific scored pairs.

    ``positions`` is indexed by the pair indices.  Returns (keep mask of
    non-ignored pairs, is_positive over all pairs).
    """
    pos = positions[:, :2] if use_2d else positions
    diffs = pos[index_i] - pos[index_j]
    dist = np.sqrt(np.sum(diffs * diffs, axis=1))
    excluded = (index_i - index_j) <= exclusion
    positive = (dist < 0.5 * d) & ~excluded
    negative = (dist > 2.0 * d) & ~excluded
    return positive | negative, positive


def _pr_from_arrays(scores: np.ndarray, positives: np.ndarray) -> list[PrPoint]:
    total_pos = int(np.count_nonzero(positives))
    if total_pos == 0:
        raise EvaluationError("no positive pairs: recall is undefined")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = positives[order].astype(np.int64)

    boundary = np.ones(len(s), dtype=bool)
    boundary[:-1] = s[:-1] != s[1:]

    tp_cum = np.cumsum(y)
    count = np.arange(1, len(s) + 1)
    tp = tp_cum[boundary]
    pp = count[boundary]
    fp = pp - tp
    points = []
    for t, c_tp, c_fp in zip(s[boundary], tp, fp):
        denom = c_tp + c_fp
        precision = float(c_tp / denom) if denom else 1.0
        points.append(PrPoint(threshold=float(t), precision=precision,
                              recall=float(c_tp / total_pos),
                              tp=int(c_tp), fp=int(c_fp),
                              fn=int(total_pos - c_tp)))
    return points


def pr_curve(scored_pairs, labels: list[GroundTruthLabel]) -> list[PrPoint]:
    """PR curve for scored pairs (i, j, score) against labeled pairs.

    Every scored pair must be labeled; ignored pairs are dropped before the
    threshold sweep (one PrPoint per distinct score, descending).
    """
    lookup = {(lab.i, lab.j): lab.label for lab in labels}
    kept_scores, kept_pos = [], []
    for i, j, score in scored_pairs:
        try:
            lab = lookup[(int(i), int(j))]
        except KeyError:
            raise EvaluationError(f"scored pair ({i}, {j}) has no label") from None
        if lab == LABEL_IGNORED:
            continue
        kept_scores.append(float(score))
        kept_pos.append(lab == LABEL_POSITIVE)
    if not kept_scores:
        raise EvaluationError("no labeled pairs to evaluate")
    return _pr_from_arrays(np.array(kept_scores), np.array(kept_pos))


def average_precision(curve: list[PrPoint]) -> float:
    """Step-interpolated area under the PR curve (descending sweep)."""
    if not curve:
        raise EvaluationError("empty PR curve")
    ap = 0.0
    prev_recall = 0.0
    for pt in curve:
        ap += (pt.recall - prev_recall) * pt.precision
        prev_recall = pt.recall
    return ap


def write_pr_csv(path, curve: list[PrPoint]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("gamma,precision,recall,tp,fp,fn\n")
        for pt in curve:
            fh.write(f"{repr(pt.threshold)},{repr(pt.precision)},"
                     f"{repr(pt.recall)},{pt.tp},{pt.fp},{pt.fn}\n")


def render_pr_svg(curves: list[tuple[str, list[PrPoint]]],
                  title: str = "Precision-Recall") -> str:
    """Minimal standalone SVG: one polyline per (label, curve)."""
    width, height, margin = 480, 360, 48
    plot_w, plot_h = width - 2 * margin, height - 2 * margin

    def sx(r): return margin + r * plot_w
    def sy(p): return margin + (1.0 - p) * plot_h

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{margin / 2:.1f}" text-anchor="middle" '
        f'font-size="14">{title}</text>',
        f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle" '
        'font-size="12">Recall</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.1f})">Precision</text>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(f'<text x="{sx(frac):.1f}" y="{height - margin + 16}" '
                     f'text-anchor="middle" font-size="10">{frac:g}</text>')
        parts.append(f'<text x="{margin - 6}" y="{sy(frac) + 3:.1f}" '
                     f'text-anchor="end" font-size="10">{frac:g}</text>')
    for k, (label, curve) in enumerate(curves):
        color = colors[k % len(colors)]
        pts = " ".join(f"{sx(pt.recall):.2f},{sy(pt.precision):.2f}"
                       for pt in curve)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="1.5"/>')
        parts.append(f'<text x="{margin + 6}" y="{margin + 14 + 13 * k}" '
                     f'font-size="11" fill="{color}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
