"""Structural-similarity scoring between submap feature sets and loop search.

The per-point similarity compares two feature values a, b as

    S(a, b) = 1 - |b - a| / (max(|a|, |b|) + eps)

which is 1 iff a == b and can go negative for signed curvature features.
Two clouds' maps are compared by averaging S over all cross pairs, and the
cloud score Gamma is the mean over the six feature maps.  Loop candidates are
pairs whose Gamma exceeds a caller-chosen threshold.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import UndefinedSimilarityError
from .features import FeatureSet
from .geometry import Pose

DEFAULT_EPSILON = 1e-8
# Chunk of pairs handed to one worker; large enough to amortize scheduling.
_CHUNK = 512


@dataclass(frozen=True)
class SubmapRecord:
    """Database entry: one submap's feature maps plus bookkeeping."""

    sequence_index: int
    reference_pose: Pose | None
    feature_set: FeatureSet
    point_count: int

    def __post_init__(self):
        if len(self.feature_set) != self.point_count:
            raise ValueError("feature_set length inconsistent with point_count")


@dataclass(frozen=True)
class LoopCandidate:
    """Scored pair of submaps (j earlier than i)."""

    i: int
    j: int
    score: float
    is_loop: bool

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("loop candidate must pair distinct submaps")
        if not np.isfinite(self.score):
            raise ValueError("loop candidate score must be finite")


def point_similarity(a: float, b: float, eps: float = DEFAULT_EPSILON) -> float:
    """Similarity of two scalar feature values; 1 iff equal, symmetric."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return 1.0 - abs(b - a) / (max(abs(a), abs(b)) + eps)


def map_similarity(map_i, map_j, eps: float = DEFAULT_EPSILON,
                   backend: str | None = None) -> float:
    """Average point similarity over all cross pairs of two feature maps."""
    a = np.asarray(map_i, dtype=np.float64).ravel()
    b = np.asarray(map_j, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise UndefinedSimilarityError("similarity of an empty feature map is undefined")
    total = kernels.similarity_sum(a, b, eps, backend=backend)
    return total / (a.size * b.size)


def cloud_similarity(fs_i: FeatureSet, fs_j: FeatureSet,
                     eps: float = DEFAULT_EPSILON,
                     backend: str | None = None) -> float:
    """Gamma score: mean of the six map similarities."""
    return _gamma(fs_i.as_matrix(), fs_j.as_matrix(), eps, backend)


def _gamma(mat_i: np.ndarray, mat_j: np.ndarray, eps: float,
           backend: str | None) -> float:
    ni, nj = mat_i.shape[1], mat_j.shape[1]
    if ni == 0 or nj == 0:
        raise UndefinedSimilarityError("similarity of an empty feature set is undefined")
    sums = kernels.cross_similarity_sums(mat_i, mat_j, eps, backend=backend)
    return float(np.mean(sums / (ni * nj)))


def subsample_indices(point_count: int, cap: int, seed: int, tag: int) -> np.ndarray:
    """Deterministic uniform subsample of row indices, at most ``cap``."""
    if point_count <= cap:
        return np.arange(point_count)
    rng = np.random.default_rng(np.random.SeedSequence([seed, tag]))
    return np.sort(rng.choice(point_count, size=cap, replace=False))


def detect_loops(records: list[SubmapRecord], gamma: float | None,
                 exclusion: int = 25, cap: int | None = 2000,
                 eps: float = DEFAULT_EPSILON, threads: int = 1,
                 seed: int = 0, backend: str | None = None) -> list[LoopCandidate]:
    """Score every admissible pair of stored submaps.

    For each record i all earlier records j with ``i - j > exclusion``
    (sequence-index difference) are scored.  When ``cap`` is set, each
    record's feature maps are first subsampled to at most ``cap`` points
    with a seed derived from (seed, sequence_index), so results do not
    depend on evaluation order or thread count.  ``gamma=None`` scores
    pairs without flagging loops.

    Returns candidates ordered by (i, j).
    """
    seq = [r.sequence_index for r in records]
    if any(b <= a for a, b in zip(seq, seq[1:])):
        raise ValueError("records must be sorted by strictly increasing sequence_index")

    mats = []
    for rec in records:
        fs = rec.feature_set
        if cap is not None and rec.point_count > cap:
            fs = fs.subset(subsample_indices(rec.point_count, cap, seed,
                                             rec.sequence_index))
        mats.append(fs.as_matrix())

    pairs = [(ip, jp)
             for ip in range(len(records))
             for jp in range(ip)
             if seq[ip] - seq[jp] > exclusion]

    def score_chunk(chunk):
        return [_gamma(mats[ip], mats[jp], eps, backend) for ip, jp in chunk]

    chunks = [pairs[k:k + _CHUNK] for k in range(0, len(pairs), _CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scored = [g for part in pool.map(score_chunk, chunks) for g in part]
    else:
        scored = [g for chunk in chunks for g in score_chunk(chunk)]

    return [LoopCandidate(i=seq[ip], j=seq[jp], score=g,
                          is_loop=bool(gamma is not None and g > gamma))
            for (ip, jp), g in zip(pairs, scored)]


def write_scores_csv(path, candidates: list[LoopCandidate]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("i,j,gamma\n")
        for c in candidates:
            fh.write(f"{c.i},{c.j},{repr(c.score)}\n")


def write_loops_csv(path, candidates: list[LoopCandidate],
                    flagged_only: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("i,j,gamma,is_loop\n")
        for c in candidates:
            if flagged_only and not c.is_loop:
                continue
            fh.write(f"{c.i},{c.j},{repr(c.score)},{int(c.is_loop)}\n")
