"""Per-point structural feature maps for submap comparison.

For every point we collect its M nearest neighbors and derive three
neighborhood quantities:

* geometry: Euclidean distances to each neighbor,
* normal: angles between the point's plane-fit normal and each neighbor's,
* curvature: each neighbor's quadric-fit curvature scalar.

Reducing each quantity row to its mean and population variance yields six
per-point feature maps.  All quantities depend only on relative positions and
angles, so the maps are invariant to rigid motion of the cloud.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateCloudError

DEFAULT_NEIGHBORS = 16

KIND_GEOMETRY = "geometry"
KIND_NORMAL = "normal"
KIND_CURVATURE = "curvature"

# Relative eigenvalue gap below which a neighborhood is treated as rank
# deficient (collinear / coincident) for plane fitting.
_RANK_TOL = 1e-10
# Condition-number ceiling for the quadric normal equations.
_QUADRIC_COND_MAX = 1e12


def _as_points(obj) -> np.ndarray:
    while hasattr(obj, "points"):
        obj = obj.points
    pts = np.asarray(obj, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (n, 3) points, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class NeighborIndex:
    """M nearest neighbors per point, sorted by distance (ties by index)."""

    indices: np.ndarray    # (n, m) int
    distances: np.ndarray  # (n, m) float, non-decreasing along each row
    requested: int
    degenerate: bool       # fewer than `requested` neighbors were available

    @property
    def m(self) -> int:
        return self.indices.shape[1]


@dataclass(frozen=True)
class QuantityMatrix:
    """Raw per-point x per-neighbor values for one structural quantity."""

    kind: str
    values: np.ndarray  # (n, m)


@dataclass(frozen=True)
class FeatureSet:
    """The six per-point feature maps (mean/variance of G, N, C rows)."""

    g_mean: np.ndarray
    g_var: np.ndarray
    n_mean: np.ndarray
    n_var: np.ndarray
    c_mean: np.ndarray
    c_var: np.ndarray
    flags: np.ndarray | None = None  # per-point degeneracy marks, diagnostic

    MAP_NAMES = ("g_mean", "g_var", "n_mean", "n_var", "c_mean", "c_var")

    def __len__(self) -> int:
        return self.g_mean.shape[0]

    def as_matrix(self) -> np.ndarray:
        """Stack the six maps into a (6, n) C-contiguous matrix."""
        return np.ascontiguousarray(np.stack(
            [getattr(self, name) for name in self.MAP_NAMES]))

    def subset(self, idx: np.ndarray) -> "FeatureSet":
        return FeatureSet(*(getattr(self, name)[idx] for name in self.MAP_NAMES),
                          flags=self.flags[idx] if self.flags is not None else None)


def _neighbor_distances(points: np.ndarray, indices: np.ndarray) -> np.ndarray:
    diff = points[indices] - points[:, None, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def knn(points, m: int = DEFAULT_NEIGHBORS) -> NeighborIndex:
    """Exact Euclidean k-nearest-neighbor index with (distance, index) order.

    If fewer than ``m`` other points exist, the neighbor lists saturate to all
    other points and the index is marked degenerate.
    """
    pts = _as_points(points)
    n = pts.shape[0]
    if n < 2:
        raise DegenerateCloudError(f"kNN requires at least 2 points, got {n}")
    if m < 1:
        raise ValueError("neighbor count must be >= 1")
    m_eff = min(m, n - 1)

    tree = cKDTree(pts)
    k_query = min(n, m_eff + 2)  # one spare beyond self for duplicate points
    _, raw = tree.query(pts, k=k_query)
    raw = raw.reshape(n, k_query)

    dist = _neighbor_distances(pts, raw)
    dist[raw == np.arange(n)[:, None]] = np.inf  # drop self
    order = np.lexsort((raw, dist), axis=1)[:, :m_eff]
    rows = np.arange(n)[:, None]
    indices = raw[rows, order]
    distances = dist[rows, order]
    return NeighborIndex(indices=indices, distances=distances,
                         requested=m, degenerate=m_eff < m)


def geometry_quantity(points, nbrs: NeighborIndex) -> QuantityMatrix:
    """Distances from each point to its neighbors, in neighbor order."""
    values = _neighbor_distances(_as_points(points), nbrs.indices)
    return QuantityMatrix(kind=KIND_GEOMETRY, values=values)


def estimate_normals(points, nbrs: NeighborIndex) -> tuple[np.ndarray, np.ndarray]:
    """Plane-fit unit normals per point.

    The normal is the smallest-eigenvalue eigenvector of the covariance of
    the point plus its neighbors, sign-fixed so n_z >= 0 (ties broken on n_y,
    then n_x).  Rank-deficient neighborhoods get (0, 0, 1) and a flag.

    Returns (normals (n, 3), degenerate flags (n,) bool).
    """
    pts = _as_points(points)
    nbhd = np.concatenate([pts[:, None, :], pts[nbrs.indices]], axis=1)
    centered = nbhd - nbhd.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / nbhd.shape[1]
    w, v = np.linalg.eigh(cov)
    normals = v[:, :, 0].copy()

    flags = (w[:, 2] <= 0.0) | (w[:, 1] <= _RANK_TOL * w[:, 2])
    normals[flags] = (0.0, 0.0, 1.0)

    nx, ny, nz = normals[:, 0], normals[:, 1], normals[:, 2]
    flip = (nz < 0) | ((nz == 0) & ((ny < 0) | ((ny == 0) & (nx < 0))))
    normals[flip] *= -1.0
    return normals, flags


def normal_quantity(normals: np.ndarray, nbrs: NeighborIndex) -> QuantityMatrix:
    """Angles between each point's normal and its neighbors' normals.

    Plane-fit normals carry a sign ambiguity, so angles are folded into
    [0, pi/2] via min(theta, pi - theta).
    """
    cosang = np.einsum("ni,nmi->nm", normals, normals[nbrs.indices])
    theta = np.arccos(np.clip(cosang, -1.0, 1.0))
    return QuantityMatrix(kind=KIND_NORMAL, values=np.minimum(theta, np.pi - theta))


def _tangent_frames(offsets: np.ndarray, normals: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-handed local frames (x, y, z=normal) per point.

    The in-plane x axis follows the tangential direction of the nearest
    usable neighbor, which rotates with the cloud; anchoring it to a world
    axis would make the quadric coefficients orientation-dependent.
    Returns (x_axis, y_axis, unresolved flags).
    """
    n = normals.shape[0]
    x_axis = np.zeros_like(normals)
    unresolved = np.ones(n, dtype=bool)
    for slot in range(offsets.shape[1]):
        if not unresolved.any():
            break
        cand = offsets[:, slot, :]
        proj = cand - np.sum(cand * normals, axis=1, keepdims=True) * normals
        norm = np.linalg.norm(proj, axis=1)
        scale = np.linalg.norm(cand, axis=1)
        usable = unresolved & (norm > 1e-9 * (scale + 1e-300)) & (scale > 0)
        x_axis[usable] = proj[usable] / norm[usable, None]
        unresolved &= ~usable
    # Arbitrary orthogonal completion for unresolved frames; their curvature
    # is flagged to zero downstream.
    if unresolved.any():
        ref = np.where(np.abs(normals[unresolved, 0:1]) < 0.9,
                       [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
        fallback = ref - np.sum(ref * normals[unresolved], axis=1,
                                keepdims=True) * normals[unresolved]
        x_axis[unresolved] = fallback / np.linalg.norm(fallback, axis=1)[:, None]
    y_axis = np.cross(normals, x_axis)
    return x_axis, y_axis, unresolved


def curvature_per_point(points, nbrs: NeighborIndex, normals: np.ndarray
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Signed curvature scalar per point from a local quadric fit.

    Each point's neighborhood is expressed in a frame with origin at the
    point and z along its normal; a least-squares quadric
    z = a x^2 + b y^2 + c xy + d x + e y + f over the point and its
    neighbors then gives

        rho = ((1 + d^2) a + (1 + e^2) b - 4 a b c) / (1 + e^2 + d^2)^(3/2)

    Ill-conditioned fits (normal-equation condition number above 1e12, or no
    usable tangent direction) yield rho = 0 and a flag.

    Returns (rho (n,), flags (n,) bool).
    """
    pts = _as_points(points)
    n, m = nbrs.indices.shape
    if m < 6:
        return np.zeros(n), np.ones(n, dtype=bool)

    offsets = pts[nbrs.indices] - pts[:, None, :]
    x_axis, y_axis, unresolved = _tangent_frames(offsets, normals)

    lx = np.einsum("nmi,ni->nm", offsets, x_axis)
    ly = np.einsum("nmi,ni->nm", offsets, y_axis)
    lz = np.einsum("nmi,ni->nm", offsets, normals)

    # Design matrix rows: [x^2, y^2, xy, x, y, 1]; the point itself
    # contributes the all-zero row with target z = 0.
    design = np.zeros((n, m + 1, 6))
    design[:, :m, 0] = lx * lx
    design[:, :m, 1] = ly * ly
    design[:, :m, 2] = lx * ly
    design[:, :m, 3] = lx
    design[:, :m, 4] = ly
    design[:, :, 5] = 1.0
    target = np.concatenate([lz, np.zeros((n, 1))], axis=1)

    ata = np.einsum("nki,nkj->nij", design, design)
    atb = np.einsum("nki,nk->ni", design, target)

    w = np.linalg.eigvalsh(ata)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = w[:, -1] / w[:, 0]
    flags = unresolved | ~np.isfinite(cond) | (cond > _QUADRIC_COND_MAX) | (w[:, 0] <= 0)

    ata[flags] = np.eye(6)
    atb[flags] = 0.0
    coef = np.linalg.solve(ata, atb[:, :, None])[:, :, 0]

    a, b, c, d, e = (coef[:, i] for i in range(5))
    rho = ((1.0 + d * d) * a + (1.0 + e * e) * b - 4.0 * a * b * c) \
        / np.power(1.0 + e * e + d * d, 1.5)
    bad = ~np.isfinite(rho)
    rho[flags | bad] = 0.0
    return rho, flags | bad


def curvature_quantity(rho: np.ndarray, nbrs: NeighborIndex) -> QuantityMatrix:
    """Curvature values of each point's neighbors, in neighbor order."""
    return QuantityMatrix(kind=KIND_CURVATURE, values=rho[nbrs.indices])


def quantities_to_feature_set(g: QuantityMatrix, n: QuantityMatrix,
                              c: QuantityMatrix,
                              flags: np.ndarray | None = None) -> FeatureSet:
    """Reduce each quantity row to its mean and population variance."""
    shapes = {q.values.shape for q in (g, n, c)}
    if len(shapes) != 1:
        raise ValueError(f"inconsistent quantity shapes: {shapes}")
    return FeatureSet(
        g_mean=g.values.mean(axis=1), g_var=g.values.var(axis=1),
        n_mean=n.values.mean(axis=1), n_var=n.values.var(axis=1),
        c_mean=c.values.mean(axis=1), c_var=c.values.var(axis=1),
        flags=flags,
    )


def compute_feature_set(points, m: int = DEFAULT_NEIGHBORS) -> FeatureSet:
    """Full pipeline: kNN -> quantities -> six per-point feature maps.

    Accepts a Submap, PointCloud, or (n, 3) array.  Degenerate neighborhoods
    are flagged rather than fatal so one bad point cannot abort a submap.
    """
    pts = _as_points(points)
    nbrs = knn(pts, m)
    g = geometry_quantity(pts, nbrs)
    normals, normal_flags = estimate_normals(pts, nbrs)
    nq = normal_quantity(normals, nbrs)
    rho, rho_flags = curvature_per_point(pts, nbrs, normals)
    c = curvature_quantity(rho, nbrs)
    return quantities_to_feature_set(g, nq, c, flags=normal_flags | rho_flags)


def export_feature_csv(points, feature_set: FeatureSet, path) -> None:
    """Debug dump: per-point coordinates plus the six feature columns."""
    pts = _as_points(points)
    cols = [pts[:, 0], pts[:, 1], pts[:, 2]] + \
        [getattr(feature_set, name) for name in FeatureSet.MAP_NAMES]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,y,z," + ",".join(FeatureSet.MAP_NAMES) + "\n")
        for row in zip(*cols):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
