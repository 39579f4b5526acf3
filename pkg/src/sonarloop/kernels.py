"""Similarity kernel backends.

The pairwise-similarity double sum dominates detection runtime, so it has a
compiled implementation (``sonarloop._native``, Cython) and a blocked numpy
fallback.  The backend is selected once at import: the extension when it is
built, else pure Python.  ``SONARLOOP_BACKEND=python|native`` overrides the
choice, and every entry point accepts an explicit ``backend=`` argument so
tests and benchmarks can exercise both paths.

Both backends compute the same quantity: for feature maps a (n,) and b (m,),
``sum_ij 1 - |b_j - a_i| / (max(|a_i|, |b_j|) + eps)``.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from . import _native
except ImportError:  # extension not built: pure-Python install
    _native = None

# Block size in elements; keeps the two temporaries inside L2.
_BLOCK_ELEMENTS = 32768


def _pair_sum_numpy(a: np.ndarray, b: np.ndarray, eps: float) -> float:
    """Blocked numpy evaluation of the similarity double sum."""
    abs_a = np.abs(a)
    abs_b = np.abs(b)
    rows = max(1, _BLOCK_ELEMENTS // max(b.shape[0], 1))
    partials = []
    for lo in range(0, a.shape[0], rows):
        hi = lo + rows
        diff = b[None, :] - a[lo:hi, None]
        np.abs(diff, out=diff)
        den = np.maximum(abs_a[lo:hi, None], abs_b[None, :])
        den += eps
        diff /= den
        partials.append(float(diff.size) - float(diff.sum()))
    return math.fsum(partials)


def similarity_sum_python(a, b, eps: float) -> float:
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("similarity_sum requires non-empty inputs")
    return _pair_sum_numpy(a, b, eps)


def cross_similarity_sums_python(a, b, eps: float) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.shape[0] != b.shape[0]:
        raise ValueError("feature map stacks must have matching row counts")
    if a.shape[1] == 0 or b.shape[1] == 0:
        raise ValueError("cross_similarity_sums requires non-empty inputs")
    return np.array([_pair_sum_numpy(a[f], b[f], eps) for f in range(a.shape[0])])


NATIVE_AVAILABLE = _native is not None

_requested = os.environ.get("SONARLOOP_BACKEND", "").strip().lower()
if _requested == "python":
    DEFAULT_BACKEND = "python"
elif _requested == "native":
    if not NATIVE_AVAILABLE:
        raise ImportError("SONARLOOP_BACKEND=native but sonarloop._native is not built")
    DEFAULT_BACKEND = "native"
else:
    DEFAULT_BACKEND = "native" if NATIVE_AVAILABLE else "python"


def _resolve(backend: str | None) -> str:
    name = backend or DEFAULT_BACKEND
    if name not in ("native", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "native" and not NATIVE_AVAILABLE:
        raise ValueError("native kernel requested but the extension is not built")
    return name


def similarity_sum(a, b, eps: float, backend: str | None = None) -> float:
    """Double sum of point similarities between two feature maps."""
    if _resolve(backend) == "native":
        return _native.similarity_sum(
            np.ascontiguousarray(a, dtype=np.float64),
            np.ascontiguousarray(b, dtype=np.float64), eps)
    return similarity_sum_python(a, b, eps)


def cross_similarity_sums(a, b, eps: float, backend: str | None = None) -> np.ndarray:
    """Similarity sums for stacked maps: a (k, n), b (k, m) -> (k,)."""
    if _resolve(backend) == "native":
        return _native.cross_similarity_sums(
            np.ascontiguousarray(a, dtype=np.float64),
            np.ascontiguousarray(b, dtype=np.float64), eps)
    return cross_similarity_sums_python(a, b, eps)


def available_backends() -> tuple[str, ...]:
    return ("native", "python") if NATIVE_AVAILABLE else ("python",)
