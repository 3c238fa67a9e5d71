"""Exact RBF kernel and the landmark empirical kernel map.

The kernel baselines represent each pixel by its kernel values against
``m`` randomly chosen landmark pixels; linear ICA/LDA run on that map.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UsageError
from .hsi import as_sample_matrix
from .rff import gamma_from_sigma

__all__ = [
    "KernelParams",
    "LandmarkSet",
    "rbf_kernel",
    "rbf_gram",
    "select_landmarks",
    "kernel_feature_map",
]


@dataclass(frozen=True)
class KernelParams:
    gamma: float

    def __post_init__(self):
        if not (self.gamma > 0) or not np.isfinite(self.gamma):
            raise UsageError(f"gamma must be positive and finite, got {self.gamma}")

    @classmethod
    def from_sigma(cls, sigma: float) -> "KernelParams":
        return cls(gamma_from_sigma(sigma))


def rbf_kernel(x, y, params: KernelParams) -> float:
    """``exp(-gamma * ||x - y||^2)`` for two spectra."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise DimensionError(f"spectra differ in length: {x.size} vs {y.size}")
    diff = x - y
    return float(np.exp(-params.gamma * np.dot(diff, diff)))


def _sq_norms(A):
    return np.einsum("ij,ij->j", A, A)


def rbf_gram(A, B, gamma: float, chunk: int = 4096) -> np.ndarray:
    """Kernel block ``K[i, j] = exp(-gamma ||a_i - b_j||^2)`` for columns of A, B."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f"dimension mismatch: {A.shape[0]} vs {B.shape[0]}")
    na = _sq_norms(A)[:, None]
    out = np.empty((A.shape[1], B.shape[1]))
    for s in range(0, B.shape[1], chunk):
        Bs = B[:, s:s + chunk]
        blk = A.T @ Bs
        blk *= -2.0
        blk += na
        blk += _sq_norms(Bs)[None, :]
        np.maximum(blk, 0.0, out=blk)
        blk *= -gamma
        np.exp(blk, out=blk)
        out[:, s:s + chunk] = blk
    return out


@dataclass(frozen=True)
class LandmarkSet:
    """Landmark spectra plus the centering statistics of their Gram block.

    ``row_means[i]`` is the mean of ``K(l_i, l_k)`` over landmarks ``k`` and
    ``total_mean`` the mean of the full block; both depend on ``gamma``.
    """

    points: np.ndarray  # (d, m)
    gamma: float
    row_means: np.ndarray
    total_mean: float
    source_indices: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] < 2:
            raise UsageError("a landmark set needs at least 2 points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def d(self) -> int:
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.points.shape[1]

    @property
    def params(self) -> KernelParams:
        return KernelParams(self.gamma)


def landmarks_from_points(points, params: KernelParams, source_indices=None, seed: int = 0) -> LandmarkSet:
    points = as_sample_matrix(points)
    K = rbf_gram(points, points, params.gamma)
    row_means = K.mean(axis=1)
    return LandmarkSet(points, params.gamma, row_means, float(row_means.mean()),
                       None if source_indices is None else np.asarray(source_indices, dtype=np.int64),
                       int(seed))


def select_landmarks(X, m: int, params: KernelParams, seed: int = 0) -> LandmarkSet:
    """Pick ``m`` distinct columns of ``X`` uniformly without replacement."""
    X = as_sample_matrix(X)
    N = X.shape[1]
    if m > N:
        raise UsageError(f"cannot select {m} landmarks from {N} samples")
    if m < 2:
        raise UsageError("need at least 2 landmarks")
    rng = np.random.default_rng(seed)
    idx = rng.choice(N, size=m, replace=False)
    return landmarks_from_points(X[:, idx], params, idx, seed)


def kernel_feature_map(X, landmarks: LandmarkSet, centered: bool = False) -> np.ndarray:
    """Kernel values of every column of ``X`` against the landmarks (m x N).

    With ``centered=True`` the feature-space centering correction
    ``k - mean(k) - row_means + total_mean`` is applied, which turns the
    landmark Gram block into ``H K H``.
    """
    X = as_sample_matrix(X)
    if X.shape[0] != landmarks.d:
        raise DimensionError(f"landmarks have d={landmarks.d}, data has d={X.shape[0]}")
    F = rbf_gram(landmarks.points, X, landmarks.gamma)
    if centered:
        F -= F.mean(axis=0, keepdims=True)
        F -= landmarks.row_means[:, None]
        F += landmarks.total_mean
    return F
