"""Random Fourier features for the RBF kernel.

``z(x) = sqrt(2/D) * cos(R^T x + b)`` with ``R`` entries drawn from
``N(0, 1/sigma^2)`` and ``b`` uniform on ``[0, 2*pi)``, so that
``z(x)^T z(y)`` estimates ``exp(-||x - y||^2 / (2 sigma^2))``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DegenerateDataError, DimensionError, UsageError
from .hsi import as_sample_matrix

__all__ = [
    "RffMap",
    "estimate_bandwidth",
    "sample_rff_map",
    "apply_rff",
    "gamma_from_sigma",
    "DEFAULT_MAX_PAIRS",
]

DEFAULT_MAX_PAIRS = 1_000_000
BANDWIDTH_RULES = ("squared", "mean")


def gamma_from_sigma(sigma: float) -> float:
    """RBF exponent coefficient: ``gamma = 1 / (2 sigma^2)``."""
    return 1.0 / (2.0 * float(sigma) ** 2)


@dataclass(frozen=True)
class RffMap:
    coefficients: np.ndarray  # (d, D)
    offsets: np.ndarray  # (D,)
    sigma: float
    seed: int

    def __post_init__(self):
        R = np.ascontiguousarray(self.coefficients, dtype=np.float64)
        b = np.ascontiguousarray(self.offsets, dtype=np.float64).reshape(-1)
        if R.ndim != 2 or R.shape[1] != b.size or b.size < 1:
            raise DimensionError(f"coefficients {R.shape} and offsets {b.shape} disagree")
        if not (self.sigma > 0):
            raise UsageError(f"sigma must be positive, got {self.sigma}")
        R.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "coefficients", R)
        object.__setattr__(self, "offsets", b)

    @property
    def d(self) -> int:
        return self.coefficients.shape[0]

    @property
    def D(self) -> int:
        return self.coefficients.shape[1]

    @property
    def gamma(self) -> float:
        return gamma_from_sigma(self.sigma)


def _sample_pairs(N: int, max_pairs: int, rng) -> tuple[np.ndarray, np.ndarray]:
    i = rng.integers(0, N, size=max_pairs)
    j = rng.integers(0, N - 1, size=max_pairs)
    # shift j past i so every drawn pair is distinct and uniform over i != j
    j = j + (j >= i)
    return i, j


def estimate_bandwidth(X, max_pairs: int = DEFAULT_MAX_PAIRS, seed: int = 0,
                       rule: str = "squared") -> float:
    """Estimate the RBF bandwidth from pairwise distances between columns.

    With ``rule="squared"`` (default) returns ``sqrt(mean ||x_i - x_j||^2)``;
    with ``rule="mean"`` returns the mean distance itself. All unordered
    pairs are used when there are at most ``max_pairs`` of them, otherwise
    ``max_pairs`` pairs are drawn uniformly at random.
    """
    if rule not in BANDWIDTH_RULES:
        raise UsageError(f"unknown bandwidth rule {rule!r}; expected one of {BANDWIDTH_RULES}")
    X = as_sample_matrix(X)
    N = X.shape[1]
    if N < 2:
        raise UsageError("bandwidth estimation needs at least 2 samples")
    if max_pairs < 1:
        raise UsageError("max_pairs must be >= 1")
    total = N * (N - 1) // 2
    if total <= max_pairs:
        sq = pdist(X.T, "sqeuclidean")
    else:
        rng = np.random.default_rng(seed)
        i, j = _sample_pairs(N, max_pairs, rng)
        sq = np.empty(max_pairs)
        step = max(1, 4_000_000 // max(X.shape[0], 1))
        for s in range(0, max_pairs, step):
            diff = X[:, i[s:s + step]] - X[:, j[s:s + step]]
            sq[s:s + step] = np.einsum("ij,ij->j", diff, diff)
    if rule == "squared":
        value = float(np.sqrt(sq.mean()))
    else:
        value = float(np.sqrt(sq).mean())
    if value <= 0.0:
        raise DegenerateDataError("all sampled points coincide; bandwidth is zero")
    return value


def sample_rff_map(d: int, D: int, sigma: float, seed: int = 0) -> RffMap:
    """Sample a feature map for inputs of dimension ``d`` with ``D`` features."""
    if d < 1 or D < 1:
        raise UsageError(f"d and D must be >= 1, got d={d}, D={D}")
    if not (sigma > 0):
        raise UsageError(f"sigma must be positive, got {sigma}")
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((d, D)) / sigma
    b = rng.uniform(0.0, 2.0 * np.pi, size=D)
    return RffMap(R, b, float(sigma), int(seed))


def apply_rff(rff: RffMap, X, chunk: int = 8192) -> np.ndarray:
    """Map the columns of ``X`` (d x N) to random features (D x N)."""
    X = as_sample_matrix(X)
    if X.shape[0] != rff.d:
        raise DimensionError(f"RFF map expects d={rff.d}, got {X.shape[0]}")
    N = X.shape[1]
    out = np.empty((rff.D, N))
    scale = np.sqrt(2.0 / rff.D)
    Rt = rff.coefficients.T
    b = rff.offsets[:, None]
    # fixed column blocks keep results independent of how callers batch
    for s in range(0, N, chunk):
        blk = Rt @ X[:, s:s + chunk]
        blk += b
        np.cos(blk, out=blk)
        blk *= scale
        out[:, s:s + chunk] = blk
    return out
