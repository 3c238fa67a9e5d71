"""Fisher scatter matrices and the generalized eigenproblem of LDA."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionError, NumericError, UsageError
from .hsi import as_sample_matrix

__all__ = [
    "ScatterPair",
    "LdaModel",
    "compute_scatter",
    "solve_lda",
    "lda_transform",
    "fisher_ratio",
]

DEGENERATE_EIGENVALUE = 1e-10


@dataclass(frozen=True)
class ScatterPair:
    within: np.ndarray
    between: np.ndarray
    class_means: np.ndarray  # (d, C)
    global_mean: np.ndarray
    class_counts: np.ndarray
    classes: np.ndarray  # class ids, column order of class_means

    @property
    def d(self) -> int:
        return self.within.shape[0]

    @property
    def n_classes(self) -> int:
        return self.class_means.shape[1]


@dataclass(frozen=True)
class LdaModel:
    projection: np.ndarray  # (d, q), unit-norm columns
    eigenvalues: np.ndarray  # (q,) descending
    ridge_used: float
    note: str = ""

    @property
    def q(self) -> int:
        return self.projection.shape[1]

    @property
    def d(self) -> int:
        return self.projection.shape[0]


def compute_scatter(X, labels) -> ScatterPair:
    """Within- and between-class scatter of the columns of ``X``.

    ``labels`` must be positive class ids, one per column.
    """
    X = as_sample_matrix(X)
    labels = np.asarray(labels).reshape(-1)
    if labels.size != X.shape[1]:
        raise DimensionError(f"{labels.size} labels for {X.shape[1]} samples")
    if np.any(labels <= 0):
        raise UsageError("scatter labels must be positive class ids (background excluded)")
    classes = np.unique(labels)
    if classes.size == 0:
        raise UsageError("no samples given")
    d = X.shape[0]
    mu = X.mean(axis=1)
    means = np.empty((d, classes.size))
    counts = np.empty(classes.size, dtype=np.int64)
    Sw = np.zeros((d, d))
    Sb = np.zeros((d, d))
    for k, c in enumerate(classes):
        Xc = X[:, labels == c]
        counts[k] = Xc.shape[1]
        means[:, k] = Xc.mean(axis=1)
        Dc = Xc - means[:, k:k + 1]
        Sw += Dc @ Dc.T
        diff = (means[:, k] - mu)[:, None]
        Sb += counts[k] * (diff @ diff.T)
    Sw = 0.5 * (Sw + Sw.T)
    Sb = 0.5 * (Sb + Sb.T)
    return ScatterPair(Sw, Sb, means, mu, counts, classes)


def solve_lda(scatter: ScatterPair, q: int, ridge: float = 1e-6) -> LdaModel:
    """Top-``q`` generalized eigenvectors of ``(S_b, S_w + ridge*tr(S_w)/d*I)``.

    ``q`` is capped at ``C - 1``, the rank bound of ``S_b``.
    """
    C = scatter.n_classes
    if C < 2:
        raise UsageError("LDA needs at least 2 classes")
    if not 1 <= q <= C - 1:
        raise UsageError(
            f"LDA components must satisfy 1 <= q <= C-1 = {C - 1} (rank of the between-class scatter), got {q}"
        )
    if ridge < 0:
        raise UsageError("ridge must be non-negative")
    d = scatter.d
    if q > d:
        raise UsageError(f"cannot extract {q} components from {d} dimensions")
    scale = np.trace(scatter.within) / d
    if scale <= 0:
        scale = 1.0
    ridge_used = ridge * scale
    Sw = scatter.within + ridge_used * np.eye(d)
    try:
        vals, vecs = linalg.eigh(scatter.between, Sw, subset_by_index=[d - q, d - 1])
    except linalg.LinAlgError as exc:
        raise NumericError(f"within-class scatter is singular even with ridge {ridge}: {exc}") from exc
    vals, vecs = vals[::-1], vecs[:, ::-1]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    # deterministic sign: largest-magnitude loading positive
    lead = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(q)]
    vecs = vecs * np.where(lead < 0, -1.0, 1.0)
    note = ""
    if not np.all(np.isfinite(vals)):
        raise NumericError("generalized eigenvalues are not finite")
    if vals[0] < DEGENERATE_EIGENVALUE:
        note = "degenerate: between-class scatter is numerically zero"
    return LdaModel(np.ascontiguousarray(vecs), vals, float(ridge_used), note)


def lda_transform(model: LdaModel, X) -> np.ndarray:
    """Project columns of ``X``: ``G^T X``."""
    X = as_sample_matrix(X)
    if X.shape[0] != model.d:
        raise DimensionError(f"LDA model expects d={model.d}, got {X.shape[0]}")
    return model.projection.T @ X


def fisher_ratio(scatter: ScatterPair, g) -> float:
    """``g^T S_b g / g^T S_w g`` for a single direction."""
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    return float(g @ scatter.between @ g / (g @ scatter.within @ g))
