"""PCA whitening and symmetric fixed-point FastICA.

Covariances use the 1/N convention throughout. The solver works on data
that is already centered and whitened; :func:`ica_transform` applies the
full unmixing ``W = rotation @ V`` to new columns after subtracting the
training mean.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionError, RankDeficiencyError, UsageError
from .hsi import as_sample_matrix

__all__ = [
    "WhiteningModel",
    "IcaModel",
    "whitening_from_moments",
    "center_whiten",
    "fastica_fit",
    "ica_transform",
    "sym_decorrelate",
    "amari_index",
]

NONLINEARITIES = ("logcosh", "cube")
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class WhiteningModel:
    mean: np.ndarray  # (d,)
    projection: np.ndarray  # (n, d)
    back_projection: np.ndarray  # (d, n)
    eigenvalues: np.ndarray  # (n,) descending

    @property
    def retained(self) -> int:
        return self.projection.shape[0]

    @property
    def d(self) -> int:
        return self.projection.shape[1]

    def apply(self, X) -> np.ndarray:
        X = as_sample_matrix(X)
        if X.shape[0] != self.d:
            raise DimensionError(f"whitening expects d={self.d}, got {X.shape[0]}")
        return self.projection @ (X - self.mean[:, None])


@dataclass(frozen=True)
class IcaModel:
    whitening: WhiteningModel
    rotation: np.ndarray  # (n, n), orthonormal rows
    unmixing: np.ndarray  # (n, d)
    nonlinearity: str
    iterations_used: int
    converged: bool

    @property
    def n(self) -> int:
        return self.rotation.shape[0]

    @property
    def d(self) -> int:
        return self.unmixing.shape[1]


def whitening_from_moments(mean, cov, n: int) -> WhiteningModel:
    """Build a whitening transform from a mean vector and 1/N covariance.

    Keeps the ``n`` leading eigen-directions. Raises
    :class:`RankDeficiencyError` when fewer than ``n`` eigenvalues exceed
    ``1e-12`` times the largest one.
    """
    cov = np.asarray(cov, dtype=np.float64)
    d = cov.shape[0]
    if not 1 <= n <= d:
        raise UsageError(f"cannot retain {n} components from {d} dimensions")
    cov = 0.5 * (cov + cov.T)
    vals, vecs = linalg.eigh(cov, subset_by_index=[d - n, d - 1])
    vals, vecs = vals[::-1], vecs[:, ::-1]
    top = linalg.eigh(cov, eigvals_only=True, subset_by_index=[d - 1, d - 1])[0] if n < d else vals[0]
    if top <= 0 or vals[-1] <= RANK_RTOL * top:
        usable = int(np.sum(vals > RANK_RTOL * max(top, 0)))
        raise RankDeficiencyError(
            f"requested {n} components but only {usable} directions have non-negligible variance"
        )
    return _whitening(np.asarray(mean, dtype=np.float64), vals, vecs)


def _whitening(mean, vals, vecs) -> WhiteningModel:
    # fix eigenvector signs so the largest-magnitude entry is positive
    flip = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])])
    flip[flip == 0] = 1.0
    vecs = vecs * flip
    scale = np.sqrt(vals)
    projection = np.ascontiguousarray((vecs / scale).T)
    back = np.ascontiguousarray(vecs * scale)
    return WhiteningModel(mean, projection, back, vals)


def center_whiten(X, n: int) -> tuple[np.ndarray, WhiteningModel]:
    """Center the columns of ``X`` and project onto ``n`` whitened components."""
    X = as_sample_matrix(X)
    d, N = X.shape
    if not 1 <= n <= d:
        raise UsageError(f"cannot retain {n} components from {d} dimensions")
    if N <= n:
        raise UsageError(f"need more samples than components (N={N}, n={n})")
    mean = X.mean(axis=1)
    Xc = X - mean[:, None]
    if d <= N:
        model = whitening_from_moments(mean, (Xc @ Xc.T) / N, n)
    else:
        # wide data: thin SVD of the centered block is cheaper than a d x d eigh
        U, s, _ = linalg.svd(Xc, full_matrices=False)
        vals = s**2 / N
        if vals[0] <= 0 or vals[n - 1] <= RANK_RTOL * vals[0]:
            usable = int(np.sum(vals > RANK_RTOL * max(vals[0], 0)))
            raise RankDeficiencyError(
                f"requested {n} components but only {usable} directions have non-negligible variance"
            )
        model = _whitening(mean, vals[:n], U[:, :n])
    return model.projection @ Xc, model


def sym_decorrelate(W: np.ndarray) -> np.ndarray:
    """Return ``(W W^T)^{-1/2} W``, the closest matrix with orthonormal rows."""
    s, u = linalg.eigh(W @ W.T)
    s = np.clip(s, np.finfo(float).tiny, None)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ W


def _contrast(nonlinearity: str, Y: np.ndarray):
    if nonlinearity == "logcosh":
        G = np.tanh(Y)
        dG = 1.0 - G * G
    else:
        G = Y**3
        dG = 3.0 * Y * Y
    return G, dG.mean(axis=1)


def fastica_fit(whitened, n: int | None = None, nonlinearity: str = "logcosh",
                tol: float = 1e-6, max_iter: int = 400, seed: int = 0,
                whitening: WhiteningModel | None = None) -> IcaModel:
    """Symmetric FastICA on whitened data (n x N).

    Converged means ``min |diag(W_new W_old^T)| >= 1 - tol``. Running out of
    iterations is not an error: the model is returned with
    ``converged=False``. Output rows are ordered by the whitened component
    each one loads on most heavily, with that loading made positive.
    """
    Z = as_sample_matrix(whitened)
    if n is None:
        n = Z.shape[0]
    if n != Z.shape[0]:
        raise DimensionError(f"whitened data has {Z.shape[0]} rows, expected n={n}")
    if nonlinearity not in NONLINEARITIES:
        raise UsageError(f"unknown nonlinearity {nonlinearity!r}; expected one of {NONLINEARITIES}")
    if not tol > 0:
        raise UsageError("tol must be positive")
    N = Z.shape[1]
    rng = np.random.default_rng(seed)
    W = sym_decorrelate(rng.standard_normal((n, n)))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        G, dG_mean = _contrast(nonlinearity, W @ Z)
        W_new = sym_decorrelate((G @ Z.T) / N - dG_mean[:, None] * W)
        lim = np.min(np.abs(np.einsum("ij,ij->i", W_new, W)))
        W = W_new
        if lim >= 1.0 - tol:
            converged = True
            break

    order = np.lexsort((np.arange(n), np.argmax(np.abs(W), axis=1)))
    W = W[order]
    lead = W[np.arange(n), np.argmax(np.abs(W), axis=1)]
    W = W * np.where(lead < 0, -1.0, 1.0)[:, None]

    if whitening is None:
        eye = np.eye(n)
        whitening = WhiteningModel(np.zeros(n), eye, eye.copy(), np.ones(n))
    unmixing = W @ whitening.projection
    return IcaModel(whitening, W, unmixing, nonlinearity, it, converged)


def ica_transform(model: IcaModel, X) -> np.ndarray:
    """Sources ``W (X - mean)`` for the columns of ``X``."""
    X = as_sample_matrix(X)
    if X.shape[0] != model.d:
        raise DimensionError(f"ICA model expects d={model.d}, got {X.shape[0]}")
    return model.unmixing @ (X - model.whitening.mean[:, None])


def amari_index(W, A) -> float:
    """Normalized Amari error of ``P = W A``; 0 iff P is a scaled permutation."""
    P = np.abs(np.asarray(W) @ np.asarray(A))
    n = P.shape[0]
    if n == 1:
        return 0.0
    rows = (P.sum(axis=1) / P.max(axis=1) - 1.0).sum()
    cols = (P.sum(axis=0) / P.max(axis=0) - 1.0).sum()
    return float((rows + cols) / (2.0 * n * (n - 1)))
