"""Fit/transform pipelines for the six dimensionality-reduction methods.

======== ===================== =====================
method   stage 1               stage 2
======== ===================== =====================
ica      identity              FastICA
rffica   random Fourier map    FastICA
kica     landmark kernel map   FastICA
lda      identity              Fisher LDA
rfflda   random Fourier map    Fisher LDA
gda      centered kernel map   Fisher LDA
======== ===================== =====================

The bandwidth is estimated once per fit and shared by whichever stage-1
map is in use. Every random draw derives from ``spec.seed``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, UsageError
from .fastica import IcaModel, center_whiten, fastica_fit, whitening_from_moments
from .hsi import DatasetSplit, as_sample_matrix
from .kernels import KernelParams, LandmarkSet, kernel_feature_map, select_landmarks
from .lda import LdaModel, compute_scatter, solve_lda
from .rff import DEFAULT_MAX_PAIRS, RffMap, apply_rff, estimate_bandwidth, sample_rff_map

__all__ = [
    "METHODS",
    "ICA_FAMILY",
    "LDA_FAMILY",
    "ReducerSpec",
    "ReducerModel",
    "derive_seed",
    "fit",
    "transform",
    "fit_transform",
    "stage1_features",
    "fit_for_split",
    "approximation_gap",
]

METHODS = ("ica", "kica", "rffica", "lda", "gda", "rfflda")
ICA_FAMILY = ("ica", "kica", "rffica")
LDA_FAMILY = ("lda", "gda", "rfflda")
RFF_METHODS = ("rffica", "rfflda")
KERNEL_METHODS = ("kica", "gda")

# fixed per-stage offsets so one seed reproduces the whole pipeline
SEED_BANDWIDTH, SEED_RFF, SEED_LANDMARKS, SEED_ICA = 0, 1, 2, 3

# stage-1 outputs smaller than this are materialized; larger ones are streamed
IN_MEMORY_BYTES = 256 * 2**20
CHUNK = 8192


def derive_seed(seed: int, offset: int) -> int:
    return int(np.random.SeedSequence([int(seed), offset]).generate_state(1)[0])


@dataclass(frozen=True)
class ReducerSpec:
    method: str
    components: int
    rff_features: int | None = None  # default 2*d
    landmarks: int = 2000
    sigma: float | None = None
    seed: int = 0
    centered_kernel: bool | None = None  # default: on for gda, off for kica
    bandwidth_rule: str = "squared"
    max_pairs: int = DEFAULT_MAX_PAIRS
    ridge: float = 1e-6
    nonlinearity: str = "logcosh"
    tol: float = 1e-6
    max_iter: int = 400

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.components < 1:
            raise UsageError("components must be >= 1")
        if self.rff_features is not None and self.rff_features < 1:
            raise UsageError("rff_features must be >= 1")
        if self.landmarks < 2:
            raise UsageError("landmarks must be >= 2")
        if self.sigma is not None and not self.sigma > 0:
            raise UsageError("sigma override must be positive")

    @property
    def supervised(self) -> bool:
        return self.method in LDA_FAMILY

    @property
    def centered(self) -> bool:
        if self.centered_kernel is None:
            return self.method == "gda"
        return bool(self.centered_kernel)

    def feature_count(self, d: int) -> int:
        return self.rff_features if self.rff_features is not None else 2 * d


@dataclass(frozen=True)
class ReducerModel:
    spec: ReducerSpec
    d: int
    stage2: IcaModel | LdaModel
    rff: RffMap | None = None
    landmarks: LandmarkSet | None = None
    sigma_used: float = float("nan")
    fit_samples: int = 0
    pool_samples: int = 0
    fit_wall_time: float = field(default=0.0, compare=False)
    bandwidth_time: float = field(default=0.0, compare=False)

    @property
    def components(self) -> int:
        return self.spec.components

    @property
    def stage1_dim(self) -> int:
        if self.rff is not None:
            return self.rff.D
        if self.landmarks is not None:
            return self.landmarks.m
        return self.d


def _stage1(model_like, X):
    rff, landmarks, centered = model_like
    if rff is not None:
        return apply_rff(rff, X)
    if landmarks is not None:
        return kernel_feature_map(X, landmarks, centered=centered)
    return X


def _chunks(N):
    return range(0, N, CHUNK)


def _streamed_moments(stage, X):
    """Mean and 1/N covariance of ``stage(X)`` without materializing it."""
    N = X.shape[1]
    shift = None
    total = acc = None
    for s in _chunks(N):
        F = stage(X[:, s:s + CHUNK])
        if shift is None:
            shift = F.mean(axis=1)
            total = np.zeros_like(shift)
            acc = np.zeros((shift.size, shift.size))
        F = F - shift[:, None]
        total += F.sum(axis=1)
        acc += F @ F.T
    delta = total / N
    cov = acc / N - np.outer(delta, delta)
    return shift + delta, cov


def fit(spec: ReducerSpec, X, labels=None, pool=None) -> ReducerModel:
    """Fit a reducer on the columns of ``X``.

    ``pool`` (default ``X``) supplies the pixels used to estimate the
    bandwidth and to draw landmarks; supervised methods typically fit on
    the labeled training pixels while drawing landmarks from the full image.
    """
    t0 = time.perf_counter()
    X = as_sample_matrix(X)
    d, N = X.shape
    pool = X if pool is None else as_sample_matrix(pool, d)
    if spec.supervised:
        if labels is None:
            raise UsageError(f"method {spec.method} is supervised and needs labels")
        labels = np.asarray(labels).reshape(-1)
        if labels.size != N:
            raise DimensionError(f"{labels.size} labels for {N} samples")
        C = np.unique(labels[labels > 0]).size
        if spec.components > C - 1:
            raise UsageError(
                f"{spec.method} components must be <= C-1 = {C - 1} (rank bound of the between-class scatter), "
                f"got {spec.components}"
            )

    rff = landmarks = None
    sigma = float("nan")
    t_bw = 0.0
    if spec.method in RFF_METHODS + KERNEL_METHODS:
        tb = time.perf_counter()
        if spec.sigma is not None:
            sigma = float(spec.sigma)
        else:
            sigma = estimate_bandwidth(pool, spec.max_pairs, derive_seed(spec.seed, SEED_BANDWIDTH),
                                       spec.bandwidth_rule)
        t_bw = time.perf_counter() - tb
        if spec.method in RFF_METHODS:
            rff = sample_rff_map(d, spec.feature_count(d), sigma, derive_seed(spec.seed, SEED_RFF))
        else:
            landmarks = select_landmarks(pool, spec.landmarks, KernelParams.from_sigma(sigma),
                                         derive_seed(spec.seed, SEED_LANDMARKS))
    stage_state = (rff, landmarks, spec.centered)
    out_dim = rff.D if rff is not None else landmarks.m if landmarks is not None else d

    if spec.method in ICA_FAMILY:
        n = spec.components
        if n > out_dim:
            raise UsageError(f"{spec.method} cannot extract {n} components from {out_dim} features")
        if out_dim * N * 8 <= IN_MEMORY_BYTES:
            Z, wm = center_whiten(_stage1(stage_state, X), n)
        else:
            mean, cov = _streamed_moments(lambda B: _stage1(stage_state, B), X)
            wm = whitening_from_moments(mean, cov, n)
            Z = np.empty((n, N))
            for s in _chunks(N):
                Z[:, s:s + CHUNK] = wm.apply(_stage1(stage_state, X[:, s:s + CHUNK]))
        stage2 = fastica_fit(Z, n, spec.nonlinearity, spec.tol, spec.max_iter,
                             derive_seed(spec.seed, SEED_ICA), whitening=wm)
    else:
        keep = labels > 0
        F = _stage1(stage_state, X[:, keep])
        stage2 = solve_lda(compute_scatter(F, labels[keep]), spec.components, spec.ridge)

    return ReducerModel(spec, d, stage2, rff, landmarks, sigma, N, pool.shape[1],
                        time.perf_counter() - t0, t_bw)


def stage1_features(model: ReducerModel, X) -> np.ndarray:
    """Stage-1 features (RFF, kernel map or the raw input) for ``X``."""
    X = as_sample_matrix(X, model.d)
    return _stage1((model.rff, model.landmarks, model.spec.centered), X)


def transform(model: ReducerModel, X) -> np.ndarray:
    """Reduced features (components x N) for the columns of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != model.d:
        raise DimensionError(f"model expects d={model.d} rows, got shape {X.shape}")
    N = X.shape[1]
    out = np.empty((model.components, N))
    st = model.stage2
    for s in _chunks(N):
        F = stage1_features(model, X[:, s:s + CHUNK])
        if isinstance(st, IcaModel):
            out[:, s:s + CHUNK] = st.unmixing @ (F - st.whitening.mean[:, None])
        else:
            out[:, s:s + CHUNK] = st.projection.T @ F
    return out


def fit_transform(spec: ReducerSpec, X, labels=None, pool=None):
    model = fit(spec, X, labels, pool)
    return model, transform(model, X)


def fit_for_split(spec: ReducerSpec, X, labels, split: DatasetSplit | None, fit_on: str = "auto") -> ReducerModel:
    """Fit on all pixels or on training pixels of ``split``.

    ``fit_on="auto"`` uses all pixels for unsupervised methods and the
    training pixels for supervised ones. The full image is always the pool
    for bandwidth estimation and landmark selection.
    """
    if fit_on not in ("auto", "all", "train"):
        raise UsageError(f"fit_on must be auto, all or train, got {fit_on!r}")
    X = as_sample_matrix(X)
    if fit_on == "auto":
        fit_on = "train" if spec.supervised else "all"
    if spec.supervised and fit_on == "all":
        raise UsageError("supervised methods can only be fit on training pixels")
    if fit_on == "train":
        if split is None:
            raise UsageError("fitting on training pixels needs a split")
        idx = split.train_indices
        return fit(spec, X[:, idx], None if labels is None else np.asarray(labels)[idx], pool=X)
    return fit(spec, X, None, pool=X)


def _knn1(train_X, train_y, test_X):
    from .classify import knn_predict
    return knn_predict(train_X, train_y, test_X, k=1)


def approximation_gap(X, labels, spec_pair: tuple[ReducerSpec, ReducerSpec], split: DatasetSplit,
                      classifier=None, fit_on: str = "auto") -> tuple[float, float]:
    """Overall test accuracy (percent) of two reducers under one classifier.

    ``classifier(train_features, train_labels, test_features)`` returns
    predicted labels; the default is 1-nearest-neighbour.
    """
    from .evaluate import score

    classifier = classifier or _knn1
    labels = np.asarray(labels).reshape(-1)
    a, b = spec_pair
    if a.components != b.components:
        raise UsageError("compared reducers must extract the same number of components")
    accs = []
    cache = {}
    for spec in (a, b):
        key = spec
        if key not in cache:
            model = fit_for_split(spec, X, labels, split, fit_on)
            tr = transform(model, np.asarray(X)[:, split.train_indices])
            te = transform(model, np.asarray(X)[:, split.test_indices])
            pred = classifier(tr, labels[split.train_indices], te)
            cache[key] = score(pred, labels[split.test_indices])[1].overall_accuracy
        accs.append(cache[key])
    return accs[0], accs[1]


def with_components(spec: ReducerSpec, components: int) -> ReducerSpec:
    return replace(spec, components=components)
