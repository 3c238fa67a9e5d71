"""RBF support vector machines and a k-nearest-neighbour reference.

Binary SVMs are trained with sequential minimal optimization, picking the
maximal-violating pair each step. Multiclass problems use one-vs-one
voting. Hyperparameters are chosen by stratified k-fold grid search.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import DimensionError, UsageError
from .hsi import as_sample_matrix
from .kernels import KernelParams, rbf_gram

__all__ = [
    "SvmBinaryModel",
    "SvmMulticlassModel",
    "GridSearchResult",
    "DEFAULT_COST_EXPONENTS",
    "DEFAULT_GAMMA_EXPONENTS",
    "svm_train_binary",
    "svm_train_multiclass",
    "grid_search_cv",
    "stratified_folds",
    "knn_predict",
    "ClassifierSpec",
    "TrainedClassifier",
    "fit_classifier",
]

DEFAULT_COST_EXPONENTS = tuple(range(-5, 16))
DEFAULT_GAMMA_EXPONENTS = (-15, -13, -11, -9, -7, -5, -3, -1, 1, 3, 4, 5)
DEFAULT_CACHE_MB = 256


class _KernelRows:
    """Kernel columns of a training set, precomputed or LRU-cached."""

    def __init__(self, X, gamma, gram=None, cache_mb=DEFAULT_CACHE_MB):
        self.X = X
        self.gamma = gamma
        n = X.shape[1] if X is not None else gram.shape[0]
        self.n = n
        if gram is None and n * n * 8 <= cache_mb * 2**20:
            gram = rbf_gram(X, X, gamma)
        self.gram = gram
        self.capacity = max(2, int(cache_mb * 2**20 // (8 * n)))
        self._cache = OrderedDict()

    def diag(self):
        if self.gram is not None:
            return np.diag(self.gram).copy()
        return np.ones(self.n)

    def column(self, i):
        if self.gram is not None:
            return self.gram[:, i]
        col = self._cache.get(i)
        if col is None:
            col = rbf_gram(self.X, self.X[:, i:i + 1], self.gamma)[:, 0]
            self._cache[i] = col
            if len(self._cache) > self.capacity:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(i)
        return col


def _smo(rows: _KernelRows, y, cost, tol, max_iter):
    n = y.size
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    diag = rows.diag()
    pos = y > 0
    converged = False
    it = 0
    m_up = M_low = 0.0
    while it < max_iter:
        yg = -y * grad
        up = np.where(pos, alpha < cost, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < cost)
        yg_up = np.where(up, yg, -np.inf)
        yg_low = np.where(low, yg, np.inf)
        i = int(np.argmax(yg_up))
        j = int(np.argmin(yg_low))
        m_up, M_low = yg_up[i], yg_low[j]
        if m_up - M_low <= tol:
            converged = True
            break
        it += 1
        Ki = rows.column(i)
        Kj = rows.column(j)
        curv = diag[i] + diag[j] - 2.0 * Ki[j]
        if curv <= 0:
            curv = 1e-12
        t = (m_up - M_low) / curv
        bound_i = cost - alpha[i] if pos[i] else alpha[i]
        bound_j = alpha[j] if pos[j] else cost - alpha[j]
        t = min(t, bound_i, bound_j)
        alpha[i] = (cost if pos[i] else 0.0) if t == bound_i else alpha[i] + y[i] * t
        alpha[j] = (0.0 if pos[j] else cost) if t == bound_j else alpha[j] - y[j] * t
        grad += t * y * (Ki - Kj)
    yg = -y * grad
    free = (alpha > 0) & (alpha < cost)
    if np.any(free):
        b = float(yg[free].mean())
    else:
        b = float(0.5 * (m_up + M_low))
    return alpha, grad, b, it, converged


@dataclass(frozen=True)
class SvmBinaryModel:
    support_vectors: np.ndarray  # (d, s)
    dual_coeffs: np.ndarray  # alpha_i * y_i
    bias: float
    kernel: KernelParams
    cost: float
    class_pair: tuple[int, int] = (1, -1)
    support_indices: np.ndarray = field(default=None, repr=False)
    objective: float = float("nan")
    kkt_residual: float = float("nan")
    iterations: int = 0
    converged: bool = True

    def decision_function(self, X) -> np.ndarray:
        X = as_sample_matrix(X, self.support_vectors.shape[0])
        K = rbf_gram(self.support_vectors, X, self.kernel.gamma)
        return self.dual_coeffs @ K + self.bias

    def predict(self, X) -> np.ndarray:
        a, b = self.class_pair
        return np.where(self.decision_function(X) >= 0, a, b)


def _kkt_residuals(alpha, grad, y, b, cost):
    margin = grad + y * b  # y_i f(x_i) - 1
    at_zero = alpha <= 0
    at_cost = alpha >= cost
    free = ~at_zero & ~at_cost
    r = np.zeros_like(alpha)
    r[at_zero] = np.maximum(0.0, -margin[at_zero])
    r[at_cost] = np.maximum(0.0, margin[at_cost])
    r[free] = np.abs(margin[free])
    return r


def _train_from_rows(rows, y, cost, tol, max_iter):
    y = np.asarray(y, dtype=np.float64)
    if not (np.any(y > 0) and np.any(y < 0)):
        raise UsageError("binary SVM needs samples from both classes")
    if not cost > 0:
        raise UsageError("cost must be positive")
    alpha, grad, b, it, ok = _smo(rows, y, float(cost), float(tol), max_iter)
    sv = np.flatnonzero(alpha > 0)
    objective = float(alpha.sum() - 0.5 * alpha @ (grad + 1.0))
    kkt = float(_kkt_residuals(alpha, grad, y, b, cost).max())
    return sv, alpha[sv] * y[sv], b, objective, kkt, it, ok


def svm_train_binary(X, y, cost: float, kernel: KernelParams, tol: float = 1e-3,
                     max_passes: int = 1000, cache_mb: int = DEFAULT_CACHE_MB) -> SvmBinaryModel:
    """Soft-margin RBF SVM for labels ``y`` in {+1, -1}.

    Training stops when the maximal KKT violation drops to ``tol`` or after
    ``max_passes * N`` pair updates; in the latter case the best-effort
    model comes back with ``converged=False``.
    """
    X = as_sample_matrix(X)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size != X.shape[1]:
        raise DimensionError(f"{y.size} labels for {X.shape[1]} samples")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise UsageError("binary labels must be +1 or -1")
    rows = _KernelRows(X, kernel.gamma, cache_mb=cache_mb)
    sv, coef, b, obj, kkt, it, ok = _train_from_rows(rows, y, cost, tol, max_passes * y.size)
    return SvmBinaryModel(X[:, sv].copy(), coef, b, kernel, float(cost), (1, -1), sv, obj, kkt, it, ok)


@dataclass(frozen=True)
class SvmMulticlassModel:
    """One-vs-one ensemble sharing one pool of support vectors."""

    support_vectors: np.ndarray  # (d, s) union over pairs
    pairs: tuple[tuple[int, int], ...]
    pair_support: tuple[np.ndarray, ...]  # indices into support_vectors
    pair_coeffs: tuple[np.ndarray, ...]
    biases: np.ndarray
    classes: np.ndarray
    kernel: KernelParams
    cost: float
    converged: bool = True

    @property
    def n_models(self) -> int:
        return len(self.pairs)

    def decision_values(self, X) -> np.ndarray:
        X = as_sample_matrix(X, self.support_vectors.shape[0])
        K = rbf_gram(self.support_vectors, X, self.kernel.gamma)
        return _pair_decisions(K, self.pair_support, self.pair_coeffs, self.biases)

    def predict(self, X, chunk: int = 4096) -> np.ndarray:
        X = as_sample_matrix(X, self.support_vectors.shape[0])
        out = np.empty(X.shape[1], dtype=np.int64)
        for s in range(0, X.shape[1], chunk):
            dec = self.decision_values(X[:, s:s + chunk])
            out[s:s + chunk] = _vote(dec, self.pairs, self.classes)
        return out


def _pair_decisions(K, supports, coeffs, biases):
    dec = np.empty((len(supports), K.shape[1]))
    for p, (idx, coef) in enumerate(zip(supports, coeffs)):
        dec[p] = coef @ K[idx] + biases[p]
    return dec


def _vote(dec, pairs, classes):
    C = classes.size
    pos = {c: k for k, c in enumerate(classes)}
    votes = np.zeros((C, dec.shape[1]))
    sums = np.zeros((C, dec.shape[1]))
    for p, (a, b) in enumerate(pairs):
        win_a = dec[p] >= 0
        votes[pos[a]] += win_a
        votes[pos[b]] += ~win_a
        sums[pos[a]] += dec[p]
        sums[pos[b]] -= dec[p]
    top = votes == votes.max(axis=0)
    score = np.where(top, sums, -np.inf)
    # argmax returns the first maximum, i.e. the lowest class id on exact ties
    return classes[np.argmax(score, axis=0)]


def _fit_ovo(gram, labels, cost, tol, max_passes):
    """Train all class pairs on a precomputed training Gram matrix.

    Returns per-pair support indices into the training set.
    """
    classes = np.unique(labels)
    if classes.size < 2:
        raise UsageError("multiclass SVM needs at least 2 classes")
    pairs, supports, coeffs, biases = [], [], [], []
    ok_all = True
    for a, b in combinations(classes.tolist(), 2):
        idx = np.flatnonzero((labels == a) | (labels == b))
        y = np.where(labels[idx] == a, 1.0, -1.0)
        rows = _KernelRows(None, None, gram=gram[np.ix_(idx, idx)])
        sv, coef, bias, _, _, _, ok = _train_from_rows(rows, y, cost, tol, max_passes * idx.size)
        ok_all &= ok
        pairs.append((a, b))
        supports.append(idx[sv])
        coeffs.append(coef)
        biases.append(bias)
    return classes, pairs, supports, coeffs, np.asarray(biases), ok_all


def svm_train_multiclass(X, labels, cost: float, kernel: KernelParams, tol: float = 1e-3,
                         max_passes: int = 1000, gram=None) -> SvmMulticlassModel:
    """One binary SVM per unordered class pair; the lower class id is +1."""
    X = as_sample_matrix(X)
    labels = np.asarray(labels).reshape(-1)
    if labels.size != X.shape[1]:
        raise DimensionError(f"{labels.size} labels for {X.shape[1]} samples")
    if gram is None:
        gram = rbf_gram(X, X, kernel.gamma)
    classes, pairs, supports, coeffs, biases, ok = _fit_ovo(gram, labels, cost, tol, max_passes)
    used = np.unique(np.concatenate(supports))
    remap = np.full(X.shape[1], -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    return SvmMulticlassModel(
        X[:, used].copy(), tuple(pairs), tuple(remap[s] for s in supports), tuple(coeffs),
        biases, classes, kernel, float(cost), bool(ok),
    )


@dataclass(frozen=True)
class GridSearchResult:
    best_cost: float
    best_gamma: float
    cost_grid: np.ndarray
    gamma_grid: np.ndarray
    cv_accuracy_table: np.ndarray  # (len(cost_grid), len(gamma_grid)), percent
    folds: int = 5


def stratified_folds(labels, folds: int, seed: int) -> np.ndarray:
    """Fold id per sample, balanced within each class."""
    labels = np.asarray(labels).reshape(-1)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(labels.size, dtype=np.int64)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        fold_of[rng.permutation(idx)] = np.arange(idx.size) % folds
    return fold_of


def _cv_cell(gram, labels, fold_of, folds, cost, tol, max_passes):
    correct = []
    for f in range(folds):
        tr = np.flatnonzero(fold_of != f)
        va = np.flatnonzero(fold_of == f)
        classes, pairs, supports, coeffs, biases, _ = _fit_ovo(gram[np.ix_(tr, tr)], labels[tr], cost, tol,
                                                               max_passes)
        K = gram[np.ix_(tr, va)]
        pred = _vote(_pair_decisions(K, supports, coeffs, biases), pairs, classes)
        correct.append(100.0 * np.mean(pred == labels[va]))
    return float(np.mean(correct))


def grid_search_cv(X, labels, cost_grid=None, gamma_grid=None, folds: int = 5, seed: int = 0,
                   tol: float = 1e-3, max_passes: int = 1000, n_jobs: int = 1) -> GridSearchResult:
    """Mean stratified k-fold validation accuracy over a (cost, gamma) grid.

    Defaults are ``cost = 2**a`` for a in -5..15 and ``gamma = 2**b`` for b
    in {-15, -13, ..., -1, 1, 3, 4, 5}. Ties go to the smallest cost, then
    the smallest gamma.
    """
    X = as_sample_matrix(X)
    labels = np.asarray(labels).reshape(-1)
    if labels.size != X.shape[1]:
        raise DimensionError(f"{labels.size} labels for {X.shape[1]} samples")
    if folds < 2:
        raise UsageError("folds must be >= 2")
    ids, counts = np.unique(labels, return_counts=True)
    if ids.size < 2:
        raise UsageError("grid search needs at least 2 classes")
    if counts.min() < folds:
        raise UsageError(f"class {ids[np.argmin(counts)]} has {counts.min()} samples, fewer than {folds} folds")
    cost_grid = np.sort(np.asarray(cost_grid if cost_grid is not None
                                   else [2.0**a for a in DEFAULT_COST_EXPONENTS], dtype=np.float64))
    gamma_grid = np.sort(np.asarray(gamma_grid if gamma_grid is not None
                                    else [2.0**b for b in DEFAULT_GAMMA_EXPONENTS], dtype=np.float64))
    fold_of = stratified_folds(labels, folds, seed)
    table = np.zeros((cost_grid.size, gamma_grid.size))
    cells = [(ci, gi) for gi in range(gamma_grid.size) for ci in range(cost_grid.size)]
    if n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            futs = {}
            for gi, g in enumerate(gamma_grid):
                gram = rbf_gram(X, X, g)
                for ci, c in enumerate(cost_grid):
                    futs[(ci, gi)] = ex.submit(_cv_cell, gram, labels, fold_of, folds, c, tol, max_passes)
            for (ci, gi) in cells:
                table[ci, gi] = futs[(ci, gi)].result()
    else:
        for gi, g in enumerate(gamma_grid):
            gram = rbf_gram(X, X, g)
            for ci, c in enumerate(cost_grid):
                table[ci, gi] = _cv_cell(gram, labels, fold_of, folds, c, tol, max_passes)
    # row-major scan over (cost, gamma) ascending: first maximum wins ties
    best = int(np.argmax(table))
    ci, gi = np.unravel_index(best, table.shape)
    return GridSearchResult(float(cost_grid[ci]), float(gamma_grid[gi]), cost_grid, gamma_grid, table, folds)


def knn_predict(train_X, train_labels, test_X, k: int = 1, chunk: int = 2048) -> np.ndarray:
    """Euclidean k-nearest-neighbour majority vote; ties go to the smallest id."""
    train_X = as_sample_matrix(train_X)
    test_X = as_sample_matrix(test_X, train_X.shape[0])
    train_labels = np.asarray(train_labels).reshape(-1)
    n = train_X.shape[1]
    if n == 0:
        raise UsageError("k-NN needs a non-empty training set")
    if train_labels.size != n:
        raise DimensionError(f"{train_labels.size} labels for {n} training samples")
    if k < 1:
        raise UsageError("k must be >= 1")
    k = min(k, n)
    classes, codes = np.unique(train_labels, return_inverse=True)
    tn = np.einsum("ij,ij->j", train_X, train_X)
    out = np.empty(test_X.shape[1], dtype=train_labels.dtype)
    for s in range(0, test_X.shape[1], chunk):
        T = test_X[:, s:s + chunk]
        dist = tn[None, :] - 2.0 * (T.T @ train_X)
        if k == 1:
            out[s:s + chunk] = train_labels[np.argmin(dist, axis=1)]
            continue
        nn = np.argsort(dist, axis=1, kind="stable")[:, :k]
        votes = np.zeros((T.shape[1], classes.size))
        np.add.at(votes, (np.repeat(np.arange(T.shape[1]), k), codes[nn].ravel()), 1.0)
        out[s:s + chunk] = classes[np.argmax(votes, axis=1)]
    return out


@dataclass(frozen=True)
class ClassifierSpec:
    """SVM settings for the evaluation protocol.

    ``standardize`` rescales each feature to zero mean and unit variance on
    the training pixels before the kernel is applied.
    """

    cost_grid: tuple[float, ...] = tuple(2.0**a for a in DEFAULT_COST_EXPONENTS)
    gamma_grid: tuple[float, ...] = tuple(2.0**b for b in DEFAULT_GAMMA_EXPONENTS)
    folds: int = 5
    standardize: bool = True
    tol: float = 1e-3
    max_passes: int = 1000
    n_jobs: int = 1

    def __post_init__(self):
        if self.folds < 2:
            raise UsageError("folds must be >= 2")
        if not self.cost_grid or not self.gamma_grid:
            raise UsageError("cost and gamma grids must be non-empty")
        if min(self.cost_grid) <= 0 or min(self.gamma_grid) <= 0:
            raise UsageError("grid values must be positive")


@dataclass(frozen=True)
class TrainedClassifier:
    svm: SvmMulticlassModel
    offset: np.ndarray
    scale: np.ndarray
    grid: GridSearchResult | None = None

    def predict(self, X) -> np.ndarray:
        X = as_sample_matrix(X, self.offset.size)
        return self.svm.predict((X - self.offset[:, None]) / self.scale[:, None])


def fit_classifier(X, labels, spec: ClassifierSpec = ClassifierSpec(), seed: int = 0) -> TrainedClassifier:
    """Grid-search the SVM hyperparameters, then train on all of ``X``."""
    X = as_sample_matrix(X)
    labels = np.asarray(labels).reshape(-1)
    if spec.standardize:
        offset = X.mean(axis=1)
        scale = X.std(axis=1)
        scale[scale <= 0] = 1.0
    else:
        offset = np.zeros(X.shape[0])
        scale = np.ones(X.shape[0])
    Xs = (X - offset[:, None]) / scale[:, None]
    if len(spec.cost_grid) * len(spec.gamma_grid) == 1:
        grid = None
        cost, gamma = spec.cost_grid[0], spec.gamma_grid[0]
    else:
        grid = grid_search_cv(Xs, labels, spec.cost_grid, spec.gamma_grid, spec.folds, seed,
                              spec.tol, spec.max_passes, spec.n_jobs)
        cost, gamma = grid.best_cost, grid.best_gamma
    svm = svm_train_multiclass(Xs, labels, cost, KernelParams(gamma), spec.tol, spec.max_passes)
    return TrainedClassifier(svm, offset, scale, grid)
