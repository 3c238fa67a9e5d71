import numpy as np
import pytest

from rffdr.classify import (
    DEFAULT_COST_EXPONENTS,
    DEFAULT_GAMMA_EXPONENTS,
    ClassifierSpec,
    _vote,
    fit_classifier,
    grid_search_cv,
    knn_predict,
    stratified_folds,
    svm_train_binary,
    svm_train_multiclass,
)
from rffdr.errors import UsageError
from rffdr.kernels import KernelParams, rbf_gram

from conftest import concentric_circles, gaussian_blobs


def qp_dual_optimum(X, y, cost, gamma):
    """Dual SVM optimum from a generic interior-point QP solver."""
    cvxopt = pytest.importorskip("cvxopt")
    cvxopt.solvers.options["show_progress"] = False
    cvxopt.solvers.options["abstol"] = 1e-12
    cvxopt.solvers.options["reltol"] = 1e-12
    cvxopt.solvers.options["feastol"] = 1e-12
    n = y.size
    Q = np.outer(y, y) * rbf_gram(X, X, gamma)
    sol = cvxopt.solvers.qp(
        cvxopt.matrix(Q), cvxopt.matrix(-np.ones(n)),
        cvxopt.matrix(np.vstack([-np.eye(n), np.eye(n)])),
        cvxopt.matrix(np.r_[np.zeros(n), cost * np.ones(n)]),
        cvxopt.matrix(y[None, :].astype(float)), cvxopt.matrix(0.0),
    )
    a = np.array(sol["x"]).ravel()
    return a.sum() - 0.5 * a @ Q @ a


def random_binary(seed, n=20):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((3, n))
    y = np.where(X[0] + 0.5 * rng.standard_normal(n) > 0, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    return X, y


def test_separable_pair():
    m = svm_train_binary(np.array([[-1.0, 1.0]]), np.array([-1.0, 1.0]), 1e3, KernelParams(0.5))
    np.testing.assert_array_equal(m.predict(np.array([[-1.0, 1.0]])), [-1, 1])


def test_xor():
    X = np.array([[0, 0, 1, 1], [0, 1, 0, 1]], dtype=float)
    y = np.array([-1, 1, 1, -1], dtype=float)
    m = svm_train_binary(X, y, 10.0, KernelParams(1.0))
    np.testing.assert_array_equal(m.predict(X), y)


def test_contradictory_duplicates():
    X = np.array([[0.0, 0.0, 3.0]])
    y = np.array([1.0, -1.0, 1.0])
    for cost in (0.1, 10.0, 1e4):
        m = svm_train_binary(X, y, cost, KernelParams(1.0))
        assert np.sum(m.predict(X) != y) >= 1


def test_single_class_rejected():
    with pytest.raises(UsageError):
        svm_train_binary(np.zeros((1, 3)), np.ones(3), 1.0, KernelParams(1.0))


@pytest.mark.parametrize("seed", range(4))
def test_dual_objective_matches_qp(seed):
    X, y = random_binary(seed)
    m = svm_train_binary(X, y, 2.0, KernelParams(0.5), tol=1e-8)
    assert m.converged
    assert m.objective == pytest.approx(qp_dual_optimum(X, y, 2.0, 0.5), abs=1e-4)
    assert m.kkt_residual <= 1e-8
    assert abs(m.dual_coeffs.sum()) <= 1e-6
    assert np.all(np.abs(m.dual_coeffs) <= 2.0 + 1e-12)


def test_permutation_invariance():
    X, y = random_binary(11, n=40)
    test = np.random.default_rng(0).standard_normal((3, 50))
    a = svm_train_binary(X, y, 1.0, KernelParams(0.3), tol=1e-8)
    perm = np.random.default_rng(1).permutation(40)
    b = svm_train_binary(X[:, perm], y[perm], 1.0, KernelParams(0.3), tol=1e-8)
    np.testing.assert_allclose(a.decision_function(test), b.decision_function(test), atol=1e-5)
    np.testing.assert_array_equal(a.predict(test), b.predict(test))


def test_lru_cache_path_matches_full_gram():
    X, y = random_binary(5, n=60)
    full = svm_train_binary(X, y, 1.0, KernelParams(0.4), tol=1e-6)
    cached = svm_train_binary(X, y, 1.0, KernelParams(0.4), tol=1e-6, cache_mb=0)
    assert cached.objective == pytest.approx(full.objective, abs=1e-9)


def test_nonconvergence_is_flagged():
    X, y = random_binary(6, n=20)
    m = svm_train_binary(X, y, 100.0, KernelParams(0.5), tol=1e-12, max_passes=0)
    assert not m.converged


def test_multiclass_model_counts():
    X, y = gaussian_blobs(5, [[0, 0], [9, 0]], seed=0)
    assert svm_train_multiclass(X, y, 1.0, KernelParams(0.5)).n_models == 1
    centers = [[10 * k, 0] for k in range(16)]
    X, y = gaussian_blobs(4, centers, seed=0, scale=0.1)
    assert svm_train_multiclass(X, y, 1.0, KernelParams(0.5)).n_models == 120


def test_multiclass_blobs_perfect():
    X, y = gaussian_blobs(30, [[0, 0], [8, 0], [0, 8]], seed=1)
    m = svm_train_multiclass(X, y, 10.0, KernelParams(0.1))
    np.testing.assert_array_equal(m.predict(X), y)


def test_vote_tie_breaking():
    pairs = [(1, 2), (1, 3), (2, 3)]
    classes = np.array([1, 2, 3])
    # cyclic votes: 1 beats 2, 3 beats 1, 2 beats 3; class 3 has the largest summed margin
    dec = np.array([[0.5], [-2.0], [0.1]])
    assert _vote(dec, pairs, classes)[0] == 3
    # exact tie in votes and sums -> lowest id
    dec = np.array([[1.0], [-1.0], [1.0]])
    assert _vote(dec, pairs, classes)[0] == 1


def test_grid_defaults():
    assert len(DEFAULT_COST_EXPONENTS) == 21
    assert DEFAULT_COST_EXPONENTS[0] == -5 and DEFAULT_COST_EXPONENTS[-1] == 15
    assert DEFAULT_GAMMA_EXPONENTS == (-15, -13, -11, -9, -7, -5, -3, -1, 1, 3, 4, 5)
    spec = ClassifierSpec()
    assert len(spec.cost_grid) == 21 and len(spec.gamma_grid) == 12


def test_grid_single_cell():
    X, y = gaussian_blobs(10, [[0, 0], [5, 5]], seed=2)
    res = grid_search_cv(X, y, [3.0], [0.25], folds=5)
    assert (res.best_cost, res.best_gamma) == (3.0, 0.25)
    assert res.cv_accuracy_table.shape == (1, 1)


def test_grid_separable_blobs_reaches_100():
    X, y = gaussian_blobs(20, [[0, 0], [10, 0], [0, 10]], seed=3)
    res = grid_search_cv(X, y, [2.0**a for a in (-2, 0, 2, 4)], [2.0**b for b in (-7, -3, -1)], seed=1)
    assert res.cv_accuracy_table.max() == 100.0
    assert res.cv_accuracy_table[np.searchsorted(res.cost_grid, res.best_cost),
                                 np.searchsorted(res.gamma_grid, res.best_gamma)] == 100.0
    again = grid_search_cv(X, y, [2.0**a for a in (-2, 0, 2, 4)], [2.0**b for b in (-7, -3, -1)], seed=1)
    np.testing.assert_array_equal(res.cv_accuracy_table, again.cv_accuracy_table)
    # everything is 100% at the top corner: ties go to the smallest cost, then gamma
    assert res.best_cost == min(c for c, row in zip(res.cost_grid, res.cv_accuracy_table) if row.max() == 100.0)


def test_grid_insufficient_samples():
    X, y = gaussian_blobs(3, [[0, 0], [5, 5]], seed=4)
    with pytest.raises(UsageError):
        grid_search_cv(X, y, [1.0], [1.0], folds=5)


def test_stratified_folds_balanced():
    y = np.repeat([1, 2, 3], 100)
    f = stratified_folds(y, 5, seed=0)
    for c in (1, 2, 3):
        assert np.all(np.bincount(f[y == c]) == 20)


def test_fit_classifier_standardizes():
    X, y = gaussian_blobs(20, [[0, 0], [6, 0]], seed=5)
    X = X * np.array([[1000.0], [0.001]])
    clf = fit_classifier(X, y, ClassifierSpec(cost_grid=(1.0, 10.0), gamma_grid=(0.1, 1.0)))
    assert np.mean(clf.predict(X) == y) == 1.0


def test_knn_examples():
    X = np.array([[0.0, 1.0, 5.0, 6.0, 7.0]])
    y = np.array([2, 2, 1, 1, 1])
    assert knn_predict(X, y, np.array([[5.0]]), k=1)[0] == 1
    assert np.all(knn_predict(X, y, np.array([[0.0, 100.0]]), k=5) == 1)
    # two neighbours, one each: tie -> smallest id
    assert knn_predict(np.array([[0.0, 2.0]]), np.array([3, 1]), np.array([[1.0]]), k=2)[0] == 1
    with pytest.raises(UsageError):
        knn_predict(np.zeros((1, 0)), np.array([], dtype=int), X)


def test_knn_concentric_circles():
    X, y = concentric_circles(1000, seed=0)
    acc = np.mean(knn_predict(X[:, :500], y[:500], X[:, 500:], k=1) == y[500:])
    assert acc >= 0.95
