import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rffdr.classify import ClassifierSpec
from rffdr.errors import DimensionError, UsageError
from rffdr.evaluate import (
    DEFAULT_PALETTE,
    benchmark_timing,
    curve_csv,
    per_class_csv,
    render_map,
    report_csv,
    report_text,
    run_protocol,
    score,
    select_bandwidth_cv,
    sweep_bandwidth,
    sweep_rff_features,
    timing_table_csv,
)
from rffdr.fileio import encode_ppm
from rffdr.hsi import stratified_split
from rffdr.reducers import ReducerSpec

from conftest import concentric_circles, gaussian_blobs

TINY_SVM = ClassifierSpec(cost_grid=(1.0, 16.0), gamma_grid=(0.5, 2.0), folds=3)


def test_score_worked_example():
    cm, rep = score([1, 2, 2, 2], [1, 1, 2, 2])
    assert rep.overall_accuracy == 75.0
    np.testing.assert_array_equal(rep.per_class, [50.0, 100.0])
    assert rep.average_accuracy == 75.0
    np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 2]])


def test_constant_predictor_balanced():
    truth = np.repeat([1, 2], 50)
    _, rep = score(np.ones(100, int), truth)
    assert rep.overall_accuracy == 50.0
    assert rep.average_accuracy == 50.0


def test_score_errors():
    with pytest.raises(DimensionError):
        score([1, 2], [1])
    with pytest.raises(UsageError):
        score([], [])
    with pytest.raises(UsageError):
        score([3], [1], classes=[1, 2])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 4)), min_size=1, max_size=60))
def test_score_invariants(pairs):
    truth, pred = map(np.array, zip(*pairs))
    cm, rep = score(pred, truth)
    assert cm.total == truth.size
    assert rep.overall_accuracy == pytest.approx(100.0 * np.mean(pred == truth))
    present = ~np.isnan(rep.per_class)
    assert rep.average_accuracy == pytest.approx(rep.per_class[present].mean())
    assert 0.0 <= rep.overall_accuracy <= 100.0


def test_run_protocol_single_run_and_averaging():
    X, y = gaussian_blobs(30, [[0, 0], [6, 0], [0, 6]], seed=0)
    one = run_protocol(X, y, ReducerSpec("lda", 2), TINY_SVM, per_class=10, runs=1)
    assert one.runs == 1 and one.per_run_seeds == (0,)
    assert one.overall_accuracy == one.per_run_overall[0]
    rep = run_protocol(X, y, ReducerSpec("lda", 2), TINY_SVM, per_class=10, runs=3, seed=5)
    assert rep.per_run_seeds == (5, 6, 7)
    assert rep.overall_accuracy == pytest.approx(np.mean(rep.per_run_overall))
    np.testing.assert_allclose(rep.per_class, rep.per_run_per_class.mean(axis=0))
    assert rep.average_accuracy == pytest.approx(rep.per_class.mean())
    assert rep.confusion.total == 3 * 3 * 20


def test_run_protocol_deterministic():
    X, y = gaussian_blobs(25, [[0, 0], [3, 0]], seed=1)
    spec = ReducerSpec("rfflda", 1, rff_features=16)
    a = run_protocol(X, y, spec, TINY_SVM, per_class=8, runs=2, seed=3)
    b = run_protocol(X, y, spec, TINY_SVM, per_class=8, runs=2, seed=3)
    assert a.per_run_overall == b.per_run_overall
    np.testing.assert_array_equal(a.per_run_per_class, b.per_run_per_class)
    np.testing.assert_array_equal(a.confusion.counts, b.confusion.counts)


def test_run_protocol_predict_all_and_knn():
    X, y = gaussian_blobs(20, [[0, 0], [8, 0]], seed=2)
    rep = run_protocol(X, y, ReducerSpec("ica", 2), per_class=5, runs=1, classifier="knn", predict_all=True)
    assert rep.artifacts.prediction.shape == (40,)
    assert rep.artifacts.classifier is None
    with pytest.raises(UsageError):
        run_protocol(X, y, ReducerSpec("ica", 2), runs=0)


def test_render_map_single_pixel_and_palette():
    rgb = render_map(np.array([[3]]))
    assert rgb.shape == (1, 1, 3)
    np.testing.assert_array_equal(rgb[0, 0], DEFAULT_PALETTE[3])
    assert len(DEFAULT_PALETTE) == 17
    assert len({tuple(c) for c in DEFAULT_PALETTE}) == 17
    np.testing.assert_array_equal(DEFAULT_PALETTE[0], [0, 0, 0])


def test_render_map_background_mask_and_bytes():
    grid = np.array([[0, 1, 2], [16, 5, 0]])
    rgb = render_map(grid, mask=grid != 5)
    assert np.all(rgb[0, 0] == 0) and np.all(rgb[1, 1] == 0) and np.all(rgb[1, 2] == 0)
    np.testing.assert_array_equal(rgb[1, 0], DEFAULT_PALETTE[16])
    assert encode_ppm(render_map(grid)) == encode_ppm(render_map(grid.ravel(), shape=(2, 3)))
    with pytest.raises(UsageError):
        render_map(np.array([[17]]))
    with pytest.raises(DimensionError):
        render_map(np.arange(4))


def test_benchmark_shape():
    X = np.random.default_rng(0).standard_normal((6, 300))
    rows = benchmark_timing(X, ["ica", "rffica"], [2, 3], repeats=1, base_spec={"rff_features": 12})
    assert [(r["method"], r["components"]) for r in rows] == [("ica", 2), ("ica", 3), ("rffica", 2), ("rffica", 3)]
    assert all(r["median_seconds"] > 0 for r in rows)
    table = timing_table_csv(rows).splitlines()
    assert table[0] == "method,2,3"
    assert [t.split(",")[0] for t in table[1:]] == ["ICA", "RFFICA"]


def test_sweeps_single_value():
    X, y = gaussian_blobs(20, [[0, 0], [5, 0]], seed=3)
    pts = sweep_rff_features(X, y, ReducerSpec("rfflda", 1), [8], TINY_SVM, per_class=5, runs=1)
    assert len(pts) == 1 and pts[0]["rff_features"] == 8
    pts = sweep_bandwidth(X, y, ReducerSpec("rfflda", 1, rff_features=8), [1.5], per_class=5, runs=1,
                          classifier="knn")
    assert len(pts) == 1 and pts[0]["sigma"] == 1.5
    assert curve_csv(pts, "sigma").splitlines()[1].startswith("1.5,")


def test_select_bandwidth_cv_circles():
    X, y = concentric_circles(300, seed=1)
    split = stratified_split(y, 60, seed=0)
    best, scores = select_bandwidth_cv(X, y, ReducerSpec("rfflda", 1, rff_features=512),
                                       [0.01, 0.3, 50.0], split, folds=3)
    assert len(scores) == 3
    assert best == [0.01, 0.3, 50.0][int(np.argmax(scores))]
    # a bandwidth far below the point spacing memorizes and generalizes poorly
    assert scores[0] < max(scores)
    assert max(scores) >= 90.0


def test_report_writers():
    _, rep = score([1, 2, 2, 2], [1, 1, 2, 2])
    assert "overall_accuracy,75.0000" in report_csv(rep, "lda")
    lines = per_class_csv(rep, ["Alpha", "Beta"]).splitlines()
    assert lines[1].startswith("1,Alpha,50.0000")
    txt = report_text(rep, "LDA", ["Alpha", "Beta"])
    assert "Average Accuracy" in txt and "75.00" in txt
