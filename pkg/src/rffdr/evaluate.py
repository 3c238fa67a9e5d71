"""Experimental protocol: repeated split/reduce/classify runs and reporting.

Overall accuracy is ``trace / total`` of the confusion matrix; average
accuracy is the unweighted mean of the per-class accuracies. Background
pixels (label 0) never enter either.
"""
from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .classify import ClassifierSpec, TrainedClassifier, fit_classifier, knn_predict, stratified_folds
from .errors import DimensionError, UsageError
from .hsi import DatasetSplit, as_sample_matrix, stratified_split
from .reducers import ReducerModel, ReducerSpec, fit, fit_for_split, transform

__all__ = [
    "ConfusionMatrix",
    "EvalReport",
    "RunArtifacts",
    "DEFAULT_PALETTE",
    "score",
    "run_protocol",
    "render_map",
    "benchmark_timing",
    "sweep_rff_features",
    "sweep_bandwidth",
    "select_bandwidth_cv",
    "report_csv",
    "per_class_csv",
    "report_text",
    "timing_table_csv",
    "curve_csv",
]

# index 0 is background
DEFAULT_PALETTE = np.array([
    (0, 0, 0),
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
    (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
], dtype=np.uint8)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = truth, cols = prediction
    classes: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class RunArtifacts:
    """Models and full-image prediction kept from the first run."""

    reducer: ReducerModel
    classifier: TrainedClassifier | None
    split: DatasetSplit
    prediction: np.ndarray | None = None  # one label per pixel


@dataclass(frozen=True)
class EvalReport:
    overall_accuracy: float
    per_class: np.ndarray
    average_accuracy: float
    classes: np.ndarray
    runs: int = 1
    per_run_seeds: tuple[int, ...] = ()
    per_run_overall: tuple[float, ...] = ()
    per_run_per_class: np.ndarray | None = None
    confusion: ConfusionMatrix | None = None
    fit_time: float = field(default=0.0, compare=False)
    bandwidth_time: float = field(default=0.0, compare=False)
    classify_time: float = field(default=0.0, compare=False)
    per_run_fit_time: tuple[float, ...] = field(default=(), compare=False)
    artifacts: RunArtifacts | None = field(default=None, compare=False, repr=False)


def score(pred, truth, classes=None) -> tuple[ConfusionMatrix, EvalReport]:
    """Confusion matrix and accuracies (percent) of ``pred`` against ``truth``."""
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if pred.size != truth.size:
        raise DimensionError(f"{pred.size} predictions for {truth.size} truth labels")
    if truth.size == 0:
        raise UsageError("cannot score an empty prediction")
    if classes is None:
        classes = np.union1d(truth, pred)
    classes = np.asarray(classes)
    index = {int(c): k for k, c in enumerate(classes)}
    C = classes.size
    M = np.zeros((C, C), dtype=np.int64)
    try:
        np.add.at(M, ([index[int(t)] for t in truth], [index[int(p)] for p in pred]), 1)
    except KeyError as exc:
        raise UsageError(f"label {exc.args[0]} is not among the scored classes") from exc
    rows = M.sum(axis=1)
    present = rows > 0
    per_class = np.full(C, np.nan)
    per_class[present] = 100.0 * np.diag(M)[present] / rows[present]
    overall = 100.0 * np.trace(M) / M.sum()
    cm = ConfusionMatrix(M, classes)
    report = EvalReport(float(overall), per_class, float(np.mean(per_class[present])), classes, confusion=cm)
    return cm, report


def _knn_classifier(train_X, train_y, test_X):
    return knn_predict(train_X, train_y, test_X, k=1)


def run_protocol(X, labels, reducer_spec: ReducerSpec, classifier_spec: ClassifierSpec | None = None,
                 per_class: int = 100, runs: int = 5, seed: int = 0, fit_on: str = "auto",
                 classifier: str = "svm", predict_all: bool = False) -> EvalReport:
    """Repeat split -> fit reducer -> classify -> score ``runs`` times.

    Run ``r`` uses seed ``seed + r`` for the split, the reducer and the
    cross-validation folds. ``classifier`` is ``"svm"`` (grid-searched RBF
    SVM) or ``"knn"`` (1-nearest-neighbour). With ``predict_all`` the first
    run also labels every pixel, for map rendering.
    """
    X = as_sample_matrix(X)
    labels = np.asarray(labels).reshape(-1)
    if labels.size != X.shape[1]:
        raise DimensionError(f"{labels.size} labels for {X.shape[1]} pixels")
    if runs < 1:
        raise UsageError("runs must be >= 1")
    if classifier not in ("svm", "knn"):
        raise UsageError(f"classifier must be svm or knn, got {classifier!r}")
    classifier_spec = classifier_spec or ClassifierSpec()
    classes = np.unique(labels[labels > 0])

    seeds, overall, per_cls, fit_t, bw_t, cls_t = [], [], [], [], [], []
    confusion = np.zeros((classes.size, classes.size), dtype=np.int64)
    artifacts = None
    for r in range(runs):
        s = seed + r
        split = stratified_split(labels, per_class, s)
        model = fit_for_split(replace(reducer_spec, seed=s), X, labels, split, fit_on)
        fit_t.append(model.fit_wall_time)
        bw_t.append(model.bandwidth_time)

        t0 = time.perf_counter()
        tr_f = transform(model, X[:, split.train_indices])
        te_f = transform(model, X[:, split.test_indices])
        tr_y = labels[split.train_indices]
        clf = None
        if classifier == "svm":
            clf = fit_classifier(tr_f, tr_y, classifier_spec, seed=s)
            pred = clf.predict(te_f)
        else:
            pred = _knn_classifier(tr_f, tr_y, te_f)
        cls_t.append(time.perf_counter() - t0)

        cm, rep = score(pred, labels[split.test_indices], classes)
        confusion += cm.counts
        seeds.append(s)
        overall.append(rep.overall_accuracy)
        per_cls.append(rep.per_class)
        if r == 0:
            full = None
            if predict_all:
                feats = transform(model, X)
                full = clf.predict(feats) if clf is not None else _knn_classifier(tr_f, tr_y, feats)
            artifacts = RunArtifacts(model, clf, split, full)

    per_cls = np.vstack(per_cls)
    mean_pc = per_cls.mean(axis=0)
    return EvalReport(
        overall_accuracy=float(np.mean(overall)),
        per_class=mean_pc,
        average_accuracy=float(np.mean(mean_pc)),
        classes=classes,
        runs=runs,
        per_run_seeds=tuple(seeds),
        per_run_overall=tuple(float(v) for v in overall),
        per_run_per_class=per_cls,
        confusion=ConfusionMatrix(confusion, classes),
        fit_time=float(np.mean(fit_t)),
        bandwidth_time=float(np.mean(bw_t)),
        classify_time=float(np.mean(cls_t)),
        per_run_fit_time=tuple(fit_t),
        artifacts=artifacts,
    )


def render_map(labels, shape=None, palette=None, mask=None) -> np.ndarray:
    """Color a label grid: one flat color per class, background black.

    ``labels`` is a rows x cols grid, or a flat row-major vector with
    ``shape=(rows, cols)``. Pixels where ``mask`` is False are painted
    black as well.
    """
    palette = DEFAULT_PALETTE if palette is None else np.asarray(palette, dtype=np.uint8)
    grid = np.asarray(labels)
    if shape is not None:
        grid = grid.reshape(shape)
    if grid.ndim != 2:
        raise DimensionError(f"label map must be 2-D, got shape {grid.shape}")
    top = int(grid.max()) if grid.size else 0
    if top >= len(palette):
        raise UsageError(f"palette has {len(palette)} entries but labels go up to {top}")
    if grid.min() < 0:
        raise UsageError("labels must be non-negative")
    rgb = palette[grid].copy()
    rgb[grid == 0] = 0
    if mask is not None:
        rgb[~np.asarray(mask, dtype=bool).reshape(grid.shape)] = 0
    return rgb


def benchmark_timing(X, methods, components, seed: int = 0, repeats: int = 3,
                     base_spec: dict | None = None, labels=None) -> list[dict]:
    """Median wall-clock reducer fit time per (method, components) cell.

    Only the reducer fit is timed (bandwidth estimation included). Every
    cell is fit ``repeats`` times on identical data and seed.
    """
    X = as_sample_matrix(X)
    if repeats < 1:
        raise UsageError("repeats must be >= 1")
    rows = []
    for method in methods:
        for k in components:
            spec = ReducerSpec(method=method, components=int(k), seed=seed, **(base_spec or {}))
            times = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                fit(spec, X, labels)
                times.append(time.perf_counter() - t0)
            rows.append({"method": method, "components": int(k), "median_seconds": statistics.median(times),
                         "times": tuple(times)})
    return rows


def sweep_rff_features(X, labels, base_spec: ReducerSpec, feature_counts, classifier_spec=None,
                       per_class: int = 100, runs: int = 5, seed: int = 0, classifier: str = "svm") -> list[dict]:
    """Accuracy as a function of the number of random features."""
    out = []
    for D in feature_counts:
        rep = run_protocol(X, labels, replace(base_spec, rff_features=int(D)), classifier_spec,
                           per_class, runs, seed, classifier=classifier)
        out.append({"rff_features": int(D), "overall_accuracy": rep.overall_accuracy,
                    "average_accuracy": rep.average_accuracy})
    return out


def sweep_bandwidth(X, labels, base_spec: ReducerSpec, sigmas, classifier_spec=None,
                    per_class: int = 100, runs: int = 5, seed: int = 0, classifier: str = "svm") -> list[dict]:
    """Accuracy as a function of the RBF bandwidth ``sigma``."""
    out = []
    for sigma in sigmas:
        rep = run_protocol(X, labels, replace(base_spec, sigma=float(sigma)), classifier_spec,
                           per_class, runs, seed, classifier=classifier)
        out.append({"sigma": float(sigma), "overall_accuracy": rep.overall_accuracy,
                    "average_accuracy": rep.average_accuracy})
    return out


def select_bandwidth_cv(X, labels, base_spec: ReducerSpec, sigmas, split: DatasetSplit,
                        folds: int = 5, seed: int = 0, classifier=None) -> tuple[float, list[float]]:
    """Pick ``sigma`` by stratified k-fold accuracy on the training pixels.

    Each fold fits the reducer on the other folds and classifies with
    ``classifier(train_X, train_y, test_X)`` (default 1-NN). Returns the
    winning sigma (smallest on ties) and the mean fold accuracy per sigma.
    """
    X = as_sample_matrix(X)
    labels = np.asarray(labels).reshape(-1)
    classifier = classifier or _knn_classifier
    idx = split.train_indices
    y = labels[idx]
    fold_of = stratified_folds(y, folds, seed)
    sigmas = sorted(float(s) for s in sigmas)
    scores = []
    for sigma in sigmas:
        spec = replace(base_spec, sigma=sigma, seed=seed)
        accs = []
        for f in range(folds):
            tr, va = idx[fold_of != f], idx[fold_of == f]
            model = fit(spec, X[:, tr], labels[tr] if spec.supervised else None, pool=X)
            pred = classifier(transform(model, X[:, tr]), labels[tr], transform(model, X[:, va]))
            accs.append(100.0 * np.mean(pred == labels[va]))
        scores.append(float(np.mean(accs)))
    best = sigmas[int(np.argmax(scores))]
    return best, scores


# -- report writers --------------------------------------------------------

def _fmt(v: float) -> str:
    return "nan" if v != v else f"{v:.4f}"


def _csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def report_csv(report: EvalReport, method: str = "") -> str:
    rows = [["metric", "value"], ["method", method], ["runs", report.runs],
            ["overall_accuracy", _fmt(report.overall_accuracy)],
            ["average_accuracy", _fmt(report.average_accuracy)]]
    for s, v in zip(report.per_run_seeds, report.per_run_overall):
        rows.append([f"overall_accuracy_seed_{s}", _fmt(v)])
    return _csv(rows)


def per_class_csv(report: EvalReport, class_names=None) -> str:
    rows = [["#", "class", "accuracy"] + [f"seed_{s}" for s in report.per_run_seeds]]
    for k, c in enumerate(report.classes):
        name = class_names[int(c) - 1] if class_names and int(c) - 1 < len(class_names) else f"class_{int(c)}"
        runs = [] if report.per_run_per_class is None else [_fmt(v) for v in report.per_run_per_class[:, k]]
        rows.append([int(c), name, _fmt(report.per_class[k])] + runs)
    rows.append(["", "Average Accuracy", _fmt(report.average_accuracy)])
    rows.append(["", "Overall Accuracy", _fmt(report.overall_accuracy)])
    return _csv(rows)


def _aligned(rows) -> str:
    rows = [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in rows if i < len(r)) for i in range(max(map(len, rows)))]
    lines = []
    for r in rows:
        cells = [c.ljust(widths[i]) if i == 1 else c.rjust(widths[i]) for i, c in enumerate(r)]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def report_text(report: EvalReport, method: str = "", class_names=None) -> str:
    rows = [["#", "Class", f"{method or 'Accuracy'} (%)"]]
    for k, c in enumerate(report.classes):
        name = class_names[int(c) - 1] if class_names and int(c) - 1 < len(class_names) else f"class_{int(c)}"
        rows.append([int(c), name, f"{report.per_class[k]:.2f}"])
    rows.append(["", "Average Accuracy", f"{report.average_accuracy:.2f}"])
    rows.append(["", "Overall Accuracy", f"{report.overall_accuracy:.2f}"])
    head = f"runs: {report.runs}  seeds: {','.join(map(str, report.per_run_seeds))}\n"
    return head + _aligned(rows)


def timing_table_csv(rows: list[dict]) -> str:
    """Methods as rows, component counts as columns (median seconds)."""
    comps = sorted({r["components"] for r in rows})
    methods = list(dict.fromkeys(r["method"] for r in rows))
    cell = {(r["method"], r["components"]): r["median_seconds"] for r in rows}
    out = [["method"] + [str(k) for k in comps]]
    for m in methods:
        out.append([m.upper()] + [f"{cell[(m, k)]:.4f}" if (m, k) in cell else "" for k in comps])
    return _csv(out)


def curve_csv(points: list[dict], x: str, y: str = "overall_accuracy") -> str:
    rows = [[x, y]]
    for p in points:
        rows.append([p[x] if isinstance(p[x], (int, str)) else repr(float(p[x])), _fmt(p[y])])
    return _csv(rows)
