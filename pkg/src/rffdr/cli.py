"""Command-line interface.

Subcommands: reduce, classify, evaluate, benchmark, sweep-d, sweep-sigma,
inspect. Failures print ``error: <category>: <message>`` on stderr and exit
with status 1; usage errors exit with status 2.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .classify import DEFAULT_COST_EXPONENTS, DEFAULT_GAMMA_EXPONENTS, ClassifierSpec, fit_classifier
from .errors import IOFailure, RffdrError, UsageError
from .evaluate import (
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
from .fileio import atomic_write, encode_ppm, load_array, load_container, load_labels_csv, save_array, \
    save_labels_csv
from .hsi import PAVIA_UNIVERSITY, SALINAS, HsiCube, class_counts, flatten_cube, stratified_split
from .reducers import METHODS, SEED_BANDWIDTH, ReducerSpec, derive_seed, fit_for_split, transform
from .rff import BANDWIDTH_RULES, DEFAULT_MAX_PAIRS, estimate_bandwidth
from .serialize import describe_arrays, save_classifier, save_reducer

DATASETS = {"salinas": SALINAS, "pavia": PAVIA_UNIVERSITY}


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            lo, hi = part.split(":")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _float_list(text: str) -> list[float]:
    try:
        out = [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


@dataclass
class RunConfig:
    """Every knob of one CLI invocation, validated before compute starts."""

    cube: str | None = None
    labels: str | None = None
    dataset: str | None = None
    method: str = "rffica"
    components: int = 25
    rff_features: int | None = None
    landmarks: int = 2000
    sigma: float | None = None
    bandwidth_rule: str = "squared"
    max_pairs: int = DEFAULT_MAX_PAIRS
    ridge: float = 1e-6
    nonlinearity: str = "logcosh"
    max_iter: int = 400
    tol: float = 1e-6
    centered_kernel: bool | None = None
    fit_on: str = "auto"
    per_class: int = 100
    runs: int = 5
    seed: int = 0
    classifier: str = "svm"
    cost_exponents: list[int] = field(default_factory=lambda: list(DEFAULT_COST_EXPONENTS))
    gamma_exponents: list[int] = field(default_factory=lambda: list(DEFAULT_GAMMA_EXPONENTS))
    folds: int = 5
    standardize: bool = True
    threads: int = 1
    out: str | None = None

    def validate_paths(self, needs_labels: bool = False) -> None:
        for name in ("cube", "labels"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise IOFailure(f"--{name} file not found: {p}")
        if needs_labels and self.labels is None:
            raise UsageError("--labels is required for this command")
        if self.dataset is not None and self.dataset not in DATASETS:
            raise UsageError(f"unknown dataset {self.dataset!r}; expected one of {', '.join(DATASETS)}")

    def validate_ranges(self) -> None:
        checks = [
            (self.components >= 1, "--components must be >= 1"),
            (self.rff_features is None or self.rff_features >= 1, "--rff-features must be >= 1"),
            (self.landmarks >= 2, "--landmarks must be >= 2"),
            (self.sigma is None or self.sigma > 0, "--sigma must be positive"),
            (self.max_pairs >= 1, "--max-pairs must be >= 1"),
            (self.ridge >= 0, "--ridge must be >= 0"),
            (self.per_class >= 1, "--per-class must be >= 1"),
            (self.runs >= 1, "--runs must be >= 1"),
            (self.folds >= 2, "--folds must be >= 2"),
            (self.threads >= 1, "--threads must be >= 1"),
            (self.max_iter >= 1, "--max-iter must be >= 1"),
            (self.tol > 0, "--tol must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise UsageError(msg)

    def validate_data(self, bands: int, pixels: int, counts: dict | None, supervised_split: bool) -> None:
        """Reject settings the pipeline would fail on, given the loaded data."""
        spec = self.reducer_spec()
        C = len(counts) if counts else 0
        if spec.supervised:
            if C < 2:
                raise UsageError(f"{spec.method} needs labels with at least 2 classes")
            if spec.components > C - 1:
                raise UsageError(
                    f"{spec.method} components must be <= C-1 = {C - 1} (rank bound of the between-class "
                    f"scatter), got {spec.components}"
                )
        elif spec.method == "ica" and spec.components > bands:
            raise UsageError(f"ica cannot extract {spec.components} components from {bands} bands")
        elif spec.method == "rffica" and spec.components > spec.feature_count(bands):
            raise UsageError(f"rffica components exceed the {spec.feature_count(bands)} random features")
        elif spec.method == "kica" and spec.components > spec.landmarks:
            raise UsageError(f"kica components exceed the {spec.landmarks} landmarks")
        if spec.method in ("kica", "gda") and spec.landmarks > pixels:
            raise UsageError(f"--landmarks {spec.landmarks} exceeds the {pixels} available pixels")
        if supervised_split:
            small = {c: n for c, n in (counts or {}).items() if n < self.per_class + 1}
            if small:
                raise UsageError(f"classes {sorted(small)} have fewer than per-class+1 = {self.per_class + 1} samples")
            if self.classifier == "svm" and self.per_class < self.folds:
                raise UsageError(f"--per-class {self.per_class} is smaller than --folds {self.folds}")

    def reducer_spec(self) -> ReducerSpec:
        return ReducerSpec(
            method=self.method, components=self.components, rff_features=self.rff_features,
            landmarks=self.landmarks, sigma=self.sigma, seed=self.seed, centered_kernel=self.centered_kernel,
            bandwidth_rule=self.bandwidth_rule, max_pairs=self.max_pairs, ridge=self.ridge,
            nonlinearity=self.nonlinearity, tol=self.tol, max_iter=self.max_iter,
        )

    def classifier_spec(self) -> ClassifierSpec:
        return ClassifierSpec(
            cost_grid=tuple(2.0**a for a in self.cost_exponents),
            gamma_grid=tuple(2.0**b for b in self.gamma_exponents),
            folds=self.folds, standardize=self.standardize, n_jobs=self.threads,
        )

    @property
    def class_names(self):
        return DATASETS[self.dataset].class_names if self.dataset else None


# -- data loading ------------------------------------------------------------

def _load_labels(path, shape):
    if str(path).endswith(".npy"):
        grid = load_array(path)
        if not np.all(grid == np.round(grid)):
            raise UsageError(f"{path}: labels must be integers")
        grid = grid.astype(np.int64)
        if grid.size != shape[0] * shape[1]:
            raise UsageError(f"{path}: {grid.size} labels for {shape[0]}x{shape[1]} pixels")
        return grid.reshape(shape)
    return load_labels_csv(path, shape)


def load_cube(cfg: RunConfig) -> HsiCube:
    if cfg.cube is None:
        raise UsageError("--cube is required")
    values = load_array(cfg.cube)
    if values.ndim == 2:
        values = values[:, None, :]
    if values.ndim != 3:
        raise UsageError(f"{cfg.cube}: expected a rows x cols x bands array, got shape {values.shape}")
    labels = None
    if cfg.labels is not None:
        labels = _load_labels(cfg.labels, values.shape[:2])
    return HsiCube(values, labels)


# -- subcommands -------------------------------------------------------------

def _prepare(cfg: RunConfig, needs_labels: bool, split: bool):
    cfg.validate_paths(needs_labels)
    cfg.validate_ranges()
    cube = load_cube(cfg)
    X, labels = flatten_cube(cube)
    counts = class_counts(labels) if cube.labels is not None else None
    cfg.validate_data(cube.bands, cube.n_pixels, counts, split)
    return cube, X, labels


def cmd_reduce(cfg: RunConfig, args) -> int:
    spec = cfg.reducer_spec()
    _, X, labels = _prepare(cfg, spec.supervised, spec.supervised)
    split = stratified_split(labels, cfg.per_class, cfg.seed) if spec.supervised or cfg.fit_on == "train" else None
    model = fit_for_split(spec, X, labels, split, cfg.fit_on)
    feats = transform(model, X)
    save_reducer(args.out_model, model)
    if args.out_features:
        save_array(args.out_features, feats)
    print(f"{spec.method}: {feats.shape[0]} components x {feats.shape[1]} pixels"
          + (f", sigma={model.sigma_used:.6g}" if model.sigma_used == model.sigma_used else ""))
    return 0


def cmd_classify(cfg: RunConfig, args) -> int:
    cfg.validate_paths(needs_labels=True)
    cfg.validate_ranges()
    if not Path(args.features).is_file():
        raise IOFailure(f"--features file not found: {args.features}")
    F = load_array(args.features)
    if F.ndim != 2:
        raise UsageError(f"{args.features}: features must be a components x pixels array")
    grid = load_labels_csv(cfg.labels) if not cfg.labels.endswith(".npy") else load_array(cfg.labels).astype(np.int64)
    if grid.ndim == 1:
        grid = grid[None, :]
    labels = grid.reshape(-1)
    if labels.size != F.shape[1]:
        raise UsageError(f"{labels.size} labels for {F.shape[1]} feature columns")
    counts = class_counts(labels)
    small = {c: n for c, n in counts.items() if n < cfg.per_class + 1}
    if small:
        raise UsageError(f"classes {sorted(small)} have fewer than per-class+1 = {cfg.per_class + 1} samples")
    split = stratified_split(labels, cfg.per_class, cfg.seed)
    clf = fit_classifier(F[:, split.train_indices], labels[split.train_indices], cfg.classifier_spec(), cfg.seed)
    pred = clf.predict(F)
    _, rep = score(pred[split.test_indices], labels[split.test_indices], np.unique(labels[labels > 0]))
    if args.out_model:
        save_classifier(args.out_model, clf)
    if args.out_pred:
        save_labels_csv(args.out_pred, pred.reshape(grid.shape))
    sys.stdout.write(report_text(replace(rep, per_run_seeds=(cfg.seed,)), "SVM", cfg.class_names))
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    if cfg.out is None:
        raise UsageError("--out directory is required")
    cube, X, labels = _prepare(cfg, needs_labels=True, split=True)
    spec = cfg.reducer_spec()
    rep = run_protocol(X, labels, spec, cfg.classifier_spec(), cfg.per_class, cfg.runs, cfg.seed,
                       cfg.fit_on, cfg.classifier, predict_all=not args.no_map)
    out = Path(cfg.out)
    names = cfg.class_names
    atomic_write(out / "report.csv", report_csv(rep, spec.method).encode())
    atomic_write(out / "per_class.csv", per_class_csv(rep, names).encode())
    atomic_write(out / "report.txt", report_text(rep, spec.method.upper(), names).encode())
    conf = rep.confusion
    lines = ["truth\\pred," + ",".join(str(int(c)) for c in conf.classes)]
    lines += [f"{int(c)}," + ",".join(str(int(v)) for v in row) for c, row in zip(conf.classes, conf.counts)]
    atomic_write(out / "confusion.csv", ("\n".join(lines) + "\n").encode())
    art = rep.artifacts
    save_reducer(out / "model.rdm", art.reducer)
    if art.classifier is not None:
        save_classifier(out / "classifier.rdm", art.classifier)
    atomic_write(out / "groundtruth.ppm", encode_ppm(render_map(cube.labels)))
    if art.prediction is not None:
        grid = art.prediction.reshape(cube.rows, cube.cols)
        atomic_write(out / "map.ppm", encode_ppm(render_map(grid)))
        atomic_write(out / "map_masked.ppm", encode_ppm(render_map(grid, mask=cube.labels > 0)))
    timing = ["stage,seconds", f"reducer_fit,{rep.fit_time:.6f}", f"bandwidth,{rep.bandwidth_time:.6f}",
              f"classify,{rep.classify_time:.6f}"]
    atomic_write(out / "timings.csv", ("\n".join(timing) + "\n").encode())
    sys.stdout.write(report_text(rep, spec.method.upper(), names))
    return 0


def _benchmark_data(cfg: RunConfig, args):
    if args.synthetic:
        if len(args.synthetic) != 2:
            raise UsageError("--synthetic takes N,BANDS")
        N, d = args.synthetic
        return synthetic_pixels(N, d, cfg.seed), None
    _, X, labels = _prepare(cfg, needs_labels=False, split=False)
    return X, labels


def synthetic_pixels(N: int, d: int, seed: int) -> np.ndarray:
    """Smooth non-negative spectra mixed from a few random endmembers."""
    rng = np.random.default_rng(seed)
    k = 6
    grid = np.linspace(0.0, 1.0, d)
    centers = rng.uniform(0.0, 1.0, k)
    widths = rng.uniform(0.05, 0.3, k)
    endmembers = np.exp(-((grid[:, None] - centers[None, :]) ** 2) / (2 * widths**2))
    abundances = rng.dirichlet(np.full(k, 0.5), size=N).T
    return endmembers @ abundances + 0.01 * rng.standard_normal((d, N))


def cmd_benchmark(cfg: RunConfig, args) -> int:
    cfg.validate_ranges()
    X, labels = _benchmark_data(cfg, args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}")
    if any(m in ("lda", "gda", "rfflda") for m in methods):
        raise UsageError("benchmark times the unsupervised methods (ica, kica, rffica)")
    base = {"landmarks": cfg.landmarks, "rff_features": cfg.rff_features, "sigma": cfg.sigma,
            "bandwidth_rule": cfg.bandwidth_rule, "max_pairs": cfg.max_pairs}
    rows = benchmark_timing(X, methods, args.component_list, cfg.seed, args.repeats, base)
    text = timing_table_csv(rows)
    if cfg.out:
        atomic_write(cfg.out, text.encode())
    sys.stdout.write(text)
    return 0


def cmd_sweep_d(cfg: RunConfig, args) -> int:
    if cfg.out is None:
        raise UsageError("--out file is required")
    cube, X, labels = _prepare(cfg, needs_labels=cfg.reducer_spec().supervised, split=True)
    d = cube.bands
    counts = args.features_list or [int(m * d) for m in args.multipliers]
    points = sweep_rff_features(X, labels, cfg.reducer_spec(), counts, cfg.classifier_spec(), cfg.per_class,
                                cfg.runs, cfg.seed, cfg.classifier)
    text = curve_csv(points, "rff_features")
    atomic_write(cfg.out, text.encode())
    sys.stdout.write(text)
    return 0


def cmd_sweep_sigma(cfg: RunConfig, args) -> int:
    if cfg.out is None:
        raise UsageError("--out file is required")
    cube, X, labels = _prepare(cfg, needs_labels=True, split=True)
    spec = cfg.reducer_spec()
    # same draw the reducer makes, so multiplier 1 reproduces the default fit
    empirical = estimate_bandwidth(X, cfg.max_pairs, derive_seed(cfg.seed, SEED_BANDWIDTH), cfg.bandwidth_rule)
    sigmas = args.sigmas or [m * empirical for m in args.sigma_multipliers]
    points = sweep_bandwidth(X, labels, spec, sigmas, cfg.classifier_spec(), cfg.per_class, cfg.runs, cfg.seed,
                             cfg.classifier)
    text = curve_csv(points, "sigma")
    atomic_write(cfg.out, text.encode())
    sys.stdout.write(text)
    if args.compare:
        split = stratified_split(labels, cfg.per_class, cfg.seed)
        cv_sigma, _ = select_bandwidth_cv(X, labels, spec, sigmas, split, cfg.folds, cfg.seed)
        rows = ["rule,sigma,overall_accuracy"]
        for rule, s in (("empirical", empirical), ("cross_validation", cv_sigma)):
            rep = run_protocol(X, labels, replace(spec, sigma=s), cfg.classifier_spec(), cfg.per_class, cfg.runs,
                               cfg.seed, cfg.fit_on, cfg.classifier)
            rows.append(f"{rule},{s!r},{rep.overall_accuracy:.4f}")
        text = "\n".join(rows) + "\n"
        atomic_write(args.compare, text.encode())
        sys.stdout.write(text)
    return 0


def cmd_inspect(cfg: RunConfig, args) -> int:
    kind, meta, arrays = load_container(args.model)
    sys.stdout.write(json.dumps({"kind": kind, "metadata": meta, "arrays": describe_arrays(arrays)},
                                indent=2, sort_keys=True) + "\n")
    return 0


# -- parser ------------------------------------------------------------------

def _add_data(p, labels_required=False):
    p.add_argument("--cube", help="NPY array, rows x cols x bands (or pixels x bands)")
    p.add_argument("--labels", required=labels_required, help="label grid, CSV or NPY; 0 = background")
    p.add_argument("--dataset", choices=sorted(DATASETS), help="known dataset, for class names in reports")


def _add_reducer(p):
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--components", type=int)
    p.add_argument("--rff-features", type=int, help="random features D (default 2 x bands)")
    p.add_argument("--landmarks", type=int, help="landmark count for kica/gda (default 2000)")
    p.add_argument("--sigma", type=float, help="RBF bandwidth override")
    p.add_argument("--bandwidth-rule", choices=BANDWIDTH_RULES)
    p.add_argument("--max-pairs", type=int)
    p.add_argument("--ridge", type=float)
    p.add_argument("--nonlinearity", choices=("logcosh", "cube"))
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--centered-kernel", dest="centered_kernel", action="store_true", default=None)
    p.add_argument("--uncentered-kernel", dest="centered_kernel", action="store_false")
    p.add_argument("--fit-on", choices=("auto", "all", "train"))


def _add_protocol(p):
    p.add_argument("--per-class", type=int)
    p.add_argument("--runs", type=int)


def _add_classifier(p):
    p.add_argument("--classifier", choices=("svm", "knn"))
    p.add_argument("--cost-exponents", type=_int_list, help="e.g. -5:15 (cost = 2^a)")
    p.add_argument("--gamma-exponents", type=_int_list, help="e.g. -15,-13,-11 (gamma = 2^b)")
    p.add_argument("--folds", type=int)
    p.add_argument("--no-standardize", dest="standardize", action="store_false", default=None)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="single seed controlling all randomness")
    common.add_argument("--threads", type=int, help="worker processes for grid search")
    common.add_argument("--config", help="JSON file of defaults (keys as in the long flags, with underscores)")

    parser = argparse.ArgumentParser(prog="rffdr", description="RFF-based ICA/LDA for hyperspectral images")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("reduce", parents=[common], help="fit a reducer, save model and features")
    _add_data(p)
    _add_reducer(p)
    _add_protocol(p)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-features", help="NPY file of components x pixels")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("classify", parents=[common], help="grid-search, train and apply the SVM")
    p.add_argument("--features", required=True, help="NPY components x pixels")
    p.add_argument("--labels", required=True)
    p.add_argument("--dataset", choices=sorted(DATASETS))
    _add_protocol(p)
    _add_classifier(p)
    p.add_argument("--out-model")
    p.add_argument("--out-pred", help="CSV grid of predicted labels")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", parents=[common], help="full protocol: report, maps, models")
    _add_data(p, labels_required=True)
    _add_reducer(p)
    _add_protocol(p)
    _add_classifier(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-map", action="store_true", help="skip the full-image prediction map")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", parents=[common], help="reducer fit time per method and component count")
    _add_data(p)
    p.add_argument("--synthetic", type=_int_list, metavar="N,BANDS", help="time on synthetic pixels instead")
    p.add_argument("--methods", default="ica,kica,rffica")
    p.add_argument("--components", dest="component_list", type=_int_list, default=[3, 5, 10, 15, 20, 25, 30, 35])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--landmarks", type=int)
    p.add_argument("--rff-features", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--bandwidth-rule", choices=BANDWIDTH_RULES)
    p.add_argument("--max-pairs", type=int)
    p.add_argument("--out", help="CSV file")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sweep-d", parents=[common], help="accuracy versus number of random features")
    _add_data(p)
    _add_reducer(p)
    _add_protocol(p)
    _add_classifier(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--features-list", type=_int_list, help="explicit D values")
    g.add_argument("--multipliers", type=_float_list, default=[1, 2, 4, 8], help="D as multiples of bands")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_d, method_default="rfflda")

    p = sub.add_parser("sweep-sigma", parents=[common], help="accuracy versus RBF bandwidth")
    _add_data(p, labels_required=True)
    _add_reducer(p)
    _add_protocol(p)
    _add_classifier(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--sigmas", type=_float_list)
    g.add_argument("--sigma-multipliers", type=_float_list, default=[0.25, 0.5, 1.0, 2.0, 4.0],
                   help="sigma as multiples of the empirical estimate")
    p.add_argument("--compare", help="also write empirical-vs-CV sigma comparison CSV here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_sigma, method_default="rfflda")

    p = sub.add_parser("inspect", parents=[common], help="print model metadata")
    p.add_argument("model")
    p.set_defaults(func=cmd_inspect)
    return parser


def _config_from(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "method_default", None):
        cfg.method = args.method_default
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IOFailure(f"cannot read config {args.config}: {exc}") from exc
        except ValueError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from exc
        known = set(asdict(cfg))
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for k, v in data.items():
            setattr(cfg, k, v)
    for k in asdict(cfg):
        v = getattr(args, k, None)
        if v is not None:
            setattr(cfg, k, v)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from(args)
        return args.func(cfg, args)
    except RffdrError as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {exc.category}: {msg}", file=sys.stderr)
        return 1
    except MemoryError:
        print("error: numeric: out of memory", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
