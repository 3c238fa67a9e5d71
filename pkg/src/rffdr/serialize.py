"""Save and load fitted reducers and classifiers as model containers."""
from __future__ import annotations

import math
from dataclasses import asdict

import numpy as np

from .classify import SvmMulticlassModel, TrainedClassifier
from .errors import FormatError
from .fastica import IcaModel, WhiteningModel
from .fileio import load_container, save_container
from .kernels import KernelParams, LandmarkSet
from .lda import LdaModel
from .reducers import ReducerModel, ReducerSpec
from .rff import RffMap

__all__ = [
    "reducer_to_parts",
    "reducer_from_parts",
    "save_reducer",
    "load_reducer",
    "classifier_to_parts",
    "classifier_from_parts",
    "save_classifier",
    "load_classifier",
    "load_model",
]

REDUCER_KIND = "reducer"
CLASSIFIER_KIND = "svm-ovo"


def _num(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def _unnum(x):
    return float("nan") if x is None else x


def reducer_to_parts(model: ReducerModel):
    meta = {
        "method": model.spec.method,
        "spec": asdict(model.spec),
        "d": model.d,
        "sigma_used": _num(model.sigma_used),
        "fit_samples": model.fit_samples,
        "pool_samples": model.pool_samples,
    }
    arrays = {}
    if model.rff is not None:
        meta["rff"] = {"sigma": model.rff.sigma, "seed": model.rff.seed}
        arrays["rff.coefficients"] = model.rff.coefficients
        arrays["rff.offsets"] = model.rff.offsets
    if model.landmarks is not None:
        lm = model.landmarks
        meta["landmarks"] = {"gamma": lm.gamma, "total_mean": lm.total_mean, "seed": lm.seed}
        arrays["landmarks.points"] = lm.points
        arrays["landmarks.row_means"] = lm.row_means
        if lm.source_indices is not None:
            arrays["landmarks.source_indices"] = lm.source_indices
    st = model.stage2
    if isinstance(st, IcaModel):
        meta["ica"] = {"nonlinearity": st.nonlinearity, "iterations_used": st.iterations_used,
                       "converged": st.converged}
        w = st.whitening
        arrays.update({
            "whitening.mean": w.mean, "whitening.projection": w.projection,
            "whitening.back_projection": w.back_projection, "whitening.eigenvalues": w.eigenvalues,
            "ica.rotation": st.rotation, "ica.unmixing": st.unmixing,
        })
    else:
        meta["lda"] = {"ridge_used": st.ridge_used, "note": st.note}
        arrays["lda.projection"] = st.projection
        arrays["lda.eigenvalues"] = st.eigenvalues
    return meta, arrays


def reducer_from_parts(meta, arrays) -> ReducerModel:
    spec = ReducerSpec(**meta["spec"])
    rff = landmarks = None
    if "rff" in meta:
        rff = RffMap(arrays["rff.coefficients"], arrays["rff.offsets"], meta["rff"]["sigma"], meta["rff"]["seed"])
    if "landmarks" in meta:
        lm = meta["landmarks"]
        landmarks = LandmarkSet(arrays["landmarks.points"], lm["gamma"], arrays["landmarks.row_means"],
                                lm["total_mean"], arrays.get("landmarks.source_indices"), lm["seed"])
    if "ica" in meta:
        w = WhiteningModel(arrays["whitening.mean"], arrays["whitening.projection"],
                           arrays["whitening.back_projection"], arrays["whitening.eigenvalues"])
        ica = meta["ica"]
        stage2 = IcaModel(w, arrays["ica.rotation"], arrays["ica.unmixing"], ica["nonlinearity"],
                          ica["iterations_used"], ica["converged"])
    elif "lda" in meta:
        stage2 = LdaModel(arrays["lda.projection"], arrays["lda.eigenvalues"], meta["lda"]["ridge_used"],
                          meta["lda"]["note"])
    else:
        raise FormatError("reducer model has no stage-2 section")
    return ReducerModel(spec, meta["d"], stage2, rff, landmarks, _unnum(meta["sigma_used"]),
                        meta["fit_samples"], meta["pool_samples"])


def save_reducer(path, model: ReducerModel) -> None:
    meta, arrays = reducer_to_parts(model)
    save_container(path, REDUCER_KIND, meta, arrays)


def load_reducer(path) -> ReducerModel:
    kind, meta, arrays = load_container(path)
    if kind != REDUCER_KIND:
        raise FormatError(f"{path}: holds a {kind!r} model, not a reducer")
    return reducer_from_parts(meta, arrays)


def classifier_to_parts(clf: TrainedClassifier):
    svm = clf.svm
    meta = {
        "gamma": svm.kernel.gamma,
        "cost": svm.cost,
        "pairs": [list(p) for p in svm.pairs],
        "converged": svm.converged,
        "n_models": svm.n_models,
    }
    if clf.grid is not None:
        meta["grid"] = {"best_cost": clf.grid.best_cost, "best_gamma": clf.grid.best_gamma,
                        "folds": clf.grid.folds}
    arrays = {
        "support_vectors": svm.support_vectors,
        "biases": svm.biases,
        "classes": svm.classes,
        "offset": clf.offset,
        "scale": clf.scale,
    }
    for k, (idx, coef) in enumerate(zip(svm.pair_support, svm.pair_coeffs)):
        arrays[f"pair{k:04d}.support"] = idx
        arrays[f"pair{k:04d}.coeffs"] = coef
    return meta, arrays


def classifier_from_parts(meta, arrays) -> TrainedClassifier:
    n = meta["n_models"]
    svm = SvmMulticlassModel(
        arrays["support_vectors"],
        tuple(tuple(p) for p in meta["pairs"]),
        tuple(arrays[f"pair{k:04d}.support"] for k in range(n)),
        tuple(arrays[f"pair{k:04d}.coeffs"] for k in range(n)),
        arrays["biases"],
        arrays["classes"],
        KernelParams(meta["gamma"]),
        meta["cost"],
        meta["converged"],
    )
    return TrainedClassifier(svm, arrays["offset"], arrays["scale"], None)


def save_classifier(path, clf: TrainedClassifier) -> None:
    meta, arrays = classifier_to_parts(clf)
    save_container(path, CLASSIFIER_KIND, meta, arrays)


def load_classifier(path) -> TrainedClassifier:
    kind, meta, arrays = load_container(path)
    if kind != CLASSIFIER_KIND:
        raise FormatError(f"{path}: holds a {kind!r} model, not a classifier")
    return classifier_from_parts(meta, arrays)


def load_model(path):
    """Load either kind of model file, returning ``(kind, model, metadata)``."""
    kind, meta, arrays = load_container(path)
    if kind == REDUCER_KIND:
        return kind, reducer_from_parts(meta, arrays), meta
    if kind == CLASSIFIER_KIND:
        return kind, classifier_from_parts(meta, arrays), meta
    raise FormatError(f"{path}: unknown model kind {kind!r}")


def describe_arrays(arrays) -> dict:
    return {k: list(np.shape(v)) for k, v in sorted(arrays.items())}
