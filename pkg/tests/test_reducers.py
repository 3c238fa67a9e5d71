import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rffdr.errors import DimensionError, UsageError
from rffdr.fastica import IcaModel
from rffdr.hsi import stratified_split
from rffdr.lda import LdaModel
from rffdr.reducers import (
    METHODS,
    ReducerSpec,
    approximation_gap,
    derive_seed,
    fit,
    fit_for_split,
    fit_transform,
    stage1_features,
    transform,
)
from rffdr.serialize import load_reducer, save_reducer

from conftest import concentric_circles, gaussian_blobs


def blobs4():
    return gaussian_blobs(40, [[0, 0, 0], [3, 0, 0], [0, 3, 0], [0, 0, 3]], seed=0)


@pytest.mark.parametrize("method", METHODS)
def test_dispatch_shapes_and_stages(method):
    X, y = blobs4()
    spec = ReducerSpec(method, 2, rff_features=16, landmarks=20, seed=1)
    model, Y = fit_transform(spec, X, y)
    assert Y.shape == (2, X.shape[1])
    assert np.all(np.isfinite(Y))
    if method in ("ica", "kica", "rffica"):
        assert isinstance(model.stage2, IcaModel)
    else:
        assert isinstance(model.stage2, LdaModel)
    assert (model.rff is not None) == method.startswith("rff")
    assert (model.landmarks is not None) == (method in ("kica", "gda"))
    if model.rff is not None:
        assert model.rff.D == 16
    if model.landmarks is not None:
        assert model.landmarks.m == 20


def test_rff_default_is_twice_d():
    X, _ = blobs4()
    assert fit(ReducerSpec("rffica", 2), X).rff.D == 6


def test_kernel_centering_defaults():
    assert ReducerSpec("gda", 1).centered
    assert not ReducerSpec("kica", 1).centered
    assert ReducerSpec("kica", 1, centered_kernel=True).centered


def test_lda_components_cap():
    X, y = blobs4()
    fit(ReducerSpec("lda", 3), X, y)
    for method in ("lda", "rfflda", "gda"):
        with pytest.raises(UsageError, match="C-1"):
            fit(ReducerSpec(method, 4, landmarks=10), X, y)


def test_supervised_needs_labels():
    X, _ = blobs4()
    with pytest.raises(UsageError):
        fit(ReducerSpec("lda", 1), X)


def test_ica_component_cap():
    X, _ = blobs4()
    with pytest.raises(UsageError):
        fit(ReducerSpec("ica", 4), X)
    with pytest.raises(UsageError):
        fit(ReducerSpec("rffica", 9, rff_features=8), X)


def test_bad_spec_values():
    with pytest.raises(UsageError):
        ReducerSpec("pca", 2)
    with pytest.raises(UsageError):
        ReducerSpec("ica", 0)
    with pytest.raises(UsageError):
        ReducerSpec("rffica", 2, sigma=-1.0)


def test_ica_transform_is_affine_unmixing():
    X, _ = blobs4()
    model = fit(ReducerSpec("ica", 3, seed=4), X)
    st = model.stage2
    np.testing.assert_allclose(transform(model, X), st.unmixing @ (X - st.whitening.mean[:, None]), atol=1e-12)


def test_transform_empty_and_dimension_checks():
    X, y = blobs4()
    model = fit(ReducerSpec("rfflda", 2, rff_features=12), X, y)
    assert transform(model, np.zeros((3, 0))).shape == (2, 0)
    with pytest.raises(DimensionError):
        transform(model, np.zeros((4, 5)))


def test_fit_transform_matches_transform():
    X, y = blobs4()
    for method in ("kica", "gda"):
        spec = ReducerSpec(method, 2, landmarks=15, seed=2)
        model, Y = fit_transform(spec, X, y)
        np.testing.assert_array_equal(Y, transform(model, X))


def test_seed_reproducibility():
    X, y = blobs4()
    spec = ReducerSpec("rffica", 2, rff_features=10, seed=9)
    a, b = fit(spec, X), fit(spec, X)
    np.testing.assert_array_equal(transform(a, X), transform(b, X))
    c = fit(ReducerSpec("rffica", 2, rff_features=10, seed=10), X)
    assert not np.array_equal(a.rff.coefficients, c.rff.coefficients)
    assert derive_seed(0, 1) != derive_seed(0, 2)


def test_sigma_override_skips_estimation():
    X, _ = blobs4()
    model = fit(ReducerSpec("kica", 2, landmarks=10, sigma=0.7), X)
    assert model.sigma_used == 0.7
    assert model.landmarks.gamma == pytest.approx(1 / (2 * 0.49))


@pytest.mark.parametrize("method", METHODS)
def test_serialization_round_trip(method, tmp_path):
    X, y = blobs4()
    model = fit(ReducerSpec(method, 2, rff_features=14, landmarks=12, seed=3), X, y)
    path = tmp_path / "m.rdm"
    save_reducer(path, model)
    again = load_reducer(path)
    np.testing.assert_array_equal(transform(model, X), transform(again, X))
    save_reducer(tmp_path / "m2.rdm", again)
    assert path.read_bytes() == (tmp_path / "m2.rdm").read_bytes()


def test_fit_for_split_uses_training_pixels_and_full_pool():
    X, y = blobs4()
    split = stratified_split(y, 10, seed=0)
    model = fit_for_split(ReducerSpec("gda", 2, landmarks=30), X, y, split)
    assert model.fit_samples == split.train_indices.size
    assert model.pool_samples == X.shape[1]
    assert fit_for_split(ReducerSpec("ica", 2), X, y, split).fit_samples == X.shape[1]
    with pytest.raises(UsageError):
        fit_for_split(ReducerSpec("lda", 2), X, y, split, fit_on="all")


def test_approximation_gap_identical_specs():
    X, y = blobs4()
    split = stratified_split(y, 10, seed=1)
    spec = ReducerSpec("rfflda", 2, rff_features=20)
    a, b = approximation_gap(X, y, (spec, spec), split)
    assert a == b


def test_circles_rff_tracks_exact_kernel():
    X, y = concentric_circles(500, seed=0)
    split = stratified_split(y, 100, seed=0)
    a, b = approximation_gap(X, y, (ReducerSpec("rfflda", 1, rff_features=2048),
                                    ReducerSpec("gda", 1, landmarks=300)), split)
    assert abs(a - b) <= 5.0
    assert min(a, b) >= 95.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 40))
def test_chunk_independent_stage1(seed, cut):
    # transforming a prefix gives the prefix of the full transform
    X, _ = blobs4()
    model = fit(ReducerSpec("rffica", 2, rff_features=8, seed=seed % 1000), X)
    full = stage1_features(model, X)
    np.testing.assert_allclose(stage1_features(model, X[:, :cut]), full[:, :cut], atol=1e-13)
