"""Hyperspectral cubes, labeled sample sets and the stratified split.

Samples are stored pixels-as-columns: a ``(d, N)`` float64 array whose
column ``j`` holds the spectrum of pixel ``(j // cols, j % cols)``.
Label id 0 marks unlabeled background and never enters training or scoring.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ClassTooSmallError, DimensionError, NumericError, UsageError

__all__ = [
    "HsiCube",
    "DatasetSplit",
    "DatasetInfo",
    "SALINAS",
    "PAVIA_UNIVERSITY",
    "as_sample_matrix",
    "flatten_cube",
    "unflatten_cube",
    "stratified_split",
    "class_counts",
]


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HsiCube:
    """A ``rows x cols x bands`` reflectance block with optional labels.

    ``labels`` (if given) is a ``rows x cols`` integer grid, 0 = background.
    Values are converted to float64 and both arrays are made read-only.
    """

    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise DimensionError(f"cube must be 3-D (rows, cols, bands), got shape {values.shape}")
        if min(values.shape) < 1:
            raise DimensionError(f"cube has an empty axis: {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NumericError("cube contains non-finite values")
        object.__setattr__(self, "values", _frozen(values))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != values.shape[:2]:
                raise DimensionError(
                    f"label grid {labels.shape} does not match cube {values.shape[:2]}"
                )
            if not np.issubdtype(labels.dtype, np.integer):
                if not np.all(labels == np.round(labels)):
                    raise UsageError("labels must be integers")
            labels = labels.astype(np.int64)
            if labels.min() < 0:
                raise UsageError("labels must be >= 0")
            if labels.max() < 1:
                raise UsageError("label grid has no labeled pixels")
            object.__setattr__(self, "labels", _frozen(labels))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]

    @property
    def n_pixels(self) -> int:
        return self.rows * self.cols

    @property
    def n_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max())


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/test index lists into a parent sample matrix."""

    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "train_indices", _frozen(np.asarray(self.train_indices, dtype=np.int64)))
        object.__setattr__(self, "test_indices", _frozen(np.asarray(self.test_indices, dtype=np.int64)))


@dataclass(frozen=True)
class DatasetInfo:
    name: str
    rows: int
    cols: int
    bands: int
    class_names: tuple[str, ...]
    class_sizes: tuple[int, ...] = field(default=())


SALINAS = DatasetInfo(
    name="Salinas",
    rows=512,
    cols=217,
    bands=204,
    class_names=(
        "Brocoli_green_weeds_1", "Brocoli_green_weeds_2", "Fallow",
        "Fallow_rough_plow", "Fallow_smooth", "Stubble", "Celery",
        "Grapes_untrained", "Soil_vinyard_develop", "Corn_senesced_green_weeds",
        "Lettuce_romaine_4wk", "Lettuce_romaine_5wk", "Lettuce_romaine_6wk",
        "Lettuce_romaine_7wk", "Vinyard_untrained", "Vinyard_vertical_trellis",
    ),
    class_sizes=(2009, 3726, 1976, 1394, 2678, 3959, 3579, 11271,
                 6203, 3278, 1068, 1927, 916, 1070, 7268, 1807),
)

PAVIA_UNIVERSITY = DatasetInfo(
    name="Pavia University",
    rows=610,
    cols=340,
    bands=103,
    class_names=(
        "Asphalt", "Meadows", "Gravel", "Trees", "Painted metal sheets",
        "Bare Soil", "Bitumen", "Self-Blocking Bricks", "Shadows",
    ),
    class_sizes=(6631, 18649, 2099, 3064, 1345, 5029, 1330, 3682, 947),
)


def as_sample_matrix(X, d: int | None = None) -> np.ndarray:
    """Validate and return ``X`` as a finite float64 ``(d, N)`` array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionError(f"sample matrix must be 2-D (d, N), got shape {X.shape}")
    if d is not None and X.shape[0] != d:
        raise DimensionError(f"expected {d} rows (bands/features), got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise NumericError("sample matrix contains non-finite values")
    return X


def flatten_cube(cube: HsiCube) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(X, labels)`` with ``X`` of shape ``(bands, rows*cols)``.

    Pixels are scanned row-major. ``labels`` keeps background zeros; it is
    all zeros when the cube is unlabeled.
    """
    X = cube.values.reshape(cube.n_pixels, cube.bands).T.copy()
    if cube.labels is None:
        labels = np.zeros(cube.n_pixels, dtype=np.int64)
    else:
        labels = cube.labels.reshape(-1).copy()
    return X, labels


def unflatten_cube(X: np.ndarray, rows: int, cols: int, labels=None) -> HsiCube:
    """Inverse of :func:`flatten_cube`."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != rows * cols:
        raise DimensionError(f"cannot fold {X.shape} into {rows}x{cols} pixels")
    values = X.T.reshape(rows, cols, X.shape[0])
    grid = None
    if labels is not None and np.any(np.asarray(labels) > 0):
        grid = np.asarray(labels).reshape(rows, cols)
    return HsiCube(values, grid)


def class_counts(labels) -> dict[int, int]:
    """Count labeled samples per class id, ignoring background zeros."""
    labels = np.asarray(labels).reshape(-1)
    ids, counts = np.unique(labels[labels > 0], return_counts=True)
    return {int(c): int(n) for c, n in zip(ids, counts)}


def stratified_split(labels, per_class: int, seed: int) -> DatasetSplit:
    """Draw ``per_class`` training pixels per class; the rest are test pixels.

    Background pixels (label 0) are excluded from both sides. Each class
    needs at least ``per_class + 1`` samples so that it keeps one test pixel.
    """
    if per_class < 1:
        raise UsageError(f"per_class must be >= 1, got {per_class}")
    labels = np.asarray(labels).reshape(-1)
    counts = class_counts(labels)
    if not counts:
        raise UsageError("no labeled samples to split")
    small = {c: n for c, n in counts.items() if n < per_class + 1}
    if small:
        detail = ", ".join(f"class {c} has {n}" for c, n in sorted(small.items()))
        raise ClassTooSmallError(
            f"need at least {per_class + 1} samples per class for per_class={per_class}: {detail}"
        )
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in sorted(counts):
        idx = np.flatnonzero(labels == c)
        chosen = rng.choice(idx.size, size=per_class, replace=False)
        mask = np.zeros(idx.size, dtype=bool)
        mask[chosen] = True
        train.append(np.sort(idx[mask]))
        test.append(idx[~mask])
    return DatasetSplit(np.concatenate(train), np.concatenate(test), seed)
