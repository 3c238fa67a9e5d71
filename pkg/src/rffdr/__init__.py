"""Random Fourier feature ICA and LDA for hyperspectral dimensionality reduction."""

__version__ = "0.1.0"

from .errors import RffdrError  # noqa: E402
from .hsi import HsiCube, class_counts, flatten_cube, stratified_split, unflatten_cube  # noqa: E402
from .reducers import ReducerModel, ReducerSpec, fit, transform  # noqa: E402

__all__ = [
    "HsiCube",
    "ReducerModel",
    "ReducerSpec",
    "RffdrError",
    "class_counts",
    "fit",
    "flatten_cube",
    "stratified_split",
    "transform",
    "unflatten_cube",
]
