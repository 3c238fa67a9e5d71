import os
from pathlib import Path

import numpy as np
import pytest


def concentric_circles(n, seed, outer=1.3, noise=0.05):
    """Two classes on circles of radius 1 and ``outer``, alternating labels 1, 2."""
    rng = np.random.default_rng(seed)
    r = np.where(np.arange(n) % 2 == 0, 1.0, outer)
    t = rng.uniform(0.0, 2.0 * np.pi, n)
    X = np.vstack([r * np.cos(t), r * np.sin(t)]) + noise * rng.standard_normal((2, n))
    return X, (np.arange(n) % 2) + 1


def gaussian_blobs(n_per, centers, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=float)
    X = np.hstack([c[:, None] + scale * rng.standard_normal((centers.shape[1], n_per)) for c in centers])
    y = np.repeat(np.arange(1, len(centers) + 1), n_per)
    return X, y


@pytest.fixture
def small_cube():
    """8 x 9 cube, 5 bands, three labeled classes plus background."""
    rng = np.random.default_rng(3)
    labels = np.zeros((8, 9), dtype=np.int64)
    labels[:, :3] = 1
    labels[:, 3:6] = 2
    labels[:4, 6:] = 3
    means = np.array([[0, 0, 0, 0, 0], [3, 1, 0, 2, 1], [0, 3, 3, 0, 1], [1, 1, 1, 1, 1]], dtype=float)
    values = means[labels] + 0.3 * rng.standard_normal((8, 9, 5))
    return values, labels


def data_dir():
    d = os.environ.get("RFFDR_DATA_DIR")
    return Path(d) if d else None


# criterion -> (status, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def record_acceptance(key, ok, detail):
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE[key] = (status, detail)
    print(f"[{status}] {key}: {detail}")
    return ok


def record_skip(key, detail):
    ACCEPTANCE[key] = ("SKIP", detail)
    pytest.skip(f"{key}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{status}] {key}: {detail}")
