from __future__ import annotations

import numpy as np
import pytest

from hkg.graph import Hkg, assemble_hkg
from hkg.synth import SynthConfig, generate


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Worst-case relative disagreement with a floor for entries below
    finite-difference resolution."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def central_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Gradient of scalar f at x by central differences, entry by entry."""
    grad = np.zeros_like(x)
    flat = x.ravel()
    out = grad.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        fp = f()
        flat[i] = keep - h
        fm = f()
        flat[i] = keep
        out[i] = (fp - fm) / (2 * h)
    return grad


@pytest.fixture(scope="session")
def tiny_hkg() -> Hkg:
    """Small but structurally complete synthetic graph (all relations)."""
    return generate(SynthConfig(students=20, seed=11, chapters_per_submodule=2, pages_per_chapter=2))


@pytest.fixture(scope="session")
def small_hkg() -> Hkg:
    """Mid-sized graph for split/train tests."""
    return generate(SynthConfig(students=60, seed=5))
