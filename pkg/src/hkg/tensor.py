"""Dense numeric core: float64 matrices with explicit backward functions.

Matrices are plain 2-D ``numpy.ndarray`` values (row-major float64); numpy
supplies the arithmetic while every layer primitive here pairs its forward
with a hand-written backward, so the whole model can be differentiated
without an autograd tape. Gradient correctness is checked against central
finite differences in the test suite.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

Matrix = np.ndarray


def as_matrix(data) -> Matrix:
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def check_finite(m: Matrix, what: str = "matrix") -> Matrix:
    if not np.all(np.isfinite(m)):
        raise ShapeError(f"{what} contains non-finite entries")
    return m


@dataclass
class Parameter:
    """A learned weight matrix with its gradient accumulator."""

    value: Matrix
    name: str
    grad: Matrix = field(init=False)

    def __post_init__(self) -> None:
        self.value = as_matrix(self.value)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[:] = 0.0


class RngStream:
    """Deterministic random stream with derivable substreams.

    Identical seeds give identical draw sequences. ``derive`` produces an
    independent stream keyed by integers or strings (strings are hashed
    with sha256, never the process-salted builtin ``hash``), so per-batch
    or per-student substreams do not depend on consumption order.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._key = _key
        self.gen = np.random.default_rng(np.random.SeedSequence([self.seed, *_key]))

    def derive(self, *keys: int | str) -> "RngStream":
        return RngStream(self.seed, self._key + tuple(_as_key(k) for k in keys))

    # Convenience passthroughs; the underlying generator is also public.
    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def random(self, size=None):
        return self.gen.random(size)


def _as_key(k: int | str) -> int:
    if isinstance(k, str):
        return int.from_bytes(hashlib.sha256(k.encode()).digest()[:4], "little")
    return int(k) & 0xFFFFFFFF


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Standard matrix product with shape checking."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def matmul_backward(a: Matrix, b: Matrix, d_out: Matrix) -> tuple[Matrix, Matrix]:
    """Gradients of ``a @ b``: dA = dC @ B^T, dB = A^T @ dC."""
    if d_out.shape != (a.shape[0], b.shape[1]):
        raise ShapeError(f"upstream gradient shape {d_out.shape} does not match {(a.shape[0], b.shape[1])}")
    return d_out @ b.T, a.T @ d_out


def relu(x: Matrix) -> Matrix:
    return np.maximum(x, 0.0)


def relu_backward(x: Matrix, d_out: Matrix) -> Matrix:
    """Masks the upstream gradient where the input was <= 0.

    The subgradient at exactly 0 is taken as 0.
    """
    return np.where(x > 0.0, d_out, 0.0)


def glorot_init(rows: int, cols: int, rng: RngStream) -> Matrix:
    """Uniform Glorot initialization on +/- sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"glorot_init needs positive dims, got ({rows}, {cols})")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, (rows, cols))
