"""Dense float64 matrix kernel with deterministic RNG and logical allocation accounting.

Everything downstream (projections, attention variants, gradients, benchmarks)
is built on this module. Matrices are immutable, row-major, float64-only;
there are no views, no broadcasting, and no internal parallelism. Every
result matrix is registered with the active :class:`AllocationLedger` at
creation time, which is how the benchmark harness measures peak memory as an
exact float count instead of process RSS.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "ContractViolation",
    "AllocationLedger",
    "use_ledger",
    "active_ledger",
    "Matrix",
    "Rng",
    "matmul",
    "matmul_nt",
    "matmul_tn",
    "row_softmax",
    "row_softmax_of_product",
    "scale",
    "transpose",
    "add",
    "frobenius_dot",
]


class ContractViolation(ValueError):
    """A caller broke an operation's precondition (shape mismatch, bad argument)."""


class AllocationLedger:
    """Exact logical accounting of floats allocated by library operations.

    Every matrix constructed while the ledger is active adds rows*cols to
    ``current_floats``. Nothing is ever subtracted: the model assumes all
    intermediates of a tracked scope stay live until the scope ends, so
    within a scope ``peak_floats`` equals the total allocated. Operation
    internal workspace of O(rows) floats (row maxima, row sums) is not
    counted; only result matrices are.

    The ledger is the one mutable type in this library and must be confined
    to a single benchmarking thread.
    """

    __slots__ = ("current_floats", "peak_floats")

    def __init__(self) -> None:
        self.current_floats = 0
        self.peak_floats = 0

    def register(self, n_floats: int) -> None:
        self.current_floats += n_floats
        if self.current_floats > self.peak_floats:
            self.peak_floats = self.current_floats

    def __repr__(self) -> str:
        return (
            f"AllocationLedger(current_floats={self.current_floats}, "
            f"peak_floats={self.peak_floats})"
        )


_ACTIVE_LEDGER: AllocationLedger | None = None


def active_ledger() -> AllocationLedger | None:
    """Return the ledger currently collecting allocations, if any."""
    return _ACTIVE_LEDGER


@contextmanager
def use_ledger(ledger: AllocationLedger) -> Iterator[AllocationLedger]:
    """Install ``ledger`` as the active allocation ledger for the with-block.

    Scopes may nest (the previous ledger is restored on exit) but must not be
    shared across threads.
    """
    global _ACTIVE_LEDGER
    previous = _ACTIVE_LEDGER
    _ACTIVE_LEDGER = ledger
    try:
        yield ledger
    finally:
        _ACTIVE_LEDGER = previous


class Matrix:
    """Immutable dense row-major float64 matrix.

    ``data`` is a C-contiguous ``(rows, cols)`` ndarray; row-major order is
    the storage contract. Instances are frozen by convention: operations
    never mutate an existing matrix, they construct new ones. Construction
    validates shape and finiteness and registers rows*cols floats with the
    active ledger.
    """

    __slots__ = ("data",)

    def __init__(self, rows: int, cols: int, data) -> None:
        if rows < 1 or cols < 1:
            raise ContractViolation(f"matrix dimensions must be positive, got {rows}x{cols}")
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            if arr.size != rows * cols:
                raise ContractViolation(
                    f"flat data of length {arr.size} does not fill a {rows}x{cols} matrix"
                )
            arr = arr.reshape(rows, cols)
        elif arr.shape != (rows, cols):
            raise ContractViolation(
                f"data of shape {arr.shape} does not match declared shape {rows}x{cols}"
            )
        arr = np.ascontiguousarray(arr)
        if not np.isfinite(arr).all():
            raise ContractViolation("matrix entries must be finite (no NaN/Inf)")
        object.__setattr__(self, "data", arr)
        if _ACTIVE_LEDGER is not None:
            _ACTIVE_LEDGER.register(rows * cols)

    def __setattr__(self, name, value):  # pragma: no cover - guard only
        raise AttributeError("Matrix is immutable")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def from_rows(cls, rows_of_values: Sequence[Sequence[float]]) -> "Matrix":
        arr = np.asarray(rows_of_values, dtype=np.float64)
        if arr.ndim != 2:
            raise ContractViolation("from_rows expects a rectangular list of rows")
        return cls(arr.shape[0], arr.shape[1], arr)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls(rows, cols, np.zeros((rows, cols)))

    @classmethod
    def identity(cls, n: int) -> "Matrix":
        return cls(n, n, np.eye(n))

    def tolist(self) -> list[list[float]]:
        return self.data.tolist()

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


class Rng:
    """Deterministic random source: PCG64 behind numpy's Generator.

    Identical seeds produce identical streams across runs and platforms.
    """

    algorithm = "pcg64"

    def __init__(self, seed: int) -> None:
        if not 0 <= int(seed) < 2**64:
            raise ContractViolation(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, rows: int, cols: int, low: float = -1.0, high: float = 1.0) -> Matrix:
        """Matrix with i.i.d. entries uniform in [low, high)."""
        return Matrix(rows, cols, self._gen.uniform(low, high, size=(rows, cols)))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, algorithm={self.algorithm!r})"


def _check_inner(a: Matrix, a_cols: int, b: Matrix, b_rows: int, op: str) -> None:
    if a_cols != b_rows:
        raise ContractViolation(
            f"{op}: inner dimensions differ for {a.rows}x{a.cols} and {b.rows}x{b.cols}"
        )


def matmul(a: Matrix, b: Matrix, scale_by: float | None = None) -> Matrix:
    """Standard product a @ b, optionally scaled in the result buffer.

    ``scale_by`` multiplies the freshly allocated result in place before it
    is wrapped, so a scaled product still costs a single result allocation.
    """
    _check_inner(a, a.cols, b, b.rows, "matmul")
    raw = a.data @ b.data
    if scale_by is not None:
        raw *= scale_by
    return Matrix(a.rows, b.cols, raw)


def matmul_nt(a: Matrix, b: Matrix, scale_by: float | None = None) -> Matrix:
    """Product a @ b^T without materializing the transpose."""
    _check_inner(a, a.cols, b, b.cols, "matmul_nt")
    raw = a.data @ b.data.T
    if scale_by is not None:
        raw *= scale_by
    return Matrix(a.rows, b.rows, raw)


def matmul_tn(a: Matrix, b: Matrix, scale_by: float | None = None) -> Matrix:
    """Product a^T @ b without materializing the transpose."""
    _check_inner(a, a.rows, b, b.rows, "matmul_tn")
    raw = a.data.T @ b.data
    if scale_by is not None:
        raw *= scale_by
    return Matrix(a.cols, b.cols, raw)


def _normalize_rows_inplace(raw: np.ndarray) -> None:
    # Shift by the row max before exponentiating; exp then cannot overflow.
    raw -= raw.max(axis=1, keepdims=True)
    np.exp(raw, out=raw)
    raw /= raw.sum(axis=1, keepdims=True)


def row_softmax(m: Matrix) -> Matrix:
    """Row-wise softmax: each output row sums to 1, entries in (0, 1].

    Computed with per-row max subtraction so arbitrarily large finite logits
    do not overflow.
    """
    raw = m.data - m.data.max(axis=1, keepdims=True)
    np.exp(raw, out=raw)
    raw /= raw.sum(axis=1, keepdims=True)
    return Matrix(m.rows, m.cols, raw)


def row_softmax_of_product(a: Matrix, b: Matrix, shift: float = 0.0) -> Matrix:
    """Row softmax of a @ b^T in a single result allocation.

    The similarity logits are normalized in their own buffer before being
    wrapped, so the pairwise map costs exactly a.rows * b.rows floats rather
    than two copies of it. ``shift`` adds a constant to every logit first
    (softmax is invariant to it; exposed as a diagnostic hook).
    """
    _check_inner(a, a.cols, b, b.cols, "row_softmax_of_product")
    raw = a.data @ b.data.T
    if shift:
        raw += shift
    _normalize_rows_inplace(raw)
    return Matrix(a.rows, b.rows, raw)


def scale(m: Matrix, s: float) -> Matrix:
    """Elementwise multiple s * m."""
    return Matrix(m.rows, m.cols, m.data * s)


def transpose(m: Matrix) -> Matrix:
    """Transposed copy; transpose(transpose(m)) reproduces m exactly."""
    return Matrix(m.cols, m.rows, m.data.T.copy())


def add(a: Matrix, b: Matrix) -> Matrix:
    """Elementwise sum; shapes must match."""
    if a.shape != b.shape:
        raise ContractViolation(f"add: shapes differ, {a.rows}x{a.cols} vs {b.rows}x{b.cols}")
    return Matrix(a.rows, a.cols, a.data + b.data)


def frobenius_dot(a: Matrix, b: Matrix) -> float:
    """Sum of elementwise products (the Frobenius inner product)."""
    if a.shape != b.shape:
        raise ContractViolation(
            f"frobenius_dot: shapes differ, {a.rows}x{a.cols} vs {b.rows}x{b.cols}"
        )
    return float(np.vdot(a.data, b.data))
