"""Matrices over a float format, with left-to-right reduction order.

Every sum is folded strictly from the first index to the last; the order is
part of the result, not an implementation detail.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import fpcore as fc
from .fpcore import Fp, FpFormat
from .kernel import SparseCodes, kernel_for


class ShapeError(ValueError):
    pass


class FpMatrix:
    """Dense rows x cols matrix; entries held as canonical bit patterns."""

    __slots__ = ("fmt", "codes")

    def __init__(self, fmt: FpFormat, codes):
        k = kernel_for(fmt)
        codes = np.asarray(codes)
        if codes.ndim != 2 or codes.shape[0] < 1 or codes.shape[1] < 1:
            raise ShapeError(f"need a non-empty 2-D array, got shape {codes.shape}")
        self.fmt = fmt
        self.codes = k.canon[codes.astype(np.int64)]
        self.codes.setflags(write=False)

    # construction helpers
    @classmethod
    def from_fp(cls, rows: Sequence[Sequence[Fp]], fmt: FpFormat) -> "FpMatrix":
        k = kernel_for(fmt)
        return cls(fmt, k.encode_array(rows))

    @classmethod
    def from_values(cls, rows, fmt: FpFormat) -> "FpMatrix":
        """Build from exact literals (ints, Fractions, strings, Fp)."""
        return cls.from_fp([[fc.fp(v, fmt) for v in row] for row in rows], fmt)

    @classmethod
    def zeros(cls, rows: int, cols: int, fmt: FpFormat) -> "FpMatrix":
        return cls(fmt, np.full((rows, cols), kernel_for(fmt).zero, dtype=np.uint16))

    @classmethod
    def column(cls, values: Sequence[Fp], fmt: FpFormat) -> "FpMatrix":
        return cls.from_fp([[v] for v in values], fmt)

    @property
    def rows(self) -> int:
        return self.codes.shape[0]

    @property
    def cols(self) -> int:
        return self.codes.shape[1]

    @property
    def shape(self):
        return self.codes.shape

    @property
    def entries(self) -> list[Fp]:
        """Row-major list of entries."""
        k = kernel_for(self.fmt)
        return [k.decode(c) for c in self.codes.ravel()]

    def get(self, i: int, j: int) -> Fp:
        return kernel_for(self.fmt).decode(self.codes[i, j])

    def to_rows(self) -> list[list[Fp]]:
        k = kernel_for(self.fmt)
        return [[k.decode(c) for c in row] for row in self.codes]

    def col(self, j: int) -> list[Fp]:
        k = kernel_for(self.fmt)
        return [k.decode(c) for c in self.codes[:, j]]

    def transpose(self) -> "FpMatrix":
        return FpMatrix(self.fmt, self.codes.T)

    def dense(self) -> "FpMatrix":
        return self

    def __eq__(self, other) -> bool:
        if isinstance(other, SparseFpMatrix):
            other = other.dense()
        if not isinstance(other, FpMatrix):
            return NotImplemented
        return (self.fmt == other.fmt and self.shape == other.shape
                and bool((self.codes == other.codes).all()))

    def __hash__(self):
        return hash((self.fmt, self.shape, self.codes.tobytes()))

    def __repr__(self) -> str:
        body = "; ".join(
            ", ".join(fc.render(v, self.fmt) for v in row) for row in self.to_rows())
        return f"FpMatrix[{self.rows}x{self.cols}]({body})"


class SparseFpMatrix:
    """Matrix stored as its nonzero entries.

    Semantically identical to the dense matrix with zeros elsewhere; products
    use a kernel that skips only terms proven to be an exact 0.
    """

    def __init__(self, rows: int, cols: int, entries: dict, fmt: FpFormat):
        if rows < 1 or cols < 1:
            raise ShapeError("sparse matrix needs positive shape")
        k = kernel_for(fmt)
        clean = {}
        for (i, j), v in entries.items():
            if not (0 <= i < rows and 0 <= j < cols):
                raise ShapeError(f"entry ({i},{j}) outside {rows}x{cols}")
            c = int(k.canon[v if isinstance(v, (int, np.integer)) else k.encode(v)])
            if c != k.zero:
                clean[(i, j)] = c
        self.fmt = fmt
        self.shape = (rows, cols)
        self.entries_map = clean
        self._sparse = None

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    @property
    def nnz(self) -> int:
        return len(self.entries_map)

    @property
    def sparse_codes(self) -> SparseCodes:
        if self._sparse is None:
            self._sparse = SparseCodes(self.rows, self.cols, self.entries_map, kernel_for(self.fmt))
        return self._sparse

    def dense(self) -> FpMatrix:
        k = kernel_for(self.fmt)
        out = np.full(self.shape, k.zero, dtype=np.uint16)
        for (i, j), c in self.entries_map.items():
            out[i, j] = c
        return FpMatrix(self.fmt, out)

    @classmethod
    def from_dense(cls, M: FpMatrix) -> "SparseFpMatrix":
        k = kernel_for(M.fmt)
        ii, jj = np.nonzero(M.codes != k.zero)
        return cls(M.rows, M.cols, {(int(i), int(j)): int(M.codes[i, j]) for i, j in zip(ii, jj)}, M.fmt)

    def get(self, i: int, j: int) -> Fp:
        k = kernel_for(self.fmt)
        return k.decode(self.entries_map.get((i, j), k.zero))

    def __eq__(self, other) -> bool:
        if isinstance(other, (FpMatrix, SparseFpMatrix)):
            return self.dense() == other.dense()
        return NotImplemented

    def __repr__(self) -> str:
        return f"SparseFpMatrix[{self.rows}x{self.cols}, nnz={self.nnz}]"


AnyMatrix = "FpMatrix | SparseFpMatrix"


def _check_fmt(fmt, *ms):
    for m in ms:
        if fmt is not None and m.fmt != fmt:
            raise ValueError(f"matrix format {m.fmt} differs from {fmt}")


def codes_matmul(W, X: np.ndarray, fmt: FpFormat) -> np.ndarray:
    """W (x) X on raw code arrays; X may have trailing batch axes."""
    k = kernel_for(fmt)
    if isinstance(W, SparseFpMatrix):
        return k.sparse_matmul(W.sparse_codes, X)
    return k.matmul(W.codes, X)


def mat_add(M: FpMatrix, N: FpMatrix, fmt: FpFormat | None = None) -> FpMatrix:
    """Elementwise (+)."""
    M, N = M.dense(), N.dense()
    _check_fmt(fmt, M, N)
    if M.shape != N.shape:
        raise ShapeError(f"shape mismatch {M.shape} vs {N.shape}")
    return FpMatrix(M.fmt, kernel_for(M.fmt).add[M.codes, N.codes])


def mat_mul(M, N, fmt: FpFormat | None = None) -> FpMatrix:
    """(M (x) N)_ij = M_i1 (x) N_1j (+) M_i2 (x) N_2j (+) ... in that order."""
    N = N.dense()
    _check_fmt(fmt, M, N)
    if M.cols != N.rows:
        raise ShapeError(f"inner dimensions differ: {M.shape} vs {N.shape}")
    return FpMatrix(N.fmt, codes_matmul(M, N.codes, N.fmt))


def broadcast_bias(b, n: int, fmt: FpFormat | None = None) -> FpMatrix:
    """b 1_n^T as an exact copy of the column b."""
    if isinstance(b, FpMatrix):
        if b.cols != 1:
            raise ShapeError("bias must be a column")
        _check_fmt(fmt, b)
        return FpMatrix(b.fmt, np.repeat(b.codes, n, axis=1))
    if fmt is None:
        raise ValueError("fmt is required for a list bias")
    col = FpMatrix.column(list(b), fmt)
    return FpMatrix(fmt, np.repeat(col.codes, n, axis=1))


def hadamard_scale(M: FpMatrix, s: Fp) -> FpMatrix:
    k = kernel_for(M.fmt)
    return FpMatrix(M.fmt, k.mul[k.encode(s), M.codes])


# --------------------------------------------------------------------------
# permutations (0-based storage; pi.mapping[j] is pi(j))

@dataclass(frozen=True)
class Permutation:
    mapping: tuple

    def __post_init__(self):
        m = tuple(int(v) for v in self.mapping)
        if sorted(m) != list(range(len(m))):
            raise ValueError(f"{m} is not a bijection on range({len(m)})")
        object.__setattr__(self, "mapping", m)

    @property
    def n(self) -> int:
        return len(self.mapping)

    def __call__(self, i: int) -> int:
        return self.mapping[i]

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def from_one_based(cls, values: Iterable[int]) -> "Permutation":
        return cls(tuple(v - 1 for v in values))


def compose(a: Permutation, b: Permutation) -> Permutation:
    """(a o b)(i) = a(b(i))."""
    if a.n != b.n:
        raise ShapeError("permutation sizes differ")
    return Permutation(tuple(a.mapping[b.mapping[i]] for i in range(a.n)))


def invert(a: Permutation) -> Permutation:
    inv = [0] * a.n
    for i, v in enumerate(a.mapping):
        inv[v] = i
    return Permutation(tuple(inv))


def swap12(n: int) -> Permutation:
    if n < 2:
        raise ValueError("swap12 needs n >= 2")
    return Permutation((1, 0) + tuple(range(2, n)))


def cycle(n: int) -> Permutation:
    """The n-cycle i -> i+1 mod n."""
    return Permutation(tuple((i + 1) % n for i in range(n)))


def permute_columns(pi: Permutation, M: FpMatrix) -> FpMatrix:
    """Column j of the result is column pi(j) of M."""
    M = M.dense()
    if pi.n != M.cols:
        raise ShapeError(f"permutation of size {pi.n} applied to {M.cols} columns")
    return FpMatrix(M.fmt, M.codes[:, list(pi.mapping)])


def permute_codes(pi: Permutation, codes: np.ndarray) -> np.ndarray:
    """Same action on a (d, ..., n) code array (tokens on the last axis)."""
    return codes[..., list(pi.mapping)]
