"""Float transformer: softmax, attention, feed-forward blocks and full models.

All evaluation goes through the table kernel, so every intermediate is a
float of the model's format and every sum is a left fold.  Batched entry
points take code arrays shaped (d, B, n): B independent sequences of n
tokens each.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import fpcore as fc
from .fpcore import Fp, FpFormat
from .kernel import kernel_for
from .linalg import FpMatrix, ShapeError, SparseFpMatrix, codes_matmul

Matrix = "FpMatrix | SparseFpMatrix"


def _col(b, fmt: FpFormat) -> FpMatrix:
    if isinstance(b, FpMatrix):
        if b.cols != 1:
            raise ShapeError("bias must be a single column")
        return b
    return FpMatrix.column(list(b), fmt)


@dataclass(frozen=True)
class FfParams:
    W1: object  # r x d
    b1: FpMatrix  # r x 1
    W2: object  # d x r
    b2: FpMatrix  # d x 1

    def __post_init__(self):
        r, d = self.W1.shape
        if self.W2.shape != (d, r) or self.b1.shape != (r, 1) or self.b2.shape != (d, 1):
            raise ShapeError(
                f"feed-forward shapes disagree: W1 {self.W1.shape}, b1 {self.b1.shape}, "
                f"W2 {self.W2.shape}, b2 {self.b2.shape}")

    @property
    def r(self) -> int:
        return self.W1.shape[0]

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    @classmethod
    def zero(cls, d: int, r: int, fmt: FpFormat) -> "FfParams":
        return cls(SparseFpMatrix(r, d, {}, fmt), FpMatrix.zeros(r, 1, fmt),
                   SparseFpMatrix(d, r, {}, fmt), FpMatrix.zeros(d, 1, fmt))


@dataclass(frozen=True)
class AttnHead:
    WK: object  # m x d
    WQ: object
    WV: object
    WO: object  # d x m

    def __post_init__(self):
        m, d = self.WK.shape
        if self.WQ.shape != (m, d) or self.WV.shape != (m, d) or self.WO.shape != (d, m):
            raise ShapeError("attention head shapes disagree")

    @property
    def m(self) -> int:
        return self.WK.shape[0]

    @property
    def d(self) -> int:
        return self.WK.shape[1]


@dataclass(frozen=True)
class AttnParams:
    heads: tuple

    def __post_init__(self):
        heads = tuple(self.heads)
        if not heads:
            raise ValueError("attention needs at least one head")
        if len({(h.m, h.d) for h in heads}) != 1:
            raise ShapeError("all heads must share (m, d)")
        object.__setattr__(self, "heads", heads)

    @property
    def h(self) -> int:
        return len(self.heads)

    @property
    def m(self) -> int:
        return self.heads[0].m

    @property
    def d(self) -> int:
        return self.heads[0].d

    @classmethod
    def zero(cls, d: int, m: int, fmt: FpFormat, h: int = 1) -> "AttnParams":
        z = lambda a, b: SparseFpMatrix(a, b, {}, fmt)  # noqa: E731
        return cls(tuple(AttnHead(z(m, d), z(m, d), z(m, d), z(d, m)) for _ in range(h)))


@dataclass(frozen=True)
class BlockStack:
    blocks: tuple  # of (AttnParams, FfParams)
    dims: tuple  # (h, m, r, d, n); n may be None for any length

    def __post_init__(self):
        blocks = tuple((a, f) for a, f in self.blocks)
        h, m, r, d, _n = self.dims
        for a, f in blocks:
            if (a.h, a.m, a.d) != (h, m, d) or (f.r, f.d) != (r, d):
                raise ShapeError(f"block does not conform to dims {self.dims}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def d(self) -> int:
        return self.dims[3]

    def __add__(self, other: "BlockStack") -> "BlockStack":
        if self.dims != other.dims:
            raise ShapeError("stacks with different dims")
        return BlockStack(self.blocks + other.blocks, self.dims)


@dataclass(frozen=True)
class TransformerModel:
    W_in: object  # d x d_in
    b_in: FpMatrix
    stack: BlockStack
    W_out: object  # d_out x d
    b_out: FpMatrix
    fmt: FpFormat
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        d = self.W_in.shape[0]
        if self.b_in.shape != (d, 1) or self.W_out.shape[1] != d or self.b_out.shape != (self.W_out.shape[0], 1):
            raise ShapeError("projection shapes disagree")
        if self.stack.blocks and self.stack.d != d:
            raise ShapeError("stack width differs from the projections")

    @property
    def d_in(self) -> int:
        return self.W_in.shape[1]

    @property
    def d_out(self) -> int:
        return self.W_out.shape[0]

    @property
    def d(self) -> int:
        return self.W_in.shape[0]


# --------------------------------------------------------------------------
# scalar softmax (reference path over Fp values)

def softmax_col(x: Sequence[Fp], fmt: FpFormat) -> list[Fp]:
    """exp(x_i - x*) / (sum_j exp(x_j - x*)), all rounded, sum folded left."""
    xs = list(x)
    if not xs:
        raise ValueError("softmax of an empty column")
    top = fc.fp_max(xs, fmt)
    num = [fc.rounded_exp(fc.fp_sub(v, top, fmt), fmt) for v in xs]
    den = fc.left_sum(num, fmt)
    return [fc.fp_div(a, den, fmt) for a in num]


# --------------------------------------------------------------------------
# batched code-array evaluation

def _bias(b: FpMatrix, ndim: int) -> np.ndarray:
    return b.codes[:, 0].reshape((-1,) + (1,) * (ndim - 1))


def softmax_codes(S: np.ndarray, fmt: FpFormat, axis: int = -2) -> np.ndarray:
    """Column softmax of score arrays; the reduction runs along `axis`."""
    k = kernel_for(fmt)
    top = np.expand_dims(k.max(S, axis=axis), axis)
    e = k.exp[k.sub(S, top)]
    den = np.expand_dims(k.fold_add(e, axis=axis), axis)
    return k.div(e, den)


def ff_codes(X: np.ndarray, ff: FfParams, fmt: FpFormat) -> np.ndarray:
    k = kernel_for(fmt)
    H = k.relu[k.add[codes_matmul(ff.W1, X, fmt), _bias(ff.b1, X.ndim)]]
    Y = k.add[codes_matmul(ff.W2, H, fmt), _bias(ff.b2, X.ndim)]
    return k.add[X, Y]


def _scores(K: np.ndarray, Q: np.ndarray, k) -> np.ndarray:
    # (K^T (x) Q)[b, i, j] = fold over rows t of K[t, b, i] (x) Q[t, b, j]
    acc = k.mul[K[0][:, :, None], Q[0][:, None, :]]
    for t in range(1, K.shape[0]):
        acc = k.add[acc, k.mul[K[t][:, :, None], Q[t][:, None, :]]]
    return acc


def _apply_weights(V: np.ndarray, S: np.ndarray, k) -> np.ndarray:
    # (V (x) S)[t, b, j] = fold over i of V[t, b, i] (x) S[b, i, j]
    acc = k.mul[V[:, :, 0, None], S[None, :, 0, :]]
    for i in range(1, V.shape[2]):
        acc = k.add[acc, k.mul[V[:, :, i, None], S[None, :, i, :]]]
    return acc


def attn_codes(X: np.ndarray, attn: AttnParams, fmt: FpFormat) -> np.ndarray:
    """X shaped (d, B, n)."""
    k = kernel_for(fmt)
    total = None
    for head in attn.heads:
        K = codes_matmul(head.WK, X, fmt)
        Q = codes_matmul(head.WQ, X, fmt)
        V = codes_matmul(head.WV, X, fmt)
        S = softmax_codes(_scores(K, Q, k), fmt, axis=1)
        out = codes_matmul(head.WO, _apply_weights(V, S, k), fmt)
        total = out if total is None else k.add[total, out]
    return k.add[X, total]


def stack_codes(X: np.ndarray, stack: BlockStack, fmt: FpFormat) -> np.ndarray:
    for attn, ff in stack.blocks:
        X = ff_codes(attn_codes(X, attn, fmt), ff, fmt)
    return X


def forward_codes(model: TransformerModel, X: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Evaluate a batch of inputs shaped (d_in, B, n); returns (d_out, B, n)."""
    fmt = model.fmt
    k = kernel_for(fmt)
    X = k.canon[np.asarray(X).astype(np.int64)]
    if X.ndim != 3 or X.shape[0] != model.d_in:
        raise ShapeError(f"expected input shaped ({model.d_in}, B, n), got {X.shape}")
    outs = []
    for s in range(0, X.shape[1], chunk):
        Z = X[:, s:s + chunk]
        Z = k.add[codes_matmul(model.W_in, Z, fmt), _bias(model.b_in, 3)]
        Z = stack_codes(Z, model.stack, fmt)
        outs.append(k.add[codes_matmul(model.W_out, Z, fmt), _bias(model.b_out, 3)])
    return np.concatenate(outs, axis=1)


# --------------------------------------------------------------------------
# matrix-level entry points

def _as_batch(X: FpMatrix) -> np.ndarray:
    return X.codes[:, None, :]


def ff_forward(X: FpMatrix, ff: FfParams, fmt: FpFormat | None = None) -> FpMatrix:
    fmt = fmt or X.fmt
    if X.rows != ff.d:
        raise ShapeError(f"input has {X.rows} rows, block expects {ff.d}")
    return FpMatrix(fmt, ff_codes(X.codes, ff, fmt))


def attn_forward(X: FpMatrix, attn: AttnParams, fmt: FpFormat | None = None) -> FpMatrix:
    fmt = fmt or X.fmt
    if X.rows != attn.d:
        raise ShapeError(f"input has {X.rows} rows, attention expects {attn.d}")
    return FpMatrix(fmt, attn_codes(_as_batch(X), attn, fmt)[:, 0, :])


def block_forward(X: FpMatrix, stack: BlockStack, fmt: FpFormat | None = None) -> FpMatrix:
    fmt = fmt or X.fmt
    if stack.blocks and X.rows != stack.d:
        raise ShapeError("input width differs from the stack")
    return FpMatrix(fmt, stack_codes(_as_batch(X), stack, fmt)[:, 0, :])


def model_forward(X: FpMatrix, model: TransformerModel) -> FpMatrix:
    if X.fmt != model.fmt:
        raise ValueError("input format differs from the model format")
    return FpMatrix(model.fmt, forward_codes(model, _as_batch(X))[:, 0, :])


# --------------------------------------------------------------------------
# predicates

def is_ab_similar(X: FpMatrix, Y: FpMatrix, a: int, b: int) -> bool:
    """(a, b)-similarity with 1-based block boundaries, compared bit-exactly."""
    if X.shape != Y.shape:
        raise ShapeError("similarity needs equal shapes")
    n = X.cols
    if not 1 <= a < b <= n:
        raise ValueError(f"need 1 <= a < b <= n, got a={a}, b={b}, n={n}")
    return codes_ab_similar(X.codes, Y.codes, a, b)


def codes_ab_similar(X: np.ndarray, Y: np.ndarray, a: int, b: int) -> bool:
    """Same test on code arrays shaped (d, n)."""
    z1 = X[:, 0]
    z2 = X[:, a]

    def const(M, z):
        return bool((M == z[:, None]).all())

    return (const(X[:, :a], z1) and const(X[:, a:b], z2)
            and const(Y[:, :a - 1], z1) and const(Y[:, a - 1:b], z2)
            and bool((X[:, b:] == Y[:, b:]).all()))


def is_distinct_tokens(X: FpMatrix) -> bool:
    cols = {X.codes[:, j].tobytes() for j in range(X.cols)}
    return len(cols) == X.cols
