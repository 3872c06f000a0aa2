"""Vectorised evaluation over bit-pattern codes.

Every operation here is a lookup into a table filled by the scalar routines
in fpcore, so results are bit-identical to them.  Arrays hold bit patterns
(uint16); -0 and NaN payloads are canonicalised on entry.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import fpcore as fc
from .fpcore import FpFormat

MAX_TABLE_BITS = 11


class Kernel:
    """Lookup tables for one format."""

    def __init__(self, fmt: FpFormat):
        if fmt.nbits > MAX_TABLE_BITS:
            raise fc.FormatError(f"{fmt} is too wide for table evaluation")
        self.fmt = fmt
        size = 2 ** fmt.nbits
        decoded = [fc.decode_bits(b, fmt) for b in range(size)]
        canon = np.array([fc.encode_bits(v, fmt) for v in decoded], dtype=np.uint16)
        self.canon = canon
        self.values = fc.enumerate_all(fmt)
        codes = np.array([fc.encode_bits(v, fmt) for v in self.values], dtype=np.uint16)
        self.codes = codes
        n = len(self.values)

        self.zero = int(fc.encode_bits(fc.zero(fmt), fmt))
        self.one = int(fc.encode_bits(fc.one(fmt), fmt))
        self.nan = int(fc.encode_bits(fc.FNAN, fmt))
        self.pinf = int(fc.encode_bits(fc.PINF, fmt))
        self.ninf = int(fc.encode_bits(fc.NINF, fmt))
        self.minus_one = int(fc.encode_bits(fc.minus_one(fmt), fmt))

        def binary(op):
            t = np.empty((size, size), dtype=np.uint16)
            res = np.empty((n, n), dtype=np.uint16)
            for i, x in enumerate(self.values):
                for j, y in enumerate(self.values):
                    res[i, j] = fc.encode_bits(op(x, y, fmt), fmt)
            # expand to every raw pattern through the canonical map
            idx = np.full(size, -1, dtype=np.int64)
            idx[codes] = np.arange(n)
            ci = idx[canon]
            t[:, :] = res[ci[:, None], ci[None, :]]
            return t

        def unary(op):
            return np.array([fc.encode_bits(op(v, fmt), fmt) for v in decoded], dtype=np.uint16)

        self.add = binary(fc.fp_add)
        self.mul = binary(fc.fp_mul)
        self.relu = unary(fc.rounded_relu)
        self.exp = unary(fc.rounded_exp)
        self.neg = self.mul[self.minus_one]
        self.is_finite = np.array([v.kind == fc.FINITE for v in decoded])
        self.is_nan = np.array([v.kind == fc.NAN for v in decoded])
        # rank for ordering: -inf < finite (by value) < +inf; NaN handled apart
        order = sorted(range(n), key=lambda i: fc.sort_key(self.values[i], fmt))
        rank_c = np.empty(n, dtype=np.int32)
        rank_c[order] = np.arange(n)
        idx = np.full(size, -1, dtype=np.int64)
        idx[codes] = np.arange(n)
        self.rank = rank_c[idx[canon]]
        self.value_of = {int(c): v for c, v in zip(codes, self.values)}
        self._div = None

    # --- conversion -------------------------------------------------------
    def encode(self, x: fc.Fp) -> int:
        return fc.encode_bits(x, self.fmt)

    def decode(self, c: int) -> fc.Fp:
        return self.value_of[int(self.canon[int(c)])]

    def encode_array(self, rows) -> np.ndarray:
        return np.array([[self.encode(v) for v in row] for row in rows], dtype=np.uint16)

    # --- elementwise ------------------------------------------------------
    def sub(self, a, b):
        return self.add[a, self.neg[b]]

    def _div_tables(self):
        if self._div is None:
            size = len(self.canon)
            ok = np.zeros((size, size), dtype=bool)
            table = np.full((size, size), self.nan, dtype=np.uint16)
            # y = NaN: any x, result NaN
            ok[:, self.is_nan] = True
            pos = [v for v in self.values if v.kind == fc.FINITE and v.sign > 0]
            for iy, y in enumerate(pos):
                if y.is_zero:
                    continue
                ys = self.canon == self.encode(y)
                for x in pos[:iy + 1]:
                    xs = self.canon == self.encode(x)
                    sel = np.ix_(xs, ys)
                    ok[sel] = True
                    table[sel] = self.encode(fc.fp_div(x, y, self.fmt))
            self._div = (ok, table)
        return self._div

    def div(self, a, b):
        """Elementwise fp_div; every pair must lie in the softmax domain."""
        ok_t, table = self._div_tables()
        a, b = np.broadcast_arrays(np.asarray(a), np.asarray(b))
        ok = ok_t[a, b]
        if not ok.all():
            bad = tuple(np.argwhere(~ok)[0])
            x, y = self.decode(a[bad]), self.decode(b[bad])
            fc.div_violations.bump()
            raise fc.DivDomainError(f"fp_div({x!r}, {y!r}) outside the softmax domain")
        return table[a, b]

    # --- reductions -------------------------------------------------------
    def fold_add(self, terms, axis: int = 0):
        """Left-to-right (+) over one axis."""
        terms = np.moveaxis(np.asarray(terms), axis, 0)
        if terms.shape[0] == 0:
            raise ValueError("empty reduction")
        acc = terms[0].copy()
        for k in range(1, terms.shape[0]):
            acc = self.add[acc, terms[k]]
        return acc

    def max(self, x, axis: int = 0):
        """Max along an axis with NaN absorbing."""
        x = np.asarray(x)
        r = self.rank[x]
        idx = np.argmax(r, axis=axis)
        out = np.take_along_axis(x, np.expand_dims(idx, axis), axis).squeeze(axis)
        anynan = self.is_nan[x].any(axis=axis)
        out = np.where(anynan, self.nan, out).astype(np.uint16)
        return out

    # --- matrix products --------------------------------------------------
    def matmul(self, W, X):
        """(W (x) X)_ij = left fold over k ascending of W_ik (x) X_kj.

        X may carry extra trailing axes; the fold is over X's first axis.
        """
        W = np.asarray(W)
        X = np.asarray(X)
        if W.shape[1] != X.shape[0]:
            raise ValueError(f"inner dimensions differ: {W.shape} vs {X.shape}")
        extra = (None,) * (X.ndim - 1)
        acc = self.mul[W[(slice(None), 0) + extra], X[0][None]]
        for k in range(1, W.shape[1]):
            acc = self.add[acc, self.mul[W[(slice(None), k) + extra], X[k][None]]]
        return acc

    def sparse_matmul(self, S: "SparseCodes", X):
        """Same result as matmul(S.dense(), X) without visiting stored-free zeros.

        A zero weight contributes 0 (x) x_k.  For finite x_k that term is an
        exact 0 and a (+) 0 == a for every a, so it can be dropped.  When x_k
        is infinite or NaN the term is NaN and poisons the sum; that case is
        patched afterwards.
        """
        X = np.asarray(X)
        if S.cols != X.shape[0]:
            raise ValueError(f"inner dimensions differ: {S.shape} vs {X.shape}")
        out = np.full((S.rows,) + X.shape[1:], self.zero, dtype=np.uint16)
        extra = (None,) * (X.ndim - 1)
        for rows, idx, val, width in S.buckets:
            acc = np.full((len(rows),) + X.shape[1:], self.zero, dtype=np.uint16)
            for t in range(idx.shape[1]):
                prod = self.mul[val[(slice(None), t) + extra], X[idx[:, t]]]
                live = (t < width)[(slice(None),) + extra]
                acc = self.add[acc, np.where(live, prod, self.zero)]
            out[rows] = acc
        bad = ~self.is_finite[X]
        if bad.any():
            self._patch_nonfinite(S, X, bad, out)
        return out

    def _patch_nonfinite(self, S, X, bad, out):
        flatX = bad.reshape(bad.shape[0], -1)
        flat_out = out.reshape(out.shape[0], -1)
        for col in np.flatnonzero(flatX.any(axis=0)):
            ks = set(np.flatnonzero(flatX[:, col]).tolist())
            for i in range(S.rows):
                stored = S.row_cols[i]
                if any(k not in stored for k in ks):
                    flat_out[i, col] = self.nan


class SparseCodes:
    """Row-bucketed sparse matrix of codes, padded within each bucket."""

    def __init__(self, rows: int, cols: int, entries: dict, kernel: Kernel):
        self.rows, self.cols = rows, cols
        self.shape = (rows, cols)
        per_row = [[] for _ in range(rows)]
        for (i, j), c in sorted(entries.items()):
            per_row[i].append((j, c))
        self.row_cols = [set(j for j, _ in r) for r in per_row]
        self.entries = dict(entries)
        groups = {}
        for i, r in enumerate(per_row):
            if not r:
                continue
            width = 1 << (len(r) - 1).bit_length()
            groups.setdefault(width, []).append(i)
        self.buckets = []
        for width, rws in sorted(groups.items()):
            idx = np.zeros((len(rws), width), dtype=np.int64)
            val = np.full((len(rws), width), kernel.zero, dtype=np.uint16)
            used = np.zeros(len(rws), dtype=np.int64)
            for a, i in enumerate(rws):
                used[a] = len(per_row[i])
                for t, (j, c) in enumerate(per_row[i]):
                    idx[a, t] = j
                    val[a, t] = c
            # padding slots are masked out (their term is an exact 0)
            self.buckets.append((np.array(rws), idx, val, used))

    def dense(self, kernel: Kernel) -> np.ndarray:
        out = np.full(self.shape, kernel.zero, dtype=np.uint16)
        for (i, j), c in self.entries.items():
            out[i, j] = c
        return out


@lru_cache(maxsize=None)
def kernel_for(fmt: FpFormat) -> Kernel:
    return Kernel(fmt)
