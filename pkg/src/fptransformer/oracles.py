"""Independent reference implementations used to check the main code paths.

Nothing here calls the rounding routine or the lookup kernel of the main
code.  The rounding oracle searches a sorted list of every finite value
(built straight from the bit layout), the special-value tables are written
case by case, and the reference transformer evaluates the formulas one
scalar at a time.
"""

from __future__ import annotations

import bisect
from fractions import Fraction
from typing import Sequence

import mpmath

from . import fpcore as fc
from .fpcore import FINITE, FNAN, NAN, NEG_INF, NINF, PINF, POS_INF, Fp, FpFormat


def _mp_exp(v: Fraction, bits: int) -> Fraction:
    """exp(v) to about `bits` bits, as an exact Fraction of the mpmath result."""
    with mpmath.workprec(bits):
        man, ex = mpmath.exp(mpmath.mpf(v.numerator) / v.denominator).man_exp
    return Fraction(int(man)) * Fraction(2) ** int(ex)


class RoundingOracle:
    """Nearest-value search over an explicit table of finite floats.

    Every finite value is an integer multiple of the smallest positive float,
    so the table and all comparisons use plain integers in those units.  A
    quantity N / S (in units) is rounded by bisection and an integer
    distance comparison; ties go to the even significand.
    """

    def __init__(self, fmt: FpFormat):
        self.fmt = fmt
        p, emin = fmt.p, fmt.emin
        table = {0: Fp(FINITE, 1, emin, 0)}
        for m in range(1, 2 ** p):  # subnormals
            table[m] = Fp(FINITE, 1, emin, m)
        for e in range(emin, fmt.emax + 1):  # normals
            for m in range(2 ** p):
                sig = 2 ** p + m
                table[sig << (e - emin)] = Fp(FINITE, 1, e, sig)
        for u, x in list(table.items()):
            if u:
                table[-u] = Fp(FINITE, -1, x.exponent, x.significand)
        self.table = table
        self.units = sorted(table)
        self.top = self.units[-1]
        # threshold Omega + 2^(emax-p-1) in units of 2^(emin-p), doubled to stay integral
        self.limit2 = 2 * self.top + 2 ** (fmt.emax - emin)

    def to_units(self, x: Fp) -> int:
        return x.sign * (x.significand << (x.exponent - self.fmt.emin))

    def nearest_units(self, N: int, S: int = 1) -> int | str:
        """Round N / S (units, S > 0); returns units or 'inf' / '-inf'."""
        if 2 * N >= self.limit2 * S:
            return "inf"
        if 2 * N <= -self.limit2 * S:
            return "-inf"
        if N >= self.top * S:
            return self.top
        if N <= -self.top * S:
            return -self.top
        i = bisect.bisect_right(self.units, N // S)
        lo = self.units[i - 1]
        if lo * S == N:
            return lo
        hi = self.units[i]
        dl, dh = N - lo * S, hi * S - N
        if dl != dh:
            return lo if dl < dh else hi
        return lo if self.table[lo].significand % 2 == 0 else hi

    def round_units(self, N: int, S: int = 1) -> Fp:
        r = self.nearest_units(N, S)
        if r == "inf":
            return PINF
        if r == "-inf":
            return NINF
        return self.table[r]

    def round(self, x: Fraction) -> Fp:
        """Round an exact rational given in ordinary units."""
        scaled = Fraction(x) / self.fmt.omega
        return self.round_units(scaled.numerator, scaled.denominator)


# --------------------------------------------------------------------------
# special-value tables, written case by case

def _cls(x: Fp, fmt: FpFormat) -> str:
    """One of 'nan', '+inf', '-inf', 'neg', 'zero', 'pos'."""
    if x.kind == NAN:
        return "nan"
    if x.kind == POS_INF:
        return "+inf"
    if x.kind == NEG_INF:
        return "-inf"
    v = x.value(fmt)
    return "zero" if v == 0 else ("pos" if v > 0 else "neg")


_FIN = {"neg", "zero", "pos"}


def table_add(x: Fp, y: Fp, fmt: FpFormat) -> Fp | None:
    """Special-value sum, or None when both are finite."""
    a, b = _cls(x, fmt), _cls(y, fmt)
    if a in _FIN and b in _FIN:
        return None
    for u, v in ((a, b), (b, a)):
        if v == "+inf" and (u in _FIN or u == "+inf"):
            return PINF
        if v == "-inf" and (u in _FIN or u == "-inf"):
            return NINF
    return FNAN


def table_mul(x: Fp, y: Fp, fmt: FpFormat) -> Fp | None:
    a, b = _cls(x, fmt), _cls(y, fmt)
    if a in _FIN and b in _FIN:
        return None
    for u, v in ((a, b), (b, a)):
        if v == "-inf" and u in ("neg", "-inf"):
            return PINF
        if v == "+inf" and u in ("pos", "+inf"):
            return PINF
        if v == "+inf" and u in ("neg", "-inf"):
            return NINF
        if v == "-inf" and u in ("pos", "+inf"):
            return NINF
    return FNAN


class ArithOracle:
    """Reference add / sub / mul / div over the extended set."""

    def __init__(self, fmt: FpFormat):
        self.fmt = fmt
        self.r = RoundingOracle(fmt)

    def add(self, x: Fp, y: Fp) -> Fp:
        t = table_add(x, y, self.fmt)
        if t is not None:
            return t
        return self.r.round_units(self.r.to_units(x) + self.r.to_units(y))

    def mul(self, x: Fp, y: Fp) -> Fp:
        t = table_mul(x, y, self.fmt)
        if t is not None:
            return t
        # product in units of omega^2; one factor of 1/omega converts back
        scale = 2 ** (self.fmt.p - self.fmt.emin)
        return self.r.round_units(self.r.to_units(x) * self.r.to_units(y), scale)

    def sub(self, x: Fp, y: Fp) -> Fp:
        return self.add(x, self.mul(fc.minus_one(self.fmt), y))

    def div(self, x: Fp, y: Fp) -> Fp:
        if y.kind == NAN:
            return FNAN
        # (a w) / (b w) = a / b, and a / b in units is a W / b with W = 1/w
        scale = 2 ** (self.fmt.p - self.fmt.emin)
        b = self.r.to_units(y)
        a = self.r.to_units(x) * scale
        return self.r.round_units(-a, -b) if b < 0 else self.r.round_units(a, b)

    def exp(self, x: Fp) -> Fp:
        if x.kind == NEG_INF:
            return fc.zero(self.fmt)
        if x.kind in (POS_INF, NAN):
            return x
        v = x.value(self.fmt)
        if v == 0:
            return fc.one(self.fmt)
        approx = _mp_exp(v, 300)
        slack = approx / Fraction(2) ** 250
        lo, hi = self.r.round(approx - slack), self.r.round(approx + slack)
        if lo != hi:
            raise ArithmeticError(f"exp oracle undecided at {x}")
        return lo

    def relu(self, x: Fp) -> Fp:
        if x.kind == NEG_INF:
            return fc.zero(self.fmt)
        if x.kind in (POS_INF, NAN):
            return x
        return x if x.value(self.fmt) > 0 else fc.zero(self.fmt)


# --------------------------------------------------------------------------
# scalar reference transformer

class ReferenceTransformer:
    """Evaluates a model entry by entry with the oracle operations."""

    def __init__(self, fmt: FpFormat):
        self.fmt = fmt
        self.ops = ArithOracle(fmt)

    def _rows(self, M) -> list[list[Fp]]:
        return M.dense().to_rows()

    def fold(self, xs: Sequence[Fp]) -> Fp:
        acc = xs[0]
        for x in xs[1:]:
            acc = self.ops.add(acc, x)
        return acc

    def matmul(self, A: list[list[Fp]], B: list[list[Fp]]) -> list[list[Fp]]:
        inner = len(B)
        cols = len(B[0])
        return [[self.fold([self.ops.mul(row[t], B[t][j]) for t in range(inner)])
                 for j in range(cols)] for row in A]

    def addm(self, A, B):
        return [[self.ops.add(a, b) for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]

    def bias(self, b, n):
        return [[row[0]] * n for row in self._rows(b)]

    def max(self, xs):
        if any(x.kind == NAN for x in xs):
            return FNAN
        return max(xs, key=lambda x: fc.sort_key(x, self.fmt))

    def softmax(self, col: Sequence[Fp]) -> list[Fp]:
        top = self.max(col)
        num = [self.ops.exp(self.ops.sub(v, top)) for v in col]
        den = self.fold(num)
        return [self.ops.div(a, den) for a in num]

    def attention(self, X, attn):
        n = len(X[0])
        total = None
        for hd in attn.heads:
            K = self.matmul(self._rows(hd.WK), X)
            Q = self.matmul(self._rows(hd.WQ), X)
            V = self.matmul(self._rows(hd.WV), X)
            KT = [list(r) for r in zip(*K)]
            S = self.matmul(KT, Q)
            cols = [self.softmax([S[i][j] for i in range(n)]) for j in range(n)]
            Sig = [[cols[j][i] for j in range(n)] for i in range(n)]
            out = self.matmul(self._rows(hd.WO), self.matmul(V, Sig))
            total = out if total is None else self.addm(total, out)
        return self.addm(X, total)

    def ff(self, X, ff):
        n = len(X[0])
        H = self.addm(self.matmul(self._rows(ff.W1), X), self.bias(ff.b1, n))
        H = [[self.ops.relu(v) for v in row] for row in H]
        Y = self.addm(self.matmul(self._rows(ff.W2), H), self.bias(ff.b2, n))
        return self.addm(X, Y)

    def forward(self, model, X: list[list[Fp]]) -> list[list[Fp]]:
        """X given as rows (d_in lists of n values)."""
        n = len(X[0])
        Z = self.addm(self.matmul(self._rows(model.W_in), X), self.bias(model.b_in, n))
        for attn, ff in model.stack.blocks:
            Z = self.ff(self.attention(Z, attn), ff)
        return self.addm(self.matmul(self._rows(model.W_out), Z), self.bias(model.b_out, n))


# --------------------------------------------------------------------------
# exact rational shadow (for contrast only, never ground truth)

class RationalShadow:
    """The same model evaluated over the rationals.

    Weights and inputs must be finite.  exp is approximated at 60 digits and
    converted to a Fraction; every other operation is exact.  The shadow
    illustrates what the network would compute without rounding.
    """

    def __init__(self, fmt: FpFormat):
        self.fmt = fmt

    def _m(self, M) -> list[list[Fraction]]:
        rows = M.dense().to_rows()
        if any(v.kind != FINITE for row in rows for v in row):
            raise ValueError("shadow evaluation needs finite weights")
        return [[v.value(self.fmt) for v in row] for row in rows]

    @staticmethod
    def matmul(A, B):
        return [[sum((row[t] * B[t][j] for t in range(len(B))), Fraction(0))
                 for j in range(len(B[0]))] for row in A]

    @staticmethod
    def addm(A, B):
        return [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]

    def bias(self, b, n):
        return [[row[0]] * n for row in self._m(b)]

    @staticmethod
    def _exp(v: Fraction) -> Fraction:
        if v == 0:
            return Fraction(1)
        return _mp_exp(v, 200)

    def softmax(self, col):
        top = max(col)
        e = [self._exp(v - top) for v in col]
        s = sum(e, Fraction(0))
        return [a / s for a in e]

    def forward(self, model, X: list[list[Fraction]]) -> list[list[Fraction]]:
        n = len(X[0])
        Z = self.addm(self.matmul(self._m(model.W_in), X), self.bias(model.b_in, n))
        for attn, ff in model.stack.blocks:
            total = None
            for hd in attn.heads:
                K = self.matmul(self._m(hd.WK), Z)
                Q = self.matmul(self._m(hd.WQ), Z)
                V = self.matmul(self._m(hd.WV), Z)
                S = self.matmul([list(r) for r in zip(*K)], Q)
                cols = [self.softmax([S[i][j] for i in range(n)]) for j in range(n)]
                Sig = [[cols[j][i] for j in range(n)] for i in range(n)]
                out = self.matmul(self._m(hd.WO), self.matmul(V, Sig))
                total = out if total is None else self.addm(total, out)
            Z = self.addm(Z, total)
            H = self.addm(self.matmul(self._m(ff.W1), Z), self.bias(ff.b1, n))
            H = [[max(v, Fraction(0)) for v in row] for row in H]
            Z = self.addm(Z, self.addm(self.matmul(self._m(ff.W2), H), self.bias(ff.b2, n)))
        return self.addm(self.matmul(self._m(model.W_out), Z), self.bias(model.b_out, n))


def rows_ab_similar(X: list[list], Y: list[list], a: int, b: int) -> bool:
    """(a, b)-similarity for matrices given as rows of comparable entries."""
    cols = lambda M: [tuple(r[j] for r in M) for j in range(len(M[0]))]  # noqa: E731
    cx, cy = cols(X), cols(Y)
    z1, z2 = cx[0], cx[a]
    return (all(c == z1 for c in cx[:a]) and all(c == z2 for c in cx[a:b])
            and all(c == z1 for c in cy[:a - 1]) and all(c == z2 for c in cy[a - 1:b])
            and cx[b:] == cy[b:])
