"""Parametric binary floating-point formats with exact, integer-only semantics.

A format F(p, q) has p stored mantissa bits and q exponent bits.  Values are
kept as (sign, exponent, significand) triples; all rounding goes through
exact rational comparison, so no native float ever touches a result.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Iterable, Sequence, Union

import mpmath


class FormatError(ValueError):
    """Raised for an unrepresentable or unsupported (p, q) pair."""


@lru_cache(maxsize=4096)
def _pow2(k: int) -> Fraction:
    return Fraction(2 ** k) if k >= 0 else Fraction(1, 2 ** -k)


class DivDomainError(ArithmeticError):
    """fp_div was called outside the domain the softmax can reach.

    This signals a semantics bug upstream; the quotient is never computed.
    """


@dataclass(frozen=True)
class FpFormat:
    p: int
    q: int

    @property
    def emin(self) -> int:
        return -(2 ** (self.q - 1)) + 2

    @property
    def emax(self) -> int:
        return 2 ** (self.q - 1) - 1

    @property
    def bias(self) -> int:
        return 2 ** (self.q - 1) - 1

    @cached_property
    def omega(self) -> Fraction:
        """Smallest positive value, 2^(emin - p)."""
        return _pow2(self.emin - self.p)

    @cached_property
    def Omega(self) -> Fraction:
        """Largest finite value, (2 - 2^-p) * 2^emax."""
        return (2 - _pow2(-self.p)) * _pow2(self.emax)

    @cached_property
    def overflow_threshold(self) -> Fraction:
        return self.Omega + _pow2(self.emax - self.p - 1)

    @property
    def satisfies_condition1(self) -> bool:
        return 2 <= self.p <= 2 ** (self.q - 1) - 3

    @property
    def nbits(self) -> int:
        return self.p + self.q + 1

    def require_condition1(self) -> None:
        if not self.satisfies_condition1:
            raise FormatError(
                f"format (p={self.p}, q={self.q}) violates 2 <= p <= 2^(q-1)-3")

    def __str__(self) -> str:
        return f"F(p={self.p},q={self.q})"


def make_format(p: int, q: int) -> FpFormat:
    if not isinstance(p, int) or not isinstance(q, int):
        raise FormatError("p and q must be integers")
    if p < 1 or q < 2:
        raise FormatError(f"unrepresentable format p={p}, q={q} (need p >= 1, q >= 2)")
    return FpFormat(p, q)


PRESETS = {"e5m2": (2, 5), "e4m3": (3, 4)}


def preset_format(name: str) -> FpFormat:
    try:
        p, q = PRESETS[name.lower()]
    except KeyError:
        raise FormatError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    return make_format(p, q)


# --------------------------------------------------------------------------
# values

FINITE, POS_INF, NEG_INF, NAN = "finite", "+inf", "-inf", "nan"


@dataclass(frozen=True)
class Fp:
    """One element of the extended float set.

    Finite values are stored canonically: normal when the significand lies in
    [2^p, 2^(p+1)), subnormal when exponent == emin and significand < 2^p.
    Zero is unique (sign +1, exponent emin, significand 0).
    """

    kind: str
    sign: int = 1
    exponent: int = 0
    significand: int = 0

    @property
    def is_finite(self) -> bool:
        return self.kind == FINITE

    @property
    def is_nan(self) -> bool:
        return self.kind == NAN

    @property
    def is_inf(self) -> bool:
        return self.kind in (POS_INF, NEG_INF)

    @property
    def is_zero(self) -> bool:
        return self.kind == FINITE and self.significand == 0

    def value(self, fmt: FpFormat) -> Fraction:
        if self.kind != FINITE:
            raise ValueError(f"{self.kind} has no rational value")
        return self.sign * self.significand * _pow2(self.exponent - fmt.p)

    def __repr__(self) -> str:
        if self.kind != FINITE:
            return f"Fp({self.kind})"
        return f"Fp({'+' if self.sign > 0 else '-'}{self.significand}*2^({self.exponent}-p))"


PINF = Fp(POS_INF)
NINF = Fp(NEG_INF)
FNAN = Fp(NAN)


def zero(fmt: FpFormat) -> Fp:
    return Fp(FINITE, 1, fmt.emin, 0)


def is_canonical(x: Fp, fmt: FpFormat) -> bool:
    if x.kind != FINITE:
        return (x.sign, x.exponent, x.significand) == (1, 0, 0)
    if x.sign not in (1, -1) or not fmt.emin <= x.exponent <= fmt.emax:
        return False
    if x.significand == 0:
        return x.sign == 1 and x.exponent == fmt.emin
    if 2 ** fmt.p <= x.significand < 2 ** (fmt.p + 1):
        return True
    return x.exponent == fmt.emin and 0 < x.significand < 2 ** fmt.p


def fp_eq(x: Fp, y: Fp) -> bool:
    """Structural equality; NaN equals NaN and there is one zero."""
    return x == y


# ExactScalar: a Fraction, or one of the special Fp markers for +-inf / NaN.
ExactScalar = Union[Fraction, int, Fp]


def _floor_log2(a: Fraction) -> int:
    """Largest e with 2^e <= a, for a > 0."""
    e = a.numerator.bit_length() - a.denominator.bit_length()
    if _pow2(e) > a:
        e -= 1
    elif _pow2(e + 1) <= a:
        e += 1
    return e


def _round_half_even(x: Fraction) -> int:
    fl = x.numerator // x.denominator
    rem = x - fl
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and fl % 2 == 1):
        return fl + 1
    return fl


def round_exact(x: ExactScalar, fmt: FpFormat) -> Fp:
    """Round an exact scalar to the nearest element, ties to even."""
    if isinstance(x, Fp):
        if x.kind == FINITE:
            raise TypeError("round_exact expects a rational or a special marker")
        return x
    x = Fraction(x)
    if x == 0:
        return zero(fmt)
    sign = 1 if x > 0 else -1
    a = abs(x)
    if a >= fmt.overflow_threshold:
        return PINF if sign > 0 else NINF
    e = max(_floor_log2(a), fmt.emin)
    sig = _round_half_even(a * _pow2(fmt.p - e))
    if sig == 2 ** (fmt.p + 1):
        e, sig = e + 1, 2 ** fmt.p
    if sig == 0:
        return zero(fmt)
    return Fp(FINITE, sign, e, sig)


def from_fraction(x: ExactScalar, fmt: FpFormat) -> Fp:
    """Exact conversion; raises ValueError when x is not representable."""
    r = round_exact(x, fmt)
    if r.kind == FINITE and r.value(fmt) != Fraction(x):
        raise ValueError(f"{x} is not representable in {fmt}")
    if r.kind != FINITE and not isinstance(x, Fp):
        raise ValueError(f"{x} is not representable in {fmt}")
    return r


# --------------------------------------------------------------------------
# neighbours and enumeration

def succ(x: Fp, fmt: FpFormat) -> Fp:
    """Smallest element strictly greater than x (x^+)."""
    if x.kind == NEG_INF:
        return negate(fmt_Omega(fmt))
    if x.kind != FINITE:
        raise ValueError(f"succ({x.kind}) is undefined")
    if x.sign < 0 and x.significand != 0:
        return negate(pred(negate(x), fmt))
    if x.significand == 0:
        return Fp(FINITE, 1, fmt.emin, 1)
    sig, e = x.significand + 1, x.exponent
    if sig == 2 ** (fmt.p + 1):
        sig, e = 2 ** fmt.p, e + 1
        if e > fmt.emax:
            return PINF
    return Fp(FINITE, 1, e, sig)


def pred(x: Fp, fmt: FpFormat) -> Fp:
    """Largest element strictly smaller than x (x^-)."""
    if x.kind == POS_INF:
        return fmt_Omega(fmt)
    if x.kind != FINITE:
        raise ValueError(f"pred({x.kind}) is undefined")
    if x.sign < 0 or x.significand == 0:
        if x.significand == 0:
            return Fp(FINITE, -1, fmt.emin, 1)
        s = succ(negate(x), fmt)
        return NINF if s.kind == POS_INF else negate(s)
    sig, e = x.significand - 1, x.exponent
    if sig < 2 ** fmt.p and e > fmt.emin:
        sig, e = 2 ** (fmt.p + 1) - 1, e - 1
    if sig == 0:
        return zero(fmt)
    return Fp(FINITE, 1, e, sig)


def fmt_Omega(fmt: FpFormat) -> Fp:
    return Fp(FINITE, 1, fmt.emax, 2 ** (fmt.p + 1) - 1)


def fmt_omega(fmt: FpFormat) -> Fp:
    return Fp(FINITE, 1, fmt.emin, 1)


def finite_count(fmt: FpFormat) -> int:
    return 2 * (2 ** fmt.p * (fmt.emax - fmt.emin + 1) + 2 ** fmt.p - 1) + 1


def enumerate_finite(fmt: FpFormat) -> list[Fp]:
    """Every canonical finite value once, ascending."""
    return list(_enumerate_finite(fmt))


@lru_cache(maxsize=None)
def _enumerate_finite(fmt: FpFormat) -> tuple[Fp, ...]:
    pos = [Fp(FINITE, 1, fmt.emin, s) for s in range(1, 2 ** fmt.p)]
    for e in range(fmt.emin, fmt.emax + 1):
        pos.extend(Fp(FINITE, 1, e, s) for s in range(2 ** fmt.p, 2 ** (fmt.p + 1)))
    neg = [negate(v) for v in reversed(pos)]
    return tuple(neg + [zero(fmt)] + pos)


def enumerate_all(fmt: FpFormat) -> list[Fp]:
    return [NINF] + enumerate_finite(fmt) + [PINF, FNAN]


def negate(x: Fp) -> Fp:
    if x.kind == POS_INF:
        return NINF
    if x.kind == NEG_INF:
        return PINF
    if x.kind == NAN or x.significand == 0:
        return x
    return Fp(FINITE, -x.sign, x.exponent, x.significand)


def sort_key(x: Fp, fmt: FpFormat):
    """Total order key: -inf < finite < +inf; NaN placed last."""
    if x.kind == NEG_INF:
        return (0, 0)
    if x.kind == FINITE:
        return (1, x.value(fmt))
    if x.kind == POS_INF:
        return (2, 0)
    return (3, 0)


# --------------------------------------------------------------------------
# arithmetic

def fp_add(x: Fp, y: Fp, fmt: FpFormat) -> Fp:
    if x.kind == FINITE and y.kind == FINITE:
        return round_exact(x.value(fmt) + y.value(fmt), fmt)
    if NAN in (x.kind, y.kind):
        return FNAN
    kinds = {x.kind, y.kind}
    if kinds == {POS_INF, NEG_INF}:
        return FNAN
    return PINF if POS_INF in kinds else NINF


def _sign_of(x: Fp, fmt: FpFormat) -> int:
    if x.kind == POS_INF:
        return 1
    if x.kind == NEG_INF:
        return -1
    return 0 if x.significand == 0 else x.sign


def fp_mul(x: Fp, y: Fp, fmt: FpFormat) -> Fp:
    if x.kind == FINITE and y.kind == FINITE:
        return round_exact(x.value(fmt) * y.value(fmt), fmt)
    if NAN in (x.kind, y.kind):
        return FNAN
    sx, sy = _sign_of(x, fmt), _sign_of(y, fmt)
    if sx == 0 or sy == 0:
        return FNAN  # 0 * inf
    return PINF if sx * sy > 0 else NINF


def fp_sub(x: Fp, y: Fp, fmt: FpFormat) -> Fp:
    return fp_add(x, fp_mul(minus_one(fmt), y, fmt), fmt)


def minus_one(fmt: FpFormat) -> Fp:
    return Fp(FINITE, -1, 0, 2 ** fmt.p)


def one(fmt: FpFormat) -> Fp:
    return Fp(FINITE, 1, 0, 2 ** fmt.p)


class _ViolationCounter:
    """Process-wide count of fp_div precondition violations."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def bump(self):
        with self._lock:
            self._count += 1

    @property
    def count(self) -> int:
        return self._count

    def reset(self):
        with self._lock:
            self._count = 0


div_violations = _ViolationCounter()


def div_in_domain(x: Fp, y: Fp, fmt: FpFormat) -> bool:
    if y.kind == NAN:
        return True
    if x.kind != FINITE or y.kind != FINITE:
        return False
    xv, yv = x.value(fmt), y.value(fmt)
    return 0 <= xv <= yv and yv > 0


def fp_div(x: Fp, y: Fp, fmt: FpFormat) -> Fp:
    """Quotient on the softmax domain: 0 <= x <= y < inf with y > 0, or y NaN."""
    if not div_in_domain(x, y, fmt):
        div_violations.bump()
        raise DivDomainError(f"fp_div({x!r}, {y!r}) outside 0 <= x <= y < inf, y > 0")
    if y.kind == NAN:
        return FNAN
    return round_exact(x.value(fmt) / y.value(fmt), fmt)


def rounded_relu(x: Fp, fmt: FpFormat) -> Fp:
    if x.kind == NEG_INF:
        return zero(fmt)
    if x.kind in (POS_INF, NAN):
        return x
    return x if x.sign > 0 else zero(fmt)


def _raw_to_fraction(t) -> Fraction:
    sign, man, exp, bc = t
    if man == 0 and bc != 0:
        raise ArithmeticError("non-finite interval endpoint")
    v = Fraction(int(man)) * Fraction(2) ** exp
    return -v if sign else v


_IV_LOCK = threading.Lock()


def exp_rounded_fraction(v: Fraction, fmt: FpFormat, start_prec: int = 64) -> Fp:
    """Correctly rounded exp of a rational.

    Encloses exp(v) in a rigorous interval and doubles the working precision
    until both ends round to the same element.  exp(v) is irrational for
    v != 0, so it is never a rounding midpoint and the loop terminates.
    """
    if v == 0:
        return one(fmt)
    # exp(v) >= threshold or rounds to zero: decide with exact bounds first
    if v > fmt.emax + 2:  # exp(v) > 2^(emax+2), past the threshold
        return PINF
    prec = start_prec
    while True:
        with _IV_LOCK:
            saved = mpmath.iv.prec
            mpmath.iv.prec = prec
            try:
                enc = mpmath.iv.exp(mpmath.iv.mpf(v.numerator) / mpmath.iv.mpf(v.denominator))
                lo, hi = (_raw_to_fraction(t) for t in enc._mpi_)
            finally:
                mpmath.iv.prec = saved
        rlo, rhi = round_exact(lo, fmt), round_exact(hi, fmt)
        if rlo == rhi:
            return rlo
        prec *= 2
        if prec > 1 << 16:
            raise RuntimeError("exp rounding failed to converge")


@lru_cache(maxsize=None)
def _exp_cached(x: Fp, fmt: FpFormat) -> Fp:
    return exp_rounded_fraction(x.value(fmt), fmt)


def rounded_exp(x: Fp, fmt: FpFormat) -> Fp:
    if x.kind == NEG_INF:
        return zero(fmt)
    if x.kind in (POS_INF, NAN):
        return x
    return _exp_cached(x, fmt)


def left_sum(xs: Sequence[Fp] | Iterable[Fp], fmt: FpFormat) -> Fp:
    """x1 (+) x2 (+) ... (+) xn, folded strictly left to right."""
    it = iter(xs)
    try:
        acc = next(it)
    except StopIteration:
        raise ValueError("left_sum of an empty sequence") from None
    for x in it:
        acc = fp_add(acc, x, fmt)
    return acc


def fp_max(xs: Sequence[Fp], fmt: FpFormat) -> Fp:
    """Maximum with -inf < finite < +inf; any NaN makes the result NaN."""
    best = None
    for x in xs:
        if x.kind == NAN:
            return FNAN
        if best is None or sort_key(x, fmt) > sort_key(best, fmt):
            best = x
    if best is None:
        raise ValueError("max of an empty sequence")
    return best


# --------------------------------------------------------------------------
# bit encoding and text forms

def encode_bits(x: Fp, fmt: FpFormat) -> int:
    p, q = fmt.p, fmt.q
    top = 2 ** q - 1
    if x.kind == POS_INF:
        return top << p
    if x.kind == NEG_INF:
        return (1 << (p + q)) | (top << p)
    if x.kind == NAN:
        return (top << p) | (1 << (p - 1))
    sbit = 1 if x.sign < 0 else 0
    if x.significand < 2 ** p:
        field, mant = 0, x.significand
    else:
        field, mant = x.exponent + fmt.bias, x.significand - 2 ** p
    return (sbit << (p + q)) | (field << p) | mant


def decode_bits(bits: int, fmt: FpFormat) -> Fp:
    """Inverse of encode_bits; -0 and every NaN payload decode canonically."""
    p, q = fmt.p, fmt.q
    if not 0 <= bits < 2 ** fmt.nbits:
        raise ValueError(f"bit pattern {bits:#x} out of range for {fmt}")
    sign = -1 if bits >> (p + q) else 1
    field = (bits >> p) & (2 ** q - 1)
    mant = bits & (2 ** p - 1)
    if field == 2 ** q - 1:
        if mant:
            return FNAN
        return PINF if sign > 0 else NINF
    if field == 0:
        if mant == 0:
            return zero(fmt)
        return Fp(FINITE, sign, fmt.emin, mant)
    return Fp(FINITE, sign, field - fmt.bias, mant + 2 ** p)


def to_hex(x: Fp, fmt: FpFormat) -> str:
    width = (fmt.nbits + 3) // 4
    return f"0x{encode_bits(x, fmt):0{width}x}"


def from_hex(s: str, fmt: FpFormat) -> Fp:
    return decode_bits(int(s, 16), fmt)


def render(x: Fp, fmt: FpFormat) -> str:
    """Exact decimal rendering (dyadic rationals have finite expansions)."""
    if x.kind == POS_INF:
        return "inf"
    if x.kind == NEG_INF:
        return "-inf"
    if x.kind == NAN:
        return "nan"
    v = x.value(fmt)
    neg = v < 0
    v = abs(v)
    k = v.denominator.bit_length() - 1  # denominator is 2^k
    digits = v.numerator * 5 ** k
    s = str(digits)
    if k:
        s = s.rjust(k + 1, "0")
        s = s[:-k] + "." + s[-k:]
    return ("-" if neg else "") + s


def parse_literal(text: str, fmt: FpFormat) -> Fp:
    """Parse an exact literal: hex bit pattern, decimal, fraction, inf or nan.

    Values that are not exactly representable are rejected, never rounded.
    """
    t = text.strip().lower()
    if t.startswith("0x"):
        return from_hex(t, fmt)
    if t in ("inf", "+inf"):
        return PINF
    if t == "-inf":
        return NINF
    if t == "nan":
        return FNAN
    try:
        v = Fraction(t)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"cannot parse {text!r} as an exact literal") from None
    return from_fraction(v, fmt)


def fp(value, fmt: FpFormat) -> Fp:
    """Convenience constructor from an exactly representable literal."""
    if isinstance(value, Fp):
        return value
    if isinstance(value, str):
        return parse_literal(value, fmt)
    if isinstance(value, float):
        raise TypeError("native floats are not accepted; pass a str or Fraction")
    return from_fraction(Fraction(value), fmt)


def mantissa_last_bit(x: Fp) -> int:
    return x.significand & 1
