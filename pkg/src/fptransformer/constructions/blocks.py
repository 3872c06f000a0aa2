"""Order-detecting and counting attention blocks, and the constants they need."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .. import fpcore as fc
from ..fpcore import Fp, FpFormat
from ..kernel import kernel_for
from .gadgets import LookupTable, build_memorizer
from .staging import AttnSpec, FfSpec, StackBuilder, embed_pipeline


class SolverError(ValueError):
    """No float in the searched range satisfies the product equation."""


def uniform_softmax_value(n: int, fmt: FpFormat) -> Fp:
    """1 / (1 (+) 1 (+) ... n times): the weight of a constant score column."""
    if n < 1:
        raise ValueError("n must be >= 1")
    one = fc.one(fmt)
    a = fc.fp_div(one, fc.left_sum([one] * n, fmt), fmt)
    if a.value(fmt) < fc._pow2(-fmt.p - 1):
        raise ArithmeticError(f"uniform weight {a} below 2^(-p-1)")
    return a


@dataclass(frozen=True)
class Interval:
    lo: Fraction
    hi: Fraction
    lo_open: bool = False
    hi_open: bool = False

    def __contains__(self, v: Fraction) -> bool:
        above = v > self.lo if self.lo_open else v >= self.lo
        below = v < self.hi if self.hi_open else v <= self.hi
        return above and below


def solve_mul_target(x: Fp, target: Fp, search: Interval, fmt: FpFormat) -> Fp:
    """Smallest y in `search` with x (x) y == target, by exhaustive scan."""
    if not x.is_finite or x.sign < 0 or x.is_zero:
        raise ValueError("x must be finite and positive")
    for y in fc.enumerate_finite(fmt):
        if y.value(fmt) in search and fc.fp_mul(x, y, fmt) == target:
            return y
    raise SolverError(f"no y in {search} with {fc.render(x, fmt)} * y == {fc.render(target, fmt)}")


def _rescale_exponent(a: Fp, fmt: FpFormat) -> int:
    """s with a * 2^s in (1, 2]."""
    v = a.value(fmt)
    s = 0
    while v * fc._pow2(s) <= 1:
        s += 1
    while v * fc._pow2(s) > 2:
        s -= 1
    return s


def solve_scaled(alpha: Fp, target: Fp, search: Interval, fmt: FpFormat) -> Fp:
    """beta with beta (x) alpha == target, via an exact power-of-two rescale."""
    s = _rescale_exponent(alpha, fmt)
    x = fc.from_fraction(alpha.value(fmt) * fc._pow2(s), fmt)
    y = solve_mul_target(x, target, search, fmt)
    beta = fc.from_fraction(y.value(fmt) * fc._pow2(s), fmt)
    if fc.fp_mul(beta, alpha, fmt) != target:
        raise SolverError("rescaled solution does not reproduce the target")
    return beta


HALF_TO_ONE = Interval(Fraction(1, 2), Fraction(1), lo_open=True)


@dataclass(frozen=True)
class OrderDetectorConfig:
    alpha: Fp
    beta: Fp
    beta_prime: Fp
    delta: Fp

    @classmethod
    def derive(cls, n: int, fmt: FpFormat) -> "OrderDetectorConfig":
        fmt.require_condition1()
        one = fc.one(fmt)
        one_p = fc.succ(one, fmt)
        three = fc.fp(3, fmt)
        alpha = uniform_softmax_value(n, fmt)
        if fmt.p >= 3:
            b = solve_scaled(alpha, one_p, HALF_TO_ONE, fmt)
            upper = fc.succ(one, fmt).value(fmt)
            bp = solve_scaled(alpha, fc.succ(one_p, fmt),
                              Interval(Fraction(1, 2), upper, lo_open=True), fmt)
            delta = fc.succ(fc.succ(three, fmt), fmt)
        else:
            b = solve_scaled(alpha, one, Interval(Fraction(1, 2), Fraction(1), hi_open=True), fmt)
            bp = solve_scaled(alpha, one_p, HALF_TO_ONE, fmt)
            delta = fc.succ(three, fmt)
        return cls(alpha, b, bp, delta)


@dataclass(frozen=True)
class CounterConfig:
    alpha: Fp
    beta: Fp
    max_distinct_count: int
    saturation_value: Fp

    @classmethod
    def derive(cls, n: int, fmt: FpFormat) -> "CounterConfig":
        fmt.require_condition1()
        alpha = uniform_softmax_value(n, fmt)
        beta = solve_scaled(alpha, fc.succ(fc.one(fmt), fmt), HALF_TO_ONE, fmt)
        return cls(alpha, beta, 3 * 2 ** fmt.p - 1,
                   fc.from_fraction(fc._pow2(fmt.p + 2), fmt))


# --------------------------------------------------------------------------
# alphabets and triples

@dataclass(frozen=True)
class Alphabet:
    tokens: tuple  # of tuples of Fp

    def __post_init__(self):
        toks = tuple(tuple(t) for t in self.tokens)
        if len(set(toks)) != len(toks):
            raise ValueError("alphabet tokens must be distinct")
        if len({len(t) for t in toks}) > 1:
            raise ValueError("alphabet tokens must share one width")
        object.__setattr__(self, "tokens", toks)

    @property
    def d_in(self) -> int:
        return len(self.tokens[0])

    def __len__(self):
        return len(self.tokens)

    def index(self, tok) -> int:
        try:
            return self.tokens.index(tuple(tok))
        except ValueError:
            raise ValueError(f"token {tok} is not in the alphabet") from None

    @classmethod
    def scalars(cls, values: Sequence[Fp]) -> "Alphabet":
        return cls(tuple((v,) for v in values))

    @classmethod
    def full(cls, fmt: FpFormat) -> "Alphabet":
        return cls.scalars(fc.enumerate_finite(fmt))


def rotation(k: int, x: int) -> int:
    """pi_k(x) = x + (k - 1) mod 3 on {1, 2, 3}."""
    return (x - 1 + k - 1) % 3 + 1


@dataclass(frozen=True)
class TripleCatalog:
    alphabet: Alphabet

    @property
    def triples(self) -> list[tuple]:
        return list(itertools.combinations(range(len(self.alphabet)), 3))

    @property
    def gamma(self) -> int:
        return len(self.triples)

    def slot_role(self, j: int, k: int, token_index: int) -> str | None:
        """'lead' for the two leading values of rotation k, 'trail' for the last."""
        tri = self.triples[j]
        if token_index == tri[rotation(k, 3) - 1]:
            return "trail"
        if token_index in (tri[rotation(k, 1) - 1], tri[rotation(k, 2) - 1]):
            return "lead"
        return None


def _rows(alphabet: Alphabet, X) -> list[tuple]:
    """Columns of an input as token tuples; X is a list of tokens or FpMatrix."""
    if hasattr(X, "col"):
        return [tuple(X.col(j)) for j in range(X.cols)]
    return [tuple(t) for t in X]


def count_vector(X, alphabet: Alphabet) -> list[int]:
    counts = [0] * len(alphabet)
    for tok in _rows(alphabet, X):
        counts[alphabet.index(tok)] += 1
    return counts


def order_flags(tokens, catalog: TripleCatalog, cfg: OrderDetectorConfig, fmt: FpFormat) -> list[Fp]:
    """Scalar reference for the order detector's 3*gamma flag values."""
    alphabet = catalog.alphabet
    idx = [alphabet.tokens.index(t) if t in alphabet.tokens else None
           for t in _rows(alphabet, tokens)]
    lead = fc.fp_mul(cfg.beta_prime, cfg.alpha, fmt)
    trail = fc.fp_mul(cfg.beta, cfg.alpha, fmt)
    z = fc.zero(fmt)
    out = []
    for j in range(catalog.gamma):
        for k in (1, 2, 3):
            terms = []
            for t in idx:
                role = None if t is None else catalog.slot_role(j, k, t)
                terms.append(lead if role == "lead" else trail if role == "trail" else z)
            out.append(fc.left_sum(terms, fmt))
    return out


def count_flags(counts: Sequence[int], cfg: CounterConfig, fmt: FpFormat) -> list[Fp]:
    """Scalar reference: the left sum of k copies of beta (x) alpha per symbol."""
    unit = fc.fp_mul(cfg.beta, cfg.alpha, fmt)
    return [fc.left_sum([fc.zero(fmt)] + [unit] * c, fmt) for c in counts]


# --------------------------------------------------------------------------
# block builders (append to a StackBuilder)

def add_broadcast_block(sb: StackBuilder, src, dst) -> None:
    """Zero-key attention averaging src over tokens into dst, then erase src."""
    one = fc.one(sb.fmt)
    wv = {(t, s): one for t, s in enumerate(src)}
    wo = {(d, t): one for t, d in enumerate(dst)}
    sb.m = max(sb.m, len(src))
    ff = FfSpec()
    sb.erase_units(ff, src)
    sb.add_ff(ff, AttnSpec({}, {}, wv, wo))


def add_order_detector(sb: StackBuilder, catalog: TripleCatalog, n: int,
                       token_coords, flag_coords, scratch_coords) -> OrderDetectorConfig:
    fmt = sb.fmt
    cfg = OrderDetectorConfig.derive(n, fmt)
    z = fc.zero(fmt)
    entries = {}
    for t, tok in enumerate(catalog.alphabet.tokens):
        row = []
        for j in range(catalog.gamma):
            for k in (1, 2, 3):
                role = catalog.slot_role(j, k, t)
                row.append(cfg.beta_prime if role == "lead" else cfg.beta if role == "trail" else z)
        entries[tok] = tuple(row)
    table = LookupTable(catalog.alphabet.d_in, 3 * catalog.gamma, entries)
    embed_pipeline(sb, build_memorizer(table, fmt), token_coords, scratch_coords)
    add_broadcast_block(sb, scratch_coords, flag_coords)
    return cfg


def add_counter(sb: StackBuilder, alphabet: Alphabet, n: int,
                token_coords, flag_coords, scratch_coords) -> CounterConfig:
    fmt = sb.fmt
    cfg = CounterConfig.derive(n, fmt)
    z = fc.zero(fmt)
    entries = {}
    for t, tok in enumerate(alphabet.tokens):
        entries[tok] = tuple(cfg.beta if u == t else z for u in range(len(alphabet)))
    table = LookupTable(alphabet.d_in, len(alphabet), entries)
    embed_pipeline(sb, build_memorizer(table, fmt), token_coords, scratch_coords)
    add_broadcast_block(sb, scratch_coords, flag_coords)
    return cfg


def build_order_detect_block(catalog: TripleCatalog, n: int, fmt: FpFormat):
    """Standalone detector; returns (stack, config, layout)."""
    if n < 2:
        raise ValueError("order detection needs n >= 2")
    d_in = catalog.alphabet.d_in
    g3 = 3 * catalog.gamma
    sb = StackBuilder(fmt, d_in + 2 * g3)
    flags = list(range(d_in, d_in + g3))
    scratch = list(range(d_in + g3, d_in + 2 * g3))
    cfg = add_order_detector(sb, catalog, n, list(range(d_in)), flags, scratch)
    return sb.build(), cfg, {"flags": flags, "d_in": d_in}


def build_counter_block(alphabet: Alphabet, n: int, fmt: FpFormat):
    """Standalone counter; returns (stack, config, layout)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d_in = alphabet.d_in
    g = len(alphabet)
    sb = StackBuilder(fmt, d_in + 2 * g)
    flags = list(range(d_in, d_in + g))
    scratch = list(range(d_in + g, d_in + 2 * g))
    cfg = add_counter(sb, alphabet, n, list(range(d_in)), flags, scratch)
    return sb.build(), cfg, {"flags": flags, "d_in": d_in}
