"""Verification suites with machine-readable reports.

Each suite enumerates or samples cases, checks them against an independent
reference or a stated identity, and returns a SuiteReport.  Everything is
deterministic given the format and the seed.
"""

from __future__ import annotations

import dataclasses
import itertools
import os
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import fpcore as fc
from .constructions import assemble as asm
from .constructions import blocks as blk
from .constructions import gadgets as gd
from .fpcore import FINITE, Fp, FpFormat
from .kernel import kernel_for
from .linalg import FpMatrix, Permutation, compose, cycle, permute_codes, swap12
from .oracles import ArithOracle, RationalShadow, rows_ab_similar
from .transformer import (AttnHead, AttnParams, BlockStack, FfParams, TransformerModel,
                          codes_ab_similar, forward_codes, softmax_codes, softmax_col,
                          stack_codes)

MAX_FAILURES_KEPT = 50


class UnknownSuiteError(ValueError):
    pass


# --------------------------------------------------------------------------
# reports

@dataclass
class SuiteReport:
    name: str
    format: tuple | None
    total: int = 0
    passed: int = 0
    failed: int = 0
    skipped: int = 0
    failures: list = field(default_factory=list)
    wall_time: float = 0.0
    seed: int | None = None
    notes: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.failed == 0

    def record(self, ok: bool, input=None, expected=None, actual=None) -> bool:
        self.total += 1
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            if len(self.failures) < MAX_FAILURES_KEPT:
                self.failures.append({"input": str(input), "expected": str(expected),
                                      "actual": str(actual)})
        return ok

    def skip(self, count: int = 1, reason: str = "") -> None:
        self.total += count
        self.skipped += count
        if reason:
            self.notes["skip_reason"] = reason

    def merge(self, other: "SuiteReport") -> None:
        self.total += other.total
        self.passed += other.passed
        self.failed += other.failed
        self.skipped += other.skipped
        room = MAX_FAILURES_KEPT - len(self.failures)
        self.failures.extend(other.failures[:max(room, 0)])

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["format"] = None if self.format is None else {"p": self.format[0], "q": self.format[1]}
        d["wall_time"] = round(self.wall_time, 3)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteReport":
        d = dict(d)
        f = d.get("format")
        d["format"] = None if f is None else (f["p"], f["q"])
        return cls(**d)

    def summary(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        fmt = "" if self.format is None else f" p={self.format[0]} q={self.format[1]}"
        return (f"{status} {self.name}{fmt}: {self.passed}/{self.total} passed, "
                f"{self.failed} failed, {self.skipped} skipped ({self.wall_time:.2f}s)")


# --------------------------------------------------------------------------
# configuration and model sampling

@dataclass(frozen=True)
class ModelSamplerConfig:
    """Ranges are inclusive (lo, hi) pairs."""

    seed: int = 0
    d_in: tuple = (1, 3)
    d_out: tuple = (1, 3)
    d: tuple = (1, 4)
    m: tuple = (1, 4)
    r: tuple = (1, 4)
    h: tuple = (1, 2)
    n: tuple = (2, 4)
    blocks: tuple = (1, 2)
    extreme_prob: float = 0.05

    def __post_init__(self):
        for name in ("d_in", "d_out", "d", "m", "r", "h", "n", "blocks"):
            lo, hi = getattr(self, name)
            low_ok = lo >= 0 if name == "blocks" else lo >= 1
            if not (low_ok and lo <= hi):
                raise ValueError(f"bad range for {name}: {(lo, hi)}")
        if not 0 <= self.extreme_prob <= 1:
            raise ValueError("extreme_prob must lie in [0, 1]")


def weight_pool(fmt: FpFormat) -> list[Fp]:
    """Finite floats in [-2, 2]."""
    return [v for v in fc.enumerate_finite(fmt) if abs(v.value(fmt)) <= 2]


def extreme_values(fmt: FpFormat) -> list[Fp]:
    big, small = fc.fmt_Omega(fmt), fc.fmt_omega(fmt)
    return [big, fc.negate(big), small, fc.negate(small), fc.zero(fmt)]


def sample_model(cfg: ModelSamplerConfig, fmt: FpFormat, index: int = 0) -> TransformerModel:
    """Reproducible random model; `index` selects one of a seeded family."""
    rng = random.Random(f"model|{cfg.seed}|{index}")
    pool, extreme = weight_pool(fmt), extreme_values(fmt)
    k = kernel_for(fmt)
    pool_c = [k.encode(v) for v in pool]
    ext_c = [k.encode(v) for v in extreme]

    def pick(rng_range):
        return rng.randint(*rng_range)

    def mat(rows, cols):
        codes = [[rng.choice(ext_c) if rng.random() < cfg.extreme_prob else rng.choice(pool_c)
                  for _ in range(cols)] for _ in range(rows)]
        return FpMatrix(fmt, np.array(codes, dtype=np.uint16))

    d_in, d_out, d = pick(cfg.d_in), pick(cfg.d_out), pick(cfg.d)
    m, r, h, nb = pick(cfg.m), pick(cfg.r), pick(cfg.h), pick(cfg.blocks)
    n = pick(cfg.n)
    blocks = []
    for _ in range(nb):
        attn = AttnParams(tuple(AttnHead(mat(m, d), mat(m, d), mat(m, d), mat(d, m))
                                for _ in range(h)))
        ff = FfParams(mat(r, d), mat(r, 1), mat(d, r), mat(d, 1))
        blocks.append((attn, ff))
    stack = BlockStack(tuple(blocks), (h, m, r, d, n))
    return TransformerModel(mat(d, d_in), mat(d, 1), stack, mat(d_out, d), mat(d_out, 1), fmt,
                            {"kind": "sampled", "seed": cfg.seed, "index": index, "n": n})


def zero_model(fmt: FpFormat, d_in: int, d_out: int, d: int, blocks: int = 1) -> TransformerModel:
    z = lambda r, c: FpMatrix.zeros(r, c, fmt)  # noqa: E731
    layer = (AttnParams.zero(d, 1, fmt), FfParams.zero(d, 1, fmt))
    stack = BlockStack((layer,) * blocks, (1, 1, 1, d, None))
    return TransformerModel(z(d, d_in), z(d, 1), stack, z(d_out, d), z(d_out, 1), fmt,
                            {"kind": "zero"})


def sample_inputs(fmt: FpFormat, d_in: int, n: int, count: int, rng: random.Random,
                  wide_prob: float = 0.25) -> np.ndarray:
    """(d_in, count, n) codes; entries mostly from [-2, 2], sometimes any finite value."""
    k = kernel_for(fmt)
    narrow = [k.encode(v) for v in weight_pool(fmt)]
    wide = [k.encode(v) for v in fc.enumerate_finite(fmt)]
    out = np.empty((d_in, count, n), dtype=np.uint16)
    for idx in np.ndindex(out.shape):
        out[idx] = rng.choice(wide) if rng.random() < wide_prob else rng.choice(narrow)
    return out


@dataclass
class VerifyConfig:
    seed: int = 0
    samples: int | None = None  # overrides the main sample count of a suite
    workers: int = 1
    sampler: ModelSamplerConfig | None = None
    alphabet: tuple | None = None  # thm1-micro alphabet literals
    n: int | None = None  # sequence length for the construction suites

    def count(self, default: int) -> int:
        return default if self.samples is None else self.samples


def workers_from_env(default: int = 1) -> int:
    raw = os.environ.get("FPT_WORKERS")
    if not raw:
        return default
    try:
        w = int(raw)
    except ValueError:
        raise ValueError(f"FPT_WORKERS must be an integer, got {raw!r}") from None
    if w < 1:
        raise ValueError("FPT_WORKERS must be >= 1")
    return w


def _pmap(fn: Callable, args: list, workers: int) -> list:
    """Map in order; uses worker processes when workers > 1."""
    if workers <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, args))


def _render_codes(codes: np.ndarray, fmt: FpFormat) -> str:
    k = kernel_for(fmt)
    return str([[fc.render(k.decode(c), fmt) for c in row] for row in np.asarray(codes)])


def _is_pow2(v: Fraction) -> bool:
    v = abs(v)
    a, b = v.numerator, v.denominator
    return v != 0 and a & (a - 1) == 0 and b & (b - 1) == 0


# --------------------------------------------------------------------------
# arithmetic

def suite_arith_conformance(fmt: FpFormat, cfg: VerifyConfig) -> SuiteReport:
    rep = SuiteReport("arith-conformance", (fmt.p, fmt.q), seed=cfg.seed)
    k = kernel_for(fmt)
    o = ArithOracle(fmt)
    vals = fc.enumerate_all(fmt)
    codes = [k.encode(v) for v in vals]
    counts = {"add": 0, "sub": 0, "mul": 0, "div": 0}
    for x, cx in zip(vals, codes):
        for y, cy in zip(vals, codes):
            for op, got, ref in (("add", k.add[cx, cy], o.add),
                                 ("sub", k.sub(cx, cy), o.sub),
                                 ("mul", k.mul[cx, cy], o.mul)):
                exp_v = ref(x, y)
                counts[op] += 1
                if int(got) != k.encode(exp_v):
                    rep.record(False, f"{op}({fc.render(x, fmt)}, {fc.render(y, fmt)})",
                               fc.render(exp_v, fmt), fc.render(k.decode(got), fmt))
                else:
                    rep.record(True)
            if fc.div_in_domain(x, y, fmt):
                counts["div"] += 1
                exp_v = o.div(x, y)
                got = k.div(cx, cy)
                rep.record(int(got) == k.encode(exp_v),
                           f"div({fc.render(x, fmt)}, {fc.render(y, fmt)})",
                           fc.render(exp_v, fmt), fc.render(k.decode(got), fmt))
    # scalar entry points against the same oracle on a diagonal sample
    for x in vals:
        for name, got, ref in (("relu", fc.rounded_relu(x, fmt), o.relu(x)),
                               ("exp", fc.rounded_exp(x, fmt), o.exp(x)),
                               ("add-scalar", fc.fp_add(x, vals[len(vals) // 3], fmt),
                                o.add(x, vals[len(vals) // 3])),
                               ("mul-scalar", fc.fp_mul(x, vals[len(vals) // 4], fmt),
                                o.mul(x, vals[len(vals) // 4]))):
            rep.record(got == ref, f"{name}({fc.render(x, fmt)})", ref, got)
    rep.notes["pairs"] = counts
    return rep


# --------------------------------------------------------------------------
# saturation lemmas

def _prefix_sums(start: Fp, x: Fp, count: int, fmt: FpFormat) -> list[Fp]:
    """[start, start+x, start+x+x, ...] folded left, count additions."""
    out = [start]
    acc = start
    for _ in range(count):
        acc = fc.fp_add(acc, x, fmt)
        out.append(acc)
    return out


def max_distinguish_closed_form(k: int, fmt: FpFormat) -> Fp:
    """Closed form of the k-fold left sum of 1^+ for 0 <= k <= 3 * 2^p - 1."""
    p = fmt.p
    f = lambda v: fc.fp(v, fmt)  # noqa: E731
    if k == 0:
        return fc.zero(fmt)
    if k == 1:
        return fc.succ(f(1), fmt)
    if k == 2:
        return fc.succ(f(2), fmt)
    if k == 3:
        return fc.succ(fc.succ(f(3), fmt), fmt)
    if 4 <= k <= 2 ** p:
        return fc.succ(f(k), fmt)
    if 2 ** p < k < 2 ** (p + 1):
        return f(k + 1)
    if 2 ** (p + 1) <= k <= 3 * 2 ** p - 1:
        return f(2 ** (p + 1) + (k - 2 ** (p + 1) + 1) * 2)
    raise ValueError("k outside 0..3*2^p-1")


def _max_distinguish_cases(fmt: FpFormat, rep: SuiteReport) -> None:
    """Chain of 1^+: closed form, distinctness, then saturation at 2^(p+2)."""
    K = 3 * 2 ** fmt.p - 1
    one_p = fc.succ(fc.one(fmt), fmt)
    top = fc.from_fraction(fc._pow2(fmt.p + 2), fmt)
    r = lambda v: fc.render(v, fmt)  # noqa: E731
    chain = _prefix_sums(fc.zero(fmt), one_p, K + 5, fmt)
    for k in range(K + 1):
        want = max_distinguish_closed_form(k, fmt)
        rep.record(chain[k] == want, f"sum of {k} x 1^+", r(want), r(chain[k]))
    rep.record(len(set(chain[:K + 1])) == K + 1, "partial sums 0..3*2^p-1 distinct",
               K + 1, len(set(chain[:K + 1])))
    for n in range(6):
        rep.record(chain[K + n] == top, f"sum of {K}+{n} x 1^+", r(top), r(chain[K + n]))


def suite_max_distinguish(fmt: FpFormat, cfg: VerifyConfig) -> SuiteReport:
    fmt.require_condition1()
    rep = SuiteReport("max-distinguish", (fmt.p, fmt.q), seed=cfg.seed)
    _max_distinguish_cases(fmt, rep)
    return rep


def suite_saturation(fmt: FpFormat, cfg: VerifyConfig) -> SuiteReport:
    fmt.require_condition1()
    rep = SuiteReport("saturation", (fmt.p, fmt.q), seed=cfg.seed)
    p = fmt.p
    K = 3 * 2 ** p - 1
    L = 6 * 2 ** p
    extra = (0, 1, 5)
    z0 = fc.zero(fmt)
    r = lambda v: fc.render(v, fmt)  # noqa: E731

    _max_distinguish_cases(fmt, rep)

    # same-sum0: every x, membership {0, +-inf, NaN} u {+-2^e}
    for x in fc.enumerate_all(fmt):
        s = _prefix_sums(x, x, K + 4, fmt)  # s[i] is the sum of i+1 copies
        got = [s[K - 1 + n] for n in extra]
        v = got[0]
        member = v.kind != FINITE or v.is_zero or _is_pow2(v.value(fmt))
        rep.record(len(set(got)) == 1 and member, f"same-sum0 x={r(x)}",
                   "equal sums in {0,+-inf,nan,+-2^e}", [r(g) for g in got])

    # same-sum1: x finite >= 0, z finite >= 0 or +inf
    nonneg = [v for v in fc.enumerate_finite(fmt) if v.sign > 0 or v.is_zero]
    zs = nonneg + [fc.PINF]
    for x in nonneg:
        s = _prefix_sums(x, x, K + 4, fmt)
        sx = s[K - 1]
        sx_ok = sx.kind != FINITE or sx.is_zero or (sx.sign > 0 and _is_pow2(sx.value(fmt)))
        for z in zs:
            zc = _prefix_sums(z, x, K + 5, fmt)
            got = [zc[K + n] for n in extra]
            v = got[0]
            allowed = {fc.zero(fmt), z, fc.PINF, fc.NINF, fc.FNAN}
            if z.kind == FINITE:
                allowed.add(fc.succ(z, fmt))
            member = v in allowed or (v.kind == FINITE and v.sign > 0 and _is_pow2(v.value(fmt)))
            rep.record(len(set(got)) == 1 and member and sx_ok,
                       f"same-sum1 x={r(x)} z={r(z)}", "equal sums in the stated set",
                       [r(g) for g in got] + [r(sx)])

    # same-sum2: every x, z in {0, +-inf, NaN} u {+-2^e}
    z2 = [z0, fc.PINF, fc.NINF, fc.FNAN] + [
        v for v in fc.enumerate_finite(fmt) if not v.is_zero and _is_pow2(v.value(fmt))]
    for x in fc.enumerate_all(fmt):
        for z in z2:
            zc = _prefix_sums(z, x, L + 5, fmt)
            got = [zc[L + n] for n in extra]
            rep.record(len(set(got)) == 1, f"same-sum2 x={r(x)} z={r(z)}", "equal sums",
                       [r(g) for g in got])
    rep.notes["z_set_same_sum2"] = len(z2)
    return rep


# --------------------------------------------------------------------------
# positional encoding collisions

def find_collision(z: Fp, fmt: FpFormat) -> tuple | None:
    """Distinct finite a, b with a (+) z == b (+) z, scanning outward from 0.

    For z > 0 the scan runs over non-negative x ascending, for z < 0 over
    non-positive x descending; otherwise over all finite values.
    """
    finite = fc.enumerate_finite(fmt)
    if z.kind == FINITE and z.sign > 0:
        order = [v for v in finite if v.sign > 0 or v.is_zero]
    elif z.kind == FINITE:
        order = [v for v in reversed(finite) if v.sign < 0 or v.is_zero]
    else:
        order = sorted(finite, key=lambda v: (abs(v.value(fmt)), v.sign))
    seen = {}
    for x in order:
        y = fc.fp_add(x, z, fmt)
        if y in seen:
            return seen[y], x
        seen[y] = x
    return None


def suite_posenc(fmt: FpFormat, cfg: VerifyConfig) -> SuiteReport:
    rep = SuiteReport("posenc", (fmt.p, fmt.q), seed=cfg.seed)
    bound = fc._pow2(fmt.emin + fmt.p + 2)
    small = fc._pow2(fmt.emin + 1)
    misses = 0
    finite_cases = 0
    for z in fc.enumerate_all(fmt):
        if z.kind == FINITE and z.is_zero:
            continue
        pair = find_collision(z, fmt)
        ok = pair is not None
        if ok:
            a, b = pair
            ok = a != b and fc.fp_add(a, z, fmt) == fc.fp_add(b, z, fmt)
            if z.kind == FINITE and z.sign > 0 and z.value(fmt) < small:
                ok = ok and b.value(fmt) <= bound
        if z.kind == FINITE:
            finite_cases += 1
            misses += not ok
        rep.record(ok, f"z={fc.render(z, fmt)}", "collision pair",
                   None if pair is None else tuple(fc.render(v, fmt) for v in pair))
    rep.notes["finite_cases"] = finite_cases
    rep.notes["finite_misses"] = misses
    return rep


# --------------------------------------------------------------------------
# three-max signatures

def suite_three_max(fmt: FpFormat | None, cfg: VerifyConfig, ns=(2, 3, 4, 5)) -> SuiteReport:
    rep = SuiteReport("three-max", None if fmt is None else (fmt.p, fmt.q), seed=cfg.seed)
    sigs_per_n = {}
    for n in ns:
        groups: dict = {}
        perms = [Permutation(m) for m in itertools.permutations(range(n))]
        for pi in perms:
            groups.setdefault(asm.three_max_signature(pi), set()).add(pi)
        sigs_per_n[n] = len(groups)
        sw = swap12(n)
        for pi in perms:
            pre = groups[asm.three_max_signature(pi)]
            want = {pi, compose(sw, pi)}
            rep.record(pre == want, f"n={n} pi={[v + 1 for v in pi.mapping]}",
                       sorted(q.mapping for q in want), sorted(q.mapping for q in pre))
    rep.notes["signatures"] = sigs_per_n
    return rep


# --------------------------------------------------------------------------
# Theorems 4 and 5 on sampled models

def _thm45_one(args) -> tuple:
    fmt, sampler, index, inputs_per_model = args
    before = fc.div_violations.count
    model = sample_model(sampler, fmt, index)
    n = model.meta["n"]
    rng = random.Random(f"inputs|{sampler.seed}|{index}")
    X = sample_inputs(fmt, model.d_in, n, inputs_per_model, rng)
    dup = X.copy()
    pairs = []
    for b in range(inputs_per_model):
        i, j = rng.sample(range(n), 2)
        dup[:, b, i] = dup[:, b, j]
        pairs.append((i, j))
    sw = swap12(n)
    results = []
    try:
        batch = np.concatenate([X, permute_codes(sw, X), dup], axis=1)
        out = forward_codes(model, batch)
    except fc.DivDomainError as e:
        return [(False, {"input": f"model {index}", "expected": "no div violation",
                         "actual": str(e)})] * (2 * inputs_per_model), fc.div_violations.count - before
    B = inputs_per_model
    fX, fSX, fD = out[:, :B], out[:, B:2 * B], out[:, 2 * B:]
    for b in range(B):
        ok4 = bool((fSX[:, b] == permute_codes(sw, fX[:, b])).all())
        results.append((ok4, None if ok4 else {
            "input": f"thm4 model {index} X={_render_codes(X[:, b], fmt)}",
            "expected": _render_codes(permute_codes(sw, fX[:, b]), fmt),
            "actual": _render_codes(fSX[:, b], fmt)}))
        i, j = pairs[b]
        ok5 = bool((fD[:, b, i] == fD[:, b, j]).all())
        results.append((ok5, None if ok5 else {
            "input": f"thm5 model {index} X={_render_codes(dup[:, b], fmt)} cols {i},{j}",
            "expected": "equal output columns", "actual": _render_codes(fD[:, b], fmt)}))
    return results, fc.div_violations.count - before


def _absorb(rep: SuiteReport, results, violations: int) -> None:
    for ok, fail in results:
        if ok:
            rep.record(True)
        else:
            fail = fail or {}
            rep.record(False, fail.get("input"), fail.get("expected"), fail.get("actual"))
    for _ in range(violations if fc.div_violations.count == 0 else 0):
        fc.div_violations.bump()  # carry worker-side violations into this process


def suite_thm4_thm5(fmt: FpFormat, cfg: VerifyConfig, inputs_per_model: int = 20) -> SuiteReport:
    fmt.require_condition1()
    rep = SuiteReport("thm4-thm5", (fmt.p, fmt.q), seed=cfg.seed)
    sampler = cfg.sampler or ModelSamplerConfig(seed=cfg.seed, n=(2, 4))
    models = cfg.count(200)
    jobs = [(fmt, sampler, i, inputs_per_model) for i in range(models)]
    for results, viol in _pmap(_thm45_one, jobs, cfg.workers):
        _absorb(rep, results, viol)
    # the all-zero model maps everything to zero, so both properties hold trivially
    zero = zero_model(fmt, 2, 2, 3)
    X = sample_inputs(fmt, 2, 3, 4, random.Random(f"zero|{cfg.seed}"))
    out = forward_codes(zero, np.concatenate([X, permute_codes(swap12(3), X)], axis=1))
    rep.record(bool((out == kernel_for(fmt).zero).all()), "zero-weight model", "all zero",
               _render_codes(out[:, 0], fmt))
    rep.notes.update(models=models, inputs_per_model=inputs_per_model)
    return rep


# --------------------------------------------------------------------------
# Theorem 2: similarity preservation

def similarity_bounds(fmt: FpFormat) -> tuple:
    """(a, b) = (3 * 2^p, 9 * 2^p): the smallest block sizes the argument allows."""
    return 3 * 2 ** fmt.p, 9 * 2 ** fmt.p


def similar_pair(z1: np.ndarray, z2: np.ndarray, a: int, b: int, tail: np.ndarray | None = None):
    """Code arrays (d, n) for X = [z1]*a + [z2]*(b-a) + tail, Y = [z1]*(a-1) + [z2]*(b-a+1) + tail."""
    cols_x = [z1] * a + [z2] * (b - a)
    cols_y = [z1] * (a - 1) + [z2] * (b - a + 1)
    X = np.stack(cols_x, axis=1)
    Y = np.stack(cols_y, axis=1)
    if tail is not None and tail.shape[1]:
        X = np.concatenate([X, tail], axis=1)
        Y = np.concatenate([Y, tail], axis=1)
    return X, Y


def _thm2_one(args) -> tuple:
    fmt, sampler, index, pairs = args
    before = fc.div_violations.count
    a, b = similarity_bounds(fmt)
    model = sample_model(sampler, fmt, index)
    n = model.meta["n"]
    rng = random.Random(f"pairs|{sampler.seed}|{index}")
    toks = sample_inputs(fmt, model.d_in, 2, pairs, rng)
    tails = sample_inputs(fmt, model.d_in, n - b, pairs, rng) if n > b else None
    Xs, Ys = [], []
    for t in range(pairs):
        z1, z2 = toks[:, t, 0], toks[:, t, 1]
        if t == 0:
            z2 = z1  # the degenerate pair is always included
        X, Y = similar_pair(z1, z2, a, b, None if tails is None else tails[:, t])
        Xs.append(X)
        Ys.append(Y)
    try:
        out = forward_codes(model, np.stack(Xs + Ys, axis=1))
    except fc.DivDomainError as e:
        return [(False, {"input": f"model {index}", "expected": "no div violation",
                         "actual": str(e)})] * pairs, fc.div_violations.count - before
    results = []
    for t in range(pairs):
        fX, fY = out[:, t], out[:, pairs + t]
        ok = codes_ab_similar(fX, fY, a, b)
        results.append((ok, None if ok else {
            "input": f"model {index} pair {t}",
            "expected": f"({a},{b})-similar outputs",
            "actual": f"{_render_codes(fX, fmt)} vs {_render_codes(fY, fmt)}"}))
    return results, fc.div_violations.count - before


def averaging_model(fmt: FpFormat, n: int | None = None) -> TransformerModel:
    """d = 1: one attention block with zero keys/queries adds the column mean."""
    one = FpMatrix.from_values([[1]], fmt)
    zero = FpMatrix.zeros(1, 1, fmt)
    attn = AttnParams((AttnHead(zero, zero, one, one),))
    ff = FfParams(zero, zero, zero, zero)
    stack = BlockStack(((attn, ff),), (1, 1, 1, 1, n))
    return TransformerModel(one, zero, stack, one, zero, fmt, {"kind": "averaging"})


def shadow_contrast(fmt: FpFormat) -> dict:
    """Run the averaging model on a similar pair in float and exact arithmetic."""
    a, b = similarity_bounds(fmt)
    k = kernel_for(fmt)
    model = averaging_model(fmt, b)
    z1 = np.array([k.encode(fc.fp(1, fmt))], dtype=np.uint16)
    z2 = np.array([k.encode(fc.fp(2, fmt))], dtype=np.uint16)
    X, Y = similar_pair(z1, z2, a, b)
    out = forward_codes(model, np.stack([X, Y], axis=1))
    float_similar = codes_ab_similar(out[:, 0], out[:, 1], a, b)
    sh = RationalShadow(fmt)
    xr = [[k.decode(c).value(fmt) for c in X[0]]]
    yr = [[k.decode(c).value(fmt) for c in Y[0]]]
    ex, ey = sh.forward(model, xr), sh.forward(model, yr)
    exact_similar = rows_ab_similar(ex, ey, a, b)
    return {"a": a, "b": b, "float_similar": float_similar, "exact_similar": exact_similar,
            "float_first_cols": [fc.render(k.decode(out[0, 0, 0]), fmt),
                                 fc.render(k.decode(out[0, 1, 0]), fmt)],
            "exact_first_cols": [str(ex[0][0]), str(ey[0][0])]}


def suite_thm2(fmt: FpFormat, cfg: VerifyConfig, pairs: int = 25) -> SuiteReport:
    fmt.require_condition1()
    rep = SuiteReport("thm2-similarity", (fmt.p, fmt.q), seed=cfg.seed)
    a, b = similarity_bounds(fmt)
    sampler = cfg.sampler or ModelSamplerConfig(seed=cfg.seed)
    sampler = dataclasses.replace(sampler, n=(b, b))
    models = cfg.count(25)
    jobs = [(fmt, sampler, i, pairs) for i in range(models)]
    for results, viol in _pmap(_thm2_one, jobs, cfg.workers):
        _absorb(rep, results, viol)
    sh = shadow_contrast(fmt)
    rep.record(sh["float_similar"], "averaging model, float", "similar", sh["float_first_cols"])
    rep.record(not sh["exact_similar"], "averaging model, exact shadow", "similarity violated",
               sh["exact_first_cols"])
    rep.notes.update(a=a, b=b, n=b, models=models, pairs=pairs, shadow=sh)
    return rep


# --------------------------------------------------------------------------
# construction suites

DEFAULT_ALPHABET = ("1", "1.25", "2", "3")


def parse_alphabet(items, fmt: FpFormat) -> blk.Alphabet:
    """Scalar tokens from exact literals; non-representable values are rejected."""
    return blk.Alphabet.scalars([fc.parse_literal(str(t), fmt) for t in items])


def suite_thm1_micro(fmt: FpFormat, cfg: VerifyConfig) -> SuiteReport:
    fmt.require_condition1()
    rep = SuiteReport("thm1-micro", (fmt.p, fmt.q), seed=cfg.seed)
    alphabet = parse_alphabet(cfg.alphabet or DEFAULT_ALPHABET, fmt)
    n = cfg.n or 3
    target = asm.random_swap_equivariant_target(alphabet, n, 1, cfg.seed, fmt)
    model = asm.assemble_thm1_model(target, alphabet, n, fmt)
    inputs = asm.distinct_inputs(alphabet, n)
    outs = asm.run_on_seqs(model, inputs)
    r = lambda s: [[fc.render(v, fmt) for v in t] for t in s]  # noqa: E731
    for X, Y in zip(inputs, outs):
        rep.record(Y == target[X], f"X={r(X)}", r(target[X]), r(Y))
    sw = swap12(n)
    swapped = asm.run_on_seqs(model, [asm.permute_seq(sw, X) for X in inputs])
    for X, Y, SY in zip(inputs, outs, swapped):
        rep.record(SY == asm.permute_seq(sw, Y), f"swap12 X={r(X)}", "equivariant", r(SY))
    wit = asm.find_cycle_witness(model, inputs)
    rep.record(wit is not None, "3-cycle witness", "a violation of cycle equivariance", wit)
    if wit is not None:
        rep.notes["cycle_witness"] = {key: (r(v) if key != "perm" else list(v))
                                      for key, v in wit.items()}
    rep.notes["dims"] = model.meta["dims"]
    rep.notes["keys"] = model.meta["keys"]
    return rep


def suite_thm3_micro(fmt: FpFormat, cfg: VerifyConfig) -> SuiteReport:
    fmt.require_condition1()
    rep = SuiteReport("thm3-micro", (fmt.p, fmt.q), seed=cfg.seed)
    n = cfg.n or 5
    rng = random.Random(f"thm3-domain|{cfg.seed}")
    finite = fc.enumerate_finite(fmt)
    count = cfg.count(1000)
    domain = [tuple((rng.choice(finite),) for _ in range(n)) for _ in range(count)]
    domain += [tuple((v,) for _ in range(n)) for v in finite]
    target = asm.PermEquivariantTarget(cfg.seed, fmt)
    t0 = time.perf_counter()
    model = asm.assemble_thm3_model(target, n, fmt, domain)
    rep.notes["build_seconds"] = round(time.perf_counter() - t0, 2)
    outs = asm.run_on_seqs(model, domain, chunk=64)
    for X, Y in zip(domain, outs):
        want = target(X)
        rep.record(Y == want, f"X={[fc.render(t[0], fmt) for t in X]}",
                   [fc.render(t[0], fmt) for t in want], [fc.render(t[0], fmt) for t in Y])
    too_long = asm.max_sequence_length(fmt) + 1
    try:
        asm.assemble_thm3_model(target, too_long, fmt, [])
        rejected = False
    except ValueError:
        rejected = True
    rep.record(rejected, f"n={too_long}", "rejected", "built" if not rejected else "rejected")
    rep.notes.update(dims=model.meta["dims"], keys=model.meta["keys"], n=n,
                     random_inputs=count, constant_inputs=len(finite))
    return rep


# --------------------------------------------------------------------------
# small lemmas

def _plus(x: Fp, times: int, fmt: FpFormat) -> Fp:
    for _ in range(times):
        x = fc.succ(x, fmt)
    return x


def suite_oneppp(fmt: FpFormat, cfg: VerifyConfig) -> SuiteReport:
    rep = SuiteReport("lemma-oneppp", (fmt.p, fmt.q), seed=cfg.seed)
    if fmt.p < 3:
        rep.skip(2, "the identities need p >= 3")
        return rep
    one = fc.one(fmt)
    a, b = _plus(one, 1, fmt), _plus(one, 2, fmt)
    three = fc.fp(3, fmt)
    add = lambda x, y: fc.fp_add(x, y, fmt)  # noqa: E731
    r = lambda v: fc.render(v, fmt)  # noqa: E731
    first = (add(add(a, b), b), add(add(b, a), b))
    rep.record(first[0] == first[1] == _plus(three, 3, fmt),
               "(1+ + 1++) + 1++ and (1++ + 1+) + 1++", r(_plus(three, 3, fmt)),
               [r(v) for v in first])
    second = add(add(b, b), a)
    rep.record(second == _plus(three, 2, fmt), "(1++ + 1++) + 1+", r(_plus(three, 2, fmt)), r(second))
    return rep


def suite_onep2(fmt: FpFormat, cfg: VerifyConfig) -> SuiteReport:
    rep = SuiteReport("onep2", (fmt.p, fmt.q), seed=cfg.seed)
    if fmt.p != 2:
        rep.skip(10, "the identities are stated for p = 2 only")
        return rep
    one = fc.one(fmt)
    a = fc.succ(one, fmt)
    three = fc.fp(3, fmt)
    add = lambda x, y: fc.fp_add(x, y, fmt)  # noqa: E731
    mul = lambda x, y: fc.fp_mul(x, y, fmt)  # noqa: E731
    r = lambda v: fc.render(v, fmt)  # noqa: E731
    first = (add(add(a, one), a), add(add(one, a), a))
    rep.record(first[0] == first[1] == three, "(1+ + 1) + 1+ and (1 + 1+) + 1+", "3",
               [r(v) for v in first])
    second = add(add(a, a), one)
    rep.record(second == fc.succ(three, fmt), "(1+ + 1+) + 1", r(fc.succ(three, fmt)), r(second))
    f = lambda s: fc.fp(s, fmt)  # noqa: E731
    for x, y, want in ((f("1.25"), f("1.5"), f(2)), (f("1.25"), f("1.75"), f(2)),
                       (f("0.5"), f(2), one)):
        rep.record(mul(x, y) == want, f"{r(x)} * {r(y)}", r(want), r(mul(x, y)))
    # the listed witnesses y_x, and the solver, for every x in (1, 2]
    listed = {"1.25": "0.75", "1.5": "0.625", "1.75": "0.625", "2": "0.5"}
    half_open = blk.Interval(Fraction(1, 2), Fraction(1), hi_open=True)
    for xs, ys in listed.items():
        x, y = f(xs), f(ys)
        try:
            found = blk.solve_mul_target(x, one, half_open, fmt)
            ok = mul(x, y) == one and mul(x, found) == one
        except blk.SolverError as e:
            found, ok = str(e), False
        rep.record(ok, f"x={xs}", f"x * {ys} = 1", f"solver gave {found}")
    return rep


def suite_one_plus(fmt: FpFormat, cfg: VerifyConfig) -> SuiteReport:
    rep = SuiteReport("lemma-one-plus", (fmt.p, fmt.q), seed=cfg.seed)
    one = fc.one(fmt)
    t1, t2 = _plus(one, 1, fmt), _plus(one, 2, fmt)
    ys = blk.Interval(Fraction(1, 2), Fraction(1), lo_open=True)
    zs = blk.Interval(Fraction(1, 2), t1.value(fmt), lo_open=True)
    xs = [v for v in fc.enumerate_finite(fmt) if 1 < v.value(fmt) <= 2]
    for x in xs:
        for target, search in ((t1, ys), (t2, zs)):
            try:
                y = blk.solve_mul_target(x, target, search, fmt)
                ok = fc.fp_mul(x, y, fmt) == target and y.value(fmt) in search
                got = fc.render(y, fmt)
            except blk.SolverError as e:
                ok, got = False, str(e)
            rep.record(ok, f"x={fc.render(x, fmt)} target={fc.render(target, fmt)}",
                       "a solution in range", got)
    return rep


# --------------------------------------------------------------------------
# gadget units

def suite_gadgets(fmt: FpFormat, cfg: VerifyConfig) -> SuiteReport:
    fmt.require_condition1()
    rep = SuiteReport("gadgets", (fmt.p, fmt.q), seed=cfg.seed)
    k = kernel_for(fmt)
    r = lambda v: fc.render(v, fmt)  # noqa: E731
    finite = fc.enumerate_finite(fmt)
    X = np.array([[k.encode(v) for v in finite]], dtype=np.uint16)

    # encoder
    enc = gd.build_injective_encoder(1, fmt)
    E, seen = enc.apply_codes(X, trace=True)
    cols = [tuple(E[:, j]) for j in range(E.shape[1])]
    rep.record(len(set(cols)) == len(cols), "encoder injective", len(cols), len(set(cols)))
    rep.record(all(bool(k.is_finite[s].all()) for s in seen), "encoder intermediates finite",
               True, False)
    cap = fc._pow2(fmt.emax)
    in_range = all(0 <= k.decode(c).value(fmt) <= cap for c in E.ravel())
    rep.record(in_range, "encoder range [0, 2^emax]", True, in_range)
    big = fc._pow2(fmt.emin + 1)
    zero = fc.zero(fmt)
    for j, v in enumerate(finite):
        if v.value(fmt) >= big:
            half = fc.from_fraction(v.value(fmt) / 2, fmt)
            want = [zero, zero, half, zero, zero, zero]
            got = [k.decode(c) for c in E[:, j]]
            rep.record(got == want, f"encoder({r(v)})", [r(w) for w in want], [r(g) for g in got])

    # indicators over every encoded input
    for i, key in enumerate(finite):
        ind = gd.build_indicator([k.decode(c) for c in E[:, i]], fmt)
        out = ind.apply_codes(E)[0]
        want = np.where(np.arange(len(finite)) == i, k.one, k.zero)
        bad = np.flatnonzero(out != want)
        for j in range(len(finite)):
            ok = j not in bad
            rep.record(ok, f"indicator key={r(key)} input={r(finite[j])}",
                       r(k.decode(want[j])), r(k.decode(out[j])))

    # memorizer on a random table over all of F
    rng = random.Random(f"memo|{cfg.seed}")
    table = gd.LookupTable(1, 1, {(v,): (rng.choice(finite),) for v in finite})
    mem = gd.build_memorizer(table, fmt)
    got = mem.apply_codes(X)[0]
    for j, v in enumerate(finite):
        want = table.lookup((v,))[0]
        rep.record(k.decode(got[j]) == want, f"memorizer({r(v)})", r(want), r(k.decode(got[j])))

    # order detector: a fixed triple in n = 5, filler elsewhere, all rotations
    alphabet = parse_alphabet(DEFAULT_ALPHABET, fmt)
    catalog = blk.TripleCatalog(alphabet)
    n = 5
    stack, ocfg, lay = blk.build_order_detect_block(catalog, n, fmt)
    tri = catalog.triples[0]
    filler = next(t for t in range(len(alphabet)) if t not in tri)
    placements = list(itertools.permutations(range(n), 3))
    seqs = []
    for pos in placements:
        toks = [alphabet.tokens[filler]] * n
        for slot, t in zip(pos, tri):
            toks[slot] = alphabet.tokens[t]
        seqs.append(tuple(toks))
    Z = np.zeros((stack.d, len(seqs), n), dtype=np.uint16) + k.zero
    Z[:alphabet.d_in] = asm.seqs_to_codes(seqs, fmt)
    out = stack_codes(Z, stack, fmt)
    dcode = k.encode(ocfg.delta)
    for s, pos in enumerate(placements):
        where = dict(zip(tri, pos))
        for kk in (1, 2, 3):
            trail = tri[blk.rotation(kk, 3) - 1]
            latest = max(where, key=where.get)
            flag = out[lay["flags"][kk - 1], s]
            const = bool((flag == flag[0]).all())
            is_delta = const and int(flag[0]) == dcode
            rep.record(is_delta == (trail == latest),
                       f"positions {pos} rotation {kk}",
                       "delta" if trail == latest else "not delta", r(k.decode(flag[0])))
    scratch_clear = bool((out[lay["d_in"] + 3 * catalog.gamma:] == k.zero).all())
    rep.record(scratch_clear, "order detector scratch cleared", True, scratch_clear)

    # every distinct-token input over a wider alphabet: flag is delta exactly when
    # all three members occur and the rotation's trailing member comes last
    wide = blk.Alphabet.scalars([fc.fp(v, fmt) for v in ("1", "1.25", "1.5", "2", "2.5", "3")])
    wcat = blk.TripleCatalog(wide)
    n = 5
    wstack, wcfg, wlay = blk.build_order_detect_block(wcat, n, fmt)
    seqs = asm.distinct_inputs(wide, n)
    Z = np.zeros((wstack.d, len(seqs), n), dtype=np.uint16) + k.zero
    Z[:1] = asm.seqs_to_codes(seqs, fmt)
    wout = stack_codes(Z, wstack, fmt)
    dcode = k.encode(wcfg.delta)
    bad = 0
    for s_i, X in enumerate(seqs):
        where = {wide.index(t): i for i, t in enumerate(X)}
        for j, tri in enumerate(wcat.triples):
            for kk in (1, 2, 3):
                row = wout[wlay["flags"][3 * j + kk - 1], s_i]
                trail = tri[blk.rotation(kk, 3) - 1]
                want = all(t in where for t in tri) and where[trail] == max(where[t] for t in tri)
                got = bool((row == dcode).all())
                ok = got == want and (want or not (row == dcode).any())
                bad += not ok
                if not ok:
                    rep.record(False, f"X={[fc.render(t[0], fmt) for t in X]} triple {j} rotation {kk}",
                               "delta" if want else "not delta", r(k.decode(row[0])))
    checked = len(seqs) * wcat.gamma * 3
    rep.record(bad == 0, f"order detector on all {len(seqs)} distinct inputs", f"{checked} flags correct",
               f"{bad} wrong")

    # counter: multiplicities 0..n of one symbol, n = 3 * 2^p + 5 so saturation shows
    a_tok, b_tok = (fc.one(fmt),), (fc.fp(2, fmt),)
    ab = blk.Alphabet((a_tok, b_tok))
    n = 3 * 2 ** fmt.p + 5
    cstack, ccfg, clay = blk.build_counter_block(ab, n, fmt)
    seqs = [tuple([a_tok] * c + [b_tok] * (n - c)) for c in range(n + 1)]
    Z = np.zeros((cstack.d, len(seqs), n), dtype=np.uint16) + k.zero
    Z[:1] = asm.seqs_to_codes(seqs, fmt)
    out = stack_codes(Z, cstack, fmt)
    flags = [k.decode(out[clay["flags"][0], c, 0]) for c in range(n + 1)]
    limit = min(ccfg.max_distinct_count, n)
    distinct = flags[:limit + 1]
    rep.record(len(set(distinct)) == limit + 1, f"counter distinct for 0..{limit}",
               limit + 1, len(set(distinct)))
    unit = fc.fp_mul(ccfg.beta, ccfg.alpha, fmt)
    for c in range(n + 1):
        want = fc.left_sum([fc.zero(fmt)] + [unit] * c, fmt)
        if c > ccfg.max_distinct_count:
            want_ok = flags[c] == ccfg.saturation_value
        else:
            want_ok = flags[c] == want and (c > 0 or flags[c].is_zero)
        rep.record(want_ok, f"counter count={c}",
                   r(ccfg.saturation_value if c > ccfg.max_distinct_count else want), r(flags[c]))
    return rep


# --------------------------------------------------------------------------
# softmax range and dual-route check

def suite_softmax(fmt: FpFormat, cfg: VerifyConfig) -> SuiteReport:
    rep = SuiteReport("softmax", (fmt.p, fmt.q), seed=cfg.seed)
    k = kernel_for(fmt)
    o = ArithOracle(fmt)
    rng = random.Random(f"softmax|{cfg.seed}")
    finite = fc.enumerate_finite(fmt)
    cols = []
    for i in range(cfg.count(400)):
        n = rng.randint(1, 8)
        col = [rng.choice(finite) for _ in range(n)]
        for j in range(n):
            if rng.random() < 0.1:
                col[j] = fc.NINF
        if i % 40 == 0:
            col[rng.randrange(n)] = rng.choice([fc.PINF, fc.FNAN])
        if i % 97 == 0:
            col = [fc.NINF] * n
        cols.append(col)
    for col in cols:
        S = np.array([[k.encode(v)] for v in col], dtype=np.uint16)
        fast = [k.decode(c) for c in softmax_codes(S, fmt, axis=0)[:, 0]]
        scalar = softmax_col(col, fmt)
        top = max(col, key=lambda v: fc.sort_key(v, fmt)) if fc.FNAN not in col else fc.FNAN
        num = [o.exp(o.sub(v, top)) for v in col]
        den = num[0]
        for v in num[1:]:
            den = o.add(den, v)
        ref = [o.div(a, den) for a in num]
        special = any(v.kind in (fc.POS_INF, fc.NAN) for v in col) or all(v == fc.NINF for v in col)
        if special:
            in_range = all(v.kind == fc.NAN for v in fast)
        else:
            in_range = all(v.kind == FINITE and 0 <= v.value(fmt) <= 1 for v in fast)
        rep.record(fast == scalar == ref and in_range, [fc.render(v, fmt) for v in col],
                   [fc.render(v, fmt) for v in ref], [fc.render(v, fmt) for v in fast])
    return rep


# --------------------------------------------------------------------------
# dispatcher

SUITES = {
    "arith-conformance": suite_arith_conformance,
    "saturation": suite_saturation,
    "max-distinguish": suite_max_distinguish,
    "posenc": suite_posenc,
    "three-max": suite_three_max,
    "thm4-thm5": suite_thm4_thm5,
    "thm2-similarity": suite_thm2,
    "thm1-micro": suite_thm1_micro,
    "thm3-micro": suite_thm3_micro,
    "lemma-oneppp": suite_oneppp,
    "onep2": suite_onep2,
    "lemma-one-plus": suite_one_plus,
    "gadgets": suite_gadgets,
    "softmax": suite_softmax,
}
ALIASES = {"thm2": "thm2-similarity", "lemma-onep2": "onep2", "thm4": "thm4-thm5",
           "thm5": "thm4-thm5", "arith": "arith-conformance"}


def suite_names() -> list[str]:
    return list(SUITES)


def resolve_suites(spec) -> list[str]:
    """Suite names from a list or comma string; 'all' selects every suite."""
    items = spec.split(",") if isinstance(spec, str) else list(spec)
    out = []
    for raw in items:
        name = raw.strip().lower()
        if not name:
            continue
        if name == "all":
            out.extend(s for s in SUITES if s not in out)
            continue
        name = ALIASES.get(name, name)
        if name not in SUITES:
            raise UnknownSuiteError(f"unknown suite {raw!r}; known: {', '.join(SUITES)}")
        if name not in out:
            out.append(name)
    return out


def run_suite(name: str, fmt: FpFormat, cfg: VerifyConfig | None = None) -> SuiteReport:
    cfg = cfg or VerifyConfig()
    key = ALIASES.get(name, name)
    if key not in SUITES:
        raise UnknownSuiteError(f"unknown suite {name!r}")
    t0 = time.perf_counter()
    before = fc.div_violations.count
    rep = SUITES[key](fmt, cfg)
    rep.wall_time = time.perf_counter() - t0
    rep.notes["div_violations"] = fc.div_violations.count - before
    return rep
