"""Factorisations of equivariant targets and full-model assembly."""

from __future__ import annotations

import itertools
import random
from typing import Callable, Sequence

import numpy as np

from .. import fpcore as fc
from ..fpcore import Fp, FpFormat
from ..kernel import kernel_for
from ..linalg import FpMatrix, Permutation, SparseFpMatrix, compose, cycle, swap12
from ..transformer import TransformerModel, forward_codes
from .blocks import (Alphabet, CounterConfig, OrderDetectorConfig, TripleCatalog,
                     add_counter, add_order_detector, count_flags, count_vector,
                     order_flags)
from .gadgets import LookupTable, build_memorizer
from .staging import StackBuilder, embed_pipeline


class EquivarianceError(ValueError):
    """The target is not equivariant in the way the factorisation needs."""


Seq = tuple  # a sequence of n tokens, each a tuple of Fp


def permute_seq(pi: Permutation, X: Seq) -> Seq:
    """Column j of the result is column pi(j) of X."""
    return tuple(X[pi(j)] for j in range(len(X)))


# --------------------------------------------------------------------------
# three-max signatures

def three_max_signature(pi: Permutation) -> tuple:
    """For each position triple i1<i2<i3, the (1-based) position maximising pi."""
    n = pi.n
    if n < 2:
        raise ValueError("n must be >= 2")
    return tuple(max(t, key=pi) + 1 for t in itertools.combinations(range(n), 3))


# --------------------------------------------------------------------------
# targets

def distinct_inputs(alphabet: Alphabet, n: int) -> list[Seq]:
    return [tuple(alphabet.tokens[i] for i in idx)
            for idx in itertools.permutations(range(len(alphabet)), n)]


def random_swap_equivariant_target(alphabet: Alphabet, n: int, d_out: int, seed: int,
                                   fmt: FpFormat, pool: Sequence[Fp] | None = None) -> dict:
    """Random map on distinct-token inputs with f(swap12 X) = swap12 f(X)."""
    rng = random.Random(seed)
    pool = list(pool or fc.enumerate_finite(fmt))
    sw = swap12(n)
    target = {}
    for X in distinct_inputs(alphabet, n):
        if X in target:
            continue
        Y = tuple(tuple(rng.choice(pool) for _ in range(d_out)) for _ in range(n))
        target[X] = Y
        target[permute_seq(sw, X)] = permute_seq(sw, Y)
    return target


class PermEquivariantTarget:
    """f(X)_i = h(x_i, multiset of X) with h a seeded pseudo-random function."""

    def __init__(self, seed: int, fmt: FpFormat, d_out: int = 1, kind: str = "random"):
        if kind not in ("random", "identity", "constant"):
            raise ValueError(f"unknown target kind {kind!r}")
        self.seed, self.fmt, self.d_out, self.kind = seed, fmt, d_out, kind
        self._pool = fc.enumerate_finite(fmt)
        self._cache = {}

    def column(self, tok: tuple, X: Seq) -> tuple:
        if self.kind == "identity":
            return tuple(tok[:self.d_out]) + (fc.zero(self.fmt),) * max(0, self.d_out - len(tok))
        k = kernel_for(self.fmt)
        if self.kind == "constant":
            rng = random.Random(f"{self.seed}")
            return tuple(rng.choice(self._pool) for _ in range(self.d_out))
        bag = tuple(sorted(tuple(k.encode(v) for v in t) for t in X))
        key = (tuple(k.encode(v) for v in tok), bag)
        if key not in self._cache:
            rng = random.Random(f"{self.seed}|{key}")
            self._cache[key] = tuple(rng.choice(self._pool) for _ in range(self.d_out))
        return self._cache[key]

    def __call__(self, X: Seq) -> Seq:
        return tuple(self.column(t, X) for t in X)


# --------------------------------------------------------------------------
# factorisations

def factorize_swap_equiv(target: dict, catalog: TripleCatalog, cfg: OrderDetectorConfig,
                         fmt: FpFormat) -> LookupTable:
    """Key each output column by (token, order-flag pattern of the input)."""
    if not target:
        raise ValueError("empty target")
    n = len(next(iter(target)))
    sw = swap12(n)
    d_in = catalog.alphabet.d_in
    d_out = len(next(iter(target.values()))[0])
    entries = {}
    for X, Y in target.items():
        SX = permute_seq(sw, X)
        if SX in target and target[SX] != permute_seq(sw, Y):
            raise EquivarianceError(f"target is not swap12-equivariant at {X}")
        flags = tuple(order_flags(X, catalog, cfg, fmt))
        for tok, y in zip(X, Y):
            key = tuple(tok) + flags
            if key in entries and entries[key] != tuple(y):
                raise EquivarianceError("two inputs with the same key need different outputs")
            entries[key] = tuple(y)
    return LookupTable(d_in + 3 * catalog.gamma, d_out, entries)


def factorize_perm_equiv(target: Callable, domain: Sequence[Seq], alphabet: Alphabet,
                         cfg: CounterConfig, fmt: FpFormat) -> LookupTable:
    """Key each output column by (token, count-flag pattern of the input).

    Equivariance is checked on the generators swap12 and the n-cycle for
    every domain input, and the table is checked for conflicting entries.
    """
    entries = {}
    d_out = None
    for X in domain:
        n = len(X)
        Y = target(X)
        for g in (swap12(n), cycle(n)) if n >= 2 else ():
            if target(permute_seq(g, X)) != permute_seq(g, Y):
                raise EquivarianceError(f"target is not permutation-equivariant at {X}")
        flags = tuple(count_flags(count_vector(X, alphabet), cfg, fmt))
        for tok, y in zip(X, Y):
            key = tuple(tok) + flags
            if key in entries and entries[key] != tuple(y):
                raise EquivarianceError("two inputs with the same key need different outputs")
            entries[key] = tuple(y)
            d_out = len(y)
    return LookupTable(alphabet.d_in + len(alphabet), d_out, entries)


# --------------------------------------------------------------------------
# assembly

def _projections(d: int, d_in: int, d_out: int, fmt: FpFormat):
    one = fc.one(fmt)
    W_in = SparseFpMatrix(d, d_in, {(i, i): one for i in range(d_in)}, fmt)
    W_out = SparseFpMatrix(d_out, d, {(i, i): one for i in range(d_out)}, fmt)
    return W_in, FpMatrix.zeros(d, 1, fmt), W_out, FpMatrix.zeros(d_out, 1, fmt)


def _finish(sb: StackBuilder, d_in: int, d_out: int, fmt: FpFormat, meta: dict) -> TransformerModel:
    stack = sb.build(d_min=max(d_in, d_out) + 1)
    h, m, r, d, _ = stack.dims
    W_in, b_in, W_out, b_out = _projections(d, d_in, d_out, fmt)
    meta = dict(meta)
    meta["dims"] = {"h": h, "m": m, "r": r, "d": d, "blocks": len(stack.blocks)}
    return TransformerModel(W_in, b_in, stack, W_out, b_out, fmt, meta)


def assemble_thm1_model(target: dict, alphabet: Alphabet, n: int, fmt: FpFormat) -> TransformerModel:
    """Model equal to a swap12-equivariant target on distinct alphabet inputs."""
    fmt.require_condition1()
    if n < 2:
        raise ValueError("n must be >= 2")
    if len(alphabet) < 3:
        raise ValueError("the alphabet needs at least 3 tokens")
    catalog = TripleCatalog(alphabet)
    d_in, g3 = alphabet.d_in, 3 * catalog.gamma
    d_out = len(next(iter(target.values()))[0])
    sb = StackBuilder(fmt, d_in + 2 * g3)
    flags = list(range(d_in, d_in + g3))
    scratch = list(range(d_in + g3, d_in + 2 * g3))
    cfg = add_order_detector(sb, catalog, n, list(range(d_in)), flags, scratch)
    table = factorize_swap_equiv(target, catalog, cfg, fmt)
    embed_pipeline(sb, build_memorizer(table, fmt), list(range(d_in + g3)),
                   list(range(d_out)), erase_inputs=True)
    meta = {"kind": "thm1", "n": n, "gamma": catalog.gamma, "keys": len(table),
            "alpha": cfg.alpha, "beta": cfg.beta, "beta_prime": cfg.beta_prime,
            "delta": cfg.delta, "alphabet": alphabet.tokens}
    return _finish(sb, d_in, d_out, fmt, meta)


def max_sequence_length(fmt: FpFormat) -> int:
    return 6 * 2 ** fmt.p - 2


def thm3_compare_coords(key: tuple, d_in: int, cfg: CounterConfig) -> list[int]:
    """Coordinates that decide a (token, count flags) key on length-n inputs.

    With no saturated count the flags are exact counts summing to n, so the
    token and the non-zero flags suffice.  Otherwise compare everything.
    """
    flags = key[d_in:]
    if any(f == cfg.saturation_value for f in flags):
        return list(range(len(key)))
    return list(range(d_in)) + [d_in + j for j, f in enumerate(flags) if not f.is_zero]


def assemble_thm3_model(target: Callable, n: int, fmt: FpFormat, domain: Sequence[Seq],
                        alphabet: Alphabet | None = None) -> TransformerModel:
    """Model equal to a permutation-equivariant target on the given domain."""
    fmt.require_condition1()
    if not 1 <= n <= max_sequence_length(fmt):
        raise ValueError(f"n={n} outside 1..{max_sequence_length(fmt)}")
    alphabet = alphabet or Alphabet.full(fmt)
    domain = list(domain)
    if any(len(X) != n for X in domain):
        raise ValueError("domain inputs must have length n")
    d_in, g = alphabet.d_in, len(alphabet)
    cfg = CounterConfig.derive(n, fmt)
    table = factorize_perm_equiv(target, domain, alphabet, cfg, fmt)
    sb = StackBuilder(fmt, d_in + 2 * g)
    flags = list(range(d_in, d_in + g))
    scratch = list(range(d_in + g, d_in + 2 * g))
    add_counter(sb, alphabet, n, list(range(d_in)), flags, scratch)
    mem = build_memorizer(table, fmt, compare_fn=lambda key: thm3_compare_coords(key, d_in, cfg))
    embed_pipeline(sb, mem, list(range(d_in + g)), list(range(table.d_val)), erase_inputs=True)
    meta = {"kind": "thm3", "n": n, "gamma": g, "keys": len(table),
            "alpha": cfg.alpha, "beta": cfg.beta}
    return _finish(sb, d_in, table.d_val, fmt, meta)


# --------------------------------------------------------------------------
# evaluation helpers for sequences of tokens

def seqs_to_codes(seqs: Sequence[Seq], fmt: FpFormat) -> np.ndarray:
    """(d, B, n) code array from B sequences of n token tuples."""
    k = kernel_for(fmt)
    arr = np.array([[[k.encode(v) for v in tok] for tok in X] for X in seqs], dtype=np.uint16)
    return np.transpose(arr, (2, 0, 1))


def codes_to_seqs(codes: np.ndarray, fmt: FpFormat) -> list[Seq]:
    k = kernel_for(fmt)
    d, B, n = codes.shape
    return [tuple(tuple(k.decode(codes[t, b, i]) for t in range(d)) for i in range(n))
            for b in range(B)]


def run_on_seqs(model: TransformerModel, seqs: Sequence[Seq], chunk: int = 256) -> list[Seq]:
    return codes_to_seqs(forward_codes(model, seqs_to_codes(seqs, model.fmt), chunk), model.fmt)


def find_cycle_witness(model: TransformerModel, inputs: Sequence[Seq]):
    """First (X, pi) with model(pi X) != pi model(X) for the n-cycle pi."""
    if not inputs:
        return None
    n = len(inputs[0])
    pi = cycle(n)
    outs = run_on_seqs(model, inputs)
    perm_outs = run_on_seqs(model, [permute_seq(pi, X) for X in inputs])
    for X, Y, PY in zip(inputs, outs, perm_outs):
        if PY != permute_seq(pi, Y):
            return {"input": X, "perm": pi.mapping, "f_of_perm_input": PY,
                    "perm_of_f": permute_seq(pi, Y)}
    return None


__all__ = [
    "EquivarianceError", "three_max_signature", "distinct_inputs",
    "random_swap_equivariant_target", "PermEquivariantTarget", "factorize_swap_equiv",
    "factorize_perm_equiv", "assemble_thm1_model", "assemble_thm3_model",
    "max_sequence_length", "run_on_seqs", "find_cycle_witness", "permute_seq",
    "seqs_to_codes", "codes_to_seqs",
]
