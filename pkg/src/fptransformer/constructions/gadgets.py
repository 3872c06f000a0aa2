"""Affine + ReLU pipelines: injective encoder, equality indicators, memorizer.

A pipeline is a list of float affine maps, each optionally followed by the
rounded ReLU.  Weights are stored sparsely as {(row, col): Fp}; an affine map
computes (W (x) x) (+) b with the usual left fold over columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import fpcore as fc
from ..fpcore import Fp, FpFormat
from ..kernel import kernel_for
from ..linalg import SparseFpMatrix


@dataclass
class AffineLayer:
    in_dim: int
    out_dim: int
    weights: dict  # {(i, j): Fp}
    bias: list  # out_dim Fp values
    relu: bool = True

    def matrix(self, fmt: FpFormat) -> SparseFpMatrix:
        return SparseFpMatrix(self.out_dim, self.in_dim, self.weights, fmt)


@dataclass
class Pipeline:
    layers: list
    fmt: FpFormat
    notes: dict = field(default_factory=dict)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def widths(self) -> list[int]:
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    def then(self, other: "Pipeline") -> "Pipeline":
        if other.in_dim != self.out_dim:
            raise ValueError("pipeline widths do not chain")
        return Pipeline(self.layers + other.layers, self.fmt, {**self.notes, **other.notes})

    def apply_codes(self, X: np.ndarray, trace: bool = False):
        """Evaluate on a code array shaped (in_dim, cols)."""
        k = kernel_for(self.fmt)
        seen = [X]
        for layer in self.layers:
            b = np.array([k.encode(v) for v in layer.bias], dtype=np.uint16)
            b = b.reshape((-1,) + (1,) * (X.ndim - 1))
            X = k.add[k.sparse_matmul(layer.matrix(self.fmt).sparse_codes, X), b]
            if layer.relu:
                X = k.relu[X]
            seen.append(X)
        return (X, seen) if trace else X

    def apply(self, x: Sequence[Fp]) -> list[Fp]:
        k = kernel_for(self.fmt)
        X = np.array([[k.encode(v)] for v in x], dtype=np.uint16)
        return [k.decode(c) for c in self.apply_codes(X)[:, 0]]

    def all_finite(self, X: np.ndarray) -> bool:
        k = kernel_for(self.fmt)
        _, seen = self.apply_codes(X, trace=True)
        return all(bool(k.is_finite[s].all()) for s in seen)


def _c(v, fmt):
    return fc.fp(v, fmt)


# --------------------------------------------------------------------------
# injective encoder

def build_injective_encoder(d0: int, fmt: FpFormat) -> Pipeline:
    """Two ReLU layers mapping F^d0 injectively into [0, 2^emax]^(6 d0).

    Hidden per coordinate x: rho(x), rho(x/2), rho(-x), rho(-x/2).  Outputs:
    rho(rho(x) - 2 rho(x/2)), rho(2 rho(x/2) - rho(x)), rho(rho(x/2)) and the
    same three for -x.  The first two pick up the bit lost when halving a
    subnormal, so together with the halved value they determine x.
    """
    one, half, two = _c(1, fmt), _c(fc.Fraction(1, 2), fmt), _c(2, fmt)
    m1, mhalf, m2 = fc.negate(one), fc.negate(half), fc.negate(two)
    w1, w2 = {}, {}
    for i in range(d0):
        w1[(4 * i, i)] = one
        w1[(4 * i + 1, i)] = half
        w1[(4 * i + 2, i)] = m1
        w1[(4 * i + 3, i)] = mhalf
        for s, (full, halved) in enumerate(((4 * i, 4 * i + 1), (4 * i + 2, 4 * i + 3))):
            o = 6 * i + 3 * s
            w2[(o, full)] = one
            w2[(o, halved)] = m2
            w2[(o + 1, full)] = m1
            w2[(o + 1, halved)] = two
            w2[(o + 2, halved)] = one
    z = fc.zero(fmt)
    return Pipeline([
        AffineLayer(d0, 4 * d0, w1, [z] * (4 * d0)),
        AffineLayer(4 * d0, 6 * d0, w2, [z] * (6 * d0)),
    ], fmt, {"encoder_dim": 6 * d0})


def encode_values(values: Sequence[Fp], fmt: FpFormat) -> list[tuple]:
    """Encoder outputs for scalar inputs (d0 = 1), as tuples of codes."""
    k = kernel_for(fmt)
    enc = build_injective_encoder(1, fmt)
    X = np.array([[k.encode(v) for v in values]], dtype=np.uint16)
    out = enc.apply_codes(X)
    return [tuple(int(c) for c in out[:, j]) for j in range(out.shape[1])]


# --------------------------------------------------------------------------
# indicators on encoded vectors

def _indicator_layers(enc_dim: int, keys: Sequence[tuple], compare: Sequence[Sequence[int]],
                      fmt: FpFormat) -> list[AffineLayer]:
    """Layers mapping an encoded vector to the one-hot vector over `keys`.

    keys[i] is a tuple of enc_dim codes; compare[i] lists the encoded
    coordinates that decide key i.  Per (coordinate, value) pair:
      D+ = rho(e - v), D- = rho(v - e)     (one of them 0; the other >= omega)
      g  = rho(omega - D+ - D-)            (omega on a match, else 0)
      G  = rho(2^emax g)                   (2^(1-p) or 0)
      H  = rho(1 - 2^(p-1) G)              (0 on a match, 1 otherwise)
    and per key: ind = rho(1 - sum of its H values).
    Every intermediate is finite because the encoded values lie in
    [0, 2^emax].
    """
    k = kernel_for(fmt)
    pairs = {}
    for key, cols in zip(keys, compare):
        for c in cols:
            pairs.setdefault((c, key[c]), len(pairs))
    order = sorted(pairs, key=lambda cv: pairs[cv])
    P = len(order)
    z = fc.zero(fmt)
    one, m1 = fc.one(fmt), fc.minus_one(fmt)
    omega = fc.fmt_omega(fmt)
    big = fc.from_fraction(fc._pow2(fmt.emax), fmt)
    scale = fc.negate(fc.from_fraction(fc._pow2(fmt.p - 1), fmt))

    w3, b3 = {}, []
    for idx, (c, v) in enumerate(order):
        vv = k.decode(v)
        w3[(2 * idx, c)] = one
        w3[(2 * idx + 1, c)] = m1
        b3.extend([fc.negate(vv), vv])
    w4 = {}
    for idx in range(P):
        w4[(idx, 2 * idx)] = m1
        w4[(idx, 2 * idx + 1)] = m1
    w5 = {(idx, idx): big for idx in range(P)}
    w6 = {(idx, idx): scale for idx in range(P)}
    w7 = {}
    for i, (key, cols) in enumerate(zip(keys, compare)):
        for c in cols:
            w7[(i, pairs[(c, key[c])])] = m1
    nk = len(keys)
    return [
        AffineLayer(enc_dim, 2 * P, w3, b3),
        AffineLayer(2 * P, P, w4, [omega] * P),
        AffineLayer(P, P, w5, [z] * P),
        AffineLayer(P, P, w6, [one] * P),
        AffineLayer(P, nk, w7, [one] * nk),
    ]


def build_indicator(key: Sequence[Fp], fmt: FpFormat) -> Pipeline:
    """Pipeline on encoded inputs returning 1 iff the input equals `key`."""
    k = kernel_for(fmt)
    kc = tuple(k.encode(v) for v in key)
    layers = _indicator_layers(len(kc), [kc], [range(len(kc))], fmt)
    return Pipeline(layers, fmt)


def build_one_hot(keys: Sequence[tuple], fmt: FpFormat, enc_dim: int,
                  compare: Sequence[Sequence[int]] | None = None) -> Pipeline:
    if compare is None:
        compare = [range(enc_dim)] * len(keys)
    return Pipeline(_indicator_layers(enc_dim, keys, compare, fmt), fmt)


# --------------------------------------------------------------------------
# memorizer

@dataclass
class LookupTable:
    """Finite map from key vectors to value vectors (both tuples of Fp)."""

    d_key: int
    d_val: int
    entries: dict

    def __post_init__(self):
        for kv, vv in self.entries.items():
            if len(kv) != self.d_key or len(vv) != self.d_val:
                raise ValueError("table entry has the wrong width")

    def __len__(self):
        return len(self.entries)

    def lookup(self, key, default=None):
        return self.entries.get(tuple(key), default)


def build_memorizer(table: LookupTable, fmt: FpFormat,
                    compare_fn=None) -> Pipeline:
    """Encoder, one-hot indicators over the table keys, then a linear read-out.

    compare_fn(key) may return the raw coordinates that suffice to identify
    that key on the intended domain; by default every coordinate is compared.
    Inputs that match no key produce the zero vector.
    """
    if not table.entries:
        raise ValueError("empty table")
    k = kernel_for(fmt)
    enc = build_injective_encoder(table.d_key, fmt)
    keys = list(table.entries)
    raw = np.array([[k.encode(v) for v in key] for key in keys], dtype=np.uint16).T
    encoded = enc.apply_codes(raw)
    enc_keys = [tuple(int(c) for c in encoded[:, i]) for i in range(len(keys))]
    if len(set(enc_keys)) != len(enc_keys):
        raise ValueError("key collision after encoding")
    if compare_fn is None:
        compare = [range(6 * table.d_key)] * len(keys)
    else:
        compare = []
        for key in keys:
            cols = sorted(set(compare_fn(key)))
            compare.append([6 * c + t for c in cols for t in range(6)])
    one_hot = Pipeline(_indicator_layers(6 * table.d_key, enc_keys, compare, fmt), fmt)
    wout = {}
    for i, key in enumerate(keys):
        for r, v in enumerate(table.entries[key]):
            if not v.is_zero:
                wout[(r, i)] = v
    readout = AffineLayer(len(keys), table.d_val, wout, [fc.zero(fmt)] * table.d_val, relu=False)
    return Pipeline(enc.layers + one_hot.layers + [readout], fmt,
                    {"keys": len(keys), "encoder_dim": 6 * table.d_key})


def identity_pipeline(dim: int, fmt: FpFormat) -> Pipeline:
    """x -> x through rho(x), rho(-x) and a signed read-out."""
    one, m1 = fc.one(fmt), fc.minus_one(fmt)
    w1, w2 = {}, {}
    for i in range(dim):
        w1[(2 * i, i)] = one
        w1[(2 * i + 1, i)] = m1
        w2[(i, 2 * i)] = one
        w2[(i, 2 * i + 1)] = m1
    z = fc.zero(fmt)
    return Pipeline([AffineLayer(dim, 2 * dim, w1, [z] * (2 * dim)),
                     AffineLayer(2 * dim, dim, w2, [z] * dim, relu=False)], fmt)
