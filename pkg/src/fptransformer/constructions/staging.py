"""Compile pipelines into transformer blocks acting on a residual stream.

Each ReLU layer becomes one feed-forward block whose hidden units compute the
layer and whose output matrix writes them into fresh, zero coordinates.
Consumed stages are erased two blocks later with -rho(z), which is exact
because stage values are finite and non-negative.  Attention in these blocks
has all-zero weights, so it adds an exact 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import fpcore as fc
from ..fpcore import FpFormat
from ..linalg import FpMatrix, SparseFpMatrix
from ..transformer import AttnHead, AttnParams, BlockStack, FfParams
from .gadgets import Pipeline


@dataclass
class FfSpec:
    """Feed-forward block under construction; hidden units are appended."""

    w1: dict = field(default_factory=dict)
    b1: dict = field(default_factory=dict)
    w2: dict = field(default_factory=dict)
    b2: dict = field(default_factory=dict)
    width: int = 0

    def unit(self, inputs: dict, bias=None) -> int:
        """Add a hidden unit rho(sum inputs[c] z_c (+) bias); returns its index."""
        h = self.width
        self.width += 1
        for c, w in inputs.items():
            self.w1[(h, c)] = w
        if bias is not None and not bias.is_zero:
            self.b1[h] = bias
        return h

    def write(self, coord: int, unit: int, weight) -> None:
        self.w2[(coord, unit)] = weight


@dataclass
class AttnSpec:
    wk: dict
    wq: dict
    wv: dict
    wo: dict


class StackBuilder:
    """Collects blocks on a residual stream and tracks coordinate usage."""

    def __init__(self, fmt: FpFormat, reserved: int):
        self.fmt = fmt
        self.next_free = reserved
        self.blocks: list[tuple] = []  # (AttnSpec | None, FfSpec)
        self.m = 1

    def alloc(self, size: int) -> list[int]:
        start = self.next_free
        self.next_free += size
        return list(range(start, start + size))

    def add_ff(self, ff: FfSpec, attn: AttnSpec | None = None) -> None:
        self.blocks.append((attn, ff))

    def erase_units(self, ff: FfSpec, coords, nonneg: bool = True) -> None:
        """z_c (+) (-rho(z_c)) = 0 for finite z_c >= 0; signed variant otherwise."""
        one, m1 = fc.one(self.fmt), fc.minus_one(self.fmt)
        for c in coords:
            u = ff.unit({c: one})
            ff.write(c, u, m1)
            if not nonneg:
                v = ff.unit({c: m1})
                ff.write(c, v, one)

    def move_units(self, ff: FfSpec, src, dst) -> None:
        """dst (zero) receives src exactly; src is cleared."""
        one, m1 = fc.one(self.fmt), fc.minus_one(self.fmt)
        for s, d in zip(src, dst):
            u = ff.unit({s: one})
            v = ff.unit({s: m1})
            ff.write(d, u, one)
            ff.write(d, v, m1)
            ff.write(s, u, m1)
            ff.write(s, v, one)

    def build(self, d_min: int = 0) -> BlockStack:
        fmt = self.fmt
        d = max(self.next_free, d_min)
        r = max([ff.width for _, ff in self.blocks] + [1])
        m = max([self.m] + [max([i for (i, _) in a.wv] + [0]) + 1
                            for a, _ in self.blocks if a is not None])
        blocks = []
        for attn, ff in self.blocks:
            z = fc.zero(fmt)
            F = FfParams(
                SparseFpMatrix(r, d, ff.w1, fmt),
                FpMatrix.column([ff.b1.get(i, z) for i in range(r)], fmt),
                SparseFpMatrix(d, r, ff.w2, fmt),
                FpMatrix.column([ff.b2.get(i, z) for i in range(d)], fmt))
            if attn is None:
                A = AttnParams.zero(d, m, fmt)
            else:
                A = AttnParams((AttnHead(SparseFpMatrix(m, d, attn.wk, fmt),
                                         SparseFpMatrix(m, d, attn.wq, fmt),
                                         SparseFpMatrix(m, d, attn.wv, fmt),
                                         SparseFpMatrix(d, m, attn.wo, fmt)),))
            blocks.append((A, F))
        return BlockStack(tuple(blocks), (1, m, r, d, None))


def embed_pipeline(sb: StackBuilder, pipe: Pipeline, in_coords, out_coords,
                   erase_inputs: bool = False) -> dict:
    """Append blocks computing out = pipe(in) token-wise.

    out_coords must be zero on entry.  When erase_inputs is set the input
    coordinates are cleared too (they may hold signed values).  If the output
    overlaps the inputs the result is staged in fresh coordinates and moved
    by one extra block.  Returns a small ledger of the coordinates used.
    """
    fmt = pipe.fmt
    layers = pipe.layers
    if not layers[0].relu and len(layers) == 1:
        raise ValueError("a single linear layer cannot be staged; prefix a ReLU layer")
    readout = layers[-1] if not layers[-1].relu else None
    relu_layers = layers[:-1] if readout is not None else layers
    if any(not layer.relu for layer in relu_layers):
        raise ValueError("only the last layer may skip the ReLU")
    in_coords, out_coords = list(in_coords), list(out_coords)
    if len(in_coords) != pipe.in_dim or len(out_coords) != pipe.out_dim:
        raise ValueError("coordinate lists do not match the pipeline widths")
    overlap = erase_inputs and bool(set(in_coords) & set(out_coords))
    target = sb.alloc(len(out_coords)) if overlap else out_coords

    one = fc.one(fmt)
    regions = []
    cur = in_coords
    for li, layer in enumerate(relu_layers):
        last = li == len(relu_layers) - 1
        ff = FfSpec()
        units = []
        for row in range(layer.out_dim):
            units.append(ff.unit({}, layer.bias[row]))
        for (i, j), w in layer.weights.items():
            ff.w1[(units[i], cur[j])] = w
        if not last:
            dest = sb.alloc(layer.out_dim)
            for row, u in enumerate(units):
                ff.write(dest[row], u, one)
        else:
            if readout is None:
                for row, u in enumerate(units):
                    ff.write(target[row], u, one)
            else:
                for (i, j), w in readout.weights.items():
                    ff.write(target[i], units[j], w)
                for i, b in enumerate(readout.bias):
                    if not b.is_zero:
                        ff.b2[target[i]] = b
            dest = None
        # erase what is no longer read: the stage two back, and at the end
        # the stage just consumed as well
        if len(regions) >= 2:
            sb.erase_units(ff, regions[-2])
        if last:
            if regions:
                sb.erase_units(ff, regions[-1])
            if erase_inputs:
                sb.erase_units(ff, in_coords, nonneg=False)
        sb.add_ff(ff)
        if dest is not None:
            regions.append(dest)
        cur = dest
    if overlap:
        ff = FfSpec()
        sb.move_units(ff, target, out_coords)
        sb.add_ff(ff)
    return {"stages": len(relu_layers), "blocks": len(relu_layers) + int(overlap),
            "scratch": sum(len(r) for r in regions) + (len(target) if overlap else 0)}
