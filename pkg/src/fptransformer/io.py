"""JSON file formats for matrices and models.

Entries are stored as lowercase hex bit patterns.  A dense matrix is
{"rows", "cols", "entries": [...]} in row-major order.  A sparse matrix
replaces "entries" with "nonzero": [[i, j, hex], ...] sorted by (i, j).
Output is written with sorted keys and fixed separators, so reading a file
and writing it back reproduces the same bytes.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import fpcore as fc
from .fpcore import Fp, FpFormat
from .kernel import kernel_for
from .linalg import FpMatrix, SparseFpMatrix
from .transformer import AttnHead, AttnParams, BlockStack, FfParams, TransformerModel


class FileFormatError(ValueError):
    pass


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def _hex(code, fmt: FpFormat) -> str:
    # codes are the bit patterns themselves
    return f"0x{int(code):0{(fmt.nbits + 3) // 4}x}"


def matrix_to_obj(M) -> dict:
    fmt = M.fmt
    if isinstance(M, SparseFpMatrix):
        items = sorted(M.entries_map.items())
        return {"rows": M.rows, "cols": M.cols,
                "nonzero": [[i, j, _hex(c, fmt)] for (i, j), c in items]}
    return {"rows": M.rows, "cols": M.cols, "entries": [_hex(c, fmt) for c in M.codes.ravel()]}


def matrix_from_obj(obj: dict, fmt: FpFormat):
    try:
        rows, cols = int(obj["rows"]), int(obj["cols"])
    except (KeyError, TypeError, ValueError):
        raise FileFormatError("matrix needs integer 'rows' and 'cols'") from None
    if "nonzero" in obj:
        entries = {}
        for item in obj["nonzero"]:
            i, j, h = item
            if not (0 <= i < rows and 0 <= j < cols):
                raise FileFormatError(f"sparse entry ({i}, {j}) out of range")
            entries[(int(i), int(j))] = fc.from_hex(h, fmt)
        return SparseFpMatrix(rows, cols, entries, fmt)
    vals = obj.get("entries")
    if vals is None or len(vals) != rows * cols:
        raise FileFormatError(f"expected {rows * cols} entries")
    k = kernel_for(fmt)
    codes = np.array([k.encode(fc.from_hex(h, fmt)) for h in vals], dtype=np.uint16)
    return FpMatrix(fmt, codes.reshape(rows, cols))


def _fmt_obj(fmt: FpFormat) -> dict:
    return {"p": fmt.p, "q": fmt.q}


def _fmt_from(obj: dict) -> FpFormat:
    try:
        return fc.make_format(int(obj["p"]), int(obj["q"]))
    except (KeyError, TypeError):
        raise FileFormatError("missing format {p, q}") from None


# --------------------------------------------------------------------------
# matrix files

def write_matrix(path, M) -> None:
    obj = {"format": _fmt_obj(M.fmt), **matrix_to_obj(M)}
    Path(path).write_text(dumps(obj))


def read_matrix(path, fmt: FpFormat | None = None):
    """Read a matrix file; the file's format wins unless it has none."""
    obj = json.loads(Path(path).read_text())
    if "format" in obj:
        ffmt = _fmt_from(obj["format"])
        if fmt is not None and ffmt != fmt:
            raise FileFormatError(f"matrix format {ffmt} differs from {fmt}")
        fmt = ffmt
    if fmt is None:
        raise FileFormatError("matrix file has no format and none was given")
    return matrix_from_obj(obj, fmt)


# --------------------------------------------------------------------------
# models

def _meta_value(v, fmt):
    if isinstance(v, Fp):
        return fc.to_hex(v, fmt)
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, dict):
        return {str(a): _meta_value(b, fmt) for a, b in v.items()}
    if isinstance(v, (list, tuple)):
        return [_meta_value(x, fmt) for x in v]
    return v


def model_to_obj(model: TransformerModel) -> dict:
    fmt = model.fmt
    h, m, r, d, n = model.stack.dims
    blocks = []
    for attn, ff in model.stack.blocks:
        blocks.append({
            "attention": [{"WK": matrix_to_obj(hd.WK), "WQ": matrix_to_obj(hd.WQ),
                           "WV": matrix_to_obj(hd.WV), "WO": matrix_to_obj(hd.WO)}
                          for hd in attn.heads],
            "ff": {"W1": matrix_to_obj(ff.W1), "b1": matrix_to_obj(ff.b1),
                   "W2": matrix_to_obj(ff.W2), "b2": matrix_to_obj(ff.b2)},
        })
    return {
        "format": _fmt_obj(fmt),
        "dims": {"h": h, "m": m, "r": r, "d": d, "n": n,
                 "d_in": model.d_in, "d_out": model.d_out, "blocks": len(blocks)},
        "weights": {"W_in": matrix_to_obj(model.W_in), "b_in": matrix_to_obj(model.b_in),
                    "W_out": matrix_to_obj(model.W_out), "b_out": matrix_to_obj(model.b_out),
                    "blocks": blocks},
        "meta": _meta_value(model.meta, fmt),
    }


def _dense(M):
    return M.dense() if isinstance(M, SparseFpMatrix) else M


def model_from_obj(obj: dict) -> TransformerModel:
    fmt = _fmt_from(obj.get("format", {}))
    try:
        dims, w = obj["dims"], obj["weights"]
    except KeyError as e:
        raise FileFormatError(f"model file lacks {e}") from None
    mat = lambda o: matrix_from_obj(o, fmt)  # noqa: E731
    blocks = []
    for b in w["blocks"]:
        heads = tuple(AttnHead(mat(hd["WK"]), mat(hd["WQ"]), mat(hd["WV"]), mat(hd["WO"]))
                      for hd in b["attention"])
        f = b["ff"]
        blocks.append((AttnParams(heads),
                       FfParams(mat(f["W1"]), _dense(mat(f["b1"])), mat(f["W2"]), _dense(mat(f["b2"])))))
    stack = BlockStack(tuple(blocks), (dims["h"], dims["m"], dims["r"], dims["d"], dims.get("n")))
    return TransformerModel(mat(w["W_in"]), _dense(mat(w["b_in"])), stack,
                            mat(w["W_out"]), _dense(mat(w["b_out"])), fmt, obj.get("meta", {}))


def write_model(path, model: TransformerModel) -> None:
    Path(path).write_text(dumps(model_to_obj(model)))


def read_model(path) -> TransformerModel:
    return model_from_obj(json.loads(Path(path).read_text()))
