"""Bit-exact simulation of transformers over small floating-point formats."""

from .fpcore import (FNAN, NINF, PINF, DivDomainError, FormatError, Fp, FpFormat, fp,
                     fp_add, fp_div, fp_mul, fp_sub, make_format, preset_format, render)
from .linalg import FpMatrix, Permutation, SparseFpMatrix
from .transformer import TransformerModel, forward_codes, model_forward

__version__ = "0.1.0"

__all__ = [
    "DivDomainError", "FNAN", "FormatError", "Fp", "FpFormat", "FpMatrix", "NINF", "PINF",
    "Permutation", "SparseFpMatrix", "TransformerModel", "forward_codes", "fp", "fp_add",
    "fp_div", "fp_mul", "fp_sub", "make_format", "model_forward", "preset_format", "render",
]
