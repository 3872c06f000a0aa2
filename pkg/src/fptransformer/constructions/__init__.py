"""Exact constructions: gadgets, attention blocks and whole-model assembly."""

from .assemble import (PermEquivariantTarget, assemble_thm1_model, assemble_thm3_model,
                       distinct_inputs, find_cycle_witness, max_sequence_length,
                       random_swap_equivariant_target, run_on_seqs, three_max_signature)
from .blocks import Alphabet, CounterConfig, OrderDetectorConfig, TripleCatalog
from .gadgets import (LookupTable, Pipeline, build_indicator, build_injective_encoder,
                      build_memorizer)

__all__ = [
    "Alphabet", "CounterConfig", "LookupTable", "OrderDetectorConfig", "PermEquivariantTarget",
    "Pipeline", "TripleCatalog", "assemble_thm1_model", "assemble_thm3_model",
    "build_indicator", "build_injective_encoder", "build_memorizer", "distinct_inputs",
    "find_cycle_witness", "max_sequence_length", "random_swap_equivariant_target",
    "run_on_seqs", "three_max_signature",
]
