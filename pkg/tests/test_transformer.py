import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fptransformer import fpcore as fc
from fptransformer.kernel import kernel_for
from fptransformer.linalg import FpMatrix, permute_codes, swap12
from fptransformer.oracles import ReferenceTransformer
from fptransformer.transformer import (AttnParams, BlockStack, FfParams, TransformerModel,
                                       attn_forward, ff_forward, forward_codes, is_ab_similar,
                                       is_distinct_tokens, model_forward, softmax_codes,
                                       softmax_col)
from fptransformer.verify import ModelSamplerConfig, sample_inputs, sample_model

F24 = fc.make_format(2, 4)


def M(rows):
    return FpMatrix.from_values(rows, F24)


def test_softmax_uniform_column():
    out = softmax_col([fc.zero(F24)] * 3, F24)
    assert out == [fc.fp("0.3125", F24)] * 3


def test_softmax_with_pos_inf_is_nan():
    out = softmax_col([fc.one(F24), fc.PINF, fc.zero(F24)], F24)
    assert all(x.is_nan for x in out)


def test_softmax_with_neg_inf_entries():
    out = softmax_col([fc.zero(F24), fc.NINF, fc.NINF], F24)
    assert out == [fc.one(F24), fc.zero(F24), fc.zero(F24)]


def test_softmax_codes_match_scalar():
    k = kernel_for(F24)
    rng = random.Random(5)
    vals = fc.enumerate_finite(F24)
    for _ in range(50):
        col = [rng.choice(vals) for _ in range(rng.randint(1, 6))]
        S = np.array([[k.encode(v)] for v in col], dtype=np.uint16)
        got = [k.decode(c) for c in softmax_codes(S, F24, axis=0)[:, 0]]
        assert got == softmax_col(col, F24)


def test_zero_ff_is_residual():
    X = M([[1, -2, "0.5"], [3, 0, 7]])
    assert ff_forward(X, FfParams.zero(2, 3, F24)) == X


def test_one_wide_ff():
    ff = FfParams(M([[1]]), M([[0]]), M([[1]]), M([[0]]))
    assert ff_forward(M([[1, -1]]), ff) == M([[2, -1]])


def test_zero_attention_output_is_residual():
    X = M([[1, -2, "0.5"], [3, 0, 7]])
    assert attn_forward(X, AttnParams.zero(2, 2, F24, h=2)) == X


def test_identity_projections_empty_stack():
    stack = BlockStack((), (1, 1, 1, 2, None))
    model = TransformerModel(M([[1], [0]]), M([[0], [0]]), stack, M([[1, 0]]), M([[0]]), F24, {})
    X = M([[1, "1.25", -3]])
    assert model_forward(X, model) == X


def test_similarity_predicate():
    z1, z2 = 1, 2
    assert is_ab_similar(M([[z1, z2]]), M([[z2, z2]]), 1, 2)
    assert not is_ab_similar(M([[1, 2, 3]]), M([[1, 2, 3]]), 1, 2)
    X = M([[1] * 12 + [2] * 24 + [3]])
    Y = M([[1] * 11 + [2] * 25 + [3]])
    assert is_ab_similar(X, Y, 12, 36)
    with pytest.raises(ValueError):
        is_ab_similar(X, Y, 36, 12)


def test_distinct_tokens():
    assert is_distinct_tokens(M([[1, "1.25"]]))
    assert not is_distinct_tokens(M([[1, 1]]))
    assert is_distinct_tokens(M([[1, 1], [0, 2]]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_forward_matches_reference(seed):
    cfg = ModelSamplerConfig(seed=seed, extreme_prob=0.1)
    model = sample_model(cfg, F24, 0)
    n = model.meta["n"]
    X = sample_inputs(F24, model.d_in, n, 2, random.Random(seed))
    got = forward_codes(model, X)
    ref = ReferenceTransformer(F24)
    k = kernel_for(F24)
    for b in range(2):
        rows = [[k.decode(c) for c in X[t, b]] for t in range(model.d_in)]
        want = ref.forward(model, rows)
        assert [[k.decode(c) for c in got[t, b]] for t in range(model.d_out)] == want


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_swap12_equivariance_and_equality(seed):
    model = sample_model(ModelSamplerConfig(seed=seed), F24, 1)
    n = model.meta["n"]
    rng = random.Random(seed)
    X = sample_inputs(F24, model.d_in, n, 3, rng)
    sw = swap12(n)
    out = forward_codes(model, X)
    assert (forward_codes(model, permute_codes(sw, X)) == permute_codes(sw, out)).all()
    X[:, :, 1] = X[:, :, 0]
    dup = forward_codes(model, X)
    assert (dup[:, :, 0] == dup[:, :, 1]).all()
