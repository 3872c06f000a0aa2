import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fptransformer import fpcore as fc
from fptransformer.kernel import kernel_for
from fptransformer.linalg import (FpMatrix, Permutation, ShapeError, SparseFpMatrix,
                                  broadcast_bias, compose, cycle, invert, mat_add, mat_mul,
                                  permute_columns, swap12)
from fptransformer.oracles import ArithOracle

F24 = fc.make_format(2, 4)
F34 = fc.make_format(3, 4)


def M(rows, fmt=F24):
    return FpMatrix.from_values(rows, fmt)


def test_kernel_tables_match_scalar_ops():
    k = kernel_for(F24)
    vals = fc.enumerate_all(F24)
    for x in vals:
        for y in vals[::7]:
            cx, cy = k.encode(x), k.encode(y)
            assert k.decode(k.add[cx, cy]) == fc.fp_add(x, y, F24)
            assert k.decode(k.mul[cx, cy]) == fc.fp_mul(x, y, F24)
        assert k.decode(k.exp[k.encode(x)]) == fc.rounded_exp(x, F24)
        assert k.decode(k.relu[k.encode(x)]) == fc.rounded_relu(x, F24)


def test_kernel_div_matches_oracle_in_domain():
    k = kernel_for(F24)
    o = ArithOracle(F24)
    vals = fc.enumerate_all(F24)
    for x in vals:
        for y in vals:
            if fc.div_in_domain(x, y, F24):
                assert k.decode(k.div(k.encode(x), k.encode(y))) == o.div(x, y)


def test_mat_add_examples():
    A = M([[1, "1.25"], [3, -2]])
    assert mat_add(A, FpMatrix.zeros(2, 2, F24)) == A
    one = fc.one(F34)
    a = FpMatrix.from_fp([[fc.succ(one, F34)]], F34)
    b = FpMatrix.from_fp([[fc.succ(fc.succ(one, F34), F34)]], F34)
    assert mat_add(a, b).get(0, 0) == fc.fp("2.5", F34)
    inf = FpMatrix.from_fp([[fc.PINF]], F24)
    ninf = FpMatrix.from_fp([[fc.NINF]], F24)
    assert mat_add(inf, ninf).get(0, 0).is_nan


def test_mat_add_shape_mismatch():
    with pytest.raises(ShapeError):
        mat_add(M([[1, 2]]), M([[1], [2]]))


def test_mat_mul_left_fold_order():
    one = fc.one(F34)
    a, b = fc.succ(one, F34), fc.succ(fc.succ(one, F34), F34)
    three = fc.fp(3, F34)
    ones = FpMatrix.from_values([[1], [1], [1]], F34)
    r1 = mat_mul(FpMatrix.from_fp([[b, b, a]], F34), ones).get(0, 0)
    r2 = mat_mul(FpMatrix.from_fp([[a, b, b]], F34), ones).get(0, 0)
    assert r1 == fc.succ(fc.succ(three, F34), F34)
    assert r2 == fc.succ(fc.succ(fc.succ(three, F34), F34), F34)


def test_identity_pattern_matmul():
    A = M([[1, "1.25", -3], [0, "0.5", 7]])
    I3 = M([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert mat_mul(A, I3) == A


def test_mat_mul_shape_mismatch():
    with pytest.raises(ShapeError):
        mat_mul(M([[1, 2]]), M([[1, 2]]))


def test_sparse_matches_dense():
    rng = np.random.default_rng(3)
    k = kernel_for(F24)
    vals = fc.enumerate_all(F24)
    for _ in range(30):
        W = rng.choice([k.encode(v) for v in vals], size=(4, 5))
        W[rng.random((4, 5)) < 0.5] = k.zero
        D = FpMatrix(F24, W)
        S = SparseFpMatrix.from_dense(D)
        X = FpMatrix(F24, rng.choice([k.encode(v) for v in vals], size=(5, 3)))
        assert mat_mul(S, X) == mat_mul(D, X)


def test_broadcast_bias():
    assert broadcast_bias([fc.fp("1.25", F24)], 3, F24) == M([["1.25"] * 3])
    assert broadcast_bias(FpMatrix.zeros(2, 1, F24), 4) == FpMatrix.zeros(2, 4, F24)


def test_permutations():
    X = M([[1, 2, 3]])
    assert permute_columns(Permutation.identity(3), X) == X
    assert permute_columns(swap12(3), X) == M([[2, 1, 3]])
    pi = cycle(3)
    assert permute_columns(compose(pi, invert(pi)), X) == X
    assert Permutation.from_one_based([2, 1, 3]) == swap12(3)
    with pytest.raises(ValueError):
        Permutation((0, 0, 1))


def test_column_permutation_changes_product():
    # permuting V's columns together with the rows of the weights reorders the fold
    ones = M([[1], [1], [1]])
    V = M([["1.25", "1.25", 1]])
    pi = Permutation((0, 2, 1))
    Vp = permute_columns(pi, V)
    assert mat_mul(V, ones).get(0, 0) == fc.fp("3.5", F24)
    assert mat_mul(Vp, ones).get(0, 0) == fc.fp(3, F24)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.integers(0, 10 ** 6))
def test_matmul_matches_scalar_fold(r, c, n, seed):
    rng = np.random.default_rng(seed)
    k = kernel_for(F24)
    vals = fc.enumerate_all(F24)
    codes = [k.encode(v) for v in vals]
    A = FpMatrix(F24, rng.choice(codes, size=(r, c)))
    B = FpMatrix(F24, rng.choice(codes, size=(c, n)))
    got = mat_mul(A, B)
    for i in range(r):
        for j in range(n):
            terms = [fc.fp_mul(A.get(i, t), B.get(t, j), F24) for t in range(c)]
            assert got.get(i, j) == fc.left_sum(terms, F24)
