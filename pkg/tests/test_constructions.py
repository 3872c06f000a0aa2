import itertools
import random
from fractions import Fraction

import numpy as np
import pytest

from fptransformer import fpcore as fc
from fptransformer.constructions import assemble as asm
from fptransformer.constructions import blocks as blk
from fptransformer.constructions import gadgets as gd
from fptransformer.constructions.staging import StackBuilder, embed_pipeline
from fptransformer.kernel import kernel_for
from fptransformer.linalg import Permutation
from fptransformer.transformer import stack_codes

F24 = fc.make_format(2, 4)
F34 = fc.make_format(3, 4)
K = kernel_for(F24)


def v(x, fmt=F24):
    return fc.fp(x, fmt)


def alphabet4(fmt=F24):
    return blk.Alphabet.scalars([v(x, fmt) for x in ("1", "1.25", "2", "3")])


def run_stack(stack, seqs, d_in=1, fmt=F24):
    k = kernel_for(fmt)
    n = len(seqs[0])
    Z = np.full((stack.d, len(seqs), n), k.zero, dtype=np.uint16)
    Z[:d_in] = asm.seqs_to_codes(seqs, fmt)
    return stack_codes(Z, stack, fmt)


# ---------------------------------------------------------------- encoder

def test_encoder_injective_and_in_range():
    vals = fc.enumerate_finite(F24)
    codes = gd.encode_values(vals, F24)
    assert len(set(codes)) == 119
    cap = fc._pow2(F24.emax)
    for c in codes:
        assert len(c) == 6
        assert all(0 <= K.decode(x).value(F24) <= cap for x in c)


def test_encoder_large_inputs_halve():
    enc = gd.build_injective_encoder(1, F24)
    z = fc.zero(F24)
    for x in fc.enumerate_finite(F24):
        if x.value(F24) >= fc._pow2(F24.emin + 1):
            half = fc.from_fraction(x.value(F24) / 2, F24)
            assert enc.apply([x]) == [z, z, half, z, z, z]
    assert enc.apply([z]) == [z] * 6


def test_encoder_intermediates_finite():
    enc = gd.build_injective_encoder(2, F24)
    vals = fc.enumerate_finite(F24)
    X = np.array([[K.encode(a) for a in vals], [K.encode(b) for b in reversed(vals)]],
                 dtype=np.uint16)
    assert enc.all_finite(X)


# ---------------------------------------------------------------- indicator and memorizer

def test_indicator_exhaustive():
    vals = fc.enumerate_finite(F24)
    enc = gd.encode_values(vals, F24)
    E = np.array(enc, dtype=np.uint16).T
    for i in (0, 1, 58, 59, 60, 117, 118):
        ind = gd.build_indicator([K.decode(c) for c in enc[i]], F24)
        out = ind.apply_codes(E)[0]
        want = np.where(np.arange(119) == i, K.one, K.zero)
        assert (out == want).all()


def test_memorizer_identity_and_constant_tables():
    keys = [v(x) for x in ("-3", "0", "1.25", "7")]
    ident = gd.LookupTable(1, 1, {(x,): (x,) for x in keys})
    const = gd.LookupTable(1, 1, {(x,): (v("0.5"),) for x in keys})
    mi, mc = gd.build_memorizer(ident, F24), gd.build_memorizer(const, F24)
    for x in keys:
        assert mi.apply([x]) == [x]
        assert mc.apply([x]) == [v("0.5")]


def test_memorizer_random_table_over_all_values():
    rng = random.Random(11)
    vals = fc.enumerate_finite(F24)
    table = gd.LookupTable(1, 2, {(x,): (rng.choice(vals), rng.choice(vals)) for x in vals})
    mem = gd.build_memorizer(table, F24)
    X = np.array([[K.encode(x) for x in vals]], dtype=np.uint16)
    out = mem.apply_codes(X)
    for j, x in enumerate(vals):
        assert tuple(K.decode(c) for c in out[:, j]) == table.lookup((x,))


def test_lookup_table_width_checked():
    with pytest.raises(ValueError):
        gd.LookupTable(1, 1, {(v(1),): (v(1), v(2))})


# ---------------------------------------------------------------- staging

def test_embed_identity_pipeline():
    sb = StackBuilder(F24, 2)
    embed_pipeline(sb, gd.identity_pipeline(1, F24), [0], [1])
    stack = sb.build()
    vals = fc.enumerate_finite(F24)
    out = run_stack(stack, [((x,),) for x in vals])
    assert (out[1, :, 0] == out[0, :, 0]).all()
    assert (out[0, :, 0] == [K.encode(x) for x in vals]).all()
    assert (out[2:] == K.zero).all()


def test_embed_memorizer_tokenwise():
    rng = random.Random(2)
    keys = [v(x) for x in ("1", "1.25", "2", "3")]
    table = gd.LookupTable(1, 1, {(x,): (rng.choice(fc.enumerate_finite(F24)),) for x in keys})
    sb = StackBuilder(F24, 2)
    embed_pipeline(sb, gd.build_memorizer(table, F24), [0], [1])
    stack = sb.build()
    seqs = [tuple((x,) for x in s) for s in itertools.product(keys, repeat=3)]
    out = run_stack(stack, seqs)
    for b, s in enumerate(seqs):
        assert [K.decode(c) for c in out[1, b]] == [table.lookup(t)[0] for t in s]
    assert (out[2:] == K.zero).all()


# ---------------------------------------------------------------- constants and solvers

def test_uniform_softmax_value():
    assert blk.uniform_softmax_value(1, F24) == v(1)
    assert blk.uniform_softmax_value(3, F24) == v("0.3125")
    assert blk.uniform_softmax_value(16, F24) == v("0.125")  # the sum of ones stops at 8


def test_one_plus_solver_examples():
    one_p = fc.succ(v(1), F24)
    y = blk.solve_mul_target(v(2), one_p, blk.HALF_TO_ONE, F24)
    assert y == fc.succ(v("0.5"), F24)
    assert blk.solve_mul_target(one_p, one_p, blk.HALF_TO_ONE, F24) == v(1)
    half_open = blk.Interval(Fraction(1, 2), Fraction(1), hi_open=True)
    assert blk.solve_mul_target(v("1.25"), v(1), half_open, F24) == v("0.75")


def test_solver_failure():
    with pytest.raises(blk.SolverError):
        blk.solve_mul_target(v(2), v("1.25"), blk.Interval(Fraction(3), Fraction(4)), F24)


def test_order_detector_config():
    cfg = blk.OrderDetectorConfig.derive(5, F24)
    assert fc.fp_mul(cfg.beta, cfg.alpha, F24) == v(1)
    assert fc.fp_mul(cfg.beta_prime, cfg.alpha, F24) == v("1.25")
    assert cfg.delta == v("3.5")
    cfg3 = blk.OrderDetectorConfig.derive(5, F34)
    assert fc.fp_mul(cfg3.beta, cfg3.alpha, F34) == v("1.125", F34)
    assert fc.fp_mul(cfg3.beta_prime, cfg3.alpha, F34) == v("1.25", F34)
    assert cfg3.delta == v("3.5", F34)


# ---------------------------------------------------------------- order detector

@pytest.mark.parametrize("fmt", [F24, F34])
def test_order_detector_positions(fmt):
    alphabet = alphabet4(fmt)
    catalog = blk.TripleCatalog(alphabet)
    stack, cfg, lay = blk.build_order_detect_block(catalog, 3, fmt)
    k = kernel_for(fmt)
    three = v(3, fmt)
    seqs = asm.distinct_inputs(alphabet, 3)
    out = run_stack(stack, seqs, fmt=fmt)
    for b, X in enumerate(seqs):
        ref = blk.order_flags(X, catalog, cfg, fmt)
        got = [k.decode(out[c, b, 0]) for c in lay["flags"]]
        assert got == ref
        assert (out[lay["flags"], b] == out[lay["flags"], b, :1]).all()
    # z1, z2, z3 in order: rotation 1 has z3 last
    X = (alphabet.tokens[0], alphabet.tokens[1], alphabet.tokens[2])
    flags = blk.order_flags(X, catalog, cfg, fmt)
    assert flags[0] == cfg.delta
    if fmt.p >= 3:
        assert flags[1] == fc.succ(fc.succ(fc.succ(three, fmt), fmt), fmt)
    assert all(f != cfg.delta for f in flags[1:3])
    # triple 0 is absent when token 2 is replaced by token 3
    Y = (alphabet.tokens[0], alphabet.tokens[1], alphabet.tokens[3])
    assert all(f != cfg.delta for f in blk.order_flags(Y, catalog, cfg, fmt)[0:3])


# ---------------------------------------------------------------- counter

def test_counter_values_p2():
    ab = blk.Alphabet.scalars([v(1), v(2)])
    n = 17
    stack, cfg, lay = blk.build_counter_block(ab, n, F24)
    seqs = [tuple([(v(1),)] * c + [(v(2),)] * (n - c)) for c in range(n + 1)]
    out = run_stack(stack, seqs)
    flags = [K.decode(out[lay["flags"][0], c, 0]) for c in range(n + 1)]
    assert flags[0] == fc.zero(F24)
    assert flags[1] == v("1.25")
    assert flags[3] == fc.succ(fc.succ(v(3), F24), F24)
    assert len(set(flags[:12])) == 12
    assert flags[12:] == [v(16)] * 6
    assert (out[lay["d_in"] + 2:] == K.zero).all()


def test_count_vector():
    z1, z2 = (v(1),), (v(2),)
    ab = blk.Alphabet((z1, z2, (v(3),)))
    assert blk.count_vector([z1, z1, z2], ab) == [2, 1, 0]
    assert blk.count_vector([z2, z1, z1], ab) == [2, 1, 0]
    with pytest.raises(ValueError):
        blk.count_vector([(v(5),)], ab)


# ---------------------------------------------------------------- factorizations and assembly

def test_factorize_swap_equiv_rebuilds_target():
    alphabet = alphabet4()
    catalog = blk.TripleCatalog(alphabet)
    cfg = blk.OrderDetectorConfig.derive(3, F24)
    target = asm.random_swap_equivariant_target(alphabet, 3, 1, 4, F24)
    table = asm.factorize_swap_equiv(target, catalog, cfg, F24)
    assert len(table) <= 3 * 24
    for X, Y in target.items():
        flags = tuple(blk.order_flags(X, catalog, cfg, F24))
        assert tuple(table.lookup(tuple(t) + flags) for t in X) == Y


def test_factorize_rejects_non_equivariant():
    alphabet = alphabet4()
    catalog = blk.TripleCatalog(alphabet)
    cfg = blk.OrderDetectorConfig.derive(3, F24)
    target = asm.random_swap_equivariant_target(alphabet, 3, 1, 4, F24)
    X = next(iter(target))
    Y = target[X]
    target[X] = ((fc.fp(5, F24) if Y[0][0] != fc.fp(5, F24) else v(6),),) + Y[1:]
    with pytest.raises(asm.EquivarianceError):
        asm.factorize_swap_equiv(target, catalog, cfg, F24)


def test_swap_equivariant_model_exact_and_not_cycle_equivariant():
    alphabet = alphabet4()
    target = asm.random_swap_equivariant_target(alphabet, 3, 1, 7, F24)
    model = asm.assemble_thm1_model(target, alphabet, 3, F24)
    inputs = asm.distinct_inputs(alphabet, 3)
    assert asm.run_on_seqs(model, inputs) == [target[X] for X in inputs]
    assert asm.find_cycle_witness(model, inputs) is not None


def test_perm_equivariant_identity_and_constant_targets():
    rng = random.Random(1)
    vals = fc.enumerate_finite(F24)
    n = 3
    domain = [tuple((rng.choice(vals),) for _ in range(n)) for _ in range(30)]
    domain += [tuple((x,) for _ in range(n)) for x in vals[::10]]
    for kind in ("identity", "constant"):
        target = asm.PermEquivariantTarget(0, F24, 1, kind)
        model = asm.assemble_thm3_model(target, n, F24, domain)
        outs = asm.run_on_seqs(model, domain)
        assert outs == [target(X) for X in domain]
        if kind == "identity":
            assert outs == domain


def test_perm_equivariant_length_limit():
    target = asm.PermEquivariantTarget(0, F24)
    assert asm.max_sequence_length(F24) == 22
    with pytest.raises(ValueError):
        asm.assemble_thm3_model(target, 23, F24, [])


def test_three_max_signature():
    assert asm.three_max_signature(Permutation.identity(3)) == (3,)
    assert asm.three_max_signature(Permutation.identity(2)) == ()
    assert asm.three_max_signature(Permutation((1, 0, 2))) == (3,)
    with pytest.raises(ValueError):
        asm.three_max_signature(Permutation.identity(1))
