import json

import pytest

from fptransformer import fpcore as fc
from fptransformer import io as fio
from fptransformer.constructions import assemble as asm
from fptransformer.constructions import blocks as blk
from fptransformer.linalg import FpMatrix, SparseFpMatrix
from fptransformer.verify import ModelSamplerConfig, sample_model

F24 = fc.make_format(2, 4)


def test_dense_matrix_roundtrip_bytes(tmp_path):
    M = FpMatrix.from_values([[1, "-1.25", 0], [224, "0.00390625", 3]], F24)
    p = tmp_path / "m.json"
    fio.write_matrix(p, M)
    first = p.read_bytes()
    again = fio.read_matrix(p)
    assert again == M
    fio.write_matrix(p, again)
    assert p.read_bytes() == first
    obj = json.loads(first)
    assert obj["entries"][0] == "0x1c"
    assert obj["format"] == {"p": 2, "q": 4}


def test_sparse_matrix_roundtrip(tmp_path):
    S = SparseFpMatrix(3, 4, {(0, 1): fc.fp(2, F24), (2, 3): fc.fp("-0.5", F24)}, F24)
    p = tmp_path / "s.json"
    fio.write_matrix(p, S)
    back = fio.read_matrix(p)
    assert isinstance(back, SparseFpMatrix)
    assert back.dense() == S.dense()
    assert json.loads(p.read_text())["nonzero"] == [[0, 1, "0x20"], [2, 3, "0x58"]]


def test_specials_roundtrip(tmp_path):
    M = FpMatrix.from_fp([[fc.PINF, fc.NINF, fc.FNAN]], F24)
    p = tmp_path / "x.json"
    fio.write_matrix(p, M)
    assert fio.read_matrix(p) == M


def test_bad_matrix_files(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"format": {"p": 2, "q": 4}, "rows": 2, "cols": 2, "entries": ["0x00"]}))
    with pytest.raises(fio.FileFormatError):
        fio.read_matrix(p)
    p.write_text(json.dumps({"rows": 1, "cols": 1, "entries": ["0x00"]}))
    with pytest.raises(fio.FileFormatError):
        fio.read_matrix(p)
    p.write_text(json.dumps({"format": {"p": 3, "q": 4}, "rows": 1, "cols": 1, "entries": ["0x00"]}))
    with pytest.raises(fio.FileFormatError):
        fio.read_matrix(p, F24)


def test_model_roundtrip_sampled(tmp_path):
    model = sample_model(ModelSamplerConfig(seed=3), F24, 0)
    p = tmp_path / "model.json"
    fio.write_model(p, model)
    first = p.read_bytes()
    back = fio.read_model(p)
    fio.write_model(p, back)
    assert p.read_bytes() == first


def test_model_roundtrip_constructed(tmp_path):
    alphabet = blk.Alphabet.scalars([fc.fp(x, F24) for x in ("1", "1.25", "2", "3")])
    target = asm.random_swap_equivariant_target(alphabet, 3, 1, 7, F24)
    model = asm.assemble_thm1_model(target, alphabet, 3, F24)
    p = tmp_path / "thm1.json"
    fio.write_model(p, model)
    back = fio.read_model(p)
    inputs = asm.distinct_inputs(alphabet, 3)
    assert asm.run_on_seqs(back, inputs) == [target[X] for X in inputs]
    first = p.read_bytes()
    fio.write_model(p, back)
    assert p.read_bytes() == first
