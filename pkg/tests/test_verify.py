import json

import pytest

from fptransformer import fpcore as fc
from fptransformer import verify as vf
from fptransformer.linalg import FpMatrix

F24 = fc.make_format(2, 4)
F34 = fc.make_format(3, 4)


def test_report_counts_and_roundtrip():
    rep = vf.SuiteReport("demo", (2, 4), seed=1)
    rep.record(True)
    rep.record(False, "x", "1", "2")
    rep.skip(2, "not applicable")
    assert rep.total == rep.passed + rep.failed + rep.skipped == 4
    assert not rep.ok and len(rep.failures) == 1
    d = json.loads(json.dumps(rep.to_dict()))
    assert vf.SuiteReport.from_dict(d) == rep
    assert rep.summary().startswith("FAIL demo")


def test_report_failure_list_capped():
    rep = vf.SuiteReport("cap", None)
    for i in range(vf.MAX_FAILURES_KEPT + 10):
        rep.record(False, i)
    assert rep.failed == vf.MAX_FAILURES_KEPT + 10
    assert len(rep.failures) == vf.MAX_FAILURES_KEPT


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        vf.ModelSamplerConfig(d=(3, 2))
    with pytest.raises(ValueError):
        vf.ModelSamplerConfig(extreme_prob=1.5)


def test_sample_model_reproducible_and_in_range():
    cfg = vf.ModelSamplerConfig(seed=9)
    a, b = vf.sample_model(cfg, F24, 4), vf.sample_model(cfg, F24, 4)
    assert a.W_in == b.W_in and a.stack.blocks[0][1].W1 == b.stack.blocks[0][1].W1
    for i in range(20):
        m = vf.sample_model(cfg, F24, i)
        h, mm, r, d, n = m.stack.dims
        assert cfg.d[0] <= d <= cfg.d[1] and cfg.m[0] <= mm <= cfg.m[1]
        assert cfg.r[0] <= r <= cfg.r[1] and cfg.h[0] <= h <= cfg.h[1]
        assert cfg.n[0] <= n <= cfg.n[1]
        assert cfg.blocks[0] <= len(m.stack.blocks) <= cfg.blocks[1]


def test_no_extremes_means_small_weights():
    cfg = vf.ModelSamplerConfig(seed=2, extreme_prob=0.0)
    for i in range(10):
        m = vf.sample_model(cfg, F24, i)
        mats = [m.W_in, m.b_in, m.W_out, m.b_out]
        for attn, ff in m.stack.blocks:
            mats += [ff.W1, ff.b1, ff.W2, ff.b2]
            for hd in attn.heads:
                mats += [hd.WK, hd.WQ, hd.WV, hd.WO]
        for M in mats:
            assert all(abs(x.value(F24)) <= 2 for x in M.entries)


def test_resolve_suites():
    assert vf.resolve_suites("thm2,posenc") == ["thm2-similarity", "posenc"]
    assert vf.resolve_suites("all") == vf.suite_names()
    with pytest.raises(vf.UnknownSuiteError):
        vf.resolve_suites("nope")
    with pytest.raises(vf.UnknownSuiteError):
        vf.run_suite("nope", F24)


def test_theorem_suite_rejects_bad_format():
    with pytest.raises(fc.FormatError):
        vf.run_suite("saturation", fc.make_format(2, 3))


# frozen from the left-sum chain of 1^+ at p = 2
def test_max_distinguish_table_p2():
    got = [fc.render(vf.max_distinguish_closed_form(k, F24), F24) for k in range(12)]
    assert got == ["0", "1.25", "2.5", "4", "5", "6", "7", "8", "10", "12", "14", "16"]
    with pytest.raises(ValueError):
        vf.max_distinguish_closed_form(12, F24)


def test_posenc_examples():
    big = fc.fmt_Omega(F24)
    assert vf.find_collision(big, F24) == (fc.zero(F24), fc.fmt_omega(F24))
    a, b = vf.find_collision(fc.fmt_omega(F24), F24)
    assert fc.fp_add(a, fc.fmt_omega(F24), F24) == fc.fp_add(b, fc.fmt_omega(F24), F24)
    assert b.value(F24) <= fc._pow2(F24.emin + F24.p + 2)
    assert vf.find_collision(fc.PINF, F24) is not None


def test_three_max_counts():
    rep = vf.run_suite("three-max", F24)
    assert rep.ok and rep.notes["signatures"] == {2: 1, 3: 3, 4: 12, 5: 60}


def test_small_identity_suites():
    assert vf.run_suite("lemma-oneppp", F34).passed == 2
    skipped = vf.run_suite("lemma-oneppp", F24)
    assert skipped.skipped == 2 and skipped.ok
    assert vf.run_suite("onep2", F34).skipped > 0
    assert vf.run_suite("onep2", F24).ok
    assert vf.run_suite("lemma-one-plus", F24).ok


def test_zero_model_and_averaging_model():
    z = vf.zero_model(F24, 1, 1, 2)
    X = FpMatrix.from_values([[1, 2, 3]], F24)
    from fptransformer.transformer import model_forward
    assert model_forward(X, z) == FpMatrix.zeros(1, 3, F24)
    sh = vf.shadow_contrast(F24)
    assert sh["float_similar"] and not sh["exact_similar"]


def test_suites_deterministic():
    cfg = vf.VerifyConfig(seed=5, samples=10)
    a = vf.run_suite("thm4-thm5", F24, cfg)
    b = vf.run_suite("thm4-thm5", F24, cfg)
    assert (a.total, a.passed) == (b.total, b.passed) and a.ok


def test_workers_env(monkeypatch):
    monkeypatch.setenv("FPT_WORKERS", "3")
    assert vf.workers_from_env() == 3
    monkeypatch.setenv("FPT_WORKERS", "zero")
    with pytest.raises(ValueError):
        vf.workers_from_env()


def test_parallel_matches_serial():
    serial = vf.run_suite("thm4-thm5", F24, vf.VerifyConfig(seed=1, samples=6))
    par = vf.run_suite("thm4-thm5", F24, vf.VerifyConfig(seed=1, samples=6, workers=2))
    assert (serial.total, serial.passed) == (par.total, par.passed)
