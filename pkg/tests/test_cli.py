import json

from fptransformer import cli


def test_verify_writes_report(tmp_path, capsys):
    report = tmp_path / "r.json"
    code = cli.main(["verify", "--p", "2", "--q", "4", "--suite", "three-max,posenc,onep2",
                     "--seed", "42", "--report", str(report)])
    assert code == 0
    obj = json.loads(report.read_text())
    assert obj["ok"] and [s["name"] for s in obj["suites"]] == ["three-max", "posenc", "onep2"]
    assert "PASS three-max" in capsys.readouterr().out


def test_trace_nonassoc(capsys):
    assert cli.main(["trace", "nonassoc", "--p", "3", "--q", "4"]) == 0
    out = capsys.readouterr().out
    assert "(1^+ + 1^++) + 1^++" in out and "= 3.75" in out
    assert "(1^++ + 1^++) + 1^+" in out and "= 3.5" in out


def test_build_then_eval_matches_manifest(tmp_path):
    model = tmp_path / "m.json"
    assert cli.main(["build", "thm1", "--alphabet", "1,1.25,2,3", "--n", "3", "--seed", "7",
                     "--output", str(model)]) == 0
    manifest = json.loads((tmp_path / "m.manifest.json").read_text())
    assert manifest["gamma"] == 4 and len(manifest["targets"]) == 24
    assert set(manifest["constants"]) == {"alpha", "beta", "beta_prime", "delta"}
    for t in manifest["targets"][:6]:
        x = tmp_path / "x.json"
        y = tmp_path / "y.json"
        x.write_text(json.dumps({"format": manifest["format"], "rows": 1, "cols": 3,
                                 "entries": t["input"][0]}))
        assert cli.main(["eval", "--model", str(model), "--input", str(x), "--output", str(y)]) == 0
        assert json.loads(y.read_text())["entries"] == t["output"][0]


def test_build_perm_equivariant_with_alphabet(tmp_path):
    model = tmp_path / "t3.json"
    assert cli.main(["build", "thm3", "--alphabet", "0x1c,2,3", "--n", "3",
                     "--output", str(model)]) == 0
    manifest = json.loads((tmp_path / "t3.manifest.json").read_text())
    assert len(manifest["targets"]) == 27


def test_presets_and_enumerate(capsys):
    assert cli.main(["enumerate", "--preset", "e4m3", "--finite-only"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("# p=3 q=4") and len(lines) == 1 + 239


def test_usage_errors(capsys):
    assert cli.main([]) == 2
    assert cli.main(["verify", "--bogus"]) == 2
    assert cli.main(["verify", "--suite", "nope"]) == 2
    assert cli.main(["verify", "--p", "2"]) == 2
    assert cli.main(["verify", "--preset", "e5m2", "--p", "2"]) == 2
    assert cli.main(["build", "thm1", "--alphabet", "1,1.1,2", "--output", "x.json"]) == 2
    assert cli.main(["eval"]) == 2
    assert "error" in capsys.readouterr().err


def test_suite_failure_exit_code(monkeypatch, tmp_path):
    from fptransformer import verify as vf

    def broken(fmt, cfg):
        rep = vf.SuiteReport("three-max", None)
        rep.record(False, "x", "y", "z")
        return rep

    monkeypatch.setitem(vf.SUITES, "three-max", broken)
    assert cli.main(["verify", "--suite", "three-max"]) == 1


def test_output_files_roundtrip(tmp_path):
    from fptransformer import io as fio
    model = tmp_path / "m.json"
    cli.main(["build", "thm1", "--output", str(model)])
    first = model.read_bytes()
    fio.write_model(model, fio.read_model(model))
    assert model.read_bytes() == first
