"""The twelve acceptance criteria, each at its stated size and time limit.

Every criterion prints one PASS/FAIL line; under pytest the lines are also
collected into a summary section at the end of the run.
"""

import time

import pytest

from fptransformer import fpcore as fc
from fptransformer import verify as vf

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script from another directory
    ACCEPTANCE_LINES = []

F24 = fc.make_format(2, 4)
CFG = vf.VerifyConfig(seed=0, workers=vf.workers_from_env())
_violations = {"start": None}


def report(number, title, ok, detail):
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'} {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def run(name, fmt, cfg=CFG):
    if _violations["start"] is None:
        _violations["start"] = fc.div_violations.count
    return vf.run_suite(name, fmt, cfg)


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def test_01_arithmetic_conformance():
    reps, secs = timed(lambda: [run("arith-conformance", fc.make_format(p, 4)) for p in (2, 3)])
    sizes_ok = all(r.notes["pairs"]["add"] == len(fc.enumerate_all(fc.make_format(p, 4))) ** 2
                   for r, p in zip(reps, (2, 3)))
    ok = all(r.ok for r in reps) and sizes_ok and secs < 30
    failed = sum(r.failed for r in reps)
    assert report(1, "arithmetic conformance", ok,
                  f"{sum(r.total for r in reps)} cases, {failed} mismatches, {secs:.1f}s (< 30s)")


def test_02_one_plus_identities():
    reps = [run("lemma-oneppp", fc.make_format(p, 4)) for p in (3, 4, 5)]
    reps.append(run("onep2", F24))
    reps += [run("lemma-one-plus", fc.make_format(p, 4)) for p in (2, 3, 4, 5)]
    ok = all(r.ok and r.skipped == 0 and r.passed > 0 for r in reps)
    assert report(2, "oneppp, onep2, one-plus", ok,
                  f"{sum(r.passed for r in reps)} passed, {sum(r.failed for r in reps)} failed, "
                  f"{sum(r.skipped for r in reps)} skipped")


def test_03_max_distinguish():
    reps = [run("max-distinguish", fc.make_format(p, 4)) for p in (2, 3)]
    ok = all(r.ok for r in reps) and [r.total for r in reps] == [12 + 1 + 6, 24 + 1 + 6]
    assert report(3, "max-distinguish at p=2,3", ok,
                  f"{sum(r.passed for r in reps)}/{sum(r.total for r in reps)} checks")


def test_04_same_sum():
    rep, secs = timed(lambda: run("saturation", F24))
    ok = rep.ok and secs < 60
    assert report(4, "same-sum0/1/2 at p=2,q=4", ok,
                  f"{rep.passed}/{rep.total} cases, {secs:.1f}s (< 60s)")


def test_05_posenc():
    rep = run("posenc", F24)
    ok = rep.ok and rep.notes["finite_cases"] == 118 and rep.notes["finite_misses"] == 0
    assert report(5, "pos-enc collisions", ok,
                  f"{rep.notes['finite_cases']} nonzero finite z, {rep.notes['finite_misses']} misses")


def test_06_three_max():
    rep, secs = timed(lambda: run("three-max", F24))
    ok = rep.ok and rep.total == 2 + 6 + 24 + 120 and secs < 1
    assert report(6, "three-max n=2..5", ok, f"{rep.passed}/{rep.total} permutations, {secs:.2f}s (< 1s)")


def test_07_swap_equivariance_sampled():
    rep, secs = timed(lambda: run("thm4-thm5", F24))
    ok = rep.ok and rep.notes["models"] == 200 and rep.notes["inputs_per_model"] == 20 and secs < 120
    assert report(7, "swap12 equivariance and equality preservation", ok,
                  f"{rep.passed}/{rep.total} cases over 200 models, {secs:.1f}s (< 120s)")


def test_08_similarity_preserved():
    rep, secs = timed(lambda: run("thm2-similarity", F24))
    sh = rep.notes["shadow"]
    ok = (rep.ok and (rep.notes["a"], rep.notes["b"], rep.notes["n"]) == (12, 36, 36)
          and rep.total == 25 * 25 + 2 and not sh["exact_similar"] and secs < 300)
    assert report(8, "similarity preserved, exact shadow violates it", ok,
                  f"{rep.passed}/{rep.total} cases, shadow outputs {sh['exact_first_cols']}, {secs:.1f}s (< 300s)")


def test_09_swap_equivariant_build():
    rep, secs = timed(lambda: run("thm1-micro", F24))
    ok = rep.ok and "cycle_witness" in rep.notes and secs < 120
    assert report(9, "swap-equivariant target built exactly", ok,
                  f"{rep.passed}/{rep.total} cases, witness recorded: {'cycle_witness' in rep.notes}, "
                  f"{secs:.1f}s (< 120s)")


def test_10_perm_equivariant_build():
    rep, secs = timed(lambda: run("thm3-micro", F24))
    ok = (rep.ok and rep.notes["random_inputs"] == 1000 and rep.notes["constant_inputs"] == 119
          and secs < 600)
    assert report(10, "permutation-equivariant target built exactly, n=23 rejected", ok,
                  f"{rep.passed}/{rep.total} cases, {secs:.1f}s (< 600s)")


def test_11_gadgets():
    rep = run("gadgets", F24)
    assert report(11, "gadget units", rep.ok, f"{rep.passed}/{rep.total} cases")


def test_12_div_domain_counter():
    rep = run("softmax", F24)
    count = fc.div_violations.count - _violations["start"]
    ok = rep.ok and count == 0
    assert report(12, "division precondition never violated", ok,
                  f"counter {count} across all suites in this run")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
