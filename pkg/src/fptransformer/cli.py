"""Command-line entry point: fpt {verify, build, eval, trace, enumerate}."""

from __future__ import annotations

import argparse
import itertools
import random
import sys
from pathlib import Path

from . import fpcore as fc
from . import io as fio
from . import verify as vf
from .constructions import assemble as asm
from .constructions.blocks import Alphabet
from .linalg import FpMatrix, SparseFpMatrix
from .transformer import forward_codes

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# format and alphabet flags

def _add_format_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--p", type=int, help="precision (fraction bits)")
    p.add_argument("--q", type=int, help="exponent bits")
    p.add_argument("--preset", choices=sorted(fc.PRESETS), help="named format (e5m2, e4m3)")


def format_from_args(args, default=None) -> fc.FpFormat:
    if args.preset is not None:
        if args.p is not None or args.q is not None:
            raise UsageError("--preset cannot be combined with --p/--q")
        return fc.preset_format(args.preset)
    if args.p is None and args.q is None and default is not None:
        return default
    if args.p is None or args.q is None:
        raise UsageError("give both --p and --q, or --preset")
    return fc.make_format(args.p, args.q)


def parse_alphabet(text: str, fmt: fc.FpFormat) -> Alphabet:
    """Comma-separated exact literals (decimal, fraction or hex bit pattern)."""
    vals = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            raise UsageError(f"empty alphabet entry in {text!r}")
        v = fc.parse_literal(item, fmt)
        if not v.is_finite:
            raise UsageError(f"alphabet entry {item!r} is not finite")
        vals.append(v)
    return Alphabet.scalars(vals)


# --------------------------------------------------------------------------
# verify

def cmd_verify(args) -> int:
    fmt = format_from_args(args, default=fc.make_format(2, 4))
    names = vf.resolve_suites(args.suite)
    cfg = vf.VerifyConfig(seed=args.seed, samples=args.samples,
                          workers=vf.workers_from_env(), n=args.n)
    if args.alphabet:
        cfg.alphabet = tuple(s.strip() for s in args.alphabet.split(","))
    reports = []
    for name in names:
        rep = vf.run_suite(name, fmt, cfg)
        reports.append(rep)
        print(rep.summary(), flush=True)
        for f in rep.failures[:args.show_failures]:
            print(f"    input={f['input']} expected={f['expected']} actual={f['actual']}")
    ok = all(r.ok for r in reports)
    if args.report:
        obj = {"format": {"p": fmt.p, "q": fmt.q}, "seed": args.seed, "ok": ok,
               "div_violations": fc.div_violations.count,
               "suites": [r.to_dict() for r in reports]}
        Path(args.report).write_text(fio.dumps(obj))
    print(f"{'OK' if ok else 'FAILED'}: {sum(r.ok for r in reports)}/{len(reports)} suites passed")
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# build

def _seq_hex(X, fmt) -> list:
    """Sequence of token tuples as a d x n list of hex strings."""
    return [[fc.to_hex(tok[t], fmt) for tok in X] for t in range(len(X[0]))]


def manifest_for(model, target_table: list, fmt) -> dict:
    meta = model.meta
    dims = meta.get("dims", {})
    out = {
        "format": {"p": fmt.p, "q": fmt.q},
        "kind": meta.get("kind"),
        "n": meta.get("n"),
        "gamma": meta.get("gamma"),
        "keys": meta.get("keys"),
        "constants": {name: fc.to_hex(meta[name], fmt)
                      for name in ("alpha", "beta", "beta_prime", "delta") if name in meta},
        "dimensions": {"d": dims.get("d"), "m": dims.get("m"), "r": dims.get("r"),
                       "h": dims.get("h"), "blocks": dims.get("blocks")},
        "targets": target_table,
    }
    if "alphabet" in meta:
        out["alphabet"] = [[fc.to_hex(v, fmt) for v in tok] for tok in meta["alphabet"]]
    return out


def cmd_build(args) -> int:
    fmt = format_from_args(args, default=fc.make_format(2, 4))
    fmt.require_condition1()
    if args.output is None:
        raise UsageError("build needs --output")
    if args.which == "thm1":
        alphabet = parse_alphabet(args.alphabet or ",".join(vf.DEFAULT_ALPHABET), fmt)
        n = args.n or 3
        target = asm.random_swap_equivariant_target(alphabet, n, args.d_out, args.seed, fmt)
        model = asm.assemble_thm1_model(target, alphabet, n, fmt)
        pairs = [(X, target[X]) for X in asm.distinct_inputs(alphabet, n)]
    else:
        n = args.n or 5
        target = asm.PermEquivariantTarget(args.seed, fmt, args.d_out, args.target)
        alphabet = parse_alphabet(args.alphabet, fmt) if args.alphabet else None
        if alphabet is not None:
            domain = [tuple(s) for s in itertools.product(alphabet.tokens, repeat=n)]
            if len(domain) > 200_000:
                raise UsageError(f"domain of {len(domain)} inputs is too large; shrink the alphabet or n")
        else:
            rng = random.Random(f"thm3-domain|{args.seed}")
            finite = fc.enumerate_finite(fmt)
            count = 200 if args.samples is None else args.samples
            domain = [tuple((rng.choice(finite),) for _ in range(n)) for _ in range(count)]
            domain += [tuple((v,) for _ in range(n)) for v in finite]
        model = asm.assemble_thm3_model(target, n, fmt, domain, alphabet)
        pairs = [(X, target(X)) for X in dict.fromkeys(domain)]
        if alphabet is not None:
            model.meta["alphabet"] = alphabet.tokens
    table = [{"input": _seq_hex(X, fmt), "output": _seq_hex(Y, fmt)} for X, Y in pairs]
    fio.write_model(args.output, model)
    manifest = args.manifest or str(Path(args.output).with_suffix("")) + ".manifest.json"
    Path(manifest).write_text(fio.dumps(manifest_for(model, table, fmt)))
    dims = model.meta["dims"]
    print(f"wrote {args.output} (d={dims['d']} m={dims['m']} r={dims['r']} "
          f"blocks={dims['blocks']} keys={model.meta['keys']}) and {manifest}")
    return EXIT_OK


# --------------------------------------------------------------------------
# eval

def cmd_eval(args) -> int:
    if args.model is None or args.input is None:
        raise UsageError("eval needs --model and --input")
    model = fio.read_model(args.model)
    X = fio.read_matrix(args.input, model.fmt)
    if isinstance(X, SparseFpMatrix):
        X = X.dense()
    if X.rows != model.d_in:
        raise UsageError(f"input has {X.rows} rows, the model expects {model.d_in}")
    out = forward_codes(model, X.codes[:, None, :])[:, 0, :]
    Y = FpMatrix(model.fmt, out)
    if args.output:
        fio.write_matrix(args.output, Y)
    else:
        sys.stdout.write(fio.dumps({"format": {"p": model.fmt.p, "q": model.fmt.q},
                                    **fio.matrix_to_obj(Y)}))
    return EXIT_OK


# --------------------------------------------------------------------------
# trace

def nonassoc_trace(fmt: fc.FpFormat) -> list[str]:
    """Both groupings of the three-term sum used by the order detector."""
    one = fc.one(fmt)
    r = lambda v: fc.render(v, fmt)  # noqa: E731
    add = lambda x, y: fc.fp_add(x, y, fmt)  # noqa: E731
    if fmt.p >= 3:
        a, b = fc.succ(one, fmt), fc.succ(fc.succ(one, fmt), fmt)
        names = {"a": "1^+", "b": "1^++"}
        orders = [(a, b, b, "(1^+ + 1^++) + 1^++"), (b, a, b, "(1^++ + 1^+) + 1^++"),
                  (b, b, a, "(1^++ + 1^++) + 1^+")]
    else:
        a, b = one, fc.succ(one, fmt)
        names = {"a": "1", "b": "1^+"}
        orders = [(b, a, b, "(1^+ + 1) + 1^+"), (a, b, b, "(1 + 1^+) + 1^+"),
                  (b, b, a, "(1^+ + 1^+) + 1")]
    lines = [f"format p={fmt.p} q={fmt.q}: {names['a']} = {r(a)}, {names['b']} = {r(b)}"]
    for x, y, z, label in orders:
        s1 = add(x, y)
        s2 = add(s1, z)
        exact = x.value(fmt) + y.value(fmt) + z.value(fmt)
        lines.append(f"{label}: {r(x)} + {r(y)} = {r(s1)}, then {r(s1)} + {r(z)} = {r(s2)} "
                     f"[{fc.to_hex(s2, fmt)}]; exact sum {exact}")
    return lines


def cmd_trace(args) -> int:
    fmt = format_from_args(args, default=fc.make_format(3, 4))
    for line in nonassoc_trace(fmt):
        print(line)
    return EXIT_OK


# --------------------------------------------------------------------------
# enumerate

def cmd_enumerate(args) -> int:
    fmt = format_from_args(args, default=fc.make_format(2, 4))
    vals = fc.enumerate_finite(fmt) if args.finite_only else fc.enumerate_all(fmt)
    print(f"# p={fmt.p} q={fmt.q} emin={fmt.emin} emax={fmt.emax} "
          f"omega={fmt.omega} Omega={fmt.Omega} count={len(vals)}")
    for v in vals:
        print(f"{fc.to_hex(v, fmt)} {fc.render(v, fmt)}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpt", description="Floating-point transformer toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run verification suites")
    _add_format_flags(p)
    p.add_argument("--suite", default="all",
                   help=f"comma list of suites or 'all' ({', '.join(vf.suite_names())})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, help="override the main sample count of each suite")
    p.add_argument("--report", help="write a JSON report here")
    p.add_argument("--alphabet", help="alphabet for thm1-micro, e.g. 1,1.25,2,3")
    p.add_argument("--n", type=int, help="sequence length for the construction suites")
    p.add_argument("--show-failures", type=int, default=5)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("build", help="build a constructed model")
    p.add_argument("which", choices=["thm1", "thm3"])
    _add_format_flags(p)
    p.add_argument("--alphabet", help="comma list of exact literals")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, help="random domain size for thm3 without an alphabet")
    p.add_argument("--d-out", type=int, default=1)
    p.add_argument("--target", choices=["random", "identity", "constant"], default="random",
                   help="thm3 target family")
    p.add_argument("--output", help="model JSON path")
    p.add_argument("--manifest", help="manifest path (default: <output>.manifest.json)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("eval", help="evaluate a model file on an input matrix file")
    p.add_argument("--model")
    p.add_argument("--input")
    p.add_argument("--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trace", help="print arithmetic traces")
    p.add_argument("what", choices=["nonassoc"])
    _add_format_flags(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("enumerate", help="list every value of a format")
    _add_format_flags(p)
    p.add_argument("--finite-only", action="store_true")
    p.set_defaults(func=cmd_enumerate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, fc.FormatError, vf.UnknownSuiteError, fio.FileFormatError) as e:
        print(f"fpt: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        # bad literals, out-of-range lengths and similar input problems
        print(f"fpt: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"fpt: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
