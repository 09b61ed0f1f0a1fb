"""Command-line entry point: ``rieszlab <subcommand>``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import grid, harness, potentials, rough, sparse
from .corpus import CORPUS
from .sphere import SYMBOLS


def _resolutions(text: str | None):
    if text is None:
        return None
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad resolution list {text!r}") from None


def _shift(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _json_arg(text: str | None) -> dict:
    return json.loads(text) if text else {}


def cmd_list_checks(args) -> int:
    for cid, d in harness.REGISTRY.items():
        res = ",".join(str(r) for r in d.resolutions)
        print(f"{cid:12s} {d.theorem:36s} {d.kind:12s} expect={d.expected:5s} res={res}")
        if args.verbose:
            print(f"{'':12s} {d.summary}")
            print(f"{'':12s} {harness.THEOREMS[d.theorem]}")
    return 0


def cmd_list_symbols(args) -> int:
    for name, (_, defaults, text) in SYMBOLS.items():
        print(f"{name:8s} {json.dumps(defaults):28s} {text}")
    if args.functions:
        print()
        for name, entry in CORPUS.items():
            print(f"{name:16s} {entry.description}")
    return 0


def cmd_run(args) -> int:
    ids = list(harness.REGISTRY) if args.check == "all" else args.check.split(",")
    config = harness.load_config(args.config) if args.config else None
    try:
        specs = harness.build_specs(ids, config, _resolutions(args.res))
    except harness.InvalidSpec as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    reports = harness.run_checks(specs, args.jobs)
    for rep in reports:
        consts = " ".join(f"{r.res}:{r.constant:.6g}" for r in rep.per_resolution)
        mark = "ok" if rep.as_expected else "UNEXPECTED"
        print(f"{rep.check_id:12s} {rep.verdict:12s} expected={rep.expected:5s} {mark:10s} "
              f"{rep.runtime:7.1f}s  {consts}")
        if args.verbose:
            for note in rep.notes:
                print(f"{'':12s} {note}")
    if args.json:
        harness.write_json(reports, args.json)
    if args.csv:
        harness.write_csv(reports, args.csv)
    return 0 if all(r.as_expected for r in reports) else 1


def cmd_build_sparse(args) -> int:
    f = grid.sample(args.function, _json_arg(args.params), resolution=args.res, n=args.n)
    target = grid.gradient(f).magnitude() if args.gradient else f
    family = sparse.build_sparse_family(target, args.alpha, args.s, _shift(args.shift))
    cert = sparse.certify_sparseness(family)
    dom = sparse.domination_check(target, args.alpha, args.s, family.shift, family)
    c, d = cert.per_resolution[0], dom.per_resolution[0]
    print(f"cubes={len(family)} generations={family.clamp['generation_min']}.."
          f"{family.clamp['generation_max']} stopping_base={family.a:.6g}")
    print(f"certificate {cert.verdict}: worst |E_Q|/|Q| = {c.constant:.6g}, "
          f"overlaps={c.extra['overlapping_samples']}, nesting={c.extra['nesting_violations']}, "
          f"window={c.extra['window_violations']}")
    print(f"domination {dom.verdict}: sup ratio = {d.constant:.6g} <= {d.extra['bound']:.6g}, "
          f"violations={d.extra['violations']}, tail={d.error_bound:.3g}")
    if args.out:
        family.save(args.out)
    return 0 if cert.verdict == dom.verdict == "pass" else 1


OPERATORS = {
    "riesz": "Riesz potential I_alpha f",
    "fractional-maximal": "M_{alpha,L^s} f over shifted dyadic cubes",
    "rough-singular": "T_{Omega,alpha} f (symbol projected to mean zero)",
    "rough-maximal": "M_{Omega,alpha} f, alpha >= 1",
    "natural-rough-maximal": "natural rough maximal function",
    "sharp-rough-maximal": "sharp rough maximal function",
    "spherical-maximal": "S_{alpha-1} f",
    "frac-derivative": "nonlinear fractional derivative, 0 < alpha < 1",
    "sparse": "sparse operator of the stopping family of f (shift 0)",
}


def _evaluate(op: str, f, args):
    a, s = args.alpha, args.s
    if op == "riesz":
        return potentials.riesz_potential(f, a)
    if op == "fractional-maximal":
        return potentials.fractional_maximal(f, a, s)
    if op == "spherical-maximal":
        return rough.spherical_maximal(f, a - 1.0)
    if op == "frac-derivative":
        return rough.nonlinear_frac_derivative(f, a)
    if op == "sparse":
        family = sparse.build_sparse_family(f, a, s, (0,) * f.n)
        return f.with_values(sparse.sparse_operator(f, family), "sparse")
    sym = harness.symbol([args.symbol, _json_arg(args.symbol_params)], f.n)
    if op == "rough-singular":
        return rough.rough_singular(f, sym, a)
    if op == "rough-maximal":
        return rough.rough_maximal(f, sym, a)
    if op == "natural-rough-maximal":
        return rough.natural_rough_maximal(f, sym, a)
    return rough.sharp_rough_maximal(f, sym, a)


def cmd_eval(args) -> int:
    f = grid.sample(args.function, _json_arg(args.params), resolution=args.res, n=args.n)
    if args.gradient:
        f = grid.gradient(f).magnitude()
    out = _evaluate(args.operator, f, args)
    vals = out.values
    idx = np.unravel_index(int(np.argmax(np.abs(vals))), vals.shape)
    summary = {
        "operator": args.operator, "function": args.function, "gradient": args.gradient,
        "res": args.res, "alpha": args.alpha, "s": args.s,
        "max_abs": float(np.abs(vals).max()), "argmax": out.point(idx).tolist(),
        "l2": float(np.sqrt(np.sum(vals**2) * out.h**out.n)),
    }
    print(json.dumps(summary, sort_keys=True))
    if args.out:
        grid.save(out, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rieszlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    lc = sub.add_parser("list-checks", help="list the registered checks")
    lc.add_argument("-v", "--verbose", action="store_true")
    lc.set_defaults(func=cmd_list_checks)

    ls = sub.add_parser("list-symbols", help="list the sphere symbols")
    ls.add_argument("--functions", action="store_true", help="also list corpus functions")
    ls.set_defaults(func=cmd_list_symbols)

    run = sub.add_parser("run", help="run checks and report verdicts")
    run.add_argument("check", help="check id, comma-separated ids, or 'all'")
    run.add_argument("--res", help="comma-separated resolutions overriding the defaults")
    run.add_argument("--json", help="write the JSON report here")
    run.add_argument("--csv", help="write the flat CSV report here")
    run.add_argument("--config", help="JSON file overriding parameters and resolutions")
    run.add_argument("--jobs", type=int, default=1, help="worker processes")
    run.add_argument("-v", "--verbose", action="store_true")
    run.set_defaults(func=cmd_run)

    bs = sub.add_parser("build-sparse", help="build and certify a sparse family")
    bs.add_argument("function", choices=sorted(CORPUS))
    bs.add_argument("--params", help="corpus parameters as JSON")
    bs.add_argument("--res", type=int, default=128)
    bs.add_argument("--n", type=int, default=2)
    bs.add_argument("--alpha", type=float, default=1.0)
    bs.add_argument("--s", type=float, default=1.0)
    bs.add_argument("--shift", default="0,0", help="shift numerators over 3, e.g. 1,0")
    bs.add_argument("--gradient", action="store_true", help="use |grad f| instead of f")
    bs.add_argument("--out", help="write the family as JSON")
    bs.set_defaults(func=cmd_build_sparse)

    ev = sub.add_parser("eval", help="apply an operator to a corpus function")
    ev.add_argument("operator", choices=sorted(OPERATORS))
    ev.add_argument("function", choices=sorted(CORPUS))
    ev.add_argument("--params", help="corpus parameters as JSON")
    ev.add_argument("--res", type=int, default=128)
    ev.add_argument("--n", type=int, default=2)
    ev.add_argument("--alpha", type=float, default=1.0)
    ev.add_argument("--s", type=float, default=1.0)
    ev.add_argument("--symbol", default="sign", choices=sorted(SYMBOLS))
    ev.add_argument("--symbol-params", help="symbol parameters as JSON")
    ev.add_argument("--gradient", action="store_true", help="apply to |grad f| instead of f")
    ev.add_argument("--out", help="save the result grid")
    ev.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
