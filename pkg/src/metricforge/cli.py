"""``forge`` command line.

Exit codes: 0 success, 2 invalid input, 3 construction failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from . import io as fio
from .correction import (CorrectionFn, DyadicRadii, build_radii, check_radii,
                         eval_correction, verify_correction)
from .deficiency import (ORACLE_TOKENS, TableOracle, TDTable, compute_td, is_td_function,
                         oracle_from_token, usc_envelope)
from .errors import ConstructionError, ForgeError, InvariantError, ValidationError
from .groups import end_to_end, model_from_dict
from .repair import repair
from .space import check_triangle, local_continuity_modulus
from .stability import DEFAULT_SELECTORS, SELECTORS, spec_from_dict, stability_defect


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(Fraction(x)) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _selectors(text: str) -> tuple[str, ...]:
    sel = tuple(s for s in text.split(",") if s)
    bad = [s for s in sel if s not in SELECTORS]
    if bad or not sel:
        raise argparse.ArgumentTypeError(f"unknown selectors {bad}; choose from {sorted(SELECTORS)}")
    return sel


def _threads() -> int:
    raw = os.environ.get("FORGE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"FORGE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError(f"FORGE_THREADS must be a positive integer, got {raw!r}")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="forge", description="Certified repair of pre-metrics into metrics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", type=int, default=0, help="seed for sampled batteries (default 0)")
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="format of matrix output written to stdout")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="triangle and local-continuity diagnostics for a CSV matrix")
    c.add_argument("input")
    c.add_argument("--eps", type=_csv_floats, help="eps grid for the local-continuity modulus")
    c.add_argument("--out", help="write the JSON report here instead of stdout")

    t = sub.add_parser("td", help="triangle deficiency table, or a TD-axiom check of a named oracle")
    src = t.add_mutually_exclusive_group(required=True)
    src.add_argument("input", nargs="?")
    src.add_argument("--oracle", choices=ORACLE_TOKENS)
    t.add_argument("--t-grid", type=_csv_floats, default=[0.125, 0.25, 0.5, 1.0])
    t.add_argument("--out")

    cr = sub.add_parser("correct", help="build, evaluate or verify a correction function")
    cr.add_argument("action", choices=("build", "eval", "verify"))
    cr.add_argument("source", help="oracle token, TD table JSON, or matrix CSV")
    cr.add_argument("--depth", type=int, default=8)
    cr.add_argument("--radii", help="radii JSON from 'correct build' (eval/verify)")
    cr.add_argument("--at", type=_csv_floats, help="points to evaluate (eval)")
    cr.add_argument("--grid", type=int, default=64, help="grid size for verify")
    cr.add_argument("--out")

    r = sub.add_parser("repair", help="repair a pre-metric into a metric")
    r.add_argument("input")
    r.add_argument("--depth", type=int)
    r.add_argument("--lift", dest="lift", action="store_true", default=True)
    r.add_argument("--no-lift", dest="lift", action="store_false")
    r.add_argument("--closure", action="store_true",
                   help="shortest-path closure instead of the lift (implies --no-lift)")
    r.add_argument("--prescale", action="store_true", help="divide by the largest entry first")
    r.add_argument("--out", help="repaired matrix CSV")
    r.add_argument("--cert", help="certificate JSON")

    s = sub.add_parser("stability", help="stability defect of a double sequence spec")
    s.add_argument("spec")
    s.add_argument("--N", type=int, default=100)
    s.add_argument("--window", type=int, default=10)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--selectors", type=_selectors, default=DEFAULT_SELECTORS)
    s.add_argument("--out")

    w = sub.add_parser("wap", help="invariant metric on a group model")
    w.add_argument("model")
    w.add_argument("--levels", type=int, default=8)
    w.add_argument("--depth", type=int)
    w.add_argument("--out", help="metric CSV")
    w.add_argument("--cert", help="certificate JSON")
    return p


def _emit(report: dict, out: str | None) -> None:
    if out:
        fio.write_json(out, report)
    else:
        sys.stdout.write(fio.dumps(report))


def _oracle_for(source: str):
    if source in ORACLE_TOKENS:
        return oracle_from_token(source)
    path = Path(source)
    if path.suffix == ".json":
        return usc_envelope(TableOracle(TDTable.from_dict(fio.read_json(path)), path.stem))
    return usc_envelope(TableOracle(compute_td(fio.read_matrix(path)), path.stem))


def _cmd_check(args, prov) -> int:
    h = fio.read_matrix(args.input)
    report = {"n": h.n, "triangle": check_triangle(h).to_dict()}
    if args.eps:
        report["local_continuity"] = local_continuity_modulus(h, args.eps).to_dict()
    report["provenance"] = prov([args.input])
    _emit(report, args.out)
    return 0


def _cmd_td(args, prov) -> int:
    if args.oracle:
        g = oracle_from_token(args.oracle)
        report = {"oracle": args.oracle, "td_check": is_td_function(g, args.t_grid).to_dict()}
        inputs = []
    else:
        td = compute_td(fio.read_matrix(args.input))
        report = {"table": td.to_dict()}
        inputs = [args.input]
    report["provenance"] = prov(inputs)
    _emit(report, args.out)
    return 0


def _cmd_correct(args, prov) -> int:
    g = _oracle_for(args.source)
    inputs = [] if args.source in ORACLE_TOKENS else [args.source]
    if args.radii:
        radii = DyadicRadii.from_dict(fio.read_json(args.radii)["radii"])
        inputs.append(args.radii)
    else:
        radii = build_radii(g, args.depth)
    f = CorrectionFn(radii)
    if args.action == "build":
        failures = check_radii(radii, g)
        if failures:
            raise ConstructionError(failures[0])
        report = {"oracle": g.name, "radii": radii.to_dict()}
    elif args.action == "eval":
        if not args.at:
            raise ValidationError("correct eval needs --at")
        report = {"oracle": g.name, "depth": radii.depth,
                  "values": [[t, eval_correction(f, t)] for t in args.at]}
    else:
        grid = np.linspace(0.0, 1.0, args.grid)
        rep = verify_correction(f, g, grid)
        report = {"oracle": g.name, "verify": rep.to_dict(),
                  "radii_failures": check_radii(radii, g)}
    report["provenance"] = prov(inputs)
    _emit(report, args.out)
    return 0


def _cmd_repair(args, prov) -> int:
    h = fio.read_matrix(args.input)
    lift = args.lift and not args.closure
    res = repair(h, depth=args.depth, lift=lift, closure=args.closure, prescale=args.prescale)
    cert = res.certificate.to_dict()
    cert["post_triangle"] = check_triangle(res.d1).to_dict()
    cert["provenance"] = prov([args.input])
    if args.cert:
        fio.write_json(args.cert, cert)
    if args.out:
        fio.write_matrix(args.out, res.d1)
    elif args.format == "csv":
        sys.stdout.write(fio.format_matrix(res.d1.values))
    if not args.cert and not (args.format == "csv" and not args.out):
        sys.stdout.write(fio.dumps(cert))
    return 0


def _cmd_stability(args, prov) -> int:
    spec = spec_from_dict(fio.read_json(args.spec))
    rep = stability_defect(spec, args.N, args.window, args.tol, args.selectors)
    report = rep.to_dict()
    report["provenance"] = prov([args.spec])
    _emit(report, args.out)
    return 0


def _cmd_wap(args, prov) -> int:
    G = model_from_dict(fio.read_json(args.model))
    d1, cert = end_to_end(G, args.levels, args.depth, seed=args.seed)
    report = cert.to_dict()
    report["provenance"] = prov([args.model])
    if args.out:
        fio.write_matrix(args.out, d1)
    if args.cert:
        fio.write_json(args.cert, report)
    else:
        sys.stdout.write(fio.dumps(report))
    return 0 if cert.ok else 3


COMMANDS = {
    "check": _cmd_check,
    "td": _cmd_td,
    "correct": _cmd_correct,
    "repair": _cmd_repair,
    "stability": _cmd_stability,
    "wap": _cmd_wap,
}


def run(argv: list[str] | None = None) -> int:
    try:
        _threads()
        args = build_parser().parse_args(argv)
        flags = {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items())}

        def prov(inputs):
            return fio.provenance(inputs, flags, __version__)

        return COMMANDS[args.command](args, prov)
    except (ConstructionError, InvariantError) as exc:
        print(f"forge: construction failed: {exc}", file=sys.stderr)
        return 3
    except ForgeError as exc:
        print(f"forge: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
