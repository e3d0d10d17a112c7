"""Command-line front end: single studies and manifest suites."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import weakop as wo
from .assembly import ElementConfig
from .manifest import ManifestError, bundled_manifest_path, load_manifest, run_suite
from .polyspace import parse_gradient_space
from .solutions import SOLUTIONS, get_solution
from .study import emit_table, run_study, summary_rates

_ENVELOPE = (f"interior degree <= {wo.MAX_INTERIOR_DEGREE}, edge degree <= {wo.MAX_EDGE_DEGREE}, "
             f"gradient degree <= {wo.MAX_GRADIENT_DEGREE}, j in {{-1, 0, 1, inf}}")


def _parse_levels(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    lo, hi = int(lo), int(hi or lo)
    if not 1 <= lo <= hi <= 8:
        raise ValueError(f"level range {text!r} outside 1..8")
    return lo, hi


def _parse_j(text: str) -> float:
    if text == "inf":
        return math.inf
    return float(int(text))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wglab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one element study and write a CSV")
    run.add_argument("--mesh", choices=("rect", "tri"), required=True)
    run.add_argument("--l", type=int, required=True, help="interior polynomial degree")
    run.add_argument("--s", type=int, required=True, help="edge polynomial degree")
    run.add_argument("--grad", required=True, help="gradient space, P:<m> or RT:<m>")
    run.add_argument("--j", required=True, help="stabilizer exponent: -1, 0, 1 or inf")
    run.add_argument("--levels", required=True, help="contiguous level range lo:hi")
    run.add_argument("--solution", default="sinsin", choices=sorted(SOLUTIONS))
    run.add_argument("--out", default=None, help="output CSV path")
    run.add_argument("--solver-tol", type=float, default=1e-11)
    run.add_argument("--max-iter", type=int, default=None)

    suite = sub.add_parser("suite", help="run a manifest of studies")
    suite.add_argument("manifest", nargs="?", default=None,
                       help="manifest path (defaults to the bundled table suite)")
    suite.add_argument("--outdir", default=".", help="directory for CSVs and summary")
    suite.add_argument("--jobs", type=int, default=1, help="parallel workers")
    suite.add_argument("--tol", type=float, default=None,
                       help="override the manifest rate-comparison tolerance")
    suite.add_argument("--solver-tol", type=float, default=1e-11)
    suite.add_argument("--max-iter", type=int, default=None)
    return parser


def _cmd_run(parser: argparse.ArgumentParser, args) -> int:
    try:
        config = ElementConfig(l=args.l, s=args.s,
                               grad=parse_gradient_space(args.grad), j=_parse_j(args.j))
        levels = _parse_levels(args.levels)
    except ValueError as err:
        parser.error(f"{err}; supported envelope: {_ENVELOPE}")
    out = Path(args.out) if args.out else Path(
        f"wg_{args.mesh}_l{args.l}_s{args.s}_{args.grad.replace(':', '')}_j{args.j}.csv")
    report = run_study(config, args.mesh, range(levels[0], levels[1] + 1),
                       get_solution(args.solution),
                       solver_tol=args.solver_tol, max_iter=args.max_iter)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(emit_table([report], "csv"))
    except OSError as err:
        print(f"wglab: cannot write {out}: {err}", file=sys.stderr)
        return 2
    r1, r2 = summary_rates(report)
    print(f"{report.mesh_kind} {config.label()}: classification {report.classification}, "
          f"summary rates (r1, r2) = ({r1:.3g}, {r2:.3g})")
    print(f"wrote {out}")
    return 0


def _cmd_suite(parser: argparse.ArgumentParser, args) -> int:
    path = Path(args.manifest) if args.manifest else bundled_manifest_path()
    if not path.is_file():
        print(f"wglab: manifest not found: {path}", file=sys.stderr)
        return 2
    try:
        manifest = load_manifest(path)
    except ManifestError as err:
        print(f"wglab: {err}", file=sys.stderr)
        return 2
    result = run_suite(manifest, args.outdir, jobs=args.jobs, tol=args.tol,
                       solver_tol=args.solver_tol, max_iter=args.max_iter)
    print(result.summary, end="")
    return result.exit_code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(parser, args)
    return _cmd_suite(parser, args)


if __name__ == "__main__":
    sys.exit(main())
