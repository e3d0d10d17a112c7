"""Manifest-driven study suites.

A manifest is plain text, one run per line::

    # optional comment
    tol 0.2
    rect 1 1 P:0 -1 3:6 sinsin 1 2 tables/rect_PkPkPkm1.csv

Fields: mesh (rect|tri), interior degree, edge degree, gradient space,
stabilizer exponent, level range lo:hi, solution name, expected r1,
expected r2 (``-inf`` marks an expected diverging run), output CSV path,
and optionally a trailing ``tol=<real>`` overriding the header tolerance
for that run (used where a rate transition cannot settle inside the
double-precision window).  Lines sharing an output path land in the same
CSV, in manifest order; paths resolve against the chosen output
directory.  The summary compares measured summary rates with the
expected ones; mismatches on Raviart-Thomas rectangular runs are
warnings, not failures, because that combination has no canonical local
space.
"""

from __future__ import annotations

import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import polyspace as ps
from .assembly import ElementConfig
from .polyspace import parse_gradient_space
from .solutions import get_solution
from .study import CSV_HEADER, csv_rows, run_study, summary_rates

DEFAULT_TOL = 0.2

_MESH_NAMES = {"rect": "rect", "tri": "tri"}


class ManifestError(ValueError):
    """Malformed manifest content; carries the offending line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"manifest line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class ManifestEntry:
    mesh: str
    config: ElementConfig
    levels: tuple[int, int]
    solution: str
    expected_r1: float
    expected_r2: float
    out: str
    tol: float | None = None  # per-run override of the header tolerance

    def describe(self) -> str:
        lo, hi = self.levels
        return f"{self.mesh} {self.config.label()} levels {lo}:{hi} [{self.solution}]"


@dataclass
class RunManifest:
    tol: float = DEFAULT_TOL
    entries: list[ManifestEntry] = field(default_factory=list)


def _parse_j(token: str) -> float:
    if token == "inf":
        return math.inf
    try:
        return float(int(token))
    except ValueError:
        raise ValueError(f"bad stabilizer exponent {token!r}") from None


def _parse_expected(token: str) -> float:
    if token == "-inf":
        return -math.inf
    return float(token)


def parse_manifest(text: str) -> RunManifest:
    manifest = RunManifest()
    seen_entry = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "tol":
            if seen_entry:
                raise ManifestError(lineno, "tol header must precede all entries")
            if len(tokens) != 2:
                raise ManifestError(lineno, "expected 'tol <real>'")
            try:
                manifest.tol = float(tokens[1])
            except ValueError:
                raise ManifestError(lineno, f"bad tolerance {tokens[1]!r}") from None
            continue
        line_tol = None
        if len(tokens) == 11 and tokens[10].startswith("tol="):
            try:
                line_tol = float(tokens[10][4:])
            except ValueError:
                raise ManifestError(lineno, f"bad tolerance override {tokens[10]!r}") from None
            tokens = tokens[:10]
        if len(tokens) != 10:
            raise ManifestError(lineno, f"expected 10 fields, got {len(tokens)}")
        try:
            mesh = _MESH_NAMES[tokens[0]]
        except KeyError:
            raise ManifestError(lineno, f"unknown mesh {tokens[0]!r} (rect|tri)") from None
        try:
            config = ElementConfig(
                l=int(tokens[1]), s=int(tokens[2]),
                grad=parse_gradient_space(tokens[3]), j=_parse_j(tokens[4]),
            )
            lo, hi = (int(t) for t in tokens[5].split(":"))
            if not 1 <= lo <= hi <= 8:
                raise ValueError(f"level range {tokens[5]} outside 1..8")
            solution = tokens[6]
            get_solution(solution)
            expected = (_parse_expected(tokens[7]), _parse_expected(tokens[8]))
        except ValueError as err:
            raise ManifestError(lineno, str(err)) from None
        manifest.entries.append(ManifestEntry(
            mesh=mesh, config=config, levels=(lo, hi), solution=solution,
            expected_r1=expected[0], expected_r2=expected[1], out=tokens[9],
            tol=line_tol,
        ))
        seen_entry = True
    if not manifest.entries:
        raise ManifestError(0, "manifest contains no runs")
    return manifest


def load_manifest(path) -> RunManifest:
    return parse_manifest(Path(path).read_text())


def _run_entry(args):
    entry, solver_tol, max_iter = args
    report = run_study(
        entry.config, entry.mesh, range(entry.levels[0], entry.levels[1] + 1),
        get_solution(entry.solution), solver_tol=solver_tol, max_iter=max_iter,
    )
    return csv_rows(report), summary_rates(report), report.classification


def _compare(entry: ManifestEntry, measured: tuple[float, float], classification: str,
             tol: float) -> str:
    expects_divergence = math.isinf(entry.expected_r1) or math.isinf(entry.expected_r2)
    if expects_divergence:
        ok = classification == "diverged"
    elif classification == "diverged":
        ok = False
    else:
        ok = all(
            not math.isnan(m) and abs(m - e) <= tol
            for m, e in zip(measured, (entry.expected_r1, entry.expected_r2))
        )
    if ok:
        return "PASS"
    soft = entry.config.grad.family == ps.RAVIART_THOMAS and entry.mesh == "rect"
    return "WARN" if soft else "FAIL"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


@dataclass
class SuiteResult:
    exit_code: int
    summary: str
    csv_paths: list[Path]


def run_suite(manifest: RunManifest, outdir, jobs: int = 1,
              solver_tol: float = 1e-11, max_iter: int | None = None,
              tol: float | None = None) -> SuiteResult:
    """Execute every manifest entry and write the grouped CSVs plus summary.

    Exit code 0 when every comparison passes (warnings allowed), 1 when any
    comparison fails.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tol = manifest.tol if tol is None else tol
    work = [(entry, solver_tol, max_iter) for entry in manifest.entries]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_entry, work))
    else:
        results = [_run_entry(w) for w in work]

    grouped: dict[str, list[str]] = {}
    lines = []
    n_fail = n_warn = 0
    for entry, (rows, measured, classification) in zip(manifest.entries, results):
        grouped.setdefault(entry.out, []).extend(rows)
        status = _compare(entry, measured, classification,
                          entry.tol if entry.tol is not None else tol)
        n_fail += status == "FAIL"
        n_warn += status == "WARN"
        lines.append(
            f"{status} {entry.describe()} measured (r1, r2) = "
            f"({_fmt_rate(measured[0])}, {_fmt_rate(measured[1])}) expected "
            f"({_fmt_rate(entry.expected_r1)}, {_fmt_rate(entry.expected_r2)}) "
            f"[{classification}]"
        )
    csv_paths = []
    for out, rows in grouped.items():
        path = outdir / out
        _atomic_write(path, "\n".join([CSV_HEADER] + rows) + "\n")
        csv_paths.append(path)
    lines.append(
        f"{len(manifest.entries)} runs: {len(manifest.entries) - n_fail - n_warn} passed, "
        f"{n_warn} warned, {n_fail} failed (tol {tol:g})"
    )
    summary = "\n".join(lines) + "\n"
    _atomic_write(outdir / "summary.txt", summary)
    return SuiteResult(exit_code=1 if n_fail else 0, summary=summary, csv_paths=csv_paths)


def _fmt_rate(r: float) -> str:
    if math.isnan(r):
        return "nan"
    if math.isinf(r):
        return "inf" if r > 0 else "-inf"
    return f"{r:.2f}"


def bundled_manifest_path() -> Path:
    """Path of the packaged manifest covering the full table suite."""
    return Path(__file__).parent / "data" / "tables.manifest"
