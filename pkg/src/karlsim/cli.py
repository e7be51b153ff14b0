"""Command line entry point ``sim``.

Exit codes: 0 success, 1 acceptance failure, 2 usage or configuration error.
``SIM_LOG`` sets the log level (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from karlsim import coverage, sensors, topology
from karlsim.harness import HarnessError, run, validate
from karlsim.report import FORMATS, ReportError, emit
from karlsim.scenario import ScenarioError, load_scenario

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
log = logging.getLogger("karlsim")


class UsageError(Exception):
    pass


def _setup_logging() -> None:
    level = os.environ.get("SIM_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _cmd_run(args) -> int:
    jobs = []
    for fp in args.scenario:
        s, base = load_scenario(fp)
        if args.seed is not None:
            s = replace(s, seed=args.seed)
        out = Path(args.out) if len(args.scenario) == 1 else Path(args.out) / s.name
        jobs.append((s, base, out))
    if len({str(j[2]) for j in jobs}) != len(jobs):
        raise UsageError("scenario names must be unique when running several")

    def one(job):
        s, base, out = job
        rep = run(s, base)
        emit(rep, out, args.format)
        return s.name, rep.passed, out

    with ThreadPoolExecutor(max_workers=max(1, min(len(jobs), os.cpu_count() or 1))) as pool:
        results = list(pool.map(one, jobs))
    for name, ok, out in results:
        print(f"{name}: {'pass' if ok else 'FAIL'} -> {out}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAIL


def _parse_grid(text: str) -> tuple[float, float, float]:
    try:
        extent, cell, height = (float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--grid expects extent,cell,height, got {text!r}") from None
    return extent, cell, height


def _cmd_coverage(args) -> int:
    extent, cell, height = _parse_grid(args.grid)
    rig = sensors.reference_rig() if args.rig == "builtin:reference" else sensors.load_rig(args.rig)
    grid = coverage.compute_coverage(rig, coverage.GridSpec(extent, cell, coverage.vehicle_center()), height)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        coverage.write_coverage_csv(grid, out / "coverage.csv")
    except OSError as exc:
        raise ReportError(f"cannot write {out}: {exc}") from exc
    for g in sensors.MODALITY_GROUPS:
        print(f"{g:<7} blind area {coverage.blind_spot_area(grid, g):8.2f} m2")
    return EXIT_OK


def _cmd_validate(args) -> int:
    if args.scenario:
        s, base = load_scenario(args.scenario)
    else:
        s, base = None, None
    v = validate(s, base, args.out)
    print(v.table())
    return v.exit_code


def _cmd_topology_check(args) -> int:
    t = topology.load(args.file)
    viol = topology.validate_topology(t)
    for v in viol:
        print(v)
    print(f"{len(t.nodes)} nodes, {len(t.links)} links, {len(viol)} violations")
    return EXIT_OK if not viol else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim", description="Vehicle platform digital twin and acceptance suite.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one or more scenarios and write reports")
    r.add_argument("--scenario", action="append", required=True, help="scenario JSON file (repeatable)")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--format", choices=FORMATS, default="json")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("coverage", help="write a coverage grid CSV for a rig")
    c.add_argument("--rig", default="builtin:reference", help="rig JSON file or builtin:reference")
    c.add_argument("--grid", default="20,0.5,1.0", help="extent,cell,height in m")
    c.add_argument("--out", required=True)
    c.set_defaults(func=_cmd_coverage)

    v = sub.add_parser("validate", help="run the acceptance criteria")
    v.add_argument("--out", help="also write the report (JSON and CSV bundle) here")
    v.add_argument("--scenario", help="validate this scenario instead of the shipped reference")
    v.set_defaults(func=_cmd_validate)

    t = sub.add_parser("topology", help="topology utilities")
    tsub = t.add_subparsers(dest="action", required=True)
    tc = tsub.add_parser("check", help="validate a topology JSON file")
    tc.add_argument("--file", required=True)
    tc.set_defaults(func=_cmd_topology_check)
    return p


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (
        UsageError,
        ScenarioError,
        HarnessError,
        ReportError,
        topology.TopologyError,
        sensors.RigError,
        coverage.GridError,
    ) as exc:
        print(f"sim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
