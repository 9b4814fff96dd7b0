"""Command-line front end.

    nvdephase budget --scenario s.yaml --out out/
    nvdephase reproduce table-s3
    nvdephase validate --scenario s.yaml

Exit status: 0 success, 1 numeric or tolerance failure, 2 input error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .io import dumps_record, sha256_bytes
from .lm import FitError
from .scenario import ScenarioError, load_scenario, validate_scenario
from .tasks import Check, check_metrics, data_path, run_task

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

SUBCOMMAND_TASK = {
    "spectrum": "spectrum",
    "budget": "budget",
    "ramsey": "ramsey",
    "drive-fit": "drive",
    "montecarlo": "montecarlo",
    "sensitivity": "sensitivity",
}

REPRODUCE_TARGETS = {
    "table-s3": "table_s3.yaml",
    "table-s4": "table_s4.yaml",
    "table-s5": "table_s5.yaml",
    "fig4a": "fig4a.yaml",
    "fig4c": "fig4c.yaml",
    "fig-s9": "fig_s9.yaml",
}


@dataclass
class RunRecord:
    scenario_sha256: str
    tool_version: str
    timestamp: str
    seed: int
    outputs: dict[str, str]  # file name -> sha256

    def as_dict(self) -> dict:
        return {
            "scenario_sha256": self.scenario_sha256,
            "tool_version": self.tool_version,
            "timestamp": self.timestamp,
            "seed": self.seed,
            "outputs": dict(sorted(self.outputs.items())),
        }


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _execute(path: Path, out_dir: Path, args: argparse.Namespace, want_task: str | None) -> tuple[int, list[Check]]:
    try:
        scn = load_scenario(path)
    except ScenarioError as exc:
        for issue in exc.issues:
            _err(str(issue))
        return EXIT_INPUT, []
    issues = validate_scenario(scn)
    for issue in issues:
        _err(str(issue))
    if any(i.severity == "error" for i in issues):
        return EXIT_INPUT, []
    if want_task is not None and scn.task != want_task:
        _err(f"error: {path}: scenario holds a '{scn.task}' task, expected '{want_task}'")
        return EXIT_INPUT, []
    if args.seed is not None:
        scn.seed = args.seed
    try:
        out = run_task(scn, threads=args.threads, base_dir=path.parent)
    except FitError as exc:
        _err(f"fit failure: {exc}")
        return EXIT_FAIL, []
    except (OSError, ValueError) as exc:
        _err(f"error: {exc}")
        return EXIT_INPUT, []

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for name, content in sorted(out.files.items()):
        data = content.encode()
        (out_dir / name).write_bytes(data)
        manifest[name] = sha256_bytes(data)
    record = RunRecord(
        sha256_bytes(path.read_bytes()),
        __version__,
        datetime.now(timezone.utc).isoformat(timespec="seconds"),
        scn.seed,
        manifest,
    )
    (out_dir / "run_record.json").write_text(dumps_record(record.as_dict()))

    if args.format == "records":
        sys.stdout.write(dumps_record({"name": scn.name, "metrics": out.metrics, "record": out.records}))
    else:
        print(f"== {scn.name}")
        sys.stdout.write(out.summary)
    checks = check_metrics(out.metrics, scn.expected) if scn.expected else []
    return EXIT_OK, checks


def cmd_run(args: argparse.Namespace) -> int:
    if args.scenario is None:
        _err("error: --scenario is required")
        return EXIT_INPUT
    code, checks = _execute(Path(args.scenario), Path(args.out), args, SUBCOMMAND_TASK[args.command])
    for c in checks:
        print(c.line())
    return code


def cmd_reproduce(args: argparse.Namespace) -> int:
    targets = list(REPRODUCE_TARGETS) if args.target == "all" else [args.target]
    worst = EXIT_OK
    n_fail = 0
    for target in targets:
        code, checks = _execute(data_path(REPRODUCE_TARGETS[target]), Path(args.out) / target, args, None)
        worst = max(worst, code)
        for c in checks:
            print(c.line())
        n_fail += sum(not c.passed for c in checks)
    if n_fail:
        print(f"{n_fail} check(s) failed")
        worst = max(worst, EXIT_FAIL)
    return worst


def cmd_validate(args: argparse.Namespace) -> int:
    path = args.scenario or args.path
    if path is None:
        _err("error: give a scenario path")
        return EXIT_INPUT
    try:
        scn = load_scenario(path)
    except ScenarioError as exc:
        for issue in exc.issues:
            print(issue)
        return EXIT_INPUT
    issues = validate_scenario(scn)
    for issue in issues:
        print(issue)
    if any(i.severity == "error" for i in issues):
        return EXIT_INPUT
    if not issues:
        print(f"{path}: ok ({scn.task})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nvdephase", description="NV ensemble dephasing toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
        if scenario:
            p.add_argument("--scenario", help="scenario YAML file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo")
        p.add_argument("--format", choices=("text", "records"), default="text", help="stdout format")

    for name in SUBCOMMAND_TASK:
        p = sub.add_parser(name, help=f"run a {SUBCOMMAND_TASK[name]} scenario")
        common(p)
        p.set_defaults(func=cmd_run)
    p = sub.add_parser("reproduce", help="run bundled reproduction scenarios and check them")
    p.add_argument("target", choices=[*REPRODUCE_TARGETS, "all"])
    common(p, scenario=False)
    p.set_defaults(func=cmd_reproduce)
    p = sub.add_parser("validate", help="check a scenario without running it")
    p.add_argument("path", nargs="?")
    p.add_argument("--scenario")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if getattr(args, "threads", 1) < 1:
        _err("error: --threads must be >= 1")
        return EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
