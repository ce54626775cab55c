"""Command-line front end.

Subcommands: run a spec file, run or emit a preset, validate a spec,
summarize a manifest.  Exit codes: 0 everything passed, 2 a pipeline test
failed, 3 the spec (or invocation) was invalid.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiments
from .artifacts import canonical_json

EXIT_PASS = 0
EXIT_FAILURE = 2
EXIT_INVALID = 3


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument(
        "--out-dir", default=None,
        help=f"output root (default: spec value, then ${experiments.OUT_DIR_ENV}, then ./qflab-runs)",
    )
    p.add_argument(
        "--threads", type=int, default=None,
        help="cap numeric library threads (best effort via environment)",
    )
    p.add_argument(
        "--tolerance-scale", type=float, default=None,
        help="multiply all pipeline tolerances by this factor",
    )


def _apply_threads(n):
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _load_spec(path: str) -> experiments.ExperimentSpec:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise experiments.SpecValidationError(
            [experiments.Finding("error", "file", f"cannot read {path}: {exc}")]
        )
    except json.JSONDecodeError as exc:
        raise experiments.SpecValidationError(
            [experiments.Finding("error", "file", f"{path} is not valid JSON: {exc}")]
        )
    try:
        return experiments.ExperimentSpec.from_json(obj)
    except (TypeError, ValueError) as exc:
        raise experiments.SpecValidationError(
            [experiments.Finding("error", "spec", str(exc))]
        )


def _print_findings(findings):
    for f in findings:
        print(f"{f.severity.upper():7s} {f.field}: {f.message}")


def _run_and_report(spec: experiments.ExperimentSpec, args) -> int:
    spec = spec.with_overrides(args.seed, args.out_dir, args.tolerance_scale)
    try:
        manifest = experiments.run(spec)
    except experiments.SpecValidationError as exc:
        _print_findings(exc.findings)
        return EXIT_INVALID
    for name in sorted(manifest.tests):
        flag = "PASS" if manifest.tests[name] else "FAIL"
        print(f"{flag} {name}")
    print(f"spec hash {manifest.spec_hash}")
    print(f"artifacts in {experiments._out_dir_for(spec)}")
    return EXIT_PASS if manifest.passed else EXIT_FAILURE


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qflab",
        description="wave-function experiments, particle dynamics, and finite ontological models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a spec file")
    p_run.add_argument("spec", help="path to a spec JSON document")
    _add_common_flags(p_run)

    p_preset = sub.add_parser("preset", help="run (or emit) a canonical experiment")
    p_preset.add_argument(
        "name", help=f"one of: {', '.join(experiments.preset_names())}"
    )
    p_preset.add_argument(
        "--emit", action="store_true",
        help="print the preset's spec JSON instead of running it",
    )
    _add_common_flags(p_preset)

    p_val = sub.add_parser("validate", help="check a spec file without running it")
    p_val.add_argument("spec", help="path to a spec JSON document")

    p_rep = sub.add_parser("report", help="summarize a run manifest")
    p_rep.add_argument("manifest", help="path to a manifest.json")

    args = parser.parse_args(argv)
    _apply_threads(getattr(args, "threads", None))

    if args.command == "run":
        try:
            spec = _load_spec(args.spec)
        except experiments.SpecValidationError as exc:
            _print_findings(exc.findings)
            return EXIT_INVALID
        return _run_and_report(spec, args)

    if args.command == "preset":
        try:
            spec = experiments.preset(args.name)
        except ValueError as exc:
            print(f"ERROR   name: {exc}")
            return EXIT_INVALID
        if args.emit:
            print(canonical_json(spec.to_json()))
            return EXIT_PASS
        return _run_and_report(spec, args)

    if args.command == "validate":
        try:
            spec = _load_spec(args.spec)
        except experiments.SpecValidationError as exc:
            _print_findings(exc.findings)
            return EXIT_INVALID
        findings = experiments.validate(spec)
        _print_findings(findings)
        if any(f.severity == "error" for f in findings):
            return EXIT_INVALID
        print("spec is runnable")
        return EXIT_PASS

    if args.command == "report":
        try:
            manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"ERROR   manifest: {exc}")
            return EXIT_INVALID
        for name in sorted(manifest.get("tests", {})):
            flag = "PASS" if manifest["tests"][name] else "FAIL"
            print(f"{flag} {name}")
        print(f"spec hash {manifest.get('spec_hash')}")
        print(f"tool version {manifest.get('tool_version')}")
        print(f"wall clock {manifest.get('wall_clock_seconds'):.3f} s")
        for name in manifest.get("artifacts", []):
            print(f"artifact {name}")
        return EXIT_PASS if manifest.get("passed") else EXIT_FAILURE

    parser.error(f"unknown command {args.command!r}")
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
