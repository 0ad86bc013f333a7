# app/cli/benchmark.py

import argparse
from pathlib import Path

from pydantic import ValidationError

from app.cli.common import config_error, finish_manifest, new_run_id, prepare_output, utc_now
from app.core.errors import ExitCode
from app.schemas.experiment import EndmemberKind, ExperimentSpec
from app.services.experiments import run_monte_carlo
from app.services.file_io import load_experiment_spec, write_report_csv, write_report_json
from app.services.logging import run_logger

REPORT_CSV = "report.csv"
REPORT_JSON = "report.json"


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser(
        "benchmark",
        help="run a Monte Carlo experiment",
        description="Run the experiment described by a JSON or TOML spec and write its report."
    )
    parser.add_argument("--spec", type=Path, required=True, help="experiment spec (.json or .toml)")
    parser.add_argument("--output", type=Path, required=True, help="output directory")
    parser.add_argument("--runs", type=int, default=None, help="override the number of runs")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.set_defaults(handler=run)


def resolve_spec(args: argparse.Namespace) -> ExperimentSpec:
    spec = load_experiment_spec(args.spec)
    updates = {key: value for key, value in (("runs", args.runs), ("seed", args.seed)) if value is not None}

    source = spec.endmembers
    if source.kind == EndmemberKind.CSV and not source.path.is_absolute():
        # relative to the spec file
        updates["endmembers"] = source.model_copy(update={"path": args.spec.parent / source.path})

    if not updates:
        return spec
    try:
        return ExperimentSpec.model_validate({**spec.model_dump(), **updates})
    except ValidationError as e:
        raise config_error(e)


def run(args: argparse.Namespace) -> int:
    run_id = new_run_id()
    logger = run_logger(__name__, run_id)
    started_at = utc_now()

    spec = resolve_spec(args)
    output = prepare_output(args.output)
    logger.info(f"Benchmark {args.spec} -> {output}")

    report = run_monte_carlo(spec)
    write_report_csv(output / REPORT_CSV, report)
    write_report_json(output / REPORT_JSON, report)

    inputs = [args.spec]
    if spec.endmembers.kind == EndmemberKind.CSV:
        inputs.append(spec.endmembers.path)
    finish_manifest(
        output,
        command="benchmark",
        run_id=run_id,
        started_at=started_at,
        config=spec.model_dump(mode="json"),
        inputs=inputs,
        outputs=[REPORT_CSV, REPORT_JSON],
        seed=spec.seed
    )
    logger.info(f"Report written for {len(report.cells)} cell(s)")
    return ExitCode.SUCCESS
