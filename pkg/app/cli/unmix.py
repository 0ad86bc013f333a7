# app/cli/unmix.py

import argparse
import re
from pathlib import Path
from typing import List

import numpy as np
from pydantic import ValidationError

from app.cli.common import config_error, finish_manifest, new_run_id, prepare_output, utc_now
from app.core.errors import ConvergenceError, ExitCode
from app.schemas.solver import Algorithm, ArmijoParams, SolverConfig, SolverStatus
from app.services.experiments import FAILED_PIXEL, unmix_cube
from app.services.file_io import (
    read_cube,
    read_endmember_csv,
    read_pixel_csv,
    write_abundance_csv,
    write_pgm,
    write_trace_csv
)
from app.services.logging import run_logger
from app.services.solvers import solve

CUBE_SUFFIXES = {".json", ".raw"}
ABUNDANCE_CSV = "abundances.csv"
TRACE_CSV = "trace.csv"


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser(
        "unmix",
        help="estimate abundances of pixels or a cube",
        description="Unmix CSV pixels (one per column) or a BSQ cube against an endmember CSV."
    )
    parser.add_argument("--endmembers", type=Path, required=True, help="L x R endmember CSV")
    parser.add_argument("--input", type=Path, required=True,
                        help="pixel CSV (L rows, one pixel per column) or cube (.json sidecar / .raw payload)")
    parser.add_argument("--algorithm", choices=[a.value for a in Algorithm], default=Algorithm.NSGM.value)
    parser.add_argument("--output", type=Path, required=True, help="output directory")
    parser.add_argument("--epsilon", type=float, default=None)
    parser.add_argument("--delta", type=float, default=None, help="FCLS penalty width")
    parser.add_argument("--exponent-n", type=float, default=None)
    parser.add_argument("--tol", type=float, default=None, help="KKT tolerance")
    parser.add_argument("--max-iters", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None, help="random simplex start instead of 1/R")
    parser.add_argument("--lipschitz", type=float, default=None, help="override the estimated Lipschitz constant")
    parser.set_defaults(handler=run)


def build_config(args: argparse.Namespace) -> SolverConfig:
    overrides = {
        "epsilon": args.epsilon,
        "delta": args.delta,
        "exponent_n": args.exponent_n,
        "tol_kkt": args.tol,
        "max_iters": args.max_iters,
        "init_seed": args.seed
    }
    try:
        return SolverConfig(
            algorithm=Algorithm(args.algorithm),
            armijo=ArmijoParams(lipschitz=args.lipschitz),
            **{key: value for key, value in overrides.items() if value is not None}
        )
    except ValidationError as e:
        raise config_error(e)


def _file_stem(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def run(args: argparse.Namespace) -> int:
    run_id = new_run_id()
    logger = run_logger(__name__, run_id)
    started_at = utc_now()

    config = build_config(args)
    M = read_endmember_csv(args.endmembers)
    output = prepare_output(args.output)
    outputs: List[str] = []
    exit_code = ExitCode.SUCCESS

    if args.input.suffix.lower() in CUBE_SUFFIXES:
        header, cube = read_cube(args.input)
        inputs = [args.endmembers, args.input.with_suffix(".json"), args.input.with_suffix(".raw")]
        logger.info(f"Unmixing {header.width} x {header.height} cube with {config.algorithm.value}")
        result = unmix_cube(cube, M, config)

        for r, name in enumerate(M.names):
            filename = f"abundance_{r + 1}_{_file_stem(name)}.pgm"
            write_pgm(output / filename, result.maps[r])
            outputs.append(filename)
        # pixels in row-major order
        rows = result.maps.reshape(M.endmembers, -1).T
        write_abundance_csv(output / ABUNDANCE_CSV, M.names, rows)
        outputs.append(ABUNDANCE_CSV)
        logger.info(f"Cube done: {result.failures} failed pixel(s), mean iterations {result.iterations.mean():.1f}")
        if result.unconverged_count:
            logger.error(
                f"{result.unconverged_count} of {header.width * header.height} pixel(s) hit "
                f"max_iters={config.max_iters} before reaching the KKT tolerance"
            )
            exit_code = ExitCode.NUMERICAL_FAILURE
    else:
        pixels = read_pixel_csv(args.input, bands=M.bands)
        inputs = [args.endmembers, args.input]
        single = pixels.shape[1] == 1
        estimates = []
        unconverged = stopped = 0
        for p in range(pixels.shape[1]):
            try:
                estimate, trace = solve(pixels[:, p], M, config)
            except ConvergenceError as e:
                logger.error(f"Pixel {p + 1}: {e.detail}")
                stopped += 1
                estimates.append(np.full(M.endmembers, FAILED_PIXEL))
                if single and e.trace is not None:
                    write_trace_csv(output / TRACE_CSV, e.trace, M.names)
                    outputs.append(TRACE_CSV)
                continue
            estimates.append(np.asarray(estimate))
            if trace.status == SolverStatus.MAX_ITERS:
                unconverged += 1
            if single:
                write_trace_csv(output / TRACE_CSV, trace, M.names)
                outputs.append(TRACE_CSV)
        write_abundance_csv(output / ABUNDANCE_CSV, M.names, np.array(estimates))
        outputs.append(ABUNDANCE_CSV)

        if unconverged or stopped:
            logger.error(
                f"{unconverged} of {pixels.shape[1]} pixel(s) hit max_iters={config.max_iters} "
                f"before reaching the KKT tolerance, {stopped} stopped on a failed line search"
            )
            exit_code = ExitCode.NUMERICAL_FAILURE
        else:
            logger.info(f"Unmixed {pixels.shape[1]} pixel(s) with {config.algorithm.value}")

    finish_manifest(
        output,
        command="unmix",
        run_id=run_id,
        started_at=started_at,
        config=config.model_dump(mode="json"),
        inputs=inputs,
        outputs=outputs,
        seed=config.init_seed
    )
    return exit_code
