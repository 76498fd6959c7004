import argparse
import json
import logging
import os
import platform
import sys
import time
from datetime import datetime
from datetime import timezone
from pathlib import Path
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Union

import joblib
import numpy as np
import pydantic
import scipy
from nanomotion_g2 import __version__
from nanomotion_g2 import commands  # noqa: F401
from nanomotion_g2 import status
from nanomotion_g2.autowired import autowired
from nanomotion_g2.logger import logger
from nanomotion_g2.middleware import ExitCodeMiddleware
from nanomotion_g2.route import CommandContext
from nanomotion_g2.route import CommandResult
from nanomotion_g2.scenario.constants import DEFAULT_OUTPUT_DIR
from nanomotion_g2.scenario.constants import ENV_OUTPUT_DIR
from nanomotion_g2.scenario.constants import MANIFEST_NAME
from nanomotion_g2.scenario.models import RunManifest
from nanomotion_g2.scenario.models import Scenario
from nanomotion_g2.scenario.utils import load_scenario
from nanomotion_g2.scenario.utils import parse_scenario

PathLike = Union[str, Path]

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def versions() -> Dict[str, str]:
    return {
        "nanomotion_g2": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": str(pydantic.VERSION),
        "joblib": joblib.__version__,
    }


def default_output_dir() -> Path:
    return Path(os.environ.get(ENV_OUTPUT_DIR, DEFAULT_OUTPUT_DIR))


def run(
    subcommand: str,
    scenario: Scenario,
    output_dir: PathLike,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    input_path: Optional[PathLike] = None,
    config_path: Optional[PathLike] = None,
) -> int:
    """
    Run one subcommand and write its outputs plus the run manifest into
    ``output_dir``. Returns the process exit code.
    """
    output_dir = Path(output_dir)
    seed = scenario.run.seed if seed is None else seed
    threads = scenario.run.threads if threads is None else threads
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    clock = time.perf_counter()
    logger.info("%s: start (seed=%d, threads=%d)", subcommand, seed, threads)

    result = CommandResult()
    message = None
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        context = CommandContext(
            scenario=scenario,
            out_dir=output_dir,
            seed=seed,
            threads=threads,
            input_path=input_path,
            config_path=config_path,
        )
        result = autowired.dispatch(subcommand, context)
        exit_code = status.EXIT_0_OK
    except Exception as exc:
        exit_code = ExitCodeMiddleware().process_exception(exc)
        message = str(exc)

    wall_time = time.perf_counter() - clock
    manifest = RunManifest(
        command=subcommand,
        config_path=str(config_path) if config_path is not None else None,
        input_path=str(input_path) if input_path is not None else None,
        scenario=json.loads(scenario.json()),
        seed=seed,
        threads=threads,
        versions=versions(),
        started=started,
        wall_time_s=wall_time,
        outputs=[path.name for path in result.outputs],
        results=result.results,
        exit_code=exit_code,
        message=message,
    )
    if output_dir.is_dir():
        (output_dir / MANIFEST_NAME).write_text(manifest.json(indent=2))
    logger.info(
        "%s: finished with exit %d (%s) in %.3f s",
        subcommand,
        exit_code,
        status.EXIT_PHRASES[exit_code],
        wall_time,
    )
    return exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nanomotion-g2",
        description="Photon correlations of an emitter on a nanomechanical oscillator.",
    )
    parser.add_argument("--config", type=Path, help="scenario file (INI sections)")
    parser.add_argument("--seed", type=int, help="master seed, overrides [run] seed")
    parser.add_argument(
        "--threads", type=int, help="worker processes, overrides [run] threads"
    )
    parser.add_argument(
        "--out",
        type=Path,
        default=None,
        help=f"output directory (default ${ENV_OUTPUT_DIR} or '{DEFAULT_OUTPUT_DIR}')",
    )
    parser.add_argument(
        "--input", type=Path, help="input CSV for correlate, spectrum and fit"
    )
    parser.add_argument("--log-level", default="INFO", choices=LOG_LEVELS)

    subparsers = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    subparsers.required = True
    for name in autowired.names:
        route = autowired.command_route[name]
        subparsers.add_parser(name, help=route.description)
    return parser


def execute_from_command_line(argv: Optional[Sequence[str]] = None) -> int:
    words: List[str] = list(sys.argv if argv is None else argv)
    args = build_parser().parse_args(words[1:])
    logging.basicConfig(
        level=args.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    route = autowired.get_route(args.subcommand)
    if route.needs_input and args.input is None:
        logger.error("%s needs --input", args.subcommand)
        return status.EXIT_2_VALIDATION_FAILURE
    try:
        if args.config is None:
            scenario = parse_scenario("")
        else:
            scenario = load_scenario(args.config)
    except Exception as exc:
        return ExitCodeMiddleware().process_exception(exc)

    return run(
        args.subcommand,
        scenario,
        args.out if args.out is not None else default_output_dir(),
        seed=args.seed,
        threads=args.threads,
        input_path=args.input,
        config_path=args.config,
    )


def main() -> None:
    sys.exit(execute_from_command_line(sys.argv))
