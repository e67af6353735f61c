"""
Command-line entry point.

    python cli.py synth --seed 7 --trials 3 --output ./out
    python cli.py fit-mmc --output ./out --cameras cam0,cam2,cam4
    python cli.py pipeline --synth --output ./out --jobs 4

Exit codes: 0 success, 1 processing failure, 2 missing or invalid input.
"""

import argparse
import json
import logging
import sys
from typing import Dict, List, Optional, Sequence

from errors import INPUT_ERRORS, MocapError
from settings import configure_logging
from tools.pipeline_tool import PipelineTool, load_pipeline_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2


def _id_list(value: str) -> List[str]:
    ids = [v.strip() for v in value.split(",") if v.strip()]
    if not ids:
        raise argparse.ArgumentTypeError("expected a comma-separated list of ids")
    return ids


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--output", help="output directory")
    common.add_argument("--jobs", type=int, help="parallel trials")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--max-lag", type=float, dest="max_lag", help="lag search bound in seconds")
    common.add_argument("--batches", type=int, help="time batches per end-to-end step")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")

    parser = argparse.ArgumentParser(prog="mocap", description="Markerless motion-capture fitting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    synth.add_argument("--participants", type=int)
    synth.add_argument("--trials", type=int, help="trials per participant (arms alternate)")

    fit_mmc = sub.add_parser("fit-mmc", parents=[common], help="end-to-end fit of 2D keypoints")
    fit_mmc.add_argument("--cameras", type=_id_list, help="camera subset, comma separated")
    fit_mmc.add_argument("--trial-ids", type=_id_list, dest="trial_ids")

    fit_omc = sub.add_parser("fit-omc", parents=[common], help="two-stage fit of 3D markers")
    fit_omc.add_argument("--trial-ids", type=_id_list, dest="trial_ids")

    for name, text in (("derive", "joint trajectories and velocities"),
                       ("measures", "drinking-task phases and measures"),
                       ("compare", "per-trial agreement between systems"),
                       ("report", "aggregate tables and summary")):
        sub.add_parser(name, parents=[common], help=text)

    pipeline = sub.add_parser("pipeline", parents=[common], help="run every stage in order")
    pipeline.add_argument("--synth", action="store_true", help="generate the synthetic dataset first")
    pipeline.add_argument("--cameras", type=_id_list)
    return parser


def dispatch(tool: PipelineTool, args: argparse.Namespace) -> Dict:
    command = args.command
    if command == "synth":
        return tool.synth(args.participants, args.trials)
    if command == "fit-mmc":
        return tool.fit_mmc(args.cameras, args.trial_ids)
    if command == "fit-omc":
        return tool.fit_omc(args.trial_ids)
    if command == "pipeline":
        return tool.pipeline(synth=args.synth, camera_ids=args.cameras)
    return getattr(tool, command)()


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_pipeline_config(args.config, jobs=args.jobs, seed=args.seed, output_dir=args.output,
                                      max_lag_s=args.max_lag, batches=args.batches)
    except MocapError as e:
        print(json.dumps(e.to_record(), sort_keys=True), file=sys.stderr)
        return EXIT_INPUT if isinstance(e, INPUT_ERRORS) else EXIT_FAILURE

    result = dispatch(PipelineTool(config), args)
    if not result["success"]:
        print(json.dumps({"stage": result["stage"], **result["error"]}, sort_keys=True, default=str),
              file=sys.stderr)
        return EXIT_INPUT if result.get("input_error") else EXIT_FAILURE
    for path in result.get("outputs", []):
        print(path)
    for stage in result.get("stages", {}).values():
        for path in stage.get("outputs", []):
            print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
