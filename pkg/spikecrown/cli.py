#!/usr/bin/env python3
# coding=utf-8

"""
cli.py
Purpose: The spike-crown command line. Each command runs the pipeline up
to its stage and prints a JSON summary; failures print the error as JSON
and exit 2 (configuration), 3 (numerics) or 1 (a criterion measured false).
"""

import sys
import logging
import argparse

from spikecrown import __version__
from spikecrown.config import JobConfig
from spikecrown.errors import CriterionFailure, CrownError
from spikecrown.export import json_text, write_json
from spikecrown.pipeline import CrownPipeline

log = logging.getLogger(__name__)


def cmd_ground_state(pipeline):
    pipeline.ground_state()
    return dict(pipeline.ground_state_summary), 0


def cmd_pack(pipeline):
    packing = pipeline.pack()
    return {"k": packing.k, "delta_star": packing.delta_star, "eta": packing.eta, "epsilons": packing.epsilons,
            "crown": packing.crown.to_data(), "boundary_gap": packing.gap.to_data(),
            "two_point": packing.two_point.to_data()}, 0


def cmd_reduce(pipeline):
    return {"results": [reduction.summary for reduction in pipeline.reduce()]}, 0


def cmd_solve(pipeline):
    return {"results": [solution.summary for solution in pipeline.solve()]}, 0


def cmd_verify(pipeline):
    verdict = pipeline.verify()
    if verdict["error"] is not None:
        return verdict, verdict["error"]["exit_code"]
    return verdict, 0 if verdict["passed"] else CriterionFailure.exit_code


COMMANDS = {"ground-state": cmd_ground_state,
            "pack": cmd_pack,
            "reduce": cmd_reduce,
            "solve": cmd_solve,
            "verify": cmd_verify}


def build_parser():
    parser = argparse.ArgumentParser(prog="spike-crown",
                                     description="Multi-spike crown solutions of eps^2 Lap v - v + f(v) = 0 "
                                                 "on convex planar domains.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, metavar="PATH", help="job config (YAML or JSON)")
    parser.add_argument("--out", metavar="DIR", help="output directory, overrides output_dir")
    parser.add_argument("--seed", type=int, metavar="U64", help="seed for the sampled checks")
    parser.add_argument("--continuation", action="store_true", default=None,
                        help="solve the eps list in order, each from the previous result")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--version", action="version", version="%(prog)s {}".format(__version__))
    return parser


def load_config(args):
    config = JobConfig.from_file(args.config)
    overrides = {"output_dir": args.out, "seed": args.seed, "continuation": args.continuation}
    overrides = {key: value for key, value in overrides.items() if value is not None}
    if not overrides:
        return config
    data = config.to_data()
    data.update(overrides)
    return JobConfig.from_data(data, config.base_dir)


def _failure(error, pipeline):
    data = error.to_data() if isinstance(error, CrownError) else {"error": type(error).__name__,
                                                                  "message": str(error), "exit_code": 3}
    registry = getattr(pipeline, "tracking_registry", None)
    if registry is not None:
        data["stage"] = registry.failed_stage
    if pipeline is not None:
        write_json(pipeline.path("error.json"), data, pipeline.config_hash)
    return data


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    pipeline = None
    try:
        config = load_config(args)
        pipeline = CrownPipeline(config)
        payload, code = COMMANDS[args.command](pipeline)
    except Exception as error:
        if not isinstance(error, CrownError):
            log.exception("unexpected failure")
        data = _failure(error, pipeline)
        sys.stdout.write(json_text(data))
        return data["exit_code"]

    sys.stdout.write(json_text(payload))
    return code


if __name__ == "__main__":
    sys.exit(main())
