#!/usr/bin/env python3
# coding=utf-8

import logging

from spikecrown.config import JobConfig
from spikecrown.pipeline import CrownPipeline

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)
logger.setLevel(logging.DEBUG)


def run_job(path="config_sample.yaml"):
    config = JobConfig.from_file(path)
    pipeline = CrownPipeline(config)

    @pipeline.on("stage-complete")
    def stage_done(sender, stage=None, job=None, **kw):
        logger.info("{} finished for job {}".format(stage, job))

    @pipeline.on("newton-iteration")
    def newton_progress(sender, iteration=None, residual=None, **kw):
        logger.debug("newton {} residual {:.3e}".format(iteration, residual))

    logger.debug("signals registered")

    verdict = pipeline.verify()
    for item in verdict["criteria"]:
        logger.info("{:<24} {}".format(item["name"], "pass" if item["passed"] else "FAIL"))
    if verdict["error"] is not None:
        logger.error("stage {} failed: {}".format(verdict["failed_stage"], verdict["error"]["message"]))
    return verdict


def main():
    run_job()


if __name__ == "__main__":
    main()
