#!/usr/bin/env python3
# coding=utf-8

"""
core.py
Purpose: Route pipeline and solver signals to logging.
"""

import logging

from asyncblink import signal

log = logging.getLogger(__name__)


def _log_shot(sender, w0=None, kind=None, iteration=None, **kw):
    log.debug("shot {}: w0={:.15g} {}".format(iteration, w0, kind))


def _log_descent(sender, iteration=None, log_M=None, grad_norm=None, **kw):
    log.debug("descent {:4d}: log M = {:.15g}, |grad| = {:.3e}".format(iteration, log_M, grad_norm))


def _log_newton(sender, iteration=None, residual=None, damping=None, **kw):
    log.debug("newton {:3d}: residual {:.3e} (damping {:g})".format(iteration, residual, damping))


def _log_stage_started(sender, stage=None, job=None, **kw):
    log.info("[{}] {} started".format(job, stage))


def _log_stage_complete(sender, stage=None, job=None, **kw):
    log.info("[{}] {} complete".format(job, stage))


def _log_stage_failed(sender, stage=None, job=None, error=None, **kw):
    log.error("[{}] {} failed: {}".format(job, stage, error))


def _log_job_complete(sender, job=None, passed=None, **kw):
    log.info("[{}] job finished, {}".format(job, "all criteria pass" if passed else "criteria failing"))


signal("shot").connect(_log_shot)
signal("descent-iteration").connect(_log_descent)
signal("newton-iteration").connect(_log_newton)
signal("stage-started").connect(_log_stage_started)
signal("stage-complete").connect(_log_stage_complete)
signal("stage-failed").connect(_log_stage_failed)
signal("job-complete").connect(_log_job_complete)

signal("plugin-registered").send("spikecrown.plugins.core")
