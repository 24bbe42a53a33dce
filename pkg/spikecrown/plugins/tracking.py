#!/usr/bin/env python3
# coding=utf-8

"""
tracking.py
Purpose: Per-job record of stage states, so a verdict can name the stage
that failed.
"""

import threading

from asyncblink import signal

RUNNING, COMPLETE, FAILED = "running", "complete", "failed"


class Registry:
    def __init__(self, job):
        self.job = job
        self.stages = {}
        # stage -> error data of the failure
        self.errors = {}
        self.failures = []
        self._lock = threading.Lock()

    def mark(self, stage, state, error=None):
        with self._lock:
            self.stages[stage] = state
            if state == FAILED:
                self.failures.append(stage)
            if error is not None:
                self.errors[stage] = error

    @property
    def failed_stage(self):
        """
        The stage that failed first; enclosing stages fail after it.
        """
        return self.failures[0] if self.failures else None

    def to_data(self):
        return {"job": self.job, "stages": dict(self.stages), "errors": dict(self.errors)}

    def __repr__(self):
        return "Registry {} {}".format(self.job, self.stages)


registries = {}


def create_registry(pipeline, job=None, **kw):
    registries[job] = Registry(job)
    pipeline.tracking_registry = registries[job]


def get_registry(job):
    if job not in registries:
        registries[job] = Registry(job)
    return registries[job]


def _stage_started(pipeline, stage=None, job=None, **kw):
    get_registry(job).mark(stage, RUNNING)


def _stage_complete(pipeline, stage=None, job=None, **kw):
    get_registry(job).mark(stage, COMPLETE)


def _stage_failed(pipeline, stage=None, job=None, error=None, **kw):
    data = error.to_data() if hasattr(error, "to_data") else {"error": type(error).__name__, "message": str(error)}
    get_registry(job).mark(stage, FAILED, data)


signal("job-created").connect(create_registry)
signal("stage-started").connect(_stage_started)
signal("stage-complete").connect(_stage_complete)
signal("stage-failed").connect(_stage_failed)

signal("plugin-registered").send("spikecrown.plugins.tracking")
