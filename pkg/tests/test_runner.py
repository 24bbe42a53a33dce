#!/usr/bin/env python3
# coding=utf-8

import threading

import pytest

from spikecrown.runner import run_jobs, run_sequential


def test_results_in_input_order(monkeypatch):
    monkeypatch.delenv("SPIKE_CROWN_THREADS", raising=False)
    assert run_jobs(lambda x: x * x, range(8), workers=4) == [x * x for x in range(8)]
    assert run_jobs(lambda x: x, [], workers=4) == []


def test_jobs_use_worker_threads(monkeypatch):
    monkeypatch.delenv("SPIKE_CROWN_THREADS", raising=False)
    names = run_jobs(lambda _: threading.current_thread().name, range(4), workers=2)
    assert all(name.startswith("spike-crown") for name in names)


def test_thread_cap_runs_inline(monkeypatch):
    monkeypatch.setenv("SPIKE_CROWN_THREADS", "1")
    main = threading.current_thread().name
    assert run_jobs(lambda _: threading.current_thread().name, range(3), workers=4) == [main] * 3


def test_job_failure_propagates(monkeypatch):
    monkeypatch.delenv("SPIKE_CROWN_THREADS", raising=False)

    def job(x):
        if x == 2:
            raise ValueError("bad item")
        return x

    with pytest.raises(ValueError):
        run_jobs(job, range(4), workers=2)


def test_sequential_carries_results():
    seen = []

    def step(item, previous):
        seen.append(previous)
        return item + (previous or 0)

    assert run_sequential(step, [1, 2, 3]) == [1, 3, 6]
    assert seen == [None, 1, 3]
    assert run_sequential(step, [1], carry=10) == [11]
