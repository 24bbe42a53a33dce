#!/usr/bin/env python3
# coding=utf-8

"""
runner.py
Purpose: Run independent per-eps jobs concurrently on a thread pool driven
by an asyncio loop. The numerics release the GIL in the sparse solvers.
"""

import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor

from spikecrown.config import worker_count

log = logging.getLogger(__name__)


async def gather_jobs(fn, items, workers):
    loop = asyncio.get_event_loop()
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="spike-crown") as pool:
        futures = [loop.run_in_executor(pool, fn, item) for item in items]
        return await asyncio.gather(*futures)


def run_jobs(fn, items, workers=None):
    """
    fn(item) for every item, results in input order. The first exception
    raised by any job propagates once all jobs have finished.
    """
    items = list(items)
    if not items:
        return []
    workers = min(worker_count(workers), len(items))
    if workers == 1:
        return [fn(item) for item in items]

    log.debug("running {} jobs on {} threads".format(len(items), workers))
    loop = asyncio.new_event_loop()
    try:
        results = loop.run_until_complete(gather_jobs(fn, items, workers))
    finally:
        loop.close()
    return list(results)


def run_sequential(fn, items, carry=None):
    """
    fn(item, carry) in order, each call receiving the previous result.
    """
    results = []
    for item in items:
        carry = fn(item, carry)
        results.append(carry)
    return results
