#!/usr/bin/env python3
# coding=utf-8

"""
export.py
Purpose: CSV and JSON artifacts. Floats go out with 17 significant digits
so that every file reloads bit for bit, and every write lands atomically.
"""

import os
import json
import hashlib
import logging
import tempfile

import numpy as np

from spikecrown import __version__

log = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def format_float(value):
    return FLOAT_FORMAT % value


def _format_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    return str(value)


def atomic_write(path, text):
    """
    Write text next to its destination first, then rename over it.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise

    log.debug("wrote {}".format(path))
    return path


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(cell) for cell in row))
    return atomic_write(path, "\n".join(lines) + "\n")


def read_csv(path):
    with open(path, "r") as handle:
        header = handle.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError("{} is not JSON serializable".format(type(value).__name__))


def canonical_json(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_json_default)


def payload_hash(payload):
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def json_text(payload):
    return json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n"


def write_json(path, payload, config_hash=None):
    document = dict(payload)
    document["version"] = __version__
    if config_hash is not None:
        document["config_hash"] = config_hash
    return atomic_write(path, json_text(document))


def read_json(path):
    with open(path, "r") as handle:
        return json.load(handle)
