#!/usr/bin/env python3
# coding=utf-8

import json
import os

import numpy as np
import pytest

from spikecrown import __version__
from spikecrown.cli import build_parser, load_config, main
from spikecrown.export import read_json

DISK = """\
domain:
  kind: circle
  R: 1.0
k: 4
epsilon_divisors: [5, 6]
samples: 500
seed: 2
"""


@pytest.fixture
def disk_yaml(tmp_path):
    path = tmp_path / "disk.yaml"
    path.write_text(DISK)
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    return code, json.loads(capsys.readouterr().out)


def test_pack(capsys, tmp_path, disk_yaml):
    out = str(tmp_path / "out")
    code, payload = run(capsys, "pack", "--config", disk_yaml, "--out", out)
    assert code == 0
    assert payload["k"] == 4
    s = np.sin(np.pi / 4)
    assert payload["delta_star"] == pytest.approx(s / (1 + s), abs=1e-8)
    assert payload["boundary_gap"]["gap"] > 0
    assert os.path.exists(os.path.join(out, "crown.csv"))


def test_ground_state(capsys, tmp_path):
    path = tmp_path / "line.yaml"
    path.write_text("p: 3\ndimension: 1\n")
    code, payload = run(capsys, "ground-state", "--config", str(path), "--out", str(tmp_path / "gs"))
    assert code == 0
    assert payload["w0"] == pytest.approx(1.5, abs=1e-9)
    assert payload["A"] == pytest.approx(6.0, rel=1e-5)


def test_missing_config(capsys, tmp_path):
    code, payload = run(capsys, "pack", "--config", str(tmp_path / "nowhere.yaml"))
    assert code == 2
    assert payload["error"] == "ConfigError"
    assert payload["exit_code"] == 2


def test_invalid_config(capsys, tmp_path):
    path = tmp_path / "odd.yaml"
    path.write_text(DISK.replace("k: 4", "k: 5"))
    code, payload = run(capsys, "pack", "--config", str(path))
    assert code == 2
    assert "k must be an even integer" in payload["message"]


def test_stage_failure_writes_error_file(capsys, tmp_path):
    path = tmp_path / "line.yaml"
    path.write_text(DISK + "dimension: 1\n")
    out = tmp_path / "out"
    code, payload = run(capsys, "reduce", "--config", str(path), "--out", str(out))
    assert code == 2
    assert payload["error"] == "ConfigError"
    written = read_json(str(out / "error.json"))
    assert written["message"] == payload["message"]
    assert "stage" in written


def test_verify_exit_code_follows_the_error(capsys, tmp_path):
    path = tmp_path / "bare.yaml"
    path.write_text("p: 3\n")
    out = tmp_path / "out"
    code, payload = run(capsys, "verify", "--config", str(path), "--out", str(out))
    assert code == 2
    assert payload["failed_stage"] == "pack"
    assert not payload["passed"]
    assert os.path.exists(str(out / "verdict.json"))


def test_overrides(tmp_path, disk_yaml):
    args = build_parser().parse_args(["solve", "--config", disk_yaml, "--out", "elsewhere", "--seed", "9",
                                      "--continuation"])
    config = load_config(args)
    assert config.output_dir == "elsewhere"
    assert config.seed == 9
    assert config.continuation is True
    assert config.base_dir == str(tmp_path)

    plain = load_config(build_parser().parse_args(["solve", "--config", disk_yaml]))
    assert plain.seed == 2
    assert plain.continuation is False


def test_parser_rejects(capsys):
    with pytest.raises(SystemExit) as exit_info:
        build_parser().parse_args(["sweep", "--config", "x.yaml"])
    assert exit_info.value.code == 2
    with pytest.raises(SystemExit):
        build_parser().parse_args(["pack"])


def test_version(capsys):
    with pytest.raises(SystemExit) as exit_info:
        main(["--version"])
    assert exit_info.value.code == 0
    assert __version__ in capsys.readouterr().out
