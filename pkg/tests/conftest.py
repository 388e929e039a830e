"""Shared fixtures and the acceptance-criteria terminal summary."""

import json
from pathlib import Path

import pytest

from gumbench import ExperimentConfig

DATA_DIR = Path(__file__).parent / "data"
CONFIG_DIR = DATA_DIR / "configs"
GOLDEN_DIR = DATA_DIR / "golden"

_criterion_lines = []


def load_config(name: str) -> ExperimentConfig:
    return ExperimentConfig.from_json_file(CONFIG_DIR / f"{name}.json")


def load_config_dict(name: str) -> dict:
    with open(CONFIG_DIR / f"{name}.json") as fh:
        return json.load(fh)


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    """Queue one pass/fail line; printed in the terminal summary."""
    mark = "PASS" if passed else "FAIL"
    _criterion_lines.append((number, f"[{mark}] criterion {number} ({title}): {detail}"))


@pytest.hookimpl
def pytest_terminal_summary(terminalreporter):
    if not _criterion_lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(_criterion_lines):
        terminalreporter.write_line(line)
