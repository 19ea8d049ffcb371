"""
Integration test fixtures.

Each test runs one whole experiment through harness.run() on scaled-down
parameters and inspects the files left in a temporary output directory.
"""

import json
from pathlib import Path

import pytest

from kgchain.config import ConfigManager
from kgchain.harness import run
from kgchain.writer import read_csv


class RunResult:
    """Output directory of one finished run"""

    def __init__(self, out_dir: Path, record):
        self.out_dir = out_dir
        self.record = record

    @property
    def summary(self) -> dict:
        return json.loads((self.out_dir / "summary.json").read_text(encoding="utf-8"))

    def csv(self, name: str) -> list[dict]:
        return read_csv(self.out_dir / name)

    def column(self, name: str, key: str, cast=float) -> list:
        return [cast(row[key]) for row in self.csv(name)]


@pytest.fixture
def run_experiment(tmp_path):
    """
    Validate a raw config and run it into tmp_path/<label>.

    Returns:
        callable(experiment, model=None, params=None, workers=1, label=None) -> RunResult
    """
    def _run(experiment: str, model: dict = None, params: dict = None, workers: int = 1, label: str = None):
        raw = {"experiment": experiment, "model": model or {}, "params": params or {}, "workers": workers}
        config = ConfigManager.validate(raw)
        out_dir = tmp_path / (label or experiment)
        record = run(config, out_dir)
        return RunResult(out_dir, record)
    return _run
