"""
Unit tests for harness.py - RunRecord lifecycle and overrides
"""
import json

import pytest

from kgchain.config import ConfigManager
from kgchain.errors import BudgetExceededError, ConfigValidationError
from kgchain.harness import RunRecord, apply_overrides, run


@pytest.fixture
def spectrum_config():
    return ConfigManager.validate({
        "experiment": "spectrum",
        "model": {"L": 1, "disorder": {"law": "fixed", "values": [1.0, 1.0, 1.0]}, "seed": 4},
    })


@pytest.mark.unit
class TestApplyOverrides:
    """Test apply_overrides()"""

    def test_seed_and_workers(self, spectrum_config):
        config = apply_overrides(spectrum_config, seed=10, workers=3)
        assert (config.model.seed, config.workers) == (10, 3)
        assert spectrum_config.model.seed == 4

    def test_none_keeps_values(self, spectrum_config):
        config = apply_overrides(spectrum_config)
        assert (config.model.seed, config.workers) == (4, 1)

    @pytest.mark.parametrize("kwargs, fragment", [
        ({"seed": -1}, "--seed"),
        ({"seed": 2 ** 64}, "--seed"),
        ({"workers": 0}, "--workers"),
    ])
    def test_invalid(self, spectrum_config, kwargs, fragment):
        with pytest.raises(ConfigValidationError) as exc_info:
            apply_overrides(spectrum_config, **kwargs)
        assert fragment in str(exc_info.value)

    def test_hash_ignores_workers(self, spectrum_config):
        config = apply_overrides(spectrum_config, workers=8)
        assert ConfigManager.config_hash(config) == ConfigManager.config_hash(spectrum_config)


@pytest.mark.unit
class TestRun:
    """Test run() and the RunRecord it leaves behind"""

    def test_finalized_record(self, spectrum_config, tmp_path):
        record = run(spectrum_config, tmp_path)
        loaded = RunRecord.load(tmp_path)
        assert loaded.finalized is True
        assert loaded.status == "ok"
        assert loaded.abort is None
        assert loaded.config_hash == record.config_hash
        assert loaded.seed == 4
        assert loaded.wall_time >= 0
        assert {"config.json", "spectrum.csv", "spectrum.manifest.json", "summary.json"} <= set(loaded.files)

    def test_lineage_recorded(self, spectrum_config, tmp_path):
        record = run(spectrum_config, tmp_path)
        assert record.lineage["paths"] == ["spectrum/realization/0..0"]
        assert record.lineage["master_seed"] == 4

    def test_summary_written(self, spectrum_config, tmp_path):
        record = run(spectrum_config, tmp_path)
        summary = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
        assert summary == record.summary
        assert summary["max_residual"] < 1e-12

    def test_config_json_matches(self, spectrum_config, tmp_path):
        run(spectrum_config, tmp_path)
        data = json.loads((tmp_path / "config.json").read_text(encoding="utf-8"))
        assert ConfigManager.validate(data).model == spectrum_config.model

    def test_aborted_record(self, spectrum_config, tmp_path, mocker):
        mocker.patch.dict(
            "kgchain.harness.EXPERIMENT_RUNNERS",
            {"spectrum": mocker.Mock(side_effect=BudgetExceededError("항", 20, 10))},
        )
        with pytest.raises(BudgetExceededError):
            run(spectrum_config, tmp_path)
        record = RunRecord.load(tmp_path)
        assert record.finalized is False
        assert record.status == "aborted"
        assert record.abort["reason"] == "budget_exceeded"
        assert "상한" in record.abort["message"]

    def test_failed_record(self, spectrum_config, tmp_path, mocker):
        mocker.patch.dict(
            "kgchain.harness.EXPERIMENT_RUNNERS",
            {"spectrum": mocker.Mock(side_effect=KeyError("x"))},
        )
        with pytest.raises(KeyError):
            run(spectrum_config, tmp_path)
        record = RunRecord.load(tmp_path)
        assert (record.status, record.finalized) == ("failed", False)
        assert record.abort["reason"] == "error"

    def test_record_written_before_compute(self, spectrum_config, tmp_path, mocker):
        """run.json already exists, unfinalized, when the experiment starts"""
        seen = {}

        def runner(ctx):
            seen["record"] = RunRecord.load(tmp_path)
            return {}

        mocker.patch.dict("kgchain.harness.EXPERIMENT_RUNNERS", {"spectrum": runner})
        run(spectrum_config, tmp_path)
        assert seen["record"].finalized is False
        assert seen["record"].status == "running"

    def test_rerun_is_byte_identical(self, tmp_path):
        config = ConfigManager.validate({"experiment": "spectrum", "model": {"L": 6, "seed": 21},
                                         "params": {"n_realizations": 3}})
        run(config, tmp_path / "a")
        run(apply_overrides(config, workers=2), tmp_path / "b")
        for name in ("spectrum.csv", "spectrum_oracle.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
