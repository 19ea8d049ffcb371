"""
Unit tests for cli.py - CLI commands
"""
import json
import logging
from unittest.mock import MagicMock

import pytest

from kgchain import __version__, cli
from kgchain.errors import SpectralError

SPECTRUM = {
    "experiment": "spectrum",
    "model": {"L": 1, "disorder": {"law": "fixed", "values": [1.0, 1.0, 1.0]}, "seed": 3},
}


def run_args(command, config=None, out=None, seed=None, workers=None):
    args = MagicMock()
    args.command = command
    args.config = config
    args.out = out
    args.seed = seed
    args.workers = workers
    return args


@pytest.fixture(autouse=True)
def restore_logging():
    """cmd_run reconfigures the root logger; put the test handlers back"""
    root = logging.getLogger()
    handlers = list(root.handlers)
    yield
    for h in root.handlers:
        if h not in handlers:
            h.close()
    root.handlers[:] = handlers


@pytest.mark.unit
class TestRunCommand:
    """Test experiment commands"""

    def test_run_spectrum(self, write_config, tmp_path, capsys):
        out = tmp_path / "out"
        cli.cmd_run(run_args("spectrum", str(write_config(SPECTRUM)), str(out)))
        assert "spectrum 완료" in capsys.readouterr().out
        record = json.loads((out / "run.json").read_text(encoding="utf-8"))
        assert record["finalized"] is True
        assert (out / "spectrum.csv").exists()

    def test_seed_override(self, write_config, tmp_path):
        out = tmp_path / "out"
        cli.cmd_run(run_args("spectrum", str(write_config(SPECTRUM)), str(out), seed=99))
        record = json.loads((out / "run.json").read_text(encoding="utf-8"))
        assert record["seed"] == 99

    def test_missing_config_file(self, tmp_path, caplog):
        with pytest.raises(SystemExit) as exc_info:
            cli.cmd_run(run_args("spectrum", str(tmp_path / "none.json"), str(tmp_path / "out")))
        assert exc_info.value.code == 2
        assert "설정 검증 실패" in caplog.text

    def test_invalid_config(self, write_config, tmp_path):
        path = write_config({"experiment": "spectrum", "params": {"n_realizations": 0}})
        with pytest.raises(SystemExit) as exc_info:
            cli.cmd_run(run_args("spectrum", str(path), str(tmp_path / "out")))
        assert exc_info.value.code == 2
        assert not (tmp_path / "out").exists()

    def test_negative_seed_override(self, write_config, tmp_path):
        with pytest.raises(SystemExit) as exc_info:
            cli.cmd_run(run_args("spectrum", str(write_config(SPECTRUM)), str(tmp_path / "out"), seed=-1))
        assert exc_info.value.code == 2

    def test_numerical_abort_exit_code(self, write_config, tmp_path):
        """Tuple budget exceeded before sampling gives exit code 3"""
        path = write_config({
            "experiment": "denominator",
            "model": {"L": 2},
            "params": {"interval_size": 5, "trials": 2, "tuple_cap": 1},
        })
        out = tmp_path / "out"
        with pytest.raises(SystemExit) as exc_info:
            cli.cmd_run(run_args("denominator", str(path), str(out)))
        assert exc_info.value.code == 3
        assert "실험이 중단되었습니다 [budget_exceeded]" in (out / "kgchain.log").read_text(encoding="utf-8")
        record = json.loads((out / "run.json").read_text(encoding="utf-8"))
        assert record["status"] == "aborted"
        assert record["abort"]["reason"] == "budget_exceeded"
        assert record["finalized"] is False

    def test_abort_from_mocked_run(self, mocker, write_config, tmp_path):
        mocker.patch("kgchain.cli.run", side_effect=SpectralError("고유값 분해 실패"))
        with pytest.raises(SystemExit) as exc_info:
            cli.cmd_run(run_args("spectrum", str(write_config(SPECTRUM)), str(tmp_path / "out")))
        assert exc_info.value.code == 3

    def test_unexpected_error_exit_code(self, mocker, write_config, tmp_path):
        mocker.patch("kgchain.cli.run", side_effect=RuntimeError("boom"))
        out = tmp_path / "out"
        with pytest.raises(SystemExit) as exc_info:
            cli.cmd_run(run_args("spectrum", str(write_config(SPECTRUM)), str(out)))
        assert exc_info.value.code == 1
        assert "실험 실패: boom" in (out / "kgchain.log").read_text(encoding="utf-8")

    def test_default_config_in_cwd(self, write_config, tmp_path, monkeypatch, caplog):
        """Without --config, ./kgchain.json is used when present"""
        write_config(SPECTRUM)
        monkeypatch.chdir(tmp_path)
        out = tmp_path / "out"
        with caplog.at_level("INFO"):
            cli.cmd_run(run_args("spectrum", None, str(out)))
        assert "기본 설정 파일 사용" in caplog.text
        record = json.loads((out / "run.json").read_text(encoding="utf-8"))
        assert record["seed"] == 3


@pytest.mark.unit
class TestValidateCommand:
    """Test 'validate' command"""

    def test_prints_table(self, write_config, capsys):
        args = MagicMock()
        args.config = str(write_config(SPECTRUM))
        cli.cmd_validate(args)
        out = capsys.readouterr().out
        assert "설정 검증 완료" in out
        assert "params.n_realizations" in out
        assert "기본값" in out
        assert "config hash:" in out

    def test_marks_values_from_file(self, write_config, capsys):
        args = MagicMock()
        args.config = str(write_config({**SPECTRUM, "params": {"n_realizations": 4}}))
        cli.cmd_validate(args)
        assert "설정 파일" in capsys.readouterr().out

    def test_invalid(self, write_config, caplog):
        args = MagicMock()
        args.config = str(write_config({"experiment": "nope"}))
        with pytest.raises(SystemExit) as exc_info:
            cli.cmd_validate(args)
        assert exc_info.value.code == 2
        assert "알 수 없는 실험입니다" in caplog.text


@pytest.mark.unit
class TestMain:
    """Test argument parsing and dispatch"""

    def test_version(self, capsys):
        cli.main(["version"])
        assert capsys.readouterr().out.strip() == f"kgchain {__version__}"

    def test_no_command(self):
        with pytest.raises(SystemExit) as exc_info:
            cli.main([])
        assert exc_info.value.code == 1

    def test_every_experiment_is_a_command(self):
        parser = cli._build_parser()
        args = parser.parse_args(["z_stats", "--workers", "2", "--seed", "5"])
        assert (args.command, args.workers, args.seed) == ("z_stats", 2, 5)

    def test_dispatch_to_run(self, mocker):
        cmd_run = mocker.patch("kgchain.cli.cmd_run")
        cli.main(["spectrum", "--config", "x.json"])
        assert cmd_run.call_args.args[0].config == "x.json"
