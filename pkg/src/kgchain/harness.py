"""
실행 하네스 - 실험 하나를 실행하고 RunRecord(run.json)를 남깁니다.

RunRecord는 계산 전에 finalized=false로 먼저 기록되고, 정상 종료 후
finalized=true로 다시 기록됩니다. 중간에 죽은 실행은 finalized=false로 남습니다.
"""

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional

from . import __version__
from .config import ConfigManager, ExperimentConfig, get_log_file, get_run_record_file
from .errors import ConfigValidationError, KgchainError
from .experiments import EXPERIMENT_RUNNERS, RunContext
from .streams import StreamRegistry
from .writer import ResultWriter, write_json

logger = logging.getLogger(__name__)


@dataclass
class RunRecord:
    experiment: str
    config_hash: str
    seed: int
    version: str = __version__
    started_at: str = ""
    wall_time: Optional[float] = None
    files: list = field(default_factory=list)
    lineage: dict = field(default_factory=dict)
    finalized: bool = False
    status: str = "running"          # running, ok, aborted, failed
    abort: Optional[dict] = None
    summary: Optional[dict] = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write(self, out_dir: Path) -> Path:
        path = get_run_record_file(Path(out_dir))
        write_json(path, self.to_dict())
        return path

    @classmethod
    def load(cls, out_dir: Path) -> "RunRecord":
        path = get_run_record_file(Path(out_dir))
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
        return cls(**data)


def apply_overrides(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> ExperimentConfig:
    """
    CLI의 --seed / --workers 를 설정에 반영

    Raises:
        ConfigValidationError: 음수 시드 또는 workers < 1
    """
    model = config.model
    if seed is not None:
        if not 0 <= seed < 2 ** 64:
            raise ConfigValidationError(f"--seed는 64비트 음이 아닌 정수여야 합니다 (현재: {seed})")
        model = dataclasses.replace(model, seed=seed)
    if workers is not None and workers < 1:
        raise ConfigValidationError(f"--workers는 1 이상이어야 합니다 (현재: {workers})")
    return dataclasses.replace(
        config, model=model, workers=config.workers if workers is None else workers
    )


def run(config: ExperimentConfig, out_dir: Path) -> RunRecord:
    """
    실험 실행

    산출물: <out_dir>/run.json, config.json, summary.json, 실험별 CSV(+매니페스트)/JSONL

    Raises:
        KgchainError: 설정 검증 실패(종료 코드 2) 또는 수치 중단(종료 코드 3).
            RunRecord에는 status="aborted"와 사유가 기록됩니다.
    """
    out_dir = Path(out_dir)
    writer = ResultWriter(out_dir)
    registry = StreamRegistry(config.model.seed)
    record = RunRecord(
        experiment=config.experiment,
        config_hash=ConfigManager.config_hash(config),
        seed=config.model.seed,
        started_at=datetime.now().isoformat(timespec="seconds"),
    )
    writer.json("config.json", config.to_dict())
    record.files = list(writer.files)
    record.write(out_dir)
    logger.info(
        f"실험 시작: {config.experiment} (seed={config.model.seed}, workers={config.workers}, "
        f"hash={record.config_hash[:12]})"
    )

    start = time.perf_counter()
    ctx = RunContext(config=config, writer=writer, registry=registry)
    try:
        summary = EXPERIMENT_RUNNERS[config.experiment](ctx)
    except KgchainError as e:
        _close(record, writer, registry, out_dir, start, "aborted", e.to_dict())
        raise
    except Exception as e:
        _close(record, writer, registry, out_dir, start, "failed", {"reason": "error", "message": str(e)})
        raise

    writer.json("summary.json", summary)
    record.summary = summary
    _close(record, writer, registry, out_dir, start, "ok", None)

    logger.info("=" * 60)
    logger.info(f"실험 완료: {config.experiment} ({record.wall_time:.1f}초)")
    logger.info(f"출력 디렉토리: {out_dir}")
    logger.info(f"산출 파일 {len(record.files)}개, 스트림 {record.lineage['count']}개")
    logger.info("=" * 60)
    return record


def _close(record: RunRecord, writer: ResultWriter, registry: StreamRegistry, out_dir: Path,
           start: float, status: str, abort: Optional[dict]) -> None:
    record.wall_time = time.perf_counter() - start
    record.status = status
    record.abort = abort
    record.finalized = status == "ok"
    log_file = get_log_file(out_dir)
    if log_file.exists():
        writer.register(log_file)
    record.files = list(writer.files)
    record.lineage = registry.summary()
    record.lineage["paths"] = registry.lineage
    record.write(out_dir)
