"""
결과 파일 기록 모듈

- CSV: 표 형태 관측량 (열 설명은 <이름>.manifest.json 헤더 매니페스트에 기록)
- JSONL: 항 원장 (perturbation.write_ledger_jsonl이 직접 기록)
- JSON: 요약/매니페스트

실행에서 만든 파일은 ResultWriter.files에 순서대로 모여 RunRecord로 넘어갑니다.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import numpy as np

from .config import get_data_file

logger = logging.getLogger(__name__)


def _cell(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if value is None:
        return ""
    return value


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    return value


def write_csv(path: Path, fieldnames: list[str], rows: Iterable[Mapping[str, Any]]) -> int:
    """
    행 목록을 CSV로 기록합니다. 행에 없는 열은 빈 칸, 여분 키는 무시합니다.

    Returns:
        기록한 행 수
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _cell(row.get(k)) for k in fieldnames})
            count += 1
    return count


def read_csv(path: Path) -> list[dict[str, str]]:
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def write_json(path: Path, data: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as f:
        json.dump(_jsonable(data), f, indent=2, ensure_ascii=False, sort_keys=True)
        f.write("\n")
    tmp.replace(path)


def write_jsonl(path: Path, records: Iterable[Mapping[str, Any]]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(_jsonable(record), ensure_ascii=False, sort_keys=True))
            f.write("\n")
            count += 1
    return count


def manifest_path(csv_path: Path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".manifest.json")


class ResultWriter:
    """한 실행의 출력 디렉토리와 산출 파일 목록"""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        return get_data_file(self.out_dir, name)

    def _track(self, path: Path) -> None:
        name = str(path.relative_to(self.out_dir))
        if name not in self.files:
            self.files.append(name)

    def table(
        self,
        name: str,
        columns: Mapping[str, str],
        rows: Iterable[Mapping[str, Any]],
        meta: Optional[Mapping[str, Any]] = None,
    ) -> Path:
        """
        CSV와 헤더 매니페스트를 함께 기록합니다.

        Args:
            name: 파일 이름 (예: "spectrum.csv")
            columns: 열 이름 → 설명 (순서가 CSV 열 순서)
            rows: 행 dict
            meta: 매니페스트에 덧붙일 정보 (단위, 매개변수 등)
        """
        path = self.path(name)
        count = write_csv(path, list(columns), rows)
        manifest = {
            "file": name,
            "columns": [{"name": k, "description": v} for k, v in columns.items()],
            "rows": count,
        }
        if meta:
            manifest["meta"] = dict(meta)
        mpath = manifest_path(path)
        write_json(mpath, manifest)
        self._track(path)
        self._track(mpath)
        logger.debug(f"CSV 기록: {name} ({count}행)")
        return path

    def json(self, name: str, data: Any) -> Path:
        path = self.path(name)
        write_json(path, data)
        self._track(path)
        return path

    def jsonl(self, name: str, records: Iterable[Mapping[str, Any]]) -> Path:
        path = self.path(name)
        count = write_jsonl(path, records)
        self._track(path)
        logger.debug(f"JSONL 기록: {name} ({count}줄)")
        return path

    def register(self, path: Path) -> Path:
        """다른 모듈이 직접 기록한 파일을 목록에 추가합니다."""
        self._track(Path(path))
        return Path(path)
