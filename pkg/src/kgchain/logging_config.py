"""로깅 설정 모듈

- 콘솔: INFO 레벨 (실험 진행 요약)
- 실행 로그: <out_dir>/kgchain.log, DEBUG 레벨, 실행마다 새로 씀

병렬 워커(joblib/loky) 로거는 WARNING 이상만 남깁니다.
"""

import logging
import sys
from pathlib import Path
from typing import Iterable, Optional

import joblib
import numpy as np
import scipy

CONSOLE_FORMAT = '[%(asctime)s] %(message)s'
FILE_FORMAT = '[%(asctime)s] [%(levelname)s] [%(name)s] %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

QUIET_LOGGERS = ("joblib", "loky")

logger = logging.getLogger(__name__)


def _handler(handler: logging.Handler, level: int, fmt: str) -> logging.Handler:
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(fmt, datefmt=DATE_FORMAT))
    return handler


def attach_run_log(log_file: Path, level: int = logging.DEBUG) -> logging.FileHandler:
    """
    실행 디렉토리의 로그 파일 핸들러를 루트 로거에 붙입니다.

    같은 출력 디렉토리로 다시 실행하면 run.json처럼 로그도 새로 씁니다.
    첫 줄에는 수치 라이브러리 버전을 남깁니다.
    """
    log_file = Path(log_file)
    log_file.parent.mkdir(parents=True, exist_ok=True)
    handler = _handler(logging.FileHandler(log_file, mode="w", encoding="utf-8"), level, FILE_FORMAT)
    logging.getLogger().addHandler(handler)
    logger.debug(
        f"라이브러리 버전: numpy {np.__version__}, scipy {scipy.__version__}, joblib {joblib.__version__}"
    )
    return handler


def setup_logging(
    log_file: Optional[Path] = None,
    console_level: int = logging.INFO,
    file_level: int = logging.DEBUG,
    quiet: Iterable[str] = QUIET_LOGGERS,
) -> None:
    """
    프로세스 로깅 설정 (CLI에서만 호출)

    Args:
        log_file: 실행 로그 경로 (None이면 콘솔만)
        console_level: 콘솔 출력 레벨
        file_level: 실행 로그 레벨
        quiet: WARNING 이상만 남길 외부 라이브러리 로거 이름
    """
    root = logging.getLogger()
    root.setLevel(min(console_level, file_level))

    # main()이 콘솔만으로 한 번, 실험 명령이 실행 로그를 붙여 다시 호출함
    root.handlers.clear()
    root.addHandler(_handler(logging.StreamHandler(sys.stdout), console_level, CONSOLE_FORMAT))

    if log_file is not None:
        attach_run_log(log_file, file_level)

    for name in quiet:
        logging.getLogger(name).setLevel(logging.WARNING)
