"""
앙상블 병렬 실행 모듈

작업은 joblib으로 분산하고, 결과는 항상 작업 인덱스 순서로 합칩니다.
작업마다 자기 난수 스트림을 인자로 받으므로 워커 수가 결과를 바꾸지 않습니다.
"""

import logging
from typing import Any, Callable, Sequence

from joblib import Parallel, delayed

logger = logging.getLogger(__name__)


def parallel_map(func: Callable[..., Any], tasks: Sequence[tuple], workers: int = 1) -> list:
    """
    func(*task)를 모든 작업에 적용하고 작업 순서대로 결과를 돌려줍니다.

    Args:
        func: 최상위(피클 가능) 함수
        tasks: 인자 튜플 목록
        workers: 병렬 프로세스 수 (1이면 현재 프로세스에서 순차 실행)
    """
    if workers < 1:
        raise ValueError(f"workers는 1 이상이어야 합니다 (현재: {workers})")
    if workers == 1 or len(tasks) <= 1:
        return [func(*task) for task in tasks]
    logger.debug(f"병렬 실행: 작업 {len(tasks)}개, 워커 {workers}개")
    return Parallel(n_jobs=workers, backend="loky")(delayed(func)(*task) for task in tasks)
