"""
난수 스트림 파생 모듈

스트림은 (마스터 시드, 라벨 경로)에서 해시로 파생되므로 작업 순서나
워커 배치와 무관합니다. 파생 규칙(비트 단위로 고정):

    path    = "/".join(str(label) for label in labels)
    digest  = sha256(path.encode("utf-8")).hexdigest()
    entropy = [master_seed, int(digest[:32], 16)]
    stream  = numpy.random.Generator(numpy.random.PCG64(numpy.random.SeedSequence(entropy)))
"""

import hashlib
import logging

import numpy as np

logger = logging.getLogger(__name__)


def label_path(*labels) -> str:
    if not labels:
        raise ValueError("스트림 라벨이 비어 있습니다")
    return "/".join(str(label) for label in labels)


def stream_entropy(master_seed: int, *labels) -> list[int]:
    digest = hashlib.sha256(label_path(*labels).encode("utf-8")).hexdigest()
    return [int(master_seed), int(digest[:32], 16)]


def derive_stream(master_seed: int, *labels) -> np.random.Generator:
    """
    (마스터 시드, 라벨...)에서 독립 난수 생성기를 파생합니다.

    Args:
        master_seed: 64비트 음이 아닌 정수
        labels: 실험 이름, 실현 인덱스, 체인 인덱스 등 경로 요소
    """
    if master_seed < 0:
        raise ValueError(f"마스터 시드는 음수일 수 없습니다 (현재: {master_seed})")
    seq = np.random.SeedSequence(stream_entropy(master_seed, *labels))
    return np.random.Generator(np.random.PCG64(seq))


class StreamRegistry:
    """한 번의 실행에서 발급한 라벨 경로를 기록하고 중복 발급을 막습니다."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._issued: list[str] = []
        self._seen: set[str] = set()

    def reserve(self, *labels) -> str:
        """
        워커가 직접 파생할 라벨 경로(또는 "trial/*" 같은 경로 묶음)를 기록만 합니다.

        Raises:
            ValueError: 같은 라벨 경로를 두 번 요청한 경우
        """
        path = label_path(*labels)
        if path in self._seen:
            raise ValueError(f"중복된 스트림 라벨 경로입니다: {path}")
        self._seen.add(path)
        self._issued.append(path)
        return path

    def derive(self, *labels) -> np.random.Generator:
        """
        Raises:
            ValueError: 같은 라벨 경로를 두 번 요청한 경우
        """
        self.reserve(*labels)
        return derive_stream(self.master_seed, *labels)

    @property
    def lineage(self) -> list[str]:
        """발급 순서대로의 라벨 경로 (RunRecord의 seed lineage)"""
        return list(self._issued)

    def summary(self, limit: int = 5) -> dict:
        return {
            "master_seed": self.master_seed,
            "count": len(self._issued),
            "first": self._issued[:limit],
        }
