"""
모델 모듈 - 무질서 비조화 Klein-Gordon 사슬

H = Σ_x [p_x²/2 + ω_x² q_x²/2 + (η/2)(q_x − q_{x+1})² + (λ/4) q_x⁴]

사이트는 절대 좌표 a..b로 인덱싱하며, 양 끝은 자유 경계 조건(q_{b+1} = q_b,
q_{a−1} = q_a)을 따릅니다. 따라서 맨 오른쪽 사이트의 용수철 항은 0입니다.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import DEFAULT_DISORDER_HI, DEFAULT_DISORDER_LAW, DEFAULT_DISORDER_LO, DEFAULT_ETA

logger = logging.getLogger(__name__)

DISORDER_LAWS = ("uniform", "bump", "point", "fixed")


@dataclass(frozen=True)
class DisorderLaw:
    """
    ω_x의 분포 (ω_x² 아님)

    - uniform: [lo, hi] 균등분포
    - bump: Beta(3,3) 밀도를 [lo, hi]로 옮긴 매끄러운 다항식 밀도
    - point: ω = lo = hi 점질량
    - fixed: values에 ω_x²를 사이트별로 직접 지정
    """

    law: str = DEFAULT_DISORDER_LAW
    lo: float = DEFAULT_DISORDER_LO
    hi: float = DEFAULT_DISORDER_HI
    values: Optional[tuple] = None

    def __post_init__(self):
        if self.law not in DISORDER_LAWS:
            raise ValueError(f"알 수 없는 무질서 분포입니다: {self.law} (허용: {', '.join(DISORDER_LAWS)})")
        if self.law == "fixed":
            if not self.values:
                raise ValueError("fixed 분포에는 values(ω² 목록)가 필요합니다")
            if min(self.values) <= 0:
                raise ValueError(f"ω² 값은 모두 양수여야 합니다 (최솟값: {min(self.values)})")
            return
        if self.lo <= 0:
            raise ValueError(f"무질서 분포의 지지집합이 0에 닿습니다 (lo={self.lo})")
        if self.hi < self.lo:
            raise ValueError(f"무질서 분포 범위가 잘못되었습니다 (lo={self.lo}, hi={self.hi})")
        if self.law == "point" and self.hi != self.lo:
            raise ValueError(f"point 분포는 lo == hi 여야 합니다 (lo={self.lo}, hi={self.hi})")

    @property
    def omega_sq_support(self) -> tuple[float, float]:
        if self.law == "fixed":
            return float(min(self.values)), float(max(self.values))
        return self.lo ** 2, self.hi ** 2

    def draw_omega(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.law == "uniform":
            return rng.uniform(self.lo, self.hi, size)
        if self.law == "bump":
            return self.lo + (self.hi - self.lo) * rng.beta(3.0, 3.0, size)
        if self.law == "point":
            return np.full(size, float(self.lo))
        raise ValueError("fixed 분포는 표본 추출 대상이 아닙니다")

    def to_dict(self) -> dict:
        data = {"law": self.law, "lo": self.lo, "hi": self.hi}
        if self.values is not None:
            data["values"] = list(self.values)
        return data


@dataclass(frozen=True)
class ModelConfig:
    """사슬 매개변수: 사이트 [−L, L], 결합 η, 유효 비조화성 λ, 무질서 분포, 마스터 시드"""

    L: int
    eta: float = DEFAULT_ETA
    lam: float = 0.0
    disorder: DisorderLaw = field(default_factory=DisorderLaw)
    seed: int = 0

    def __post_init__(self):
        if self.L < 0:
            raise ValueError(f"L은 0 이상이어야 합니다 (현재: {self.L})")
        if self.eta < 0:
            raise ValueError(f"eta는 0 이상이어야 합니다 (현재: {self.eta})")
        if self.lam < 0:
            raise ValueError(f"lambda는 0 이상이어야 합니다 (현재: {self.lam})")

    @property
    def interval(self) -> tuple[int, int]:
        return (-self.L, self.L)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        disorder = dict(data.get("disorder", {}))
        if "values" in disorder and disorder["values"] is not None:
            disorder["values"] = tuple(float(v) for v in disorder["values"])
        return cls(
            L=int(data["L"]),
            eta=float(data.get("eta", DEFAULT_ETA)),
            lam=float(data.get("lambda", 0.0)),
            disorder=DisorderLaw(**disorder),
            seed=int(data.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "eta": self.eta,
            "lambda": self.lam,
            "disorder": self.disorder.to_dict(),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class DisorderRealization:
    """구간 [a, b] 위의 고정된(quenched) ω_x²"""

    interval: tuple[int, int]
    omega_sq: np.ndarray
    eta: float

    def __post_init__(self):
        a, b = self.interval
        if a > b:
            raise ValueError(f"잘못된 구간입니다: ({a}, {b})")
        if len(self.omega_sq) != b - a + 1:
            raise ValueError(
                f"ω² 길이({len(self.omega_sq)})가 구간 길이({b - a + 1})와 다릅니다"
            )

    @property
    def size(self) -> int:
        return self.interval[1] - self.interval[0] + 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.interval[0], self.interval[1] + 1)

    def index(self, x: int) -> int:
        """절대 좌표 x의 배열 인덱스"""
        a, b = self.interval
        if not a <= x <= b:
            raise ValueError(f"사이트 {x}가 구간 [{a}, {b}] 밖에 있습니다")
        return x - a

    def degree(self) -> np.ndarray:
        """사이트별 이웃 수 (끝점 1, 내부 2, 단일 사이트 0)"""
        deg = np.full(self.size, 2.0)
        if self.size == 1:
            return np.zeros(1)
        deg[0] = deg[-1] = 1.0
        return deg


@dataclass(frozen=True)
class ChainState:
    """위상 공간의 한 점 (q, p)와 시뮬레이션 시간 t"""

    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if np.shape(self.q) != np.shape(self.p):
            raise ValueError(f"q와 p의 길이가 다릅니다 ({np.shape(self.q)} != {np.shape(self.p)})")
        if self.t < 0:
            raise ValueError(f"시간은 0 이상이어야 합니다 (현재: {self.t})")

    def copy(self) -> "ChainState":
        return ChainState(np.array(self.q, dtype=float), np.array(self.p, dtype=float), self.t)


def sample_disorder(
    config: ModelConfig,
    interval: tuple[int, int],
    stream: np.random.Generator,
) -> DisorderRealization:
    """
    i.i.d. ω_x를 뽑아 제곱한 무질서 실현을 만듭니다.

    Args:
        config: 모델 설정 (분포와 η)
        interval: 절대 좌표 구간 (a, b)
        stream: 마스터 시드에서 파생된 난수 스트림

    Raises:
        ValueError: a > b 이거나 fixed 값 개수가 구간과 다른 경우
    """
    a, b = interval
    if a > b:
        raise ValueError(f"잘못된 구간입니다: ({a}, {b})")
    size = b - a + 1
    law = config.disorder

    if law.law == "fixed":
        if len(law.values) != size:
            raise ValueError(
                f"fixed 분포의 값 개수({len(law.values)})가 구간 길이({size})와 다릅니다"
            )
        omega_sq = np.asarray(law.values, dtype=float)
    else:
        omega_sq = law.draw_omega(size, stream) ** 2

    return DisorderRealization(interval=(a, b), omega_sq=omega_sq, eta=config.eta)


def restrict(realization: DisorderRealization, interval: tuple[int, int]) -> DisorderRealization:
    """같은 무질서를 부분 구간으로 잘라냅니다."""
    a, b = interval
    lo, hi = realization.interval
    if not (lo <= a <= b <= hi):
        raise ValueError(f"부분 구간 ({a}, {b})이 ({lo}, {hi}) 안에 있지 않습니다")
    start = a - lo
    return DisorderRealization(
        interval=(a, b),
        omega_sq=realization.omega_sq[start:start + b - a + 1].copy(),
        eta=realization.eta,
    )


def _check_length(state: ChainState, realization: DisorderRealization) -> None:
    if np.shape(state.q)[-1] != realization.size:
        raise ValueError(
            f"상태 길이({np.shape(state.q)[-1]})가 구간 길이({realization.size})와 다릅니다"
        )


def local_energies(state: ChainState, realization: DisorderRealization, lam: float) -> np.ndarray:
    """모든 사이트의 H_x (오른쪽 결합만 자기 몫으로 가짐)"""
    _check_length(state, realization)
    q = np.asarray(state.q, dtype=float)
    p = np.asarray(state.p, dtype=float)
    bond = np.zeros_like(q)
    bond[..., :-1] = 0.5 * realization.eta * (q[..., :-1] - q[..., 1:]) ** 2
    return 0.5 * p ** 2 + 0.5 * realization.omega_sq * q ** 2 + bond + 0.25 * lam * q ** 4


def local_energy(state: ChainState, realization: DisorderRealization, lam: float, x: int) -> float:
    """사이트 x의 국소 에너지 H_x"""
    i = realization.index(x)
    return float(local_energies(state, realization, lam)[..., i])


def hamiltonian(state: ChainState, realization: DisorderRealization, lam: float) -> float:
    """전체 에너지 H = Σ_x H_x"""
    return float(np.sum(local_energies(state, realization, lam)))


def laplacian(q: np.ndarray) -> np.ndarray:
    """자유 경계 조건의 이산 라플라시안 (마지막 축 기준)"""
    lap = np.zeros_like(q)
    if q.shape[-1] == 1:
        return lap
    diff = q[..., 1:] - q[..., :-1]
    lap[..., :-1] += diff
    lap[..., 1:] -= diff
    return lap


def force(state: ChainState, realization: DisorderRealization, lam: float) -> np.ndarray:
    """−∇_q H = −ω²q + ηΔq − λq³"""
    _check_length(state, realization)
    q = np.asarray(state.q, dtype=float)
    return -realization.omega_sq * q + realization.eta * laplacian(q) - lam * q ** 3


def harmonic_energy(state: ChainState, realization: DisorderRealization) -> float:
    """H_har = ½(p·p + q·𝓗q)"""
    return hamiltonian(state, realization, 0.0)
