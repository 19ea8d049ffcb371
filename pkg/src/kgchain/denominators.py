"""
작은 분모 통계 모듈

Q = min |Σ_k σ_k ν_{i_k}| (서로 다른 고유값 인덱스의 모든 순서 m-튜플에 대한 최소)와
꼬리 확률 P(Q ≤ ε) ≤ C_m |I|^m ε^{1/(m+1)} 의 경험적 검증.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_EPSILONS, DEFAULT_TUPLE_CAP
from .ensemble import parallel_map
from .errors import BudgetExceededError
from .model import ModelConfig, sample_disorder
from .spectral import EigenSystem, solve
from .streams import derive_stream
from .utils import fit_loglog

logger = logging.getLogger(__name__)

TRIALS_PER_TASK = 250


@dataclass(frozen=True)
class SigmaPattern:
    """짝수 m개의 0이 아닌 정수 σ_k, |σ_k| ≤ m"""

    coeffs: tuple

    def __post_init__(self):
        m = len(self.coeffs)
        if m < 2 or m % 2:
            raise ValueError(f"m은 2 이상의 짝수여야 합니다 (현재: {m})")
        for s in self.coeffs:
            if s == 0 or abs(s) > m:
                raise ValueError(f"σ 성분은 0이 아니고 |σ| ≤ {m} 이어야 합니다 (현재: {self.coeffs})")

    @property
    def m(self) -> int:
        return len(self.coeffs)

    @property
    def label(self) -> str:
        return "(" + ",".join(str(s) for s in self.coeffs) + ")"


@dataclass
class TailEstimate:
    epsilons: np.ndarray
    probabilities: np.ndarray
    stderr: np.ndarray
    trials: int
    interval_size: int
    minima: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def rows(self, pattern: SigmaPattern) -> list[dict]:
        """CSV 행: epsilon, p_hat, stderr, trials, interval_size, m, sigma_pattern"""
        return [
            {
                "epsilon": float(eps),
                "p_hat": float(p),
                "stderr": float(se),
                "trials": self.trials,
                "interval_size": self.interval_size,
                "m": pattern.m,
                "sigma_pattern": pattern.label,
            }
            for eps, p, se in zip(self.epsilons, self.probabilities, self.stderr)
        ]


@dataclass(frozen=True)
class BoundReport:
    constant: float
    passed: bool
    slope: float
    slope_stderr: float
    exponent: float

    def to_dict(self) -> dict:
        return {
            "constant": self.constant,
            "passed": self.passed,
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "exponent": self.exponent,
        }


def default_epsilons() -> np.ndarray:
    lo, hi, count = DEFAULT_EPSILONS
    return np.logspace(np.log10(lo), np.log10(hi), count)


def _min_pair(x: np.ndarray, y: np.ndarray) -> float:
    """min_{i≠j} |x_i + y_j|"""
    n = len(x)
    order = np.argsort(y, kind="stable")
    ys = y[order]
    pos = np.searchsorted(ys, -x)
    best = np.full(n, np.inf)
    rows = np.arange(n)
    # j = i 하나만 제외되므로 양쪽 두 칸씩이면 충분
    for offset in (-2, -1, 0, 1):
        cand = pos + offset
        valid = (cand >= 0) & (cand < n)
        c = np.where(valid, cand, 0)
        valid &= order[c] != rows
        diff = np.where(valid, np.abs(x + ys[c]), np.inf)
        best = np.minimum(best, diff)
    return float(best.min())


def _half_tuples(n: int, h: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n), h)), dtype=np.int64).reshape(-1, h)


def _min_meet_in_middle(nu: np.ndarray, sigma: np.ndarray) -> float:
    n, m = len(nu), len(sigma)
    h = m // 2
    sa, sb = sigma[:h], sigma[h:]
    A = _half_tuples(n, h)
    B = _half_tuples(n, m - h)
    SA = (nu[A] * sa).sum(axis=1)
    SB = (nu[B] * sb).sum(axis=1)
    order = np.argsort(SB, kind="stable")
    SBs, Bs = SB[order], B[order]
    pos = np.searchsorted(SBs, -SA)
    best = np.full(len(A), np.inf)

    # 왼쪽/오른쪽으로 한 칸씩 넓히며 서로소인 첫 후보를 찾음
    for direction, start in ((-1, pos - 1), (1, pos)):
        cand = start.copy()
        pending = np.arange(len(A))
        while len(pending):
            c = cand[pending]
            inside = (c >= 0) & (c < len(Bs))
            pending, c = pending[inside], c[inside]
            if not len(pending):
                break
            overlap = (A[pending][:, :, None] == Bs[c][:, None, :]).any(axis=(1, 2))
            done = pending[~overlap]
            best[done] = np.minimum(best[done], np.abs(SA[done] + SBs[c[~overlap]]))
            pending = pending[overlap]
            cand[pending] += direction
    return float(best.min())


def min_denominator(es: EigenSystem, pattern: SigmaPattern, cap: int = DEFAULT_TUPLE_CAP) -> float:
    """
    서로 다른 고유값 인덱스의 순서 m-튜플에 대한 min |Σ σ_k ν_k|

    Raises:
        ValueError: |I| < m
        BudgetExceededError: 순서 튜플 개수가 cap을 넘는 경우
    """
    n, m = es.n, pattern.m
    if n < m:
        raise ValueError(f"구간이 너무 작습니다 (|I|={n} < m={m})")
    count = math.perm(n, m)
    if count > cap:
        raise BudgetExceededError("순서 m-튜플", count, cap)
    nu = es.nu
    sigma = np.asarray(pattern.coeffs, dtype=float)
    if m == 2:
        return _min_pair(sigma[0] * nu, sigma[1] * nu)
    return _min_meet_in_middle(nu, sigma)


def _tail_trials(config: ModelConfig, pattern: SigmaPattern, interval, trial_ids, label, cap) -> list[float]:
    minima = []
    for t in trial_ids:
        stream = derive_stream(config.seed, label, "trial", int(t))
        es = solve(sample_disorder(config, interval, stream))
        minima.append(min_denominator(es, pattern, cap))
    return minima


def estimate_tail(
    config: ModelConfig,
    pattern: SigmaPattern,
    interval: tuple[int, int],
    epsilons=None,
    trials: int = 10_000,
    workers: int = 1,
    cap: int = DEFAULT_TUPLE_CAP,
    label: str = "denominator",
) -> TailEstimate:
    """
    독립 무질서 실현에 대한 P(Q ≤ ε) Monte-Carlo 추정

    trial t의 스트림은 derive_stream(seed, label, "trial", t) 이므로
    결과는 workers와 무관합니다.

    Raises:
        ValueError: trials < 1 이거나 epsilons가 정렬되어 있지 않은 경우
        BudgetExceededError: 순서 튜플 개수 초과 (계산 전에 거부)
    """
    if trials < 1:
        raise ValueError(f"trials는 1 이상이어야 합니다 (현재: {trials})")
    epsilons = default_epsilons() if epsilons is None else np.asarray(epsilons, dtype=float)
    if np.any(np.diff(epsilons) < 0):
        raise ValueError("epsilons는 오름차순이어야 합니다")
    size = interval[1] - interval[0] + 1
    if size < pattern.m:
        raise ValueError(f"구간이 너무 작습니다 (|I|={size} < m={pattern.m})")
    count = math.perm(size, pattern.m)
    if count > cap:
        raise BudgetExceededError("순서 m-튜플", count, cap)

    chunks = [range(s, min(s + TRIALS_PER_TASK, trials)) for s in range(0, trials, TRIALS_PER_TASK)]
    tasks = [(config, pattern, interval, list(c), label, cap) for c in chunks]
    minima = np.concatenate([np.asarray(r) for r in parallel_map(_tail_trials, tasks, workers)])

    p = np.array([np.mean(minima <= eps) for eps in epsilons])
    stderr = np.sqrt(p * (1.0 - p) / trials)
    logger.info(
        f"작은 분모 꼬리 추정 완료: σ={pattern.label}, |I|={size}, trials={trials:,}, "
        f"min Q={minima.min():.3e}"
    )
    return TailEstimate(epsilons, p, stderr, trials, size, minima)


def verify_bound(estimate: TailEstimate, pattern: SigmaPattern) -> BoundReport:
    """
    모든 점(+2 stderr)이 C·|I|^m ε^{1/(m+1)} 아래에 오는 최소 C와 지수 판정

    양수 확률 점이 2개 이상이면 로그-로그 기울기가 1/(m+1) − 2·stderr 이상이어야 통과합니다.
    """
    m = pattern.m
    exponent = 1.0 / (m + 1)
    envelope = estimate.interval_size ** m * estimate.epsilons ** exponent
    upper = estimate.probabilities + 2.0 * estimate.stderr
    constant = float(np.max(upper / envelope)) if len(envelope) else 0.0

    positive = estimate.probabilities > 0
    if positive.sum() >= 2:
        fit = fit_loglog(estimate.epsilons[positive], estimate.probabilities[positive])
        slope, slope_se = fit.slope, fit.slope_stderr
        passed = bool(np.isfinite(constant) and slope >= exponent - 2.0 * slope_se)
    else:
        slope, slope_se = float("nan"), float("nan")
        passed = bool(np.isfinite(constant))

    logger.info(
        f"꼬리 한계 검증: C={constant:.4g}, 기울기={slope:.3f}±{slope_se:.3f}, "
        f"기준 지수={exponent:.3f}, {'통과' if passed else '실패'}"
    )
    return BoundReport(constant, passed, float(slope), float(slope_se), exponent)
