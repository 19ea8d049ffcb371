"""
Gibbs 샘플링 모듈

- λ = 0: 모드 좌표에서 정확한 가우시안 표본
- λ ≥ 0: p는 정확한 가우시안, q는 체커보드 heat-bath (가우시안 포락선 기각 샘플링)
- 비평형: 사이트별 역온도 β_x 의 곱 측도
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .config import DEFAULT_BURN_IN, DEFAULT_MAX_TRIES, DEFAULT_THINNING
from .errors import EnvelopeFailureError
from .model import ChainState, DisorderRealization, force, local_energies
from .spectral import EigenSystem, fit_exponential_decay
from .utils import LineFit

logger = logging.getLogger(__name__)

PROPOSALS = ("gaussian_envelope",)

# Sokal 자기일관 창 상수
SOKAL_WINDOW = 5.0


@dataclass(frozen=True)
class SamplerConfig:
    burn_in: int = DEFAULT_BURN_IN
    thinning: int = DEFAULT_THINNING
    samples_per_chain: int = 50
    n_chains: int = 64
    proposal: str = "gaussian_envelope"
    max_tries: int = DEFAULT_MAX_TRIES

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError(f"burn_in은 0 이상이어야 합니다 (현재: {self.burn_in})")
        if self.thinning < 1:
            raise ValueError(f"thinning은 1 이상이어야 합니다 (현재: {self.thinning})")
        if self.samples_per_chain < 1 or self.n_chains < 1:
            raise ValueError(
                f"표본 수는 1 이상이어야 합니다 (체인 {self.n_chains}개 × {self.samples_per_chain}개)"
            )
        if self.proposal not in PROPOSALS:
            raise ValueError(f"알 수 없는 제안 분포입니다: {self.proposal}")
        if self.max_tries < 1:
            raise ValueError(f"max_tries는 1 이상이어야 합니다 (현재: {self.max_tries})")

    @property
    def n_samples(self) -> int:
        return self.n_chains * self.samples_per_chain


@dataclass
class StateSamples:
    """표본 축이 첫 번째인 (q, p) 묶음"""

    q: np.ndarray
    p: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.q.shape != self.p.shape or self.q.ndim != 2:
            raise ValueError(f"q, p는 같은 2차원 배열이어야 합니다 ({self.q.shape}, {self.p.shape})")

    def __len__(self) -> int:
        return self.q.shape[0]

    @property
    def state(self) -> ChainState:
        """배치 ChainState (동역학 적분 입력용)"""
        return ChainState(self.q.copy(), self.p.copy(), 0.0)

    def subset(self, n: int) -> "StateSamples":
        return StateSamples(self.q[:n], self.p[:n], dict(self.diagnostics))


@dataclass(frozen=True)
class NoneqProfile:
    betas: tuple
    beta_min: float = 0.1
    beta_max: float = 10.0

    def __post_init__(self):
        if not 0 < self.beta_min <= self.beta_max:
            raise ValueError(f"β 범위가 잘못되었습니다: [{self.beta_min}, {self.beta_max}]")
        bad = [b for b in self.betas if not self.beta_min <= b <= self.beta_max]
        if bad:
            raise ValueError(
                f"β_x가 허용 범위 [{self.beta_min}, {self.beta_max}] 밖에 있습니다: {bad[:5]}"
            )

    @classmethod
    def step(cls, size: int, beta_left: float, beta_right: float, **kwargs) -> "NoneqProfile":
        """왼쪽 절반 beta_left, 나머지 beta_right"""
        half = size // 2
        return cls(tuple([beta_left] * half + [beta_right] * (size - half)), **kwargs)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.betas, dtype=float)


@dataclass(frozen=True)
class CovarianceEstimate:
    value: float
    stderr: float


def sample_harmonic(es: EigenSystem, n: int, stream: np.random.Generator) -> StateSamples:
    """[p,ψ_k] ~ N(0,1), [q,ψ_k] ~ N(0, 1/ν_k²) 를 사이트 기저로 회전"""
    if n < 1:
        raise ValueError(f"표본 수는 1 이상이어야 합니다 (현재: {n})")
    P = stream.standard_normal((n, es.n))
    Q = stream.standard_normal((n, es.n)) / es.nu
    return StateSamples(Q @ es.vectors.T, P @ es.vectors.T, {"sampler": "harmonic_exact"})


def _draw_conditional(mean, alpha, beta, lam, stream, max_tries, where):
    """
    exp(−β(α(q − mean)²/2 + λq⁴/4)) 밀도에서 기각 샘플링

    포락선은 가우시안 N(mean, 1/(βα)), 수락 확률 e^{−βλq⁴/4}.
    """
    scale = 1.0 / np.sqrt(beta * alpha)
    out = np.empty_like(mean)
    pending = np.arange(mean.size)
    tries = 0
    while pending.size:
        if tries >= max_tries:
            raise EnvelopeFailureError(
                f"heat-bath 기각 샘플링 실패: {max_tries}회 시도 후 {pending.size}개 미수락 "
                f"(λ={lam}, {where})"
            )
        m = mean.flat[pending]
        s = scale.flat[pending]
        proposal = m + s * stream.standard_normal(pending.size)
        if lam > 0:
            b = beta.flat[pending]
            accept = stream.random(pending.size) < np.exp(-0.25 * b * lam * proposal ** 4)
        else:
            accept = np.ones(pending.size, dtype=bool)
        out.flat[pending[accept]] = proposal[accept]
        pending = pending[~accept]
        tries += 1
    return out, tries


def _neighbor_sum(q: np.ndarray) -> np.ndarray:
    s = np.zeros_like(q)
    s[..., 1:] += q[..., :-1]
    s[..., :-1] += q[..., 1:]
    return s


def _sweep(q, realization, lam, beta, stream, max_tries, stats):
    alpha = realization.omega_sq + realization.eta * realization.degree()
    for color in (0, 1):
        idx = np.arange(color, realization.size, 2)
        if not idx.size:
            continue
        gamma = -realization.eta * _neighbor_sum(q)[:, idx]
        a = np.broadcast_to(alpha[idx], gamma.shape)
        b = np.broadcast_to(beta[idx], gamma.shape)
        new, tries = _draw_conditional(-gamma / a, a, b, lam, stream, max_tries, f"color={color}")
        q[:, idx] = new
        stats["max_rounds"] = max(stats["max_rounds"], tries)


def sample_gibbs(
    realization: DisorderRealization,
    lam: float,
    cfg: SamplerConfig,
    stream: np.random.Generator,
) -> StateSamples:
    """
    단위 역온도 Gibbs 측도에서 표본 추출

    n_chains개의 독립 체인을 벡터화해 돌리며, 같은 색 사이트끼리는 이웃이 아니므로
    한 번에 갱신합니다. 반환 순서는 체인 우선(chain-major)입니다.

    Raises:
        ValueError: λ < 0
        EnvelopeFailureError: 기각 샘플링이 max_tries 안에 끝나지 않는 경우
    """
    if lam < 0:
        raise ValueError(f"λ는 0 이상이어야 합니다 (현재: {lam})")
    C, N, S = cfg.n_chains, realization.size, cfg.samples_per_chain
    beta = np.ones(N)
    q = np.zeros((C, N))
    stats = {"max_rounds": 0}

    for _ in range(cfg.burn_in):
        _sweep(q, realization, lam, beta, stream, cfg.max_tries, stats)

    series = np.empty((S, C, N))
    for s in range(S):
        for _ in range(cfg.thinning):
            _sweep(q, realization, lam, beta, stream, cfg.max_tries, stats)
        series[s] = q

    p = stream.standard_normal((C * S, N))
    q_out = series.transpose(1, 0, 2).reshape(C * S, N)

    mean_q2 = (series ** 2).mean(axis=2)
    taus = [integrated_autocorrelation_time(mean_q2[:, c]) for c in range(C)]
    diagnostics = {
        "sampler": "heat_bath",
        "n_chains": C,
        "samples_per_chain": S,
        "burn_in": cfg.burn_in,
        "thinning": cfg.thinning,
        "tau_int": float(np.mean(taus)),
        "max_rejection_rounds": stats["max_rounds"],
    }
    logger.debug(
        f"Gibbs 표본 {C * S}개 생성 (λ={lam}, 체인 {C}개, τ_int≈{diagnostics['tau_int']:.2f})"
    )
    return StateSamples(q_out, p, diagnostics)


def sample_noneq(
    realization: DisorderRealization,
    lam: float,
    profile: NoneqProfile,
    n: int,
    stream: np.random.Generator,
    max_tries: int = DEFAULT_MAX_TRIES,
) -> StateSamples:
    """
    사이트별 국소 인자 exp(−β_x(α_x q²/2 + λq⁴/4)), α_x = ω_x² + η·deg_x 의 곱 측도

    p_x ~ N(0, 1/β_x).

    Raises:
        ValueError: 프로파일 길이가 구간과 다른 경우
    """
    betas = profile.array
    if len(betas) != realization.size:
        raise ValueError(f"프로파일 길이({len(betas)})가 구간 길이({realization.size})와 다릅니다")
    if n < 1:
        raise ValueError(f"표본 수는 1 이상이어야 합니다 (현재: {n})")
    shape = (n, realization.size)
    alpha = np.broadcast_to(realization.omega_sq + realization.eta * realization.degree(), shape)
    beta = np.broadcast_to(betas, shape)
    q, _ = _draw_conditional(np.zeros(shape), alpha, beta, lam, stream, max_tries, "noneq")
    p = stream.standard_normal(shape) / np.sqrt(beta)
    return StateSamples(q, p, {"sampler": "noneq_product", "beta_min": float(betas.min()),
                               "beta_max": float(betas.max())})


def _values(samples: StateSamples, f: Union[Callable, np.ndarray]) -> np.ndarray:
    return np.asarray(f(samples) if callable(f) else f, dtype=float)


def covariance(
    samples: StateSamples,
    f: Union[Callable, np.ndarray],
    g: Union[Callable, np.ndarray],
    n_blocks: int = 20,
) -> CovarianceEstimate:
    """
    불편 표본 공분산 ⟨f; g⟩ 와 블록 잭나이프 표준오차

    Args:
        f, g: 표본별 값 배열, 또는 StateSamples를 받아 그 배열을 돌려주는 함수

    Raises:
        ValueError: 표본이 2개 미만인 경우
    """
    x, y = _values(samples, f), _values(samples, g)
    n = len(x)
    if n < 2:
        raise ValueError(f"공분산에는 표본이 2개 이상 필요합니다 (현재: {n}개)")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return CovarianceEstimate(0.0, 0.0)

    value = float(np.cov(x, y, ddof=1)[0, 1])
    blocks = max(2, min(n_blocks, n))
    edges = np.linspace(0, n, blocks + 1).astype(int)
    keep = np.ones(n, dtype=bool)
    leave_out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        keep[:] = True
        keep[lo:hi] = False
        if keep.sum() < 2:
            continue
        leave_out.append(np.cov(x[keep], y[keep], ddof=1)[0, 1])
    leave_out = np.asarray(leave_out)
    B = len(leave_out)
    stderr = float(math.sqrt((B - 1) / B * np.sum((leave_out - leave_out.mean()) ** 2))) if B > 1 else 0.0
    return CovarianceEstimate(value, stderr)


def integrated_autocorrelation_time(series, window: float = SOKAL_WINDOW) -> float:
    """
    τ_int = 1 + 2 Σ_{t=1}^{W} ρ(t), W는 W ≥ c·τ_int(W) 를 만족하는 최소값

    상수 계열은 1을 돌려줍니다.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 2:
        return 1.0
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var == 0:
        return 1.0
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(x, size)
    acf = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n] / n / var
    tau = 1.0
    for w in range(1, n):
        tau += 2.0 * acf[w]
        if w >= window * tau:
            break
    return float(max(tau, 1e-12))


def virial(samples: StateSamples, realization: DisorderRealization, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """
    사이트별 ⟨q_x ∂H/∂q_x⟩ 와 표준오차 (β = 1 에서 1)
    """
    values = -samples.q * force(ChainState(samples.q, samples.p), realization, lam)
    stderr = values.std(axis=0, ddof=1) / math.sqrt(len(samples))
    return values.mean(axis=0), stderr


@dataclass
class CovarianceDecay:
    distances: np.ndarray
    covariances: np.ndarray
    stderrs: np.ndarray
    fit: Optional[LineFit]
    xi: float


def fit_covariance_decay(
    samples: StateSamples,
    realization: DisorderRealization,
    lam: float,
    x0: Optional[int] = None,
    max_distance: Optional[int] = None,
) -> CovarianceDecay:
    """
    ⟨H_x0; H_y⟩ 를 |x0 − y| 에 대해 지수 맞춤 (x0 기본값: 구간 중앙)
    """
    energies = local_energies(ChainState(samples.q, samples.p), realization, lam)
    x0 = realization.interval[0] + realization.size // 2 if x0 is None else x0
    i0 = realization.index(x0)
    last = realization.size - 1 if max_distance is None else min(realization.size - 1, i0 + max_distance)
    distances, covs, errs = [], [], []
    for j in range(i0, last + 1):
        est = covariance(samples, energies[:, i0], energies[:, j])
        distances.append(j - i0)
        covs.append(est.value)
        errs.append(est.stderr)
    distances = np.asarray(distances, dtype=float)
    covs = np.asarray(covs)
    fit, xi = (None, float("nan"))
    if np.count_nonzero(np.abs(covs) > 0) >= 2:
        fit, xi = fit_exponential_decay(distances, covs)
    return CovarianceDecay(distances, covs, np.asarray(errs), fit, xi)


def write_samples(samples: StateSamples, path: Path, lineage: Optional[list] = None) -> Path:
    """
    (q, p) 이진 블록(<f8, q 다음 p)과 JSON 매니페스트(path + ".json")를 씁니다.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(np.ascontiguousarray(samples.q, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(samples.p, dtype="<f8").tobytes())
    manifest = {
        "count": int(samples.q.shape[0]),
        "dims": int(samples.q.shape[1]),
        "dtype": "<f8",
        "blocks": ["q", "p"],
        "lineage": list(lineage or []),
        "diagnostics": samples.diagnostics,
    }
    manifest_path = path.with_name(path.name + ".json")
    manifest_path.write_text(json.dumps(manifest, ensure_ascii=False, indent=2), encoding="utf-8")
    return manifest_path


def read_samples(path: Path) -> StateSamples:
    path = Path(path)
    manifest = json.loads(path.with_name(path.name + ".json").read_text(encoding="utf-8"))
    n, d = manifest["count"], manifest["dims"]
    data = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(2, n, d)
    return StateSamples(data[0].copy(), data[1].copy(), manifest.get("diagnostics", {}))
