"""
동역학 모듈 - 해밀턴 방정식 적분과 동역학 관측량

상태 배열은 마지막 축이 사이트이며, 앞쪽 축은 독립 궤적 배치로 취급합니다.
(q.shape == (B, N) 이면 B개의 궤적을 한 번에 적분)
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from .config import SCHEMES, STABILITY_MARGIN
from .errors import NonFiniteStateError
from .model import ChainState, DisorderRealization, hamiltonian, laplacian
from .spectral import EigenSystem

logger = logging.getLogger(__name__)

# 4차 Yoshida 합성 가중치
YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
YOSHIDA_W0 = -(2.0 ** (1.0 / 3.0)) / (2.0 - 2.0 ** (1.0 / 3.0))


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    scheme: str = "verlet"
    t_max: float = 0.0
    record_every: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt는 양수여야 합니다 (현재: {self.dt})")
        if self.scheme not in SCHEMES:
            raise ValueError(f"알 수 없는 적분기입니다: {self.scheme} (허용: {', '.join(SCHEMES)})")
        if self.t_max < 0:
            raise ValueError(f"t_max는 0 이상이어야 합니다 (현재: {self.t_max})")
        if self.record_every < 1:
            raise ValueError(f"record_every는 1 이상이어야 합니다 (현재: {self.record_every})")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    def check_stability(self, realization: DisorderRealization) -> None:
        """
        dt·ν_+ ≤ 0.5 (ν_+² = max ω² + 4η) 확인

        Raises:
            ValueError: 안정성 여유를 넘는 경우
        """
        if self.scheme == "exact_harmonic":
            return
        nu_plus = math.sqrt(float(np.max(realization.omega_sq)) + 4.0 * realization.eta)
        if self.dt * nu_plus > STABILITY_MARGIN:
            raise ValueError(
                f"적분 안정성 조건 위반: dt·ν_+ = {self.dt * nu_plus:.3f} > {STABILITY_MARGIN} "
                f"(dt={self.dt}, ν_+={nu_plus:.3f})"
            )


def _force_array(q: np.ndarray, omega_sq: np.ndarray, eta: float, lam: float) -> np.ndarray:
    return -omega_sq * q + eta * laplacian(q) - lam * q ** 3


def _verlet(q, p, omega_sq, eta, lam, dt, n_steps):
    """kick-drift-kick 속도 Verlet (q, p는 제자리 갱신)"""
    f = _force_array(q, omega_sq, eta, lam)
    half = 0.5 * dt
    for _ in range(n_steps):
        p += half * f
        q += dt * p
        f = _force_array(q, omega_sq, eta, lam)
        p += half * f


def _yoshida4(q, p, omega_sq, eta, lam, dt, n_steps):
    for _ in range(n_steps):
        _verlet(q, p, omega_sq, eta, lam, YOSHIDA_W1 * dt, 1)
        _verlet(q, p, omega_sq, eta, lam, YOSHIDA_W0 * dt, 1)
        _verlet(q, p, omega_sq, eta, lam, YOSHIDA_W1 * dt, 1)


def _rotate(q, p, es: EigenSystem, t: float):
    Q = q @ es.vectors
    P = p @ es.vectors
    nu = es.nu
    c, s = np.cos(nu * t), np.sin(nu * t)
    Qt = Q * c + P * s / nu
    Pt = -Q * nu * s + P * c
    return Qt @ es.vectors.T, Pt @ es.vectors.T


def _check_finite(q, p, t: float) -> None:
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
        bad = np.flatnonzero(~np.isfinite(np.atleast_1d(q)).reshape(-1))
        raise NonFiniteStateError(
            f"유한하지 않은 상태 발생: t={t:.4f}, 첫 위치 {bad[:5].tolist()}, "
            f"max|q|={np.nanmax(np.abs(q)):.3e}"
        )


def _advance(q, p, realization, lam, cfg: IntegratorConfig, es: Optional[EigenSystem], n_steps: int, t: float):
    if cfg.scheme == "exact_harmonic":
        if es is None:
            raise ValueError("exact_harmonic 적분에는 EigenSystem이 필요합니다")
        if lam != 0:
            raise ValueError(f"exact_harmonic 적분은 λ = 0 에서만 유효합니다 (현재: {lam})")
        return _rotate(q, p, es, n_steps * cfg.dt)
    if cfg.scheme == "verlet":
        _verlet(q, p, realization.omega_sq, realization.eta, lam, cfg.dt, n_steps)
    else:
        _yoshida4(q, p, realization.omega_sq, realization.eta, lam, cfg.dt, n_steps)
    return q, p


def step(
    state: ChainState,
    realization: DisorderRealization,
    lam: float,
    cfg: IntegratorConfig,
    es: Optional[EigenSystem] = None,
) -> ChainState:
    """
    한 스텝 적분 (Verlet 2차, Yoshida 4차, 또는 λ = 0 정확 회전)

    Raises:
        ValueError: 안정성 조건 위반
        NonFiniteStateError: 적분 결과가 유한하지 않은 경우
    """
    cfg.check_stability(realization)
    q = np.array(state.q, dtype=float)
    p = np.array(state.p, dtype=float)
    q, p = _advance(q, p, realization, lam, cfg, es, 1, state.t)
    t = state.t + cfg.dt
    _check_finite(q, p, t)
    return ChainState(q, p, t)


def evolve(
    state: ChainState,
    realization: DisorderRealization,
    lam: float,
    cfg: IntegratorConfig,
    t: float,
    es: Optional[EigenSystem] = None,
) -> ChainState:
    """시간 t만큼 적분 (스텝 수 = round(t/dt))"""
    cfg.check_stability(realization)
    n_steps = int(round(t / cfg.dt))
    q = np.array(state.q, dtype=float)
    p = np.array(state.p, dtype=float)
    q, p = _advance(q, p, realization, lam, cfg, es, n_steps, state.t)
    t_end = state.t + n_steps * cfg.dt
    _check_finite(q, p, t_end)
    return ChainState(q, p, t_end)


def trajectory(
    state: ChainState,
    realization: DisorderRealization,
    lam: float,
    cfg: IntegratorConfig,
    es: Optional[EigenSystem] = None,
    every: Optional[int] = None,
) -> Iterator[ChainState]:
    """
    t = 0 부터 t_max 까지 every(기본: record_every) 스텝마다 상태를 내보냅니다.
    """
    cfg.check_stability(realization)
    every = cfg.record_every if every is None else every
    q = np.array(state.q, dtype=float)
    p = np.array(state.p, dtype=float)
    t = state.t
    yield ChainState(q.copy(), p.copy(), t)
    done = 0
    total = cfg.n_steps
    while done < total:
        n = min(every, total - done)
        q, p = _advance(q, p, realization, lam, cfg, es, n, t)
        done += n
        t = state.t + done * cfg.dt
        _check_finite(q, p, t)
        yield ChainState(q.copy(), p.copy(), t)


def exact_harmonic_evolve(state: ChainState, es: EigenSystem, t: float) -> ChainState:
    """H_har의 정확한 흐름: 모드별 ([q,ψ_k], [p,ψ_k])를 각도 ν_k t 만큼 회전"""
    q, p = _rotate(np.asarray(state.q, dtype=float), np.asarray(state.p, dtype=float), es, t)
    return ChainState(q, p, state.t + t)


def mode_energies(state: ChainState, es: EigenSystem) -> np.ndarray:
    """E_k = ([p,ψ_k]² + ν_k²[q,ψ_k]²)/2, 마지막 축이 모드"""
    Q = np.asarray(state.q, dtype=float) @ es.vectors
    P = np.asarray(state.p, dtype=float) @ es.vectors
    return 0.5 * (P ** 2 + es.nu_sq * Q ** 2)


def mode_energy(state: ChainState, es: EigenSystem, k: int) -> float:
    if not 0 <= k < es.n:
        raise ValueError(f"모드 인덱스 {k}가 범위 [0, {es.n}) 밖에 있습니다")
    return float(mode_energies(state, es)[..., k])


def local_currents(state: ChainState, realization: DisorderRealization) -> np.ndarray:
    """x = a+1..b 의 j_x = η(q_{x−1} − q_x)p_x (마지막 축 길이 N−1)"""
    q = np.asarray(state.q, dtype=float)
    p = np.asarray(state.p, dtype=float)
    return realization.eta * (q[..., :-1] - q[..., 1:]) * p[..., 1:]


def local_current(state: ChainState, realization: DisorderRealization, x: int) -> float:
    """
    Raises:
        ValueError: x가 왼쪽 끝이거나 구간 밖인 경우
    """
    i = realization.index(x)
    if i == 0:
        raise ValueError(f"왼쪽 끝 사이트 {x}에서는 j_x가 정의되지 않습니다")
    q = np.asarray(state.q, dtype=float)
    p = np.asarray(state.p, dtype=float)
    return realization.eta * (q[..., i - 1] - q[..., i]) * p[..., i]


@dataclass
class CurrentAccumulator:
    """
    사다리꼴 적분 J(t) = ∫ j(s) ds

    site가 None이면 모든 결합의 합 Σ_x j_x 를 적분합니다.
    """

    site: Optional[int]
    J: np.ndarray = field(default_factory=lambda: np.zeros(()))
    samples: int = 0
    t_start: float = 0.0
    t_last: float = 0.0
    j_last: np.ndarray = field(default_factory=lambda: np.zeros(()))

    def add(self, t: float, j) -> None:
        j = np.asarray(j, dtype=float)
        if self.samples == 0:
            self.J = np.zeros_like(j)
            self.t_start = t
        elif t > self.t_last:
            self.J = self.J + 0.5 * (t - self.t_last) * (j + self.j_last)
        self.t_last = t
        self.j_last = j
        self.samples += 1

    @property
    def elapsed(self) -> float:
        return self.t_last - self.t_start


def accumulate_current(
    states: Iterable[ChainState],
    realization: DisorderRealization,
    x0: Optional[int],
    accumulator: Optional[CurrentAccumulator] = None,
) -> CurrentAccumulator:
    """
    궤적 스트림에서 J₀(t)를 사다리꼴로 누적합니다 (이전 누적기를 넘기면 이어서 계산).

    Raises:
        ValueError: x0가 내부 결합이 아닌 경우
    """
    if x0 is not None:
        i = realization.index(x0)
        if i == 0:
            raise ValueError(f"x0={x0}는 내부 사이트여야 합니다")
    acc = accumulator if accumulator is not None else CurrentAccumulator(site=x0)
    for state in states:
        if x0 is None:
            j = np.sum(local_currents(state, realization), axis=-1)
        else:
            j = local_current(state, realization, x0)
        acc.add(state.t, j)
    return acc


def rescaled_current(states: Iterable[ChainState], realization: DisorderRealization):
    """
    𝓙(t) = (t|Λ|)^{−1/2} Σ_x ∫₀ᵗ j_x(s) ds

    Raises:
        ValueError: 경과 시간이 0인 경우
    """
    acc = accumulate_current(states, realization, None)
    return rescaled_value(acc, realization.size)


def rescaled_value(acc: CurrentAccumulator, volume: int):
    if acc.elapsed <= 0:
        raise ValueError("t = 0 에서는 재규격화 전류가 정의되지 않습니다")
    return acc.J / math.sqrt(acc.elapsed * volume)


@dataclass
class DecorrelationResult:
    t: float
    lam: float
    c_k: np.ndarray
    c_bar: float
    c_bar_stderr: float
    energy_variance: np.ndarray

    @property
    def variance_bound_ok(self) -> np.ndarray:
        """C_k(t) ≤ 2⟨E_k; E_k⟩ 만족 여부 (모드별)"""
        return self.c_k <= 2.0 * self.energy_variance + 1e-12


def decorrelation(
    realization: DisorderRealization,
    es: EigenSystem,
    lam: float,
    t: float,
    initial: ChainState,
    cfg: IntegratorConfig,
) -> DecorrelationResult:
    """
    C_k(t) = ½ · 표본평균 (E_k(t) − E_k(0))², 그리고 모드 평균 C̄(t)

    Args:
        initial: 배치 상태 (q.shape == (표본 수, N)), Gibbs 분포에서 뽑은 초기 앙상블

    Raises:
        ValueError: 앙상블이 비어 있거나 λ ≠ 0 에서 exact_harmonic 을 요청한 경우
    """
    q0 = np.atleast_2d(np.asarray(initial.q, dtype=float))
    if q0.shape[0] == 0:
        raise ValueError("초기 상태 앙상블이 비어 있습니다")
    if cfg.scheme == "exact_harmonic" and lam != 0:
        raise ValueError(f"exact_harmonic 적분은 λ = 0 에서만 유효합니다 (현재: {lam})")
    start = ChainState(q0, np.atleast_2d(np.asarray(initial.p, dtype=float)), initial.t)
    e0 = mode_energies(start, es)
    if t == 0:
        end = start
    elif cfg.scheme == "exact_harmonic":
        end = exact_harmonic_evolve(start, es, t)
    else:
        end = evolve(start, realization, lam, cfg, t, es)
    et = mode_energies(end, es)
    sq = 0.5 * (et - e0) ** 2
    c_k = sq.mean(axis=0)
    per_state = sq.mean(axis=1)
    n = len(per_state)
    stderr = float(per_state.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    variance = e0.var(axis=0, ddof=1) if n > 1 else np.zeros(es.n)
    result = DecorrelationResult(t, lam, c_k, float(c_k.mean()), stderr, variance)
    logger.debug(f"C̄(t={t}, λ={lam}) = {result.c_bar:.4e} ± {stderr:.1e} (표본 {n}개)")
    return result


def wavepacket_width(state: ChainState, interval: tuple[int, int]):
    """
    w² = Σ x² q_x² / Σ q_x² (x는 절대 좌표), w를 반환

    Raises:
        ValueError: 영 패킷
    """
    q = np.asarray(state.q, dtype=float)
    x = np.arange(interval[0], interval[1] + 1, dtype=float)
    norm = np.sum(q ** 2, axis=-1)
    if np.any(norm <= 0):
        raise ValueError("영 패킷의 폭은 정의되지 않습니다")
    return np.sqrt(np.sum(x ** 2 * q ** 2, axis=-1) / norm)


def energy_drift(states: Iterable[ChainState], realization: DisorderRealization, lam: float) -> float:
    """max_t |H(t) − H(0)| / |H(0)| (단일 궤적)"""
    h0, worst = None, 0.0
    for state in states:
        h = hamiltonian(state, realization, lam)
        if h0 is None:
            h0 = h
            continue
        worst = max(worst, abs(h - h0) / abs(h0))
    return worst
