"""
섭동 전개 모듈

f = −{H, u} + λⁿ g 를 만족하는 u = Σ λ^{i−1} u⁽ⁱ⁾, g = f⁽ⁿ⁺¹⁾ 를 재귀적으로 만듭니다.

    u⁽ⁱ⁾ 계수     û = −i f̂ / Δ,   Δ(k, σ) = Σ_j σ_j ν_{k_j}
    f⁽ⁱ⁺¹⁾        {H_an, u⁽ⁱ⁾}  (단일 축약, 𝒮 항 제거)

두 가지 표현을 함께 만듭니다.
- 병합 다항식(ModePolynomial): 평가와 잔차 검증용
- 비병합 원장(TermLedger): 항별 분자/분모 사슬과 축약 이력, Z 통계용
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .config import (
    DEFAULT_EXACT_CAP,
    DEFAULT_TERM_BUDGET,
    NEAR_RESONANCE_THRESHOLD,
)
from .errors import BudgetExceededError, NearResonanceError, NumericalAbort
from .model import ChainState, DisorderRealization
from .modes import (
    EXPONENT_DTYPE,
    LambdaSeries,
    ModeMonomial,
    ModePolynomial,
    evaluate,
    from_modes,
    gradient,
    hamiltonian_gradient,
    harmonic_polynomial,
    poisson_bracket,
)
from .spectral import EigenSystem
from .streams import derive_stream

logger = logging.getLogger(__name__)

SOURCE_KINDS = ("mode_energy", "current")
EXPANSION_MODES = ("exact", "truncated")

COHOMOLOGICAL_CHECK_STATES = 3
COHOMOLOGICAL_CHECK_TOL = 1e-10

# Σ_{σ∈{±}^c} |Σσ| (c = 소스 모드가 나타나는 횟수)
_SIGN_SUM_ABS = np.array([0.0, 2.0, 4.0, 12.0, 24.0])


@dataclass(frozen=True)
class Source:
    """mode_energy: target = k₀ (모드 인덱스), current: target = x₀ (절대 좌표)"""

    kind: str
    target: int

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"알 수 없는 소스 종류입니다: {self.kind} (허용: {', '.join(SOURCE_KINDS)})")

    @property
    def degree(self) -> int:
        return 4 if self.kind == "mode_energy" else 2

    @property
    def label(self) -> str:
        return f"{self.kind}@{self.target}"


@dataclass(frozen=True)
class ExpansionConfig:
    order: int = 1
    mode: str = "exact"
    radius: int = 2
    numerator_floor: float = 0.0
    exact_cap: int = DEFAULT_EXACT_CAP
    term_budget: float = DEFAULT_TERM_BUDGET
    ledger: bool = True
    resonance_threshold: float = NEAR_RESONANCE_THRESHOLD

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"전개 차수는 1 이상이어야 합니다 (현재: {self.order})")
        if self.mode not in EXPANSION_MODES:
            raise ValueError(f"알 수 없는 전개 모드입니다: {self.mode} (허용: {', '.join(EXPANSION_MODES)})")
        if self.radius < 0:
            raise ValueError(f"radius는 0 이상이어야 합니다 (현재: {self.radius})")
        if self.numerator_floor < 0:
            raise ValueError(f"numerator_floor는 0 이상이어야 합니다 (현재: {self.numerator_floor})")


# ---------------------------------------------------------------------------
# 비조화 계수
# ---------------------------------------------------------------------------

def anharmonic_coefficient(es: EigenSystem, k1: int, k2: int, k3: int, k4: int) -> float:
    """Ĥ_an(k) = Σ_x ψ_{k1}ψ_{k2}ψ_{k3}ψ_{k4}(x) / (16 (ν_{k1}ν_{k2}ν_{k3}ν_{k4})^{1/2})"""
    v = es.vectors
    nu = es.nu
    num = float(np.sum(v[:, k1] * v[:, k2] * v[:, k3] * v[:, k4]))
    return num / (16.0 * math.sqrt(nu[k1] * nu[k2] * nu[k3] * nu[k4]))


def anharmonic_tensor(es: EigenSystem, modes) -> np.ndarray:
    """modes 위의 Ĥ_an 4-텐서 (로컬 인덱스)"""
    modes = np.asarray(modes)
    phi = es.vectors[:, modes] / np.sqrt(2.0 * es.nu[modes])
    return 0.25 * np.einsum("xa,xb,xc,xd->abcd", phi, phi, phi, phi, optimize=True)


def _sign_patterns(n: int) -> np.ndarray:
    return np.array(list(itertools.product((1, -1), repeat=n)), dtype=np.int8).reshape(-1, n)


def _index_tuples(m: int, n: int) -> np.ndarray:
    return np.array(list(itertools.product(range(m), repeat=n)), dtype=np.int64).reshape(-1, n)


def _rows_to_polynomial(modes, ks, sigmas, alive, coeffs) -> ModePolynomial:
    """전역 모드 인덱스의 순서 행(ks, sigmas)을 지수 행렬로 모아 병합"""
    modes = np.asarray(modes)
    R, D = ks.shape
    cols = np.searchsorted(modes, ks)
    plus = np.zeros((R, len(modes)), dtype=EXPONENT_DTYPE)
    minus = np.zeros_like(plus)
    rows = np.repeat(np.arange(R), D).reshape(R, D)
    pos = alive & (sigmas > 0)
    neg = alive & (sigmas < 0)
    np.add.at(plus, (rows[pos], cols[pos]), 1)
    np.add.at(minus, (rows[neg], cols[neg]), 1)
    return ModePolynomial(modes, plus, minus, coeffs).merge()


def anharmonic_polynomial(es: EigenSystem, modes) -> ModePolynomial:
    """H_an = Σ_{k,σ} Ĥ_an(k) a^σ_k (modes 로 제한)"""
    modes = np.asarray(modes)
    tensor = anharmonic_tensor(es, modes)
    idx = _index_tuples(len(modes), 4)
    signs = _sign_patterns(4)
    ks = np.repeat(modes[idx], len(signs), axis=0)
    sig = np.tile(signs, (len(idx), 1))
    coeffs = np.repeat(tensor[idx[:, 0], idx[:, 1], idx[:, 2], idx[:, 3]], len(signs))
    return _rows_to_polynomial(modes, ks, sig, np.ones_like(sig, dtype=bool), coeffs)


def cubic_polynomials(es: EigenSystem, modes, tensor: Optional[np.ndarray] = None) -> list[ModePolynomial]:
    """
    G_l = ∂H_an/∂a^±_l = Σ_{k,σ} 4Ĥ_an(l,k₁,k₂,k₃) a^{σ₁}_{k₁}a^{σ₂}_{k₂}a^{σ₃}_{k₃}
    """
    modes = np.asarray(modes)
    tensor = anharmonic_tensor(es, modes) if tensor is None else tensor
    idx = _index_tuples(len(modes), 3)
    signs = _sign_patterns(3)
    ks = np.repeat(modes[idx], len(signs), axis=0)
    sig = np.tile(signs, (len(idx), 1))
    alive = np.ones_like(sig, dtype=bool)
    out = []
    for l in range(len(modes)):
        coeffs = np.repeat(4.0 * tensor[l, idx[:, 0], idx[:, 1], idx[:, 2]], len(signs))
        out.append(_rows_to_polynomial(modes, ks, sig, alive, coeffs))
    return out


# ---------------------------------------------------------------------------
# 모드 선택과 소스
# ---------------------------------------------------------------------------

def _check_source(source: Source, es: EigenSystem) -> None:
    if source.kind == "current":
        i = es.index(source.target)
        if i == 0:
            raise ValueError(f"전류 소스 x0={source.target}는 왼쪽 끝일 수 없습니다")
    elif not 0 <= source.target < es.n:
        raise ValueError(f"모드 인덱스 {source.target}가 범위 [0, {es.n}) 밖에 있습니다")


def source_site(source: Source, es: EigenSystem) -> int:
    """전류 소스는 x₀, 모드 에너지 소스는 𝐱(k₀)"""
    return source.target if source.kind == "current" else int(es.centers[source.target])


def select_modes(source: Source, es: EigenSystem, cfg: ExpansionConfig) -> np.ndarray:
    """
    EXACT: 모든 모드. TRUNCATED: 국소화 중심이 소스 사이트에서 radius 이내인 모드
    (없으면 가장 가까운 모드들, mode_energy 소스는 k₀ 항상 포함)

    Raises:
        BudgetExceededError: |모드|⁴ 가 exact_cap을 넘는 경우
    """
    _check_source(source, es)
    if cfg.mode == "exact":
        modes = np.arange(es.n)
    else:
        dist = np.abs(es.centers - source_site(source, es))
        modes = np.flatnonzero(dist <= max(cfg.radius, dist.min()))
        if source.kind == "mode_energy":
            modes = np.union1d(modes, [source.target])
    m = len(modes)
    if m ** 4 > cfg.exact_cap:
        raise BudgetExceededError(f"{cfg.mode.upper()} 모드 4-튜플", m ** 4, cfg.exact_cap)
    return modes.astype(np.int64)


def source_coefficient(source: Source, es: EigenSystem, ks, sigmas) -> complex:
    """
    순서 튜플 (k, σ) 하나의 f⁽¹⁾ 계수

    - mode_energy: i ν_{k₀} Ĥ_an(k) Σ_j σ_j δ(k_j − k₀)   ({H_an, E_{k₀}})
    - current:     (iη/2)(ψ_{k₁}(x₀−1) − ψ_{k₁}(x₀)) ψ_{k₂}(x₀) (ν_{k₂}/ν_{k₁})^{1/2} σ₂
    """
    if source.kind == "mode_energy":
        k0 = source.target
        weight = sum(s for k, s in zip(ks, sigmas) if k == k0)
        if weight == 0:
            return 0j
        return 1j * es.nu[k0] * anharmonic_coefficient(es, *ks) * weight
    i = es.index(source.target)
    k1, k2 = ks
    eta = es.eta
    v = es.vectors
    grad = v[i - 1, k1] - v[i, k1]
    return 0.5j * eta * grad * v[i, k2] * math.sqrt(es.nu[k2] / es.nu[k1]) * sigmas[1]


def _source_rows(source: Source, es: EigenSystem, modes: np.ndarray, tensor: np.ndarray):
    """0이 아닌 f⁽¹⁾ 순서 행 (ks 전역, sigmas, coeffs)"""
    m = len(modes)
    if source.kind == "current":
        i = es.index(source.target)
        eta = es.eta
        v = es.vectors[:, modes]
        nu = es.nu[modes]
        idx = _index_tuples(m, 2)
        signs = _sign_patterns(2)
        base = 0.5j * eta * (v[i - 1, idx[:, 0]] - v[i, idx[:, 0]]) * v[i, idx[:, 1]] * np.sqrt(nu[idx[:, 1]] / nu[idx[:, 0]])
        coeffs = (base[:, None] * signs[None, :, 1]).reshape(-1)
        ks = np.repeat(modes[idx], len(signs), axis=0)
        sig = np.tile(signs, (len(idx), 1))
    else:
        k0 = source.target
        idx = _index_tuples(m, 4)
        signs = _sign_patterns(4)
        hits = (modes[idx] == k0).astype(float)                    # (T, 4)
        weight = hits @ signs.T.astype(float)                      # (T, 16)
        h = tensor[idx[:, 0], idx[:, 1], idx[:, 2], idx[:, 3]]
        coeffs = (1j * es.nu[k0] * h[:, None] * weight).reshape(-1)
        ks = np.repeat(modes[idx], len(signs), axis=0)
        sig = np.tile(signs, (len(idx), 1))
    keep = coeffs != 0
    return ks[keep], sig[keep], coeffs[keep]


def source_f1(source: Source, es: EigenSystem, modes=None) -> ModePolynomial:
    """
    f⁽¹⁾ 병합 다항식 (𝒮 항 제거)

    Raises:
        ValueError: 전류 소스가 왼쪽 끝이거나 모드 인덱스가 범위 밖인 경우
    """
    _check_source(source, es)
    modes = np.arange(es.n) if modes is None else np.asarray(modes, dtype=np.int64)
    tensor = anharmonic_tensor(es, modes) if source.kind == "mode_energy" else None
    ks, sig, coeffs = _source_rows(source, es, modes, tensor)
    poly = _rows_to_polynomial(modes, ks, sig, np.ones_like(sig, dtype=bool), coeffs)
    poly, _ = poly.drop_resonant()
    return poly


def source_mass(source: Source, es: EigenSystem, modes) -> tuple[float, float]:
    """
    Σ|f̂⁽¹⁾| (모든 모드, modes 제한), TRUNCATED 모드의 잘린 질량 보고용
    """
    modes = np.asarray(modes)
    nu = es.nu
    v = es.vectors
    if source.kind == "current":
        i = es.index(source.target)
        eta = es.eta
        a = np.abs(v[i - 1] - v[i]) / np.sqrt(nu)
        b = np.abs(v[i]) * np.sqrt(nu)
        total = 2.0 * eta * a.sum() * b.sum()
        inside = 2.0 * eta * a[modes].sum() * b[modes].sum()
        return float(total), float(inside)

    k0 = source.target

    def _mass(sub: np.ndarray) -> float:
        phi = v[:, sub] / np.sqrt(nu[sub])
        h3 = np.abs(np.einsum("x,xa,xb,xc->abc", v[:, k0] / math.sqrt(nu[k0]), phi, phi, phi, optimize=True)) / 16.0
        hit = (sub == k0).astype(int)
        count = 1 + hit[:, None, None] + hit[None, :, None] + hit[None, None, :]
        weight = 2.0 ** (4 - count) * _SIGN_SUM_ABS[count] / count
        return float(4.0 * nu[k0] * np.sum(h3 * weight))

    return _mass(np.arange(es.n)), _mass(modes)


# ---------------------------------------------------------------------------
# 병합 재귀
# ---------------------------------------------------------------------------

def solve_cohomological(
    f: ModePolynomial,
    es: EigenSystem,
    threshold: float = NEAR_RESONANCE_THRESHOLD,
) -> ModePolynomial:
    """
    −{H_har, u} = f 의 해 û = −i f̂ / Δ

    Raises:
        NearResonanceError: 𝒮 밖 단항식의 |Δ| < threshold (나누지 않고 중단)
        NumericalAbort: 무작위 위상 점 검증의 상대 잔차가 1e-10을 넘는 경우
    """
    f = f.merge()
    f, removed = f.drop_resonant()
    if removed > 1e-10 * max(f.mass(), 1e-300):
        logger.warning(f"f의 𝒮 성분이 0이 아닙니다 (제거된 질량 {removed:.3e})")
    if not len(f):
        return ModePolynomial.zero(f.modes)
    delta = f.deltas(es)
    small = np.abs(delta) < threshold
    if small.any():
        t = int(np.flatnonzero(small)[0])
        mono = next(iter(ModePolynomial(f.modes, f.plus[t:t + 1], f.minus[t:t + 1], [1.0]).terms()))
        raise NearResonanceError(float(delta[t]), mono.factors, threshold)
    u = ModePolynomial(f.modes, f.plus, f.minus, -1j * f.coeffs / delta, merged=True)
    verify_cohomological(f, u, es)
    return u


def verify_cohomological(
    f: ModePolynomial,
    u: ModePolynomial,
    es: EigenSystem,
    n_states: int = COHOMOLOGICAL_CHECK_STATES,
    tol: float = COHOMOLOGICAL_CHECK_TOL,
) -> float:
    """
    고정 스트림의 무작위 위상 점에서 −{H_har, u} = f 를 확인하고 상대 잔차를 돌려줍니다.

    척도는 max(|f|, Σ_t |û_t| Σ_l ν_l (e⁺_l + e⁻_l) Π|a|^e) 입니다.

    Raises:
        NumericalAbort: 상대 잔차가 tol을 넘는 경우
    """
    stream = derive_stream(0, "cohomological_check", es.n)
    shape = (n_states, es.n)
    a_plus = (stream.standard_normal(shape) + 1j * stream.standard_normal(shape)) / math.sqrt(2.0)
    state = from_modes(a_plus, es)

    f_val = np.atleast_1d(evaluate(f, state, es))
    h_grad = gradient(harmonic_polynomial(es, u.modes), state, es)
    bracket = np.atleast_1d(poisson_bracket(h_grad, gradient(u, state, es)))

    weights = (u.plus + u.minus).astype(float) @ es.nu[u.modes]
    magnitude = ModePolynomial(u.modes, u.plus, u.minus, np.abs(u.coeffs) * weights, merged=True)
    terms = np.atleast_1d(evaluate(magnitude, from_modes(np.abs(a_plus), es), es))

    scale = max(float(np.max(np.abs(f_val))), float(np.max(np.abs(terms))), 1e-300)
    relative = float(np.max(np.abs(f_val + bracket))) / scale
    if relative > tol:
        raise NumericalAbort(f"호몰로지 방정식 검증 실패: 상대 잔차 {relative:.3e} > {tol:.1e}")
    return relative


def bracket_with_anharmonic(
    u: ModePolynomial,
    es: EigenSystem,
    cubics: Optional[list] = None,
    budget: float = DEFAULT_TERM_BUDGET,
) -> ModePolynomial:
    """
    {H_an, u} = i Σ_l G_l (∂u/∂a⁻_l − ∂u/∂a⁺_l), 𝒮 항 제거

    Raises:
        BudgetExceededError: 모드별 곱의 병합 전 항 수가 budget을 넘는 경우
    """
    u = u.merge()
    if cubics is None:
        cubics = cubic_polynomials(es, u.modes)
    if len(cubics) != u.n_modes:
        raise ValueError(f"G_l 개수({len(cubics)})가 모드 수({u.n_modes})와 다릅니다")
    parts = []
    for l in range(u.n_modes):
        d = u.derivative(l, -1) - u.derivative(l, +1)
        if not len(d):
            continue
        parts.append(cubics[l].multiply(d, budget).scale(1j))
    if not parts:
        return ModePolynomial.zero(u.modes)
    total = ModePolynomial(
        u.modes,
        np.concatenate([p.plus for p in parts]),
        np.concatenate([p.minus for p in parts]),
        np.concatenate([p.coeffs for p in parts]),
    ).merge()
    total, _ = total.drop_resonant()
    return total


# ---------------------------------------------------------------------------
# 비병합 원장
# ---------------------------------------------------------------------------

@dataclass
class TermLedger:
    """
    항별 전체 인덱스 튜플(소스 + 각 단계의 H_an 4-튜플), 생존 마스크, 분자,
    분모 사슬 Δ₁, Δ₂, …, 축약 이력 (s, t)

    계수 = numerator / Π denominators
    """

    kind: str                    # f, u, g
    order: int
    modes: np.ndarray
    full_k: np.ndarray           # (R, D) 전역 모드 인덱스
    full_sigma: np.ndarray       # (R, D) ±1
    alive: np.ndarray            # (R, D)
    numerator: np.ndarray        # (R,)
    denominators: np.ndarray     # (R, c)
    pairs: np.ndarray            # (R, order−1, 2)

    def __len__(self) -> int:
        return len(self.numerator)

    @property
    def coefficients(self) -> np.ndarray:
        if self.denominators.shape[1] == 0:
            return self.numerator.copy()
        return self.numerator / np.prod(self.denominators, axis=1)

    @property
    def degree(self) -> int:
        return int(self.alive[0].sum()) if len(self) else 0

    def monomial(self, r: int) -> ModeMonomial:
        a = self.alive[r]
        return ModeMonomial.of(self.full_k[r, a].tolist(), self.full_sigma[r, a].tolist())

    def exponents(self) -> tuple[np.ndarray, np.ndarray]:
        R, D = self.full_k.shape
        cols = np.searchsorted(self.modes, self.full_k)
        plus = np.zeros((R, len(self.modes)), dtype=EXPONENT_DTYPE)
        minus = np.zeros_like(plus)
        rows = np.repeat(np.arange(R), D).reshape(R, D)
        pos = self.alive & (self.full_sigma > 0)
        neg = self.alive & (self.full_sigma < 0)
        np.add.at(plus, (rows[pos], cols[pos]), 1)
        np.add.at(minus, (rows[neg], cols[neg]), 1)
        return plus, minus

    def resonant_mask(self) -> np.ndarray:
        """생존 집합이 𝒮 에 속하는 행"""
        plus, minus = self.exponents()
        return np.all(plus == minus, axis=1)

    def keys(self) -> dict:
        """{(전체 (k,σ) 튜플, 축약 쌍 튜플): 계수}"""
        coeffs = self.coefficients
        out = {}
        for r in range(len(self)):
            factors = tuple(zip(self.full_k[r].tolist(), self.full_sigma[r].tolist()))
            pairs = tuple(tuple(p) for p in self.pairs[r].tolist())
            out[(factors, pairs)] = complex(coeffs[r])
        return out

    def records(self) -> Iterator[dict]:
        for r in range(len(self)):
            a = self.alive[r]
            yield {
                "kind": self.kind,
                "order": self.order,
                "monomial": [[int(k), int(s)] for k, s in zip(self.full_k[r, a], self.full_sigma[r, a])],
                "numerator": [float(self.numerator[r].real), float(self.numerator[r].imag)],
                "denominators": [float(d) for d in self.denominators[r]],
                "provenance": [[int(s), int(t)] for s, t in self.pairs[r]],
            }


def source_ledger(source: Source, es: EigenSystem, modes, tensor: Optional[np.ndarray] = None) -> TermLedger:
    modes = np.asarray(modes, dtype=np.int64)
    if tensor is None and source.kind == "mode_energy":
        tensor = anharmonic_tensor(es, modes)
    ks, sig, coeffs = _source_rows(source, es, modes, tensor)
    R, D = ks.shape
    ledger = TermLedger(
        kind="f",
        order=1,
        modes=modes,
        full_k=ks.astype(np.int32),
        full_sigma=sig.astype(np.int8),
        alive=np.ones((R, D), dtype=bool),
        numerator=coeffs.astype(complex),
        denominators=np.zeros((R, 0)),
        pairs=np.zeros((R, 0, 2), dtype=np.int32),
    )
    return _select(ledger, ~ledger.resonant_mask())


def solve_ledger(
    f: TermLedger,
    es: EigenSystem,
    threshold: float = NEAR_RESONANCE_THRESHOLD,
) -> TermLedger:
    """
    u 원장: 생존 집합이 𝒮 인 행 제거(χ_{𝒮ᶜ}), 분자 × (−i), 분모 사슬에 Δ(생존 집합) 추가

    Raises:
        NearResonanceError: 𝒮 밖 행의 |Δ| < threshold
    """
    keep = ~f.resonant_mask()
    nu = es.nu
    delta = np.sum(np.where(f.alive, f.full_sigma * nu[f.full_k], 0.0), axis=1)
    small = keep & (np.abs(delta) < threshold)
    if small.any():
        r = int(np.flatnonzero(small)[0])
        raise NearResonanceError(float(delta[r]), f.monomial(r).factors, threshold)
    return TermLedger(
        kind="u",
        order=f.order,
        modes=f.modes,
        full_k=f.full_k[keep],
        full_sigma=f.full_sigma[keep],
        alive=f.alive[keep],
        numerator=-1j * f.numerator[keep],
        denominators=np.concatenate([f.denominators[keep], delta[keep, None]], axis=1),
        pairs=f.pairs[keep],
    )


def ledger_bracket_size(u: TermLedger) -> int:
    """bracket_ledger가 만들 행 수 R·d·4·8m³"""
    m = len(u.modes)
    return len(u) * u.degree * 4 * 8 * m ** 3


def bracket_ledger(
    u: TermLedger,
    es: EigenSystem,
    tensor: Optional[np.ndarray] = None,
    budget: float = DEFAULT_TERM_BUDGET,
    floor: float = 0.0,
    kind: str = "f",
) -> tuple[TermLedger, float]:
    """
    {H_an, u} 원장: 생존 인자 s 와 H_an 위치 h 의 모든 단일 축약
    (k'_h = k_s, σ'_h = −τ_s, 인자 iσ'_h Ĥ_an(k')), 생존 집합이 𝒮 인 행은 저장하지 않음

    Returns:
        (원장, floor 미만으로 버린 계수 질량)

    Raises:
        BudgetExceededError: 예상 행 수가 budget을 넘는 경우 (할당 전에 거부)
    """
    modes = u.modes
    m = len(modes)
    count = ledger_bracket_size(u)
    if count > budget:
        raise BudgetExceededError("원장 항", count, int(budget))
    tensor = anharmonic_tensor(es, modes) if tensor is None else tensor

    R, D = u.full_k.shape
    if R == 0:
        empty = TermLedger(kind, u.order + 1, modes, np.zeros((0, D + 4), np.int32), np.zeros((0, D + 4), np.int8),
                           np.zeros((0, D + 4), bool), np.zeros(0, complex), np.zeros((0, u.denominators.shape[1])),
                           np.zeros((0, u.order, 2), np.int32))
        return empty, 0.0

    d = u.degree
    rows, pos = np.nonzero(u.alive)
    rows = rows.reshape(R, d).reshape(-1)
    pos = pos.reshape(R, d).reshape(-1)
    k_s = u.full_k[rows, pos].astype(np.int64)
    tau_s = u.full_sigma[rows, pos].astype(np.int64)
    local_s = np.searchsorted(modes, k_s)

    free_k = _index_tuples(m, 3)
    free_s = _sign_patterns(3)
    F_k = np.repeat(free_k, len(free_s), axis=0)
    F_s = np.tile(free_s, (len(free_k), 1))
    F = len(F_k)

    P = len(rows)
    pair = np.repeat(np.arange(P), 4 * F)
    h = np.tile(np.repeat(np.arange(4), F), P)
    combo = np.tile(np.arange(F), P * 4)

    hk = np.empty((len(pair), 4), dtype=np.int32)
    hs = np.empty((len(pair), 4), dtype=np.int8)
    for p in range(4):
        slot = np.clip(p - (p > h), 0, 2)
        at_h = h == p
        hk[:, p] = np.where(at_h, k_s[pair], modes[F_k[combo, slot]])
        hs[:, p] = np.where(at_h, -tau_s[pair], F_s[combo, slot])

    src = rows[pair]
    h_local = F_k[combo]
    hval = tensor[local_s[pair], h_local[:, 0], h_local[:, 1], h_local[:, 2]]
    numerator = u.numerator[src] * (-1j * tau_s[pair]) * hval

    alive_old = u.alive[src].copy()
    alive_old[np.arange(len(pair)), pos[pair]] = False
    alive_new = np.ones((len(pair), 4), dtype=bool)
    alive_new[np.arange(len(pair)), h] = False

    new_pair = np.stack([pos[pair], D + h], axis=1).astype(np.int32)[:, None, :]
    ledger = TermLedger(
        kind=kind,
        order=u.order + 1,
        modes=modes,
        full_k=np.concatenate([u.full_k[src], hk], axis=1),
        full_sigma=np.concatenate([u.full_sigma[src], hs], axis=1),
        alive=np.concatenate([alive_old, alive_new], axis=1),
        numerator=numerator,
        denominators=u.denominators[src],
        pairs=np.concatenate([u.pairs[src], new_pair], axis=1),
    )
    keep = (ledger.numerator != 0) & ~ledger.resonant_mask()
    dropped = 0.0
    if floor > 0:
        mags = np.abs(ledger.coefficients)
        small = mags < floor
        dropped = float(mags[small & keep].sum())
        keep &= ~small
    if not keep.all():
        ledger = _select(ledger, keep)
    return ledger, dropped


def _select(ledger: TermLedger, mask: np.ndarray) -> TermLedger:
    return TermLedger(
        ledger.kind, ledger.order, ledger.modes,
        ledger.full_k[mask], ledger.full_sigma[mask], ledger.alive[mask],
        ledger.numerator[mask], ledger.denominators[mask], ledger.pairs[mask],
    )


def ledger_to_polynomial(ledger: TermLedger) -> ModePolynomial:
    """원장 병합 (병합 재귀 결과와 같아야 함)"""
    plus, minus = ledger.exponents()
    poly = ModePolynomial(ledger.modes, plus, minus, ledger.coefficients).merge()
    if ledger.kind in ("f", "g"):
        poly, _ = poly.drop_resonant()
    return poly


def write_ledger_jsonl(ledger: TermLedger, path: Path) -> int:
    """한 줄에 한 항씩 JSONL로 내보내고 줄 수를 돌려줍니다."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for record in ledger.records():
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    logger.debug(f"원장 {ledger.kind}⁽{ledger.order}⁾ {count:,}행 저장: {path}")
    return count


# ---------------------------------------------------------------------------
# 전개 조립
# ---------------------------------------------------------------------------

@dataclass
class Expansion:
    source: Source
    config: ExpansionConfig
    modes: np.ndarray
    f_orders: list
    u_orders: list
    g: ModePolynomial
    f_ledgers: list = field(default_factory=list)
    u_ledgers: list = field(default_factory=list)
    g_ledger: Optional[TermLedger] = None
    dropped_mass: float = 0.0

    @property
    def order(self) -> int:
        return len(self.u_orders)

    @property
    def u_series(self) -> LambdaSeries:
        return LambdaSeries(self.u_orders)

    def u_at(self, lam: float) -> ModePolynomial:
        """Σ λ^{i−1} u⁽ⁱ⁾"""
        return self.u_series.at(lam)

    def summary(self) -> dict:
        return {
            "source": self.source.label,
            "order": self.order,
            "mode": self.config.mode,
            "modes": len(self.modes),
            "f_terms": [len(p) for p in self.f_orders],
            "u_terms": [len(p) for p in self.u_orders],
            "g_terms": len(self.g),
            "ledger_rows": [len(l) for l in self.u_ledgers],
            "g_ledger_rows": len(self.g_ledger) if self.g_ledger is not None else None,
            "dropped_mass": self.dropped_mass,
        }


def build_expansion(source: Source, es: EigenSystem, cfg: Optional[ExpansionConfig] = None) -> Expansion:
    """
    n번의 solve_cohomological / bracket_with_anharmonic 반복으로 u⁽¹⁾..u⁽ⁿ⁾, g = f⁽ⁿ⁺¹⁾ 생성

    원장은 f⁽ⁱ⁾, u⁽ⁱ⁾ (i ≤ n)는 항상, g 원장은 예산 안에 들어올 때만 만듭니다.

    Raises:
        NearResonanceError: 근공명 분모
        BudgetExceededError: 모드 수 또는 항 개수 예산 초과
    """
    cfg = cfg or ExpansionConfig()
    modes = select_modes(source, es, cfg)
    tensor = anharmonic_tensor(es, modes)
    cubics = cubic_polynomials(es, modes, tensor)

    dropped = 0.0
    if cfg.mode == "truncated":
        total, inside = source_mass(source, es, modes)
        dropped += max(total - inside, 0.0)

    f = source_f1(source, es, modes)
    f, lost = f.drop_below(cfg.numerator_floor)
    dropped += lost
    f_orders, u_orders = [f], []
    for i in range(1, cfg.order + 1):
        u = solve_cohomological(f_orders[-1], es, cfg.resonance_threshold)
        u, lost = u.drop_below(cfg.numerator_floor)
        dropped += lost
        u_orders.append(u)
        f = bracket_with_anharmonic(u, es, cubics, cfg.term_budget)
        f, lost = f.drop_below(cfg.numerator_floor)
        dropped += lost
        if i < cfg.order:
            f_orders.append(f)
    g = f

    expansion = Expansion(source, cfg, modes, f_orders, u_orders, g, dropped_mass=dropped)
    if cfg.ledger:
        _attach_ledgers(expansion, es, tensor)
    logger.debug(f"섭동 전개 완료: {expansion.summary()}")
    return expansion


def _attach_ledgers(expansion: Expansion, es: EigenSystem, tensor: np.ndarray) -> None:
    cfg = expansion.config
    f_led = source_ledger(expansion.source, es, expansion.modes, tensor)
    f_ledgers, u_ledgers = [f_led], []
    for i in range(1, cfg.order + 1):
        u_led = solve_ledger(f_ledgers[-1], es, cfg.resonance_threshold)
        u_ledgers.append(u_led)
        if i < cfg.order:
            size = ledger_bracket_size(u_led)
            if size > cfg.term_budget:
                logger.info(
                    f"{i + 1}차 이상 원장 생략: 예상 {size:,}행 > 예산 {int(cfg.term_budget):,}행 "
                    f"(병합 계수로 대체)"
                )
                break
            nxt, _ = bracket_ledger(u_led, es, tensor, cfg.term_budget, cfg.numerator_floor)
            f_ledgers.append(nxt)
    expansion.f_ledgers = f_ledgers
    expansion.u_ledgers = u_ledgers
    if len(u_ledgers) < cfg.order:
        return

    size = ledger_bracket_size(u_ledgers[-1])
    if size <= cfg.term_budget:
        expansion.g_ledger, _ = bracket_ledger(u_ledgers[-1], es, tensor, cfg.term_budget, cfg.numerator_floor, kind="g")
    else:
        logger.info(f"g 원장 생략: 예상 {size:,}행 > 예산 {int(cfg.term_budget):,}행 (병합 g 계수로 대체)")


# ---------------------------------------------------------------------------
# 닫힌 형태 원장 (재귀 원장 검증용)
# ---------------------------------------------------------------------------

def _resonant(factors) -> bool:
    return ModeMonomial(tuple(factors)).is_resonant() if factors else True


def _closed_form_coefficient(source, es, factors, pairs, d1, solved: bool) -> complex:
    """
    f̂_src × Π_j [iσ'_{t_j} Ĥ_an(k'_j)] × Π_j [−i/Δ_j] × χ

    Δ_j 는 j번째 단계 이전까지의 전체 인자 튜플에서 σν 합 (축약된 쌍은 상쇄)
    """
    ks = [k for k, _ in factors]
    ss = [s for _, s in factors]
    nu = es.nu
    coef = source_coefficient(source, es, ks[:d1], ss[:d1])
    steps = len(pairs)
    dead: set = set()
    for j in range(steps + (1 if solved else 0)):
        width = d1 + 4 * j
        alive = [factors[p] for p in range(width) if p not in dead]
        if _resonant(alive):
            return 0j
        delta = sum(s * nu[k] for k, s in factors[:width])
        coef *= -1j / delta
        if j == steps:
            break
        s, t = pairs[j]
        hk = ks[width:width + 4]
        coef *= 1j * ss[t] * anharmonic_coefficient(es, *hk)
        dead.update((s, t))
    if not solved:
        alive = [factors[p] for p in range(d1 + 4 * steps) if p not in dead]
        if _resonant(alive):
            return 0j
    return coef


def _structures(modes, d1, steps, source, es) -> Iterator[tuple]:
    """(전체 인자 튜플, 축약 쌍) 구조 열거"""
    for src_k in itertools.product(modes, repeat=d1):
        for src_s in itertools.product((1, -1), repeat=d1):
            if source_coefficient(source, es, src_k, src_s) == 0:
                continue
            yield from _extend(list(zip(src_k, src_s)), [], set(), steps, modes)


def _extend(factors, pairs, dead, steps, modes):
    if steps == 0:
        yield tuple(factors), tuple(pairs)
        return
    width = len(factors)
    alive = [p for p in range(width) if p not in dead]
    for hk in itertools.product(modes, repeat=4):
        for hs in itertools.product((1, -1), repeat=4):
            for s in alive:
                ks, ss = factors[s]
                for t in range(4):
                    if hk[t] != ks or hs[t] != -ss:
                        continue
                    yield from _extend(
                        factors + list(zip(hk, hs)),
                        pairs + [(s, width + t)],
                        dead | {s, width + t},
                        steps - 1,
                        modes,
                    )


def closed_form_ledger(source: Source, es: EigenSystem, order: int, modes=None, include_g: bool = False) -> dict:
    """
    f⁽ⁱ⁾, u⁽ⁱ⁾ (i ≤ order)의 닫힌 형태 항 사전 {("f"|"u"|"g", i): {key: 계수}}

    순수 파이썬 열거이므로 아주 작은 구간에서만 사용합니다.
    """
    _check_source(source, es)
    modes = [int(k) for k in (range(es.n) if modes is None else modes)]
    d1 = source.degree
    out = {}
    last = order + 1 if include_g else order
    for i in range(1, last + 1):
        kind = "g" if i == order + 1 else "f"
        f_terms, u_terms = {}, {}
        for factors, pairs in _structures(modes, d1, i - 1, source, es):
            c = _closed_form_coefficient(source, es, factors, pairs, d1, solved=False)
            if c != 0:
                f_terms[(factors, pairs)] = c
            if kind == "f":
                cu = _closed_form_coefficient(source, es, factors, pairs, d1, solved=True)
                if cu != 0:
                    u_terms[(factors, pairs)] = cu
        out[(kind, i)] = f_terms
        if kind == "f":
            out[("u", i)] = u_terms
    return out


# ---------------------------------------------------------------------------
# 잔차
# ---------------------------------------------------------------------------

@dataclass
class ResidualReport:
    residual: np.ndarray
    f_value: np.ndarray
    bracket_value: np.ndarray
    g_value: np.ndarray

    @property
    def scale(self) -> float:
        return float(max(np.max(np.abs(self.f_value)), np.max(np.abs(self.bracket_value)),
                         np.max(np.abs(self.g_value)), 1e-300))

    @property
    def relative(self) -> float:
        return float(np.max(np.abs(self.residual))) / self.scale


def residual(
    expansion: Expansion,
    state: ChainState,
    realization: DisorderRealization,
    es: EigenSystem,
    lam: float,
) -> ResidualReport:
    """
    f + {H, u} − λⁿ g 를 전체 H의 명시적 기울기로 점별 계산
    (EXACT 모드 전개에서 0이어야 함)
    """
    u = expansion.u_at(lam)
    f_val = np.atleast_1d(evaluate(expansion.f_orders[0], state, es))
    g_val = np.atleast_1d(evaluate(expansion.g, state, es)) * lam ** expansion.order
    br = np.atleast_1d(poisson_bracket(hamiltonian_gradient(state, realization, lam), gradient(u, state, es)))
    return ResidualReport(f_val + br - g_val, f_val, br, g_val)
