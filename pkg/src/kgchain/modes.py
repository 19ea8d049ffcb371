"""
모드 다항식 모듈 - a±_k 변수의 다항식 표현과 수치 평가

    a±_k = (ν_k^{1/2} [q,ψ_k] ∓ i ν_k^{−1/2} [p,ψ_k]) / √2

푸아송 괄호 규약은 {f, g} = ∇_q f·∇_p g − ∇_p f·∇_q g 이며,
이 규약에서 {a⁺_k, a⁻_k} = i, {a^σ_k, a^σ'_k'} = iσ δ(σ+σ') δ(k−k') 입니다.

다항식은 항마다 모드별 지수 (e⁺_l, e⁻_l) 행렬과 복소 계수로 저장합니다.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import ZERO_COEFFICIENT_TOL
from .errors import BudgetExceededError
from .model import ChainState, DisorderRealization, force
from .spectral import EigenSystem

logger = logging.getLogger(__name__)

EXPONENT_DTYPE = np.int16

# 평가 시 (상태 수 × 항 수) 블록 크기
EVAL_CHUNK = 2_000_000


@dataclass(frozen=True, order=True)
class ModeMonomial:
    """(k, σ) 쌍을 (k, σ) 순으로 정렬한 정준형, σ ∈ {+1, −1}"""

    factors: tuple

    def __post_init__(self):
        for k, s in self.factors:
            if s not in (1, -1):
                raise ValueError(f"σ는 +1 또는 −1이어야 합니다 (현재: {s})")
        object.__setattr__(self, "factors", tuple(sorted((int(k), int(s)) for k, s in self.factors)))

    @classmethod
    def of(cls, ks: Sequence[int], sigmas: Sequence[int]) -> "ModeMonomial":
        if len(ks) != len(sigmas):
            raise ValueError(f"모드 수({len(ks)})와 부호 수({len(sigmas)})가 다릅니다")
        return cls(tuple(zip(ks, sigmas)))

    @property
    def degree(self) -> int:
        return len(self.factors)

    def delta(self, nu: np.ndarray) -> float:
        """Δ(k, σ) = Σ_j σ_j ν_{k_j} (nu는 전역 모드 인덱스로 접근)"""
        return float(sum(s * nu[k] for k, s in self.factors))

    def is_resonant(self) -> bool:
        """(k,+)와 (k,−) 쌍으로 남김없이 나뉘면 𝒮에 속함"""
        balance: dict[int, int] = {}
        for k, s in self.factors:
            balance[k] = balance.get(k, 0) + s
        return all(v == 0 for v in balance.values())

    def conjugate(self) -> "ModeMonomial":
        return ModeMonomial(tuple((k, -s) for k, s in self.factors))

    def __str__(self) -> str:
        return "·".join(f"a{'+' if s > 0 else '-'}_{k}" for k, s in self.factors) or "1"


class ModePolynomial:
    """
    Σ_t c_t Π_l (a⁺_l)^{plus[t,l]} (a⁻_l)^{minus[t,l]}

    modes[l]는 열 l의 전역 모드 인덱스입니다. merged=True 이면 같은 단항식이
    한 번만 나타나고 0 계수(최대 크기 대비 1e-14 이하)가 없습니다.
    """

    def __init__(self, modes, plus, minus, coeffs, merged: bool = False):
        self.modes = np.asarray(modes, dtype=np.int64)
        m = len(self.modes)
        self.plus = np.asarray(plus, dtype=EXPONENT_DTYPE).reshape(-1, m)
        self.minus = np.asarray(minus, dtype=EXPONENT_DTYPE).reshape(-1, m)
        self.coeffs = np.asarray(coeffs, dtype=complex).reshape(-1)
        if not (len(self.plus) == len(self.minus) == len(self.coeffs)):
            raise ValueError(
                f"지수/계수 행 수가 다릅니다 ({len(self.plus)}, {len(self.minus)}, {len(self.coeffs)})"
            )
        self.merged = merged

    # 생성

    @classmethod
    def zero(cls, modes) -> "ModePolynomial":
        m = len(modes)
        return cls(modes, np.zeros((0, m)), np.zeros((0, m)), np.zeros(0), merged=True)

    @classmethod
    def constant(cls, value: complex, modes) -> "ModePolynomial":
        m = len(modes)
        return cls(modes, np.zeros((1, m)), np.zeros((1, m)), [value]).merge()

    @classmethod
    def from_terms(cls, terms: dict, modes=None) -> "ModePolynomial":
        """{ModeMonomial: 계수} 에서 생성"""
        if modes is None:
            modes = sorted({k for mono in terms for k, _ in mono.factors})
        modes = np.asarray(modes, dtype=np.int64)
        column = {int(k): i for i, k in enumerate(modes)}
        plus = np.zeros((len(terms), len(modes)), dtype=EXPONENT_DTYPE)
        minus = np.zeros_like(plus)
        coeffs = np.zeros(len(terms), dtype=complex)
        for t, (mono, c) in enumerate(terms.items()):
            for k, s in mono.factors:
                if k not in column:
                    raise ValueError(f"모드 {k}가 모드 목록에 없습니다")
                (plus if s > 0 else minus)[t, column[k]] += 1
            coeffs[t] = c
        return cls(modes, plus, minus, coeffs).merge()

    # 기본 속성

    def __len__(self) -> int:
        return len(self.coeffs)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def degrees(self) -> np.ndarray:
        return (self.plus.sum(axis=1) + self.minus.sum(axis=1)).astype(int)

    @property
    def degree(self) -> int:
        return int(self.degrees.max()) if len(self) else 0

    def is_zero(self) -> bool:
        return len(self.merge()) == 0

    def terms(self) -> dict:
        """{ModeMonomial: 계수} (병합 후)"""
        poly = self.merge()
        out = {}
        for t in range(len(poly)):
            factors = []
            for l, k in enumerate(poly.modes):
                factors += [(int(k), 1)] * int(poly.plus[t, l]) + [(int(k), -1)] * int(poly.minus[t, l])
            out[ModeMonomial(tuple(factors))] = complex(poly.coeffs[t])
        return out

    def coefficient(self, monomial: ModeMonomial) -> complex:
        return self.terms().get(monomial, 0j)

    # 대수 연산

    def merge(self, tol: float = ZERO_COEFFICIENT_TOL) -> "ModePolynomial":
        """같은 단항식 계수를 합치고 |c| ≤ tol·max|c| 항을 제거"""
        if self.merged:
            return self
        if not len(self):
            return ModePolynomial.zero(self.modes)
        keys = np.concatenate([self.plus, self.minus], axis=1)
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        re = np.bincount(inverse, weights=self.coeffs.real, minlength=len(uniq))
        im = np.bincount(inverse, weights=self.coeffs.imag, minlength=len(uniq))
        coeffs = re + 1j * im
        scale = np.max(np.abs(self.coeffs))
        keep = np.abs(coeffs) > tol * scale
        m = self.n_modes
        return ModePolynomial(self.modes, uniq[keep, :m], uniq[keep, m:], coeffs[keep], merged=True)

    def scale(self, factor: complex) -> "ModePolynomial":
        return ModePolynomial(self.modes, self.plus, self.minus, self.coeffs * factor, self.merged)

    def embed(self, modes) -> "ModePolynomial":
        """더 큰 모드 목록으로 열을 옮깁니다."""
        modes = np.asarray(modes, dtype=np.int64)
        if np.array_equal(modes, self.modes):
            return self
        column = {int(k): i for i, k in enumerate(modes)}
        missing = [int(k) for k in self.modes if int(k) not in column]
        if missing:
            raise ValueError(f"새 모드 목록에 없는 모드가 있습니다: {missing}")
        idx = np.array([column[int(k)] for k in self.modes], dtype=np.int64)
        plus = np.zeros((len(self), len(modes)), dtype=EXPONENT_DTYPE)
        minus = np.zeros_like(plus)
        plus[:, idx] = self.plus
        minus[:, idx] = self.minus
        return ModePolynomial(modes, plus, minus, self.coeffs, self.merged)

    def _aligned(self, other: "ModePolynomial"):
        if np.array_equal(self.modes, other.modes):
            return self, other
        modes = np.union1d(self.modes, other.modes)
        return self.embed(modes), other.embed(modes)

    def __add__(self, other: "ModePolynomial") -> "ModePolynomial":
        a, b = self._aligned(other)
        return ModePolynomial(
            a.modes,
            np.concatenate([a.plus, b.plus]),
            np.concatenate([a.minus, b.minus]),
            np.concatenate([a.coeffs, b.coeffs]),
        ).merge()

    def __sub__(self, other: "ModePolynomial") -> "ModePolynomial":
        return self + other.scale(-1.0)

    def multiply(self, other: "ModePolynomial", budget: Optional[float] = None) -> "ModePolynomial":
        """
        Raises:
            BudgetExceededError: 병합 전 곱 항 수가 budget을 넘는 경우
        """
        a, b = self._aligned(other)
        rows = len(a) * len(b)
        if budget is not None and rows > budget:
            raise BudgetExceededError("다항식 곱 항", rows, int(budget))
        m = a.n_modes
        plus = (a.plus[:, None, :] + b.plus[None, :, :]).reshape(-1, m)
        minus = (a.minus[:, None, :] + b.minus[None, :, :]).reshape(-1, m)
        coeffs = (a.coeffs[:, None] * b.coeffs[None, :]).reshape(-1)
        return ModePolynomial(a.modes, plus, minus, coeffs).merge()

    def derivative(self, column: int, sign: int) -> "ModePolynomial":
        """∂/∂a^{sign}_{modes[column]}"""
        exps = self.plus if sign > 0 else self.minus
        rows = exps[:, column] > 0
        new = exps[rows].copy()
        power = new[:, column].astype(float)
        new[:, column] -= 1
        if sign > 0:
            plus, minus = new, self.minus[rows]
        else:
            plus, minus = self.plus[rows], new
        return ModePolynomial(self.modes, plus, minus, self.coeffs[rows] * power).merge()

    def conjugate_swap(self) -> "ModePolynomial":
        """σ → −σ 교환 (계수는 그대로)"""
        return ModePolynomial(self.modes, self.minus, self.plus, self.coeffs).merge()

    # 공명 집합과 분모

    def resonant_mask(self) -> np.ndarray:
        """𝒮 소속 항 (모든 모드에서 e⁺ = e⁻)"""
        return np.all(self.plus == self.minus, axis=1)

    def drop_resonant(self) -> tuple["ModePolynomial", float]:
        """χ_{𝒮ᶜ}: 𝒮 항을 제거하고 제거된 계수 크기 합을 돌려줍니다."""
        mask = self.resonant_mask()
        removed = float(np.sum(np.abs(self.coeffs[mask])))
        keep = ~mask
        return ModePolynomial(self.modes, self.plus[keep], self.minus[keep], self.coeffs[keep], self.merged), removed

    def drop_below(self, floor: float) -> tuple["ModePolynomial", float]:
        """|c| < floor 항을 제거하고 제거된 질량 Σ|c| 를 돌려줍니다."""
        if floor <= 0:
            return self, 0.0
        small = np.abs(self.coeffs) < floor
        keep = ~small
        dropped = float(np.sum(np.abs(self.coeffs[small])))
        return ModePolynomial(self.modes, self.plus[keep], self.minus[keep], self.coeffs[keep], self.merged), dropped

    def deltas(self, es: EigenSystem) -> np.ndarray:
        """항별 Δ = Σ_l (e⁺_l − e⁻_l) ν_{modes[l]}"""
        nu = es.nu[self.modes]
        return (self.plus.astype(float) - self.minus.astype(float)) @ nu

    def mass(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))

    def __repr__(self) -> str:
        return f"ModePolynomial(terms={len(self)}, modes={self.n_modes}, degree={self.degree})"


class LambdaSeries:
    """u = u⁽¹⁾ + λu⁽²⁾ + … + λ^{n−1}u⁽ⁿ⁾"""

    def __init__(self, orders: Sequence[ModePolynomial]):
        if not orders:
            raise ValueError("λ 급수에는 최소 한 개의 차수가 필요합니다")
        self.orders = list(orders)

    def __len__(self) -> int:
        return len(self.orders)

    def at(self, lam: float) -> ModePolynomial:
        total = self.orders[0]
        for i, poly in enumerate(self.orders[1:], start=1):
            total = total + poly.scale(lam ** i)
        return total


def to_modes(state: ChainState, es: EigenSystem) -> np.ndarray:
    """a⁺_k 값 (마지막 축이 모드). a⁻ 는 켤레입니다."""
    Q = np.asarray(state.q, dtype=float) @ es.vectors
    P = np.asarray(state.p, dtype=float) @ es.vectors
    nu = es.nu
    return (np.sqrt(nu) * Q - 1j * P / np.sqrt(nu)) / math.sqrt(2.0)


def from_modes(a_plus: np.ndarray, es: EigenSystem, t: float = 0.0) -> ChainState:
    """to_modes의 역변환"""
    a_plus = np.asarray(a_plus, dtype=complex)
    nu = es.nu
    Q = math.sqrt(2.0) * a_plus.real / np.sqrt(nu)
    P = -math.sqrt(2.0) * np.sqrt(nu) * a_plus.imag
    return ChainState(Q @ es.vectors.T, P @ es.vectors.T, t)


def _monomial_values(poly: ModePolynomial, a_plus: np.ndarray) -> np.ndarray:
    """(상태 수 B, 항 수 T) 복소 값의 합 Σ_t c_t m_t, 결과 shape (B,)"""
    ap = a_plus[:, poly.modes]
    am = np.conj(ap)
    B, T = ap.shape[0], len(poly)
    total = np.zeros(B, dtype=complex)
    if T == 0:
        return total
    chunk = max(1, EVAL_CHUNK // max(B, 1))
    active = [l for l in range(poly.n_modes) if poly.plus[:, l].any() or poly.minus[:, l].any()]
    for start in range(0, T, chunk):
        sl = slice(start, start + chunk)
        acc = np.broadcast_to(poly.coeffs[None, sl], (B, len(poly.coeffs[sl]))).copy()
        for l in active:
            ep = poly.plus[sl, l]
            em = poly.minus[sl, l]
            if ep.any():
                acc *= ap[:, l, None] ** ep[None, :]
            if em.any():
                acc *= am[:, l, None] ** em[None, :]
        total += acc.sum(axis=1)
    return total


def evaluate_complex(poly, state: ChainState, es: EigenSystem, lam: float = 1.0) -> np.ndarray:
    """복소 값 그대로 평가 (실수성 점검용)"""
    if isinstance(poly, LambdaSeries):
        poly = poly.at(lam)
    q = np.asarray(state.q, dtype=float)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(state.p))):
        raise ValueError("유한하지 않은 상태에서는 다항식을 평가할 수 없습니다")
    single = q.ndim == 1
    a_plus = np.atleast_2d(to_modes(state, es))
    values = _monomial_values(poly, a_plus)
    return values[0] if single else values


def evaluate(poly, state: ChainState, es: EigenSystem, lam: float = 1.0):
    """
    실제 (q, p)에서의 값 (실수부). LambdaSeries는 주어진 λ 에서 조립 후 평가합니다.

    Raises:
        ValueError: 유한하지 않은 상태
    """
    values = evaluate_complex(poly, state, es, lam)
    return np.real(values) if np.ndim(values) else float(np.real(values))


def _mode_derivatives(poly: ModePolynomial, a_plus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    B, m = a_plus.shape[0], poly.n_modes
    dplus = np.zeros((B, m), dtype=complex)
    dminus = np.zeros((B, m), dtype=complex)
    for l in range(m):
        dplus[:, l] = _monomial_values(poly.derivative(l, +1), a_plus)
        dminus[:, l] = _monomial_values(poly.derivative(l, -1), a_plus)
    return dplus, dminus


def gradient(poly, state: ChainState, es: EigenSystem, lam: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """
    연쇄 법칙으로 계산한 해석적 (∇_q F, ∇_p F)

        ∇_q F = Ψ [ (ν/2)^{1/2} (∂F/∂a⁺ + ∂F/∂a⁻) ]
        ∇_p F = Ψ [ −i (2ν)^{−1/2} (∂F/∂a⁺ − ∂F/∂a⁻) ]
    """
    if isinstance(poly, LambdaSeries):
        poly = poly.at(lam)
    single = np.ndim(state.q) == 1
    a_plus = np.atleast_2d(to_modes(state, es))
    dplus, dminus = _mode_derivatives(poly, a_plus)
    nu = es.nu[poly.modes]
    psi = es.vectors[:, poly.modes]
    gq = np.real((dplus + dminus) * np.sqrt(nu / 2.0)) @ psi.T
    gp = np.real(-1j * (dplus - dminus) / np.sqrt(2.0 * nu)) @ psi.T
    if single:
        return gq[0], gp[0]
    return gq, gp


def poisson_bracket(grad_f: tuple, grad_g: tuple) -> np.ndarray:
    """{f, g} = ∇_q f·∇_p g − ∇_p f·∇_q g (마지막 축 합)"""
    fq, fp = grad_f
    gq, gp = grad_g
    return np.sum(fq * gp - fp * gq, axis=-1)


def hamiltonian_gradient(state: ChainState, realization: DisorderRealization, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """전체 H의 (∇_q H, ∇_p H) = (−force, p)"""
    return -force(state, realization, lam), np.asarray(state.p, dtype=float)


def mode_energy_polynomial(es: EigenSystem, k: int) -> ModePolynomial:
    """E_k = ν_k a⁺_k a⁻_k"""
    return ModePolynomial([k], [[1]], [[1]], [es.nu[k]]).merge()


def harmonic_polynomial(es: EigenSystem, modes=None) -> ModePolynomial:
    """H_har = Σ_k ν_k a⁺_k a⁻_k"""
    modes = np.arange(es.n) if modes is None else np.asarray(modes)
    eye = np.eye(len(modes), dtype=EXPONENT_DTYPE)
    return ModePolynomial(modes, eye, eye, es.nu[modes]).merge()
