"""
Z 통계 모듈 - 원장 계수의 q-거듭제곱 합으로 만든 사이트별 Z(x)와 꼬리 통계

    G = C^q (Σ |ĝ|^q)²
    U = C^q (Σ_i λ^{(i−1)q} Σ |û⁽ⁱ⁾|^q)²

mode_energy 소스는 Z(x) = Σ_{k₀} |ψ_{k₀}(x)|² (G_{k₀} + U_{k₀}),
current 소스는 Z(x) = G_x + U_x 입니다.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .model import DisorderRealization, restrict
from .perturbation import Expansion, ExpansionConfig, Source, build_expansion
from .spectral import EigenSystem, fit_exponential_decay, solve
from .utils import LineFit, fit_line, fit_loglog

logger = logging.getLogger(__name__)

# mode_energy 소스에서 무시하는 |ψ_{k₀}(x)|² 하한
MODE_WEIGHT_FLOOR = 1e-12


@dataclass
class ZEstimate:
    site: int
    q: float
    value: float
    breakdown: dict = field(default_factory=dict)
    kind: str = "current"

    def to_dict(self) -> dict:
        return {"site": self.site, "q": self.q, "value": self.value, "kind": self.kind, **self.breakdown}


def _check_exponent(q: float) -> None:
    if not 0 < q < 1:
        raise ValueError(f"지수 q는 (0, 1) 범위여야 합니다 (현재: {q})")


def _g_coefficients(expansion: Expansion) -> np.ndarray:
    if expansion.g_ledger is not None:
        return expansion.g_ledger.coefficients
    return expansion.g.coeffs


def _u_coefficients(expansion: Expansion, i: int) -> np.ndarray:
    if i < len(expansion.u_ledgers):
        return expansion.u_ledgers[i].coefficients
    return expansion.u_orders[i].coeffs


def _power_sum(coeffs: np.ndarray, q: float) -> float:
    return float(np.sum(np.abs(coeffs) ** q))


def _source_weight(expansion: Expansion, es: EigenSystem, x: int) -> float:
    if expansion.source.kind == "mode_energy":
        return float(es.vectors[es.index(x), expansion.source.target] ** 2)
    if expansion.source.target != x:
        raise ValueError(f"전류 소스 위치({expansion.source.target})가 사이트 {x}와 다릅니다")
    return 1.0


def z_estimate(
    expansions: Union[Expansion, Sequence[Expansion]],
    es: EigenSystem,
    x: int,
    q: float,
    lam: float = 1.0,
    corr_constant: float = 1.0,
) -> ZEstimate:
    """
    원장(없으면 병합 계수)으로 Z(x) 계산

    breakdown의 "G"와 "U[i,i']" 항목을 모두 더하면 value와 정확히 같습니다.
    전개 목록이 비어 있으면 (빈 원장) Z = 0 입니다.

    Raises:
        ValueError: q ∉ (0,1) 인 경우
    """
    _check_exponent(q)
    if isinstance(expansions, Expansion):
        expansions = [expansions]
    if not expansions:
        return ZEstimate(x, q, 0.0, {"G": 0.0}, "empty")

    cq = corr_constant ** q
    breakdown: dict[str, float] = {"G": 0.0}
    for exp in expansions:
        w = _source_weight(exp, es, x)
        s_g = _power_sum(_g_coefficients(exp), q)
        breakdown["G"] += w * cq * s_g ** 2
        sums = [lam ** (i * q) * _power_sum(_u_coefficients(exp, i), q) for i in range(exp.order)]
        for i, si in enumerate(sums):
            for j, sj in enumerate(sums):
                key = f"U[{i + 1},{j + 1}]"
                breakdown[key] = breakdown.get(key, 0.0) + w * cq * si * sj
    value = float(sum(breakdown.values()))
    return ZEstimate(x, q, value, breakdown, expansions[0].source.kind)


def _factor_vector(expansion: Expansion, which: str, i: int, n1: np.ndarray, q: float) -> np.ndarray:
    """
    V[l] = Σ_항 Σ_{생존 인자 k_j = l} |c|^q (Π_생존 N1 / N1[l])^q
    """
    v = np.zeros(len(n1))
    ledger = expansion.g_ledger if which == "g" else (expansion.u_ledgers[i] if i < len(expansion.u_ledgers) else None)
    if ledger is not None:
        if not len(ledger):
            return v
        cq = np.abs(ledger.coefficients) ** q
        logs = np.where(ledger.alive, np.log(n1[ledger.full_k]), 0.0)
        total = logs.sum(axis=1)
        rows, cols = np.nonzero(ledger.alive)
        k = ledger.full_k[rows, cols]
        vals = cq[rows] * np.exp(q * (total[rows] - np.log(n1[k])))
        np.add.at(v, k, vals)
        return v

    poly = expansion.g if which == "g" else expansion.u_orders[i]
    if not len(poly):
        return v
    counts = (poly.plus + poly.minus).astype(float)
    logn = np.log(n1[poly.modes])
    total = counts @ logn
    cq = np.abs(poly.coeffs) ** q
    for col, l in enumerate(poly.modes):
        mask = counts[:, col] > 0
        v[l] += np.sum(counts[mask, col] * cq[mask] * np.exp(q * (total[mask] - logn[col])))
    return v


def z_kernel_estimate(
    expansions_by_site: dict,
    es: EigenSystem,
    x: int,
    q: float,
    decay_rate: float,
    lam: float = 1.0,
    corr_constant: float = 1.0,
) -> ZEstimate:
    """
    재규격화 전류용 Z(x): 사이트 쌍 (x, y) 상관을 커널
    Σ_{z,z'} |ψ_l(z)||ψ_l'(z')| e^{−c|z−z'|} 로 묶은 인수분해 상한

        Z(x) = C^q Σ_y [V^g_xᵀ M^{∘q} V^g_y + V^u_xᵀ M^{∘q} V^u_y]

    Raises:
        ValueError: q ∉ (0,1), decay_rate ≤ 0, x의 전개가 없는 경우
    """
    _check_exponent(q)
    if decay_rate <= 0:
        raise ValueError(f"decay_rate는 양수여야 합니다 (현재: {decay_rate})")
    if x not in expansions_by_site:
        raise ValueError(f"사이트 {x}의 전개가 없습니다")

    absv = np.abs(es.vectors)
    sites = es.sites.astype(float)
    kernel = np.exp(-decay_rate * np.abs(sites[:, None] - sites[None, :]))
    M = (absv.T @ kernel @ absv) ** q
    n1 = absv.sum(axis=0)

    def vectors(exp: Expansion):
        vg = _factor_vector(exp, "g", 0, n1, q)
        vu = sum(lam ** (i * q) * _factor_vector(exp, "u", i, n1, q) for i in range(exp.order))
        return vg, vu

    cache = {y: vectors(e) for y, e in expansions_by_site.items()}
    vg_x, vu_x = cache[x]
    vg_all = sum(v[0] for v in cache.values())
    vu_all = sum(v[1] for v in cache.values())
    cq = corr_constant ** q
    g_part = cq * float(vg_x @ M @ vg_all)
    u_part = cq * float(vu_x @ M @ vu_all)
    return ZEstimate(x, q, g_part + u_part, {"G": g_part, "U": u_part}, "current_kernel")


def z_at_site(
    es: EigenSystem,
    x: int,
    q: float,
    cfg: ExpansionConfig,
    kind: str = "current",
    lam: float = 1.0,
    corr_constant: float = 1.0,
) -> ZEstimate:
    """한 사이트의 Z(x) (전개 생성 포함)"""
    if kind == "current":
        exp = build_expansion(Source("current", x), es, cfg)
        return z_estimate(exp, es, x, q, lam, corr_constant)
    weights = es.vectors[es.index(x)] ** 2
    modes = np.flatnonzero(weights >= MODE_WEIGHT_FLOOR * weights.max())
    exps = [build_expansion(Source("mode_energy", int(k)), es, cfg) for k in modes]
    return z_estimate(exps, es, x, q, lam, corr_constant)


def z_profile(
    es: EigenSystem,
    q: float,
    cfg: ExpansionConfig,
    sites: Optional[Sequence[int]] = None,
    lam: float = 1.0,
) -> dict[int, ZEstimate]:
    """전류 소스 Z를 여러 사이트에서 (기본: 왼쪽 끝을 뺀 모든 사이트)"""
    sites = list(es.sites[1:]) if sites is None else list(sites)
    return {int(x): z_at_site(es, int(x), q, cfg, "current", lam) for x in sites}


@dataclass
class LocalApproxReport:
    site: int
    ell: int
    z_full: float
    z_local: float

    @property
    def difference(self) -> float:
        return abs(self.z_full - self.z_local)


def z_local_approx(
    realization: DisorderRealization,
    x: int,
    ell: int,
    q: float,
    cfg: ExpansionConfig,
    kind: str = "current",
    lam: float = 1.0,
    es: Optional[EigenSystem] = None,
) -> LocalApproxReport:
    """
    같은 무질서에서 Z_I(x)와 Z_{I(x,ℓ)}(x) 비교, I(x,ℓ) = [x−ℓ, x+ℓ] ∩ I

    Raises:
        ValueError: ell < 1
        BudgetExceededError: 전개 예산 초과
    """
    if ell < 1:
        raise ValueError(f"ell은 1 이상이어야 합니다 (현재: {ell})")
    a, b = realization.interval
    es = solve(realization) if es is None else es
    full = z_at_site(es, x, q, cfg, kind, lam).value
    sub = (max(a, x - ell), min(b, x + ell))
    if sub == (a, b):
        local = full
    else:
        local = z_at_site(solve(restrict(realization, sub)), x, q, cfg, kind, lam).value
    return LocalApproxReport(x, ell, full, local)


def bad_event_weights(z_values, M: float) -> tuple[np.ndarray, np.ndarray]:
    """
    w⁺(x) = min{|x−y|²: y > x, Z(y) ≤ M}, w⁻(x) = min{|x−y|²: y < x, Z(y) ≤ M}

    구간 바로 바깥은 Z ≡ 0 으로 취급합니다.
    """
    z = np.asarray(z_values, dtype=float)
    n = len(z)
    good = z <= M
    w_plus = np.empty(n)
    nxt = n
    for i in range(n - 1, -1, -1):
        w_plus[i] = (nxt - i) ** 2
        if good[i]:
            nxt = i
    w_minus = np.empty(n)
    prev = -1
    for i in range(n):
        w_minus[i] = (i - prev) ** 2
        if good[i]:
            prev = i
    return w_plus, w_minus


@dataclass
class TailFit:
    thresholds: np.ndarray
    probabilities: np.ndarray
    mu: float
    fit: Optional[LineFit]


def fit_tail_exponent(z_samples, thresholds=None) -> TailFit:
    """
    P(Z > M) ~ M^{−μ} 로그-로그 맞춤 (μ̂ = −기울기)

    Raises:
        ValueError: 양수 확률 점이 2개 미만인 경우
    """
    z = np.asarray(z_samples, dtype=float)
    if thresholds is None:
        lo, hi = np.quantile(z, [0.5, 0.99])
        lo = max(lo, np.min(z[z > 0])) if np.any(z > 0) else 1.0
        thresholds = np.logspace(np.log10(lo), np.log10(max(hi, lo * 1.01)), 12)
    thresholds = np.asarray(thresholds, dtype=float)
    probs = np.array([np.mean(z > M) for M in thresholds])
    positive = (probs > 0) & (thresholds > 0)
    if positive.sum() < 2:
        raise ValueError(f"꼬리 맞춤에 필요한 양수 확률 점이 부족합니다 ({int(positive.sum())}개)")
    fit = fit_loglog(thresholds[positive], probs[positive])
    return TailFit(thresholds, probs, -fit.slope, fit)


@dataclass
class LocalApproxFit:
    C: float
    c: float
    medians: dict
    fractions: dict


def local_approx_study(differences_by_ell: dict) -> LocalApproxFit:
    """
    ℓ별 중앙값 차이를 C e^{−cℓ} 로 맞추고, 차이가 그 아래인 실현 비율을 보고합니다.
    """
    if not differences_by_ell:
        raise ValueError("ℓ별 차이가 비어 있습니다")
    ells = np.array(sorted(differences_by_ell), dtype=float)
    medians = {int(l): float(np.median(differences_by_ell[int(l)])) for l in ells}
    med = np.array([medians[int(l)] for l in ells])
    positive = med > 0
    if positive.sum() >= 2:
        fit = fit_line(ells[positive], np.log(med[positive]))
        C, c = float(np.exp(fit.intercept)), float(-fit.slope)
    else:
        C, c = float(med.max()), 0.0
    fractions = {
        int(l): float(np.mean(np.asarray(differences_by_ell[int(l)]) <= C * np.exp(-c * l) + 1e-300))
        for l in ells
    }
    return LocalApproxFit(C, c, medians, fractions)


def z_covariance_decay(z_matrix: np.ndarray, sites: np.ndarray, x0: Optional[int] = None):
    """
    실현 × 사이트 Z 행렬에서 cov(Z(x0), Z(y))의 |x0−y| 감쇠 맞춤

    Returns:
        (거리, 공분산, 맞춤 결과 또는 None, ξ)
    """
    z = np.asarray(z_matrix, dtype=float)
    sites = np.asarray(sites)
    i0 = len(sites) // 2 if x0 is None else int(np.flatnonzero(sites == x0)[0])
    cov = np.array([np.cov(z[:, i0], z[:, j], ddof=1)[0, 1] for j in range(i0, len(sites))])
    distances = np.arange(len(cov), dtype=float)
    if np.count_nonzero(np.abs(cov) > 0) < 2:
        return distances, cov, None, float("nan")
    fit, xi = fit_exponential_decay(distances, cov)
    return distances, cov, fit, xi
