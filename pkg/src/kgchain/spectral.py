"""
스펙트럼 모듈 - Anderson 연산자 𝓗_I = V − ηΔ 의 대각화와 국소화 진단

고유벡터 부호(gauge)는 절댓값이 가장 큰 성분이 양수가 되도록 고정합니다
(동률이면 가장 작은 사이트). 이 모듈의 모든 관측량은 ψ_k → −ψ_k 에 불변입니다.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import SpectralError
from .model import DisorderRealization
from .utils import LineFit, fit_line

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TridiagonalOperator:
    """대칭 삼중대각 행렬: diag = ω² + η·deg, offdiag = −η"""

    diag: np.ndarray
    offdiag: np.ndarray
    interval: tuple[int, int]
    eta: float = 1.0

    def __post_init__(self):
        if len(self.offdiag) != max(len(self.diag) - 1, 0):
            raise ValueError(
                f"비대각 길이({len(self.offdiag)})가 대각 길이({len(self.diag)}) − 1과 다릅니다"
            )

    @property
    def size(self) -> int:
        return len(self.diag)

    def apply(self, f: np.ndarray) -> np.ndarray:
        out = self.diag * f
        out[:-1] += self.offdiag * f[1:]
        out[1:] += self.offdiag * f[:-1]
        return out

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)


@dataclass(frozen=True)
class EigenSystem:
    """
    오름차순 ν_k², 열벡터 ψ_k (vectors[:, k]), 국소화 중심 𝐱(k)

    center_ok[k]는 |ψ_k(𝐱)|² ≥ 1/W(𝐱) 기준의 만족 여부입니다.
    """

    nu_sq: np.ndarray
    vectors: np.ndarray
    centers: np.ndarray
    interval: tuple[int, int]
    center_ok: np.ndarray = field(default=None)
    eta: float = 1.0

    @property
    def n(self) -> int:
        return len(self.nu_sq)

    @property
    def nu(self) -> np.ndarray:
        return np.sqrt(self.nu_sq)

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.interval[0], self.interval[1] + 1)

    def index(self, x: int) -> int:
        a, b = self.interval
        if not a <= x <= b:
            raise ValueError(f"사이트 {x}가 구간 [{a}, {b}] 밖에 있습니다")
        return x - a

    def flip_signs(self, signs: np.ndarray) -> "EigenSystem":
        """게이지 변환 ψ_k → s_k ψ_k (불변성 검사용)"""
        return EigenSystem(self.nu_sq, self.vectors * signs[None, :], self.centers, self.interval, self.center_ok, self.eta)


def build_operator(realization: DisorderRealization) -> TridiagonalOperator:
    """자유 경계 조건의 𝓗_I를 만듭니다."""
    diag = realization.omega_sq + realization.eta * realization.degree()
    offdiag = np.full(realization.size - 1, -realization.eta)
    return TridiagonalOperator(diag=diag, offdiag=offdiag, interval=realization.interval, eta=realization.eta)


def fix_gauge(vectors: np.ndarray) -> np.ndarray:
    """각 열의 절댓값 최대 성분(동률: 최소 인덱스)을 양수로"""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs[None, :]


def localization_weights(interval: tuple[int, int]) -> np.ndarray:
    """W(x) = N_W(1 + x²), 구간 위에서 Σ 1/W = 1 이 되도록 정규화"""
    sites = np.arange(interval[0], interval[1] + 1, dtype=float)
    inv = 1.0 / (1.0 + sites ** 2)
    norm = 1.0 / inv.sum()
    return norm * (1.0 + sites ** 2)


def localization_center(psi: np.ndarray, interval: tuple[int, int]) -> int:
    """
    argmax_x |ψ(x)| (동률: 가장 작은 x)

    |ψ(𝐱)|² ≥ 1/W(𝐱) 기준을 만족하지 않으면 경고만 남깁니다.

    Raises:
        ValueError: 영벡터인 경우
    """
    psi = np.asarray(psi, dtype=float)
    if not np.any(psi):
        raise ValueError("영벡터의 국소화 중심은 정의되지 않습니다")
    i = int(np.argmax(np.abs(psi)))
    if not center_criterion(psi, interval, i):
        logger.debug(f"국소화 중심 기준 미충족: x={interval[0] + i}, |ψ|²={psi[i] ** 2:.3e}")
    return interval[0] + i


def center_criterion(psi: np.ndarray, interval: tuple[int, int], i: int) -> bool:
    W = localization_weights(interval)
    return bool(psi[i] ** 2 >= 1.0 / W[i])


def diagonalize(op: TridiagonalOperator) -> EigenSystem:
    """
    전체 고유쌍 분해 (LAPACK stev, implicit QL/QR)

    Raises:
        SpectralError: 수렴 실패 또는 유한하지 않은 결과
    """
    if op.size == 1:
        nu_sq = np.array(op.diag, dtype=float)
        vectors = np.ones((1, 1))
    else:
        try:
            nu_sq, vectors = linalg.eigh_tridiagonal(op.diag, op.offdiag, lapack_driver='stev')
        except (linalg.LinAlgError, ValueError) as e:
            raise SpectralError(f"고유값 분해 실패 (크기 {op.size}): {e}") from e
    if not (np.all(np.isfinite(nu_sq)) and np.all(np.isfinite(vectors))):
        raise SpectralError(f"고유값 분해 결과에 유한하지 않은 값이 있습니다 (크기 {op.size})")

    vectors = fix_gauge(vectors)
    idx = np.argmax(np.abs(vectors), axis=0)
    centers = op.interval[0] + idx
    W = localization_weights(op.interval)
    center_ok = vectors[idx, np.arange(op.size)] ** 2 >= 1.0 / W[idx]
    if not center_ok.all():
        logger.debug(f"국소화 중심 기준 미충족 모드 {int((~center_ok).sum())}개 / {op.size}개")

    return EigenSystem(
        nu_sq=nu_sq, vectors=vectors, centers=centers, interval=op.interval, center_ok=center_ok, eta=op.eta
    )


def solve(realization: DisorderRealization) -> EigenSystem:
    """build_operator + diagonalize"""
    return diagonalize(build_operator(realization))


def eigenfunction_correlator(es: EigenSystem, x: int, y: int) -> float:
    """Q_I(x, y) = Σ_k |ψ_k(x) ψ_k(y)|"""
    i, j = es.index(x), es.index(y)
    return float(np.sum(np.abs(es.vectors[i, :] * es.vectors[j, :])))


def correlator_matrix(es: EigenSystem) -> np.ndarray:
    """모든 (x, y) 쌍의 Q_I"""
    absv = np.abs(es.vectors)
    return absv @ absv.T


def min_level_spacing(es: EigenSystem) -> float:
    """Δ_ℓ = min_{i≠j} |ν_i² − ν_j²|"""
    if es.n < 2:
        raise ValueError(f"준위 간격에는 고유값이 2개 이상 필요합니다 (현재: {es.n}개)")
    return float(np.min(np.diff(es.nu_sq)))


def level_spacing_cdf(spacings: np.ndarray, gammas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """경험적 P(Δ ≤ γ)와 이항 표준오차"""
    spacings = np.asarray(spacings, dtype=float)
    p = np.array([np.mean(spacings <= g) for g in gammas])
    stderr = np.sqrt(p * (1.0 - p) / len(spacings))
    return p, stderr


def envelope_constant(es: EigenSystem, x: int, xi: float) -> float:
    """
    |ψ_k(y)|² ≤ A (1 + (𝐱(k) − x)⁴) e^{−|y − 𝐱(k)|/ξ} 를 만족하는 최소 A

    Raises:
        ValueError: ξ ≤ 0
    """
    if xi <= 0:
        raise ValueError(f"xi는 양수여야 합니다 (현재: {xi})")
    es.index(x)
    sites = es.sites[:, None]
    centers = es.centers[None, :]
    bound = (1.0 + (centers - x) ** 4.0) * np.exp(-np.abs(sites - centers) / xi)
    return float(np.max(es.vectors ** 2 / bound))


def fit_exponential_decay(distances, values) -> tuple[LineFit, float]:
    """
    log(values) ~ slope·distance 맞춤

    Returns:
        (맞춤 결과, ξ = −1/slope; 기울기가 음수가 아니면 inf)
    """
    distances = np.asarray(distances, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    mask = values > 0
    fit = fit_line(distances[mask], np.log(values[mask]))
    xi = -1.0 / fit.slope if fit.slope < 0 else float("inf")
    return fit, xi


@dataclass
class EigenpairMatching:
    """부분 구간(local)과 전체 구간(global) 고유쌍 사이의 탐욕적 대응"""

    pairs: list = field(default_factory=list)          # (local k, global k)
    overlap_sq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delta_nu_sq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    unmatched_global: list = field(default_factory=list)
    unmatched_distance: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ell: float = 0.0

    @property
    def median_overlap_sq(self) -> float:
        return float(np.median(self.overlap_sq)) if len(self.overlap_sq) else float("nan")

    @property
    def unmatched_far_fraction(self) -> float:
        """대응되지 않은 전역 고유쌍 중 중심이 ℓ/4 이상 떨어진 비율"""
        if not len(self.unmatched_distance):
            return 1.0
        return float(np.mean(self.unmatched_distance >= self.ell / 4.0))


def match_eigenpairs(local: EigenSystem, global_: EigenSystem) -> EigenpairMatching:
    """
    중첩 구간 사이의 고유쌍 대응

    local 구간의 중점 c와 반길이 ℓ에 대해, |𝐱 − c| ≤ ℓ/2 인 local 쌍과
    |𝐱 − c| ≤ 2ℓ/3 인 global 쌍 사이에서 겹침 |⟨ψ, ψ'⟩|² 이 큰 순서로 탐욕적으로 짝짓습니다.

    Raises:
        ValueError: 구간이 중첩되어 있지 않은 경우
    """
    (a, b), (A, B) = local.interval, global_.interval
    if not (A <= a and b <= B):
        raise ValueError(f"구간이 중첩되어 있지 않습니다: local=({a}, {b}), global=({A}, {B})")

    c = 0.5 * (a + b)
    ell = 0.5 * (b - a)
    restricted = global_.vectors[a - A:b - A + 1, :]

    local_ids = np.flatnonzero(np.abs(local.centers - c) <= ell / 2.0)
    global_ids = np.flatnonzero(np.abs(global_.centers - c) <= 2.0 * ell / 3.0)

    result = EigenpairMatching(ell=ell)
    if len(local_ids) and len(global_ids):
        overlap = (local.vectors[:, local_ids].T @ restricted[:, global_ids]) ** 2
        order = np.argsort(-overlap, axis=None, kind="stable")
        used_l, used_g = set(), set()
        pairs, ov, dnu = [], [], []
        for flat in order:
            li, gi = np.unravel_index(flat, overlap.shape)
            if li in used_l or gi in used_g:
                continue
            used_l.add(li)
            used_g.add(gi)
            k, kp = int(local_ids[li]), int(global_ids[gi])
            pairs.append((k, kp))
            ov.append(overlap[li, gi])
            dnu.append(abs(local.nu_sq[k] - global_.nu_sq[kp]))
            if len(used_l) == len(local_ids) or len(used_g) == len(global_ids):
                break
        result.pairs = pairs
        result.overlap_sq = np.array(ov)
        result.delta_nu_sq = np.array(dnu)
        matched = {kp for _, kp in pairs}
    else:
        matched = set()

    unmatched = [int(k) for k in global_ids if int(k) not in matched]
    result.unmatched_global = unmatched
    result.unmatched_distance = np.abs(global_.centers[unmatched] - c) if unmatched else np.zeros(0)
    logger.debug(
        f"고유쌍 대응: {len(result.pairs)}쌍, 미대응 전역 {len(unmatched)}개, "
        f"겹침² 중앙값 {result.median_overlap_sq:.4f}"
    )
    return result


def write_vectors(es: EigenSystem, path: Path) -> None:
    """
    고유벡터 이진 덤프

    헤더: int64 네 개 (rows, cols, a, b), 이어서 row-major float64
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.array([es.vectors.shape[0], es.vectors.shape[1], es.interval[0], es.interval[1]], dtype="<i8")
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(es.vectors, dtype="<f8").tobytes())


def read_vectors(path: Path) -> tuple[np.ndarray, tuple[int, int]]:
    raw = Path(path).read_bytes()
    rows, cols, a, b = np.frombuffer(raw[:32], dtype="<i8")
    vectors = np.frombuffer(raw[32:], dtype="<f8").reshape(int(rows), int(cols))
    return vectors.copy(), (int(a), int(b))
