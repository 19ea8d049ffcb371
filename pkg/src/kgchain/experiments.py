"""
실험 모듈 - 라이브러리 모듈을 조합해 실험별 CSV/JSON 산출물을 만듭니다.

각 실험 함수는 RunContext를 받아 산출 파일을 기록하고 요약 dict를 돌려줍니다.
병렬 작업은 (마스터 시드, 라벨 경로)로 자기 스트림을 직접 파생하므로
workers 수는 결과를 바꾸지 않습니다.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import DEFAULT_EXACT_CAP, DEFAULT_GAMMAS, ExperimentConfig
from .denominators import SigmaPattern, estimate_tail, verify_bound
from .dynamics import (
    CurrentAccumulator,
    IntegratorConfig,
    accumulate_current,
    decorrelation,
    energy_drift,
    local_current,
    rescaled_value,
    trajectory,
    wavepacket_width,
)
from .ensemble import parallel_map
from .errors import ConfigValidationError, NearResonanceError
from .gibbs import NoneqProfile, SamplerConfig, fit_covariance_decay, sample_gibbs, sample_harmonic, sample_noneq, virial
from .model import ChainState, ModelConfig, local_energies, restrict, sample_disorder
from .perturbation import (
    SOURCE_KINDS,
    ExpansionConfig,
    Source,
    build_expansion,
    closed_form_ledger,
    ledger_to_polynomial,
    residual,
    write_ledger_jsonl,
)
from .spectral import (
    build_operator,
    correlator_matrix,
    diagonalize,
    envelope_constant,
    fit_exponential_decay,
    level_spacing_cdf,
    match_eigenpairs,
    min_level_spacing,
    solve,
    write_vectors,
)
from .streams import StreamRegistry, derive_stream
from .utils import fit_line, fit_loglog
from .writer import ResultWriter
from .zstats import (
    bad_event_weights,
    fit_tail_exponent,
    local_approx_study,
    z_at_site,
    z_covariance_decay,
    z_estimate,
    z_kernel_estimate,
)

logger = logging.getLogger(__name__)

# 작업 하나가 처리하는 독립 실현 수 (minami)
REALIZATIONS_PER_TASK = 250

# 근공명으로 전개가 중단된 실현을 다시 뽑는 최대 횟수 (z_stats)
RESAMPLE_LIMIT = 3


@dataclass
class RunContext:
    config: ExperimentConfig
    writer: ResultWriter
    registry: StreamRegistry

    @property
    def model(self) -> ModelConfig:
        return self.config.model

    @property
    def params(self) -> dict:
        return self.config.params

    @property
    def workers(self) -> int:
        return self.config.workers


# ---------------------------------------------------------------------------
# 공통 도우미
# ---------------------------------------------------------------------------

def centered_interval(size: int) -> tuple[int, int]:
    """0을 포함하는 길이 size의 구간 (홀수면 [−(size−1)/2, (size−1)/2])"""
    if size < 1:
        raise ValueError(f"구간 길이는 1 이상이어야 합니다 (현재: {size})")
    a = -(size // 2)
    return (a, a + size - 1)


def _realization(model: ModelConfig, interval, *labels):
    return sample_disorder(model, interval, derive_stream(model.seed, *labels))


def _mean_stderr(values, axis: int = 0):
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    mean = values.mean(axis=axis)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, values.std(axis=axis, ddof=1) / math.sqrt(n)


def _sampler(params: dict, n: int) -> SamplerConfig:
    return SamplerConfig(
        burn_in=params["burn_in"],
        thinning=params["thinning"],
        samples_per_chain=1,
        n_chains=n,
    )


def _integrator(params: dict, t_max: float, realization, record_every: int = 1, scheme=None) -> IntegratorConfig:
    try:
        cfg = IntegratorConfig(
            dt=params["dt"], scheme=scheme or params["scheme"], t_max=t_max, record_every=record_every
        )
        cfg.check_stability(realization)
    except ValueError as e:
        raise ConfigValidationError(str(e)) from e
    return cfg


def _check_interior(x0: int, interval: tuple[int, int], where: str) -> None:
    a, b = interval
    if not a < x0 <= b:
        raise ConfigValidationError(f"{where}={x0}는 구간 ({a}, {b})의 내부 결합 사이트여야 합니다")


def _correlator_profile(es, max_distance: int, n_reference: int) -> np.ndarray:
    """중앙 근처 n_reference개 기준 사이트에서 거리별 평균 Q_I(x, x±d) (쌍이 없으면 nan)"""
    Q = correlator_matrix(es)
    N = es.n
    start = N // 2 - n_reference // 2
    refs = [i for i in range(start, start + n_reference) if 0 <= i < N]
    profile = np.full(max_distance + 1, np.nan)
    for d in range(max_distance + 1):
        values = [Q[i, j] for i in refs for j in {i - d, i + d} if 0 <= j < N]
        if values:
            profile[d] = float(np.mean(values))
    return profile


def _profile_rows(profiles: np.ndarray) -> tuple[list[dict], np.ndarray, np.ndarray]:
    counts = np.sum(np.isfinite(profiles), axis=0)
    mean = np.nanmean(profiles, axis=0)
    std = np.nanstd(profiles, axis=0, ddof=1) if len(profiles) > 1 else np.zeros(profiles.shape[1])
    stderr = std / np.sqrt(np.maximum(counts, 1))
    rows = [
        {"distance": d, "mean_Q": float(mean[d]), "stderr": float(stderr[d]), "realizations": int(counts[d])}
        for d in range(profiles.shape[1])
        if counts[d]
    ]
    return rows, mean, counts


CORRELATOR_COLUMNS = {
    "distance": "|x − y|",
    "mean_Q": "실현·기준 사이트 평균 Q_I(x, y)",
    "stderr": "실현 간 표준오차",
    "realizations": "평균에 쓰인 실현 수",
}


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------

def _spectrum_task(model: ModelConfig, r: int):
    realization = _realization(model, model.interval, "spectrum", "realization", r)
    op = build_operator(realization)
    es = diagonalize(op)
    dense = op.dense()
    oracle = np.linalg.eigvalsh(dense)
    eig_diff = float(np.max(np.abs(es.nu_sq - oracle)))
    res = float(np.max(np.abs(dense @ es.vectors - es.vectors * es.nu_sq)))
    return es, eig_diff, res


def run_spectrum(ctx: RunContext) -> dict:
    p = ctx.params
    n = p["n_realizations"]
    ctx.registry.reserve("spectrum", "realization", f"0..{n - 1}")
    results = parallel_map(_spectrum_task, [(ctx.model, r) for r in range(n)], ctx.workers)

    rows, checks = [], []
    for r, (es, eig_diff, res) in enumerate(results):
        for k in range(es.n):
            rows.append({
                "realization": r,
                "k": k,
                "nu_sq": float(es.nu_sq[k]),
                "center": int(es.centers[k]),
                "center_ok": int(bool(es.center_ok[k])),
            })
        checks.append({"realization": r, "max_eigenvalue_diff": eig_diff, "max_residual": res})
        if p["dump_vectors"]:
            path = ctx.writer.path(f"vectors_{r:04d}.bin")
            write_vectors(es, path)
            ctx.writer.register(path)

    ctx.writer.table("spectrum.csv", {
        "realization": "실현 인덱스",
        "k": "고유값 순위 (오름차순)",
        "nu_sq": "고유값 ν_k²",
        "center": "국소화 중심 𝐱(k) (절대 좌표)",
        "center_ok": "1이면 |ψ_k(𝐱)|² ≥ 1/W(𝐱) 기준 충족",
    }, rows)
    ctx.writer.table("spectrum_oracle.csv", {
        "realization": "실현 인덱스",
        "max_eigenvalue_diff": "max |ν²(LAPACK stev) − ν²(밀집 대칭 분해)|",
        "max_residual": "max |𝓗ψ − ν²ψ|",
    }, checks)

    summary = {
        "realizations": n,
        "max_eigenvalue_diff": max(c["max_eigenvalue_diff"] for c in checks),
        "max_residual": max(c["max_residual"] for c in checks),
    }
    logger.info(
        f"스펙트럼 완료: 실현 {n}개, 최대 고유값 차이 {summary['max_eigenvalue_diff']:.2e}, "
        f"최대 잔차 {summary['max_residual']:.2e}"
    )
    return summary


# ---------------------------------------------------------------------------
# correlator / envelope / eigenmatch
# ---------------------------------------------------------------------------

def _correlator_task(model: ModelConfig, r: int, max_distance: int, n_reference: int) -> np.ndarray:
    es = solve(_realization(model, model.interval, "correlator", "realization", r))
    return _correlator_profile(es, max_distance, n_reference)


def run_correlator(ctx: RunContext) -> dict:
    p = ctx.params
    n = p["n_realizations"]
    ctx.registry.reserve("correlator", "realization", f"0..{n - 1}")
    tasks = [(ctx.model, r, p["max_distance"], p["n_reference"]) for r in range(n)]
    profiles = np.array(parallel_map(_correlator_task, tasks, ctx.workers))

    rows, mean, counts = _profile_rows(profiles)
    ctx.writer.table("correlator.csv", CORRELATOR_COLUMNS, rows)

    distances = np.array([row["distance"] for row in rows], dtype=float)
    fit, xi = fit_exponential_decay(distances, [row["mean_Q"] for row in rows])
    summary = {
        "realizations": n,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "xi": xi,
    }
    logger.info(f"상관 함수 완료: 기울기 {fit.slope:.4f}, R² {fit.r_squared:.4f}, ξ {xi:.3f}")
    return summary


def _envelope_profile_task(model: ModelConfig, L: int, r: int) -> np.ndarray:
    es = solve(_realization(model, (-L, L), "envelope", L, "realization", r))
    return _correlator_profile(es, min(L, 30), 1)


def _envelope_task(model: ModelConfig, L: int, r: int, site: int, xi: float) -> float:
    es = solve(_realization(model, (-L, L), "envelope", L, "realization", r))
    return envelope_constant(es, site, xi)


def run_envelope(ctx: RunContext) -> dict:
    p = ctx.params
    n, site = p["n_realizations"], p["site"]
    Ls = p["L_values"]
    for L in Ls:
        if not -L <= site <= L:
            raise ConfigValidationError(f"envelope.params.site={site}가 구간 [−{L}, {L}] 밖에 있습니다")
    for L in Ls:
        ctx.registry.reserve("envelope", L, "realization", f"0..{n - 1}")

    xi = p["xi"]
    if xi is None:
        L0 = Ls[0]
        profiles = np.array(parallel_map(_envelope_profile_task, [(ctx.model, L0, r) for r in range(n)], ctx.workers))
        rows, _, _ = _profile_rows(profiles)
        _, xi = fit_exponential_decay([row["distance"] for row in rows], [row["mean_Q"] for row in rows])
        if not np.isfinite(xi) or xi <= 0:
            raise ConfigValidationError(f"상관 함수로 ξ를 추정할 수 없습니다 (ξ={xi}), xi를 직접 지정하세요")
        logger.info(f"ξ 추정: {xi:.3f} (L={L0} 상관 함수 맞춤)")

    rows, means = [], {}
    for L in Ls:
        values = parallel_map(_envelope_task, [(ctx.model, L, r, site, xi) for r in range(n)], ctx.workers)
        rows.extend({"L": L, "realization": r, "A": float(a)} for r, a in enumerate(values))
        mean, se = _mean_stderr(values)
        means[L] = {"mean": float(mean), "stderr": float(se)}
        logger.info(f"포락 상수: L={L}, E[A]={float(mean):.4g} ± {float(se):.2g}")

    ctx.writer.table("envelope.csv", {
        "L": "구간 반길이",
        "realization": "실현 인덱스",
        "A": "최소 포락 상수 A_{I,x}",
    }, rows, meta={"site": site, "xi": xi})

    first, last = means[Ls[0]]["mean"], means[Ls[-1]]["mean"]
    return {"xi": xi, "site": site, "means": {str(L): v for L, v in means.items()},
            "ratio": last / first if first else float("nan")}


def _eigenmatch_task(model: ModelConfig, r: int, L_local: int) -> dict:
    realization = _realization(model, model.interval, "eigenmatch", "realization", r)
    local = restrict(realization, (-L_local, L_local))
    m = match_eigenpairs(solve(local), solve(realization))
    return {
        "realization": r,
        "pairs": len(m.pairs),
        "median_overlap_sq": m.median_overlap_sq,
        "max_delta_nu_sq": float(m.delta_nu_sq.max()) if len(m.delta_nu_sq) else float("nan"),
        "unmatched": len(m.unmatched_global),
        "unmatched_far_fraction": m.unmatched_far_fraction,
    }


def run_eigenmatch(ctx: RunContext) -> dict:
    p = ctx.params
    n, L_local = p["n_realizations"], p["L_local"]
    if L_local > ctx.model.L:
        raise ConfigValidationError(f"eigenmatch.params.L_local={L_local}가 model.L={ctx.model.L}보다 큽니다")
    ctx.registry.reserve("eigenmatch", "realization", f"0..{n - 1}")
    rows = parallel_map(_eigenmatch_task, [(ctx.model, r, L_local) for r in range(n)], ctx.workers)
    ctx.writer.table("eigenmatch.csv", {
        "realization": "실현 인덱스",
        "pairs": "대응된 고유쌍 수",
        "median_overlap_sq": "겹침 |⟨ψ, ψ'⟩|² 중앙값",
        "max_delta_nu_sq": "대응 쌍의 최대 |ν² − ν'²|",
        "unmatched": "대응되지 않은 전역 고유쌍 수",
        "unmatched_far_fraction": "미대응 전역 쌍 중 중심이 ℓ/4 이상 떨어진 비율",
    }, rows, meta={"L_local": L_local})
    overlaps = np.array([r["median_overlap_sq"] for r in rows], dtype=float)
    summary = {
        "realizations": n,
        "median_overlap_sq": float(np.nanmedian(overlaps)) if np.any(np.isfinite(overlaps)) else float("nan"),
        "mean_unmatched": float(np.mean([r["unmatched"] for r in rows])),
    }
    logger.info(f"고유쌍 대응 완료: 겹침² 중앙값 {summary['median_overlap_sq']:.4f}")
    return summary


# ---------------------------------------------------------------------------
# minami / denominator
# ---------------------------------------------------------------------------

def _spacing_task(model: ModelConfig, interval, ids) -> list[float]:
    return [min_level_spacing(solve(_realization(model, interval, "minami", "realization", r))) for r in ids]


def run_minami(ctx: RunContext) -> dict:
    p = ctx.params
    size, n = p["interval_size"], p["n_realizations"]
    interval = centered_interval(size)
    if p["gammas"] is None:
        lo, hi, count = DEFAULT_GAMMAS
        gammas = np.logspace(np.log10(lo), np.log10(hi), count)
    else:
        gammas = np.sort(np.asarray(p["gammas"], dtype=float))
    ctx.registry.reserve("minami", "realization", f"0..{n - 1}")

    chunks = [list(range(s, min(s + REALIZATIONS_PER_TASK, n))) for s in range(0, n, REALIZATIONS_PER_TASK)]
    spacings = np.concatenate(parallel_map(_spacing_task, [(ctx.model, interval, c) for c in chunks], ctx.workers))
    prob, stderr = level_spacing_cdf(spacings, gammas)

    rows = [
        {"gamma": float(g), "p_hat": float(pr), "stderr": float(se), "realizations": n, "interval_size": size}
        for g, pr, se in zip(gammas, prob, stderr)
    ]
    ctx.writer.table("minami.csv", {
        "gamma": "간격 임계값 γ",
        "p_hat": "경험적 P(Δ ≤ γ)",
        "stderr": "이항 표준오차",
        "realizations": "실현 수",
        "interval_size": "|I|",
    }, rows)

    positive = prob > 0
    summary = {"realizations": n, "interval_size": size, "min_spacing": float(spacings.min())}
    if positive.sum() >= 2:
        fit = fit_loglog(gammas[positive], prob[positive])
        summary.update(slope=fit.slope, slope_stderr=fit.slope_stderr, r_squared=fit.r_squared,
                       constant=float(np.max(prob / (size ** 2 * gammas))))
        logger.info(f"Minami 추정 완료: 기울기 {fit.slope:.3f} ± {fit.slope_stderr:.3f}")
    else:
        logger.warning("양수 확률 점이 2개 미만이라 기울기를 맞추지 않습니다")
    return summary


def run_denominator(ctx: RunContext) -> dict:
    p = ctx.params
    if p["m"] != len(p["sigma"]):
        raise ConfigValidationError(f"denominator.params.m={p['m']}가 sigma 길이({len(p['sigma'])})와 다릅니다")
    try:
        pattern = SigmaPattern(tuple(p["sigma"]))
    except ValueError as e:
        raise ConfigValidationError(str(e)) from e
    epsilons = None if p["epsilons"] is None else sorted(p["epsilons"])
    interval = centered_interval(p["interval_size"])
    if p["interval_size"] < pattern.m:
        raise ConfigValidationError(f"interval_size={p['interval_size']}가 m={pattern.m}보다 작습니다")

    ctx.registry.reserve("denominator", "trial", f"0..{p['trials'] - 1}")
    estimate = estimate_tail(
        ctx.model, pattern, interval, epsilons, p["trials"], ctx.workers, p["tuple_cap"], label="denominator"
    )
    ctx.writer.table("denominator.csv", {
        "epsilon": "임계값 ε",
        "p_hat": "경험적 P(Q ≤ ε)",
        "stderr": "이항 표준오차",
        "trials": "실현 수",
        "interval_size": "|I|",
        "m": "튜플 길이 m",
        "sigma_pattern": "σ 패턴",
    }, estimate.rows(pattern))
    ctx.writer.table("denominator_minima.csv", {
        "trial": "실현 인덱스",
        "q_min": "min |Σσ_k ν_{i_k}|",
    }, ({"trial": t, "q_min": float(q)} for t, q in enumerate(estimate.minima)))

    report = verify_bound(estimate, pattern)
    return {"sigma_pattern": pattern.label, "interval_size": p["interval_size"], **report.to_dict()}


# ---------------------------------------------------------------------------
# gibbs_check
# ---------------------------------------------------------------------------

def run_gibbs_check(ctx: RunContext) -> dict:
    p, model = ctx.params, ctx.model
    realization = sample_disorder(model, model.interval, ctx.registry.derive("gibbs_check", "disorder"))
    es = solve(realization)

    harm = sample_harmonic(es, p["n_harmonic"], ctx.registry.derive("gibbs_check", "harmonic"))
    Q = harm.q @ es.vectors
    P = harm.p @ es.vectors
    q2, q2_se = _mean_stderr(Q ** 2)
    p2, p2_se = _mean_stderr(P ** 2)
    expected = 1.0 / es.nu_sq
    q2_z = (q2 - expected) / q2_se
    p2_z = (p2 - 1.0) / p2_se
    ctx.writer.table("gibbs_harmonic.csv", {
        "k": "모드 인덱스",
        "nu_sq": "ν_k²",
        "q2_mean": "⟨[q,ψ_k]²⟩",
        "q2_expected": "1/ν_k²",
        "q2_stderr": "표준오차",
        "q2_z": "(평균 − 기대값)/표준오차",
        "p2_mean": "⟨[p,ψ_k]²⟩",
        "p2_stderr": "표준오차",
        "p2_z": "(평균 − 1)/표준오차",
    }, (
        {"k": k, "nu_sq": float(es.nu_sq[k]), "q2_mean": float(q2[k]), "q2_expected": float(expected[k]),
         "q2_stderr": float(q2_se[k]), "q2_z": float(q2_z[k]), "p2_mean": float(p2[k]),
         "p2_stderr": float(p2_se[k]), "p2_z": float(p2_z[k])}
        for k in range(es.n)
    ))

    cfg = SamplerConfig(
        burn_in=p["burn_in"], thinning=p["thinning"],
        samples_per_chain=p["samples_per_chain"], n_chains=p["n_chains"],
    )
    samples = sample_gibbs(realization, model.lam, cfg, ctx.registry.derive("gibbs_check", "mcmc"))
    mean, se = virial(samples, realization, model.lam)
    # 솎아낸 표본 사이에 남은 자기상관만큼 표준오차를 키움
    inflation = math.sqrt(max(samples.diagnostics["tau_int"], 1.0))
    se = se * inflation
    z = (mean - 1.0) / se
    ctx.writer.table("gibbs_virial.csv", {
        "site": "사이트 x",
        "virial_mean": "⟨q_x ∂H/∂q_x⟩",
        "virial_stderr": "표준오차 (τ_int 보정)",
        "z": "(평균 − 1)/표준오차",
    }, (
        {"site": int(x), "virial_mean": float(m), "virial_stderr": float(s), "z": float(zz)}
        for x, m, s, zz in zip(realization.sites, mean, se, z)
    ), meta={"lambda": model.lam, **samples.diagnostics})

    decay = fit_covariance_decay(samples, realization, model.lam)
    ctx.writer.table("gibbs_covariance.csv", {
        "distance": "|x0 − y|",
        "covariance": "⟨H_x0; H_y⟩",
        "stderr": "블록 잭나이프 표준오차",
    }, (
        {"distance": int(d), "covariance": float(c), "stderr": float(s)}
        for d, c, s in zip(decay.distances, decay.covariances, decay.stderrs)
    ))

    summary = {
        "lambda": model.lam,
        "harmonic_max_abs_z": float(max(np.max(np.abs(q2_z)), np.max(np.abs(p2_z)))),
        "virial_max_abs_z": float(np.max(np.abs(z))),
        "virial_within_3_stderr": bool(np.all(np.abs(z) <= 3.0)),
        "tau_int": samples.diagnostics["tau_int"],
        "covariance_xi": decay.xi,
    }
    logger.info(
        f"Gibbs 검증 완료: 조화 max|z|={summary['harmonic_max_abs_z']:.2f}, "
        f"비리얼 max|z|={summary['virial_max_abs_z']:.2f}, τ_int={summary['tau_int']:.2f}"
    )
    return summary


# ---------------------------------------------------------------------------
# decorrelation
# ---------------------------------------------------------------------------

def _decorrelation_task(model: ModelConfig, realization, es, lam: float, params: dict):
    # 모든 λ가 같은 초기 스트림을 씀 (공통 난수)
    stream = derive_stream(model.seed, "decorrelation", "initial")
    samples = sample_gibbs(realization, lam, _sampler(params, params["n_states"]), stream)
    scheme = "exact_harmonic" if lam == 0 else params["scheme"]
    cfg = _integrator(params, params["t"], realization, scheme=scheme)
    return decorrelation(realization, es, lam, params["t"], samples.state, cfg)


def run_decorrelation(ctx: RunContext) -> dict:
    p, model = ctx.params, ctx.model
    realization = sample_disorder(model, model.interval, ctx.registry.derive("decorrelation", "disorder"))
    es = solve(realization)
    _integrator(p, p["t"], realization)
    ctx.registry.reserve("decorrelation", "initial")

    lambdas = p["lambdas"]
    results = parallel_map(
        _decorrelation_task, [(model, realization, es, lam, p) for lam in lambdas], ctx.workers
    )

    rows, mode_rows = [], []
    for res in results:
        ok = res.variance_bound_ok
        rows.append({
            "lambda": res.lam, "t": res.t, "c_bar": res.c_bar, "c_bar_stderr": res.c_bar_stderr,
            "variance_bound_fraction": float(np.mean(ok)),
        })
        mode_rows.extend(
            {"lambda": res.lam, "k": k, "nu_sq": float(es.nu_sq[k]), "c_k": float(res.c_k[k]),
             "energy_variance": float(res.energy_variance[k]), "bound_ok": int(bool(ok[k]))}
            for k in range(es.n)
        )
    ctx.writer.table("decorrelation.csv", {
        "lambda": "λ",
        "t": "적분 시간",
        "c_bar": "모드 평균 C̄(t)",
        "c_bar_stderr": "초기 상태 간 표준오차",
        "variance_bound_fraction": "C_k ≤ 2⟨E_k; E_k⟩ 를 만족하는 모드 비율",
    }, rows, meta={"n_states": p["n_states"], "scheme": p["scheme"]})
    ctx.writer.table("decorrelation_modes.csv", {
        "lambda": "λ",
        "k": "모드 인덱스",
        "nu_sq": "ν_k²",
        "c_k": "C_k(t)",
        "energy_variance": "⟨E_k; E_k⟩",
        "bound_ok": "1이면 C_k ≤ 2⟨E_k; E_k⟩",
    }, mode_rows)

    order = np.argsort(lambdas)
    c_sorted = np.array([rows[i]["c_bar"] for i in order])
    summary = {
        "lambdas": lambdas,
        "c_bar": [r["c_bar"] for r in rows],
        "strictly_increasing": bool(np.all(np.diff(c_sorted) > 0)),
        "c_bar_at_zero": next((r["c_bar"] for r in rows if r["lambda"] == 0), None),
    }
    logger.info(f"역상관 완료: C̄ = {', '.join(f'{c:.3e}' for c in summary['c_bar'])}")
    return summary


# ---------------------------------------------------------------------------
# current / green_kubo / noneq_current
# ---------------------------------------------------------------------------

def _variance_trend(times: np.ndarray, history: np.ndarray) -> tuple[float, float]:
    """
    Var J₀(t)의 선형 추세: 궤적별 (J₀ − 평균)² 계열의 기울기를 평균하고 궤적 간 표준오차를 씀

    Args:
        history: (기록 시점, 궤적)
    """
    B = history.shape[1]
    sq = (history - history.mean(axis=1, keepdims=True)) ** 2 * B / max(B - 1, 1)
    tc = times - times.mean()
    slopes = (tc @ (sq - sq.mean(axis=0))) / np.dot(tc, tc)
    mean, se = _mean_stderr(slopes)
    return float(mean), float(se)


def run_current(ctx: RunContext) -> dict:
    p, model = ctx.params, ctx.model
    realization = sample_disorder(model, model.interval, ctx.registry.derive("current", "disorder"))
    _check_interior(p["x0"], realization.interval, "current.params.x0")
    if p["scheme"] == "exact_harmonic" and model.lam != 0:
        raise ConfigValidationError(f"exact_harmonic 적분은 λ = 0 에서만 쓸 수 있습니다 (현재: {model.lam})")
    cfg = _integrator(p, p["t_max"], realization)
    es = solve(realization)

    samples = sample_gibbs(realization, model.lam, _sampler(p, p["n_trajectories"]),
                           ctx.registry.derive("current", "initial"))
    acc_site = CurrentAccumulator(site=p["x0"])
    acc_total = CurrentAccumulator(site=None)
    h0 = None
    rows, times, history = [], [], []
    for n, state in enumerate(trajectory(samples.state, realization, model.lam, cfg, es, every=1)):
        accumulate_current([state], realization, p["x0"], acc_site)
        accumulate_current([state], realization, None, acc_total)
        if n % p["record_every"]:
            continue
        h = local_energies(state, realization, model.lam).sum(axis=-1)
        h0 = h if h0 is None else h0
        J = acc_site.J
        mean, se = _mean_stderr(J)
        var = float(np.var(J, ddof=1)) if len(J) > 1 else 0.0
        rescaled = rescaled_value(acc_total, realization.size) if acc_total.elapsed > 0 else np.zeros_like(J)
        rows.append({
            "t": state.t,
            "J0_mean": float(mean),
            "J0_stderr": float(se),
            "J0_var": var,
            "J0_var_stderr": var * math.sqrt(2.0 / max(len(J) - 1, 1)),
            "j0_mean": float(np.mean(local_current(state, realization, p["x0"]))),
            "rescaled_sq_mean": float(np.mean(rescaled ** 2)),
            "energy_drift": float(np.max(np.abs(h - h0) / np.abs(h0))),
        })
        times.append(state.t)
        history.append(np.array(J, copy=True))

    ctx.writer.table("current.csv", {
        "t": "시간",
        "J0_mean": "⟨J₀(t)⟩, J₀ = ∫₀ᵗ j_x0",
        "J0_stderr": "궤적 간 표준오차",
        "J0_var": "Var J₀(t)",
        "J0_var_stderr": "정규 근사 표준오차 Var·√(2/(n−1))",
        "j0_mean": "⟨j_x0(t)⟩",
        "rescaled_sq_mean": "⟨𝓙(t)²⟩",
        "energy_drift": "궤적별 최대 |H(t) − H(0)|/|H(0)|",
    }, rows, meta={"x0": p["x0"], "lambda": model.lam, "scheme": p["scheme"], "dt": p["dt"]})

    times = np.asarray(times)
    history = np.asarray(history)
    final = times >= p["t_max"] / 10.0
    summary = {"lambda": model.lam, "x0": p["x0"], "records": len(rows)}
    if final.sum() >= 3 and history.shape[1] >= 2:
        slope, se = _variance_trend(times[final], history[final])
        summary.update(final_decade_slope=slope, final_decade_slope_stderr=se,
                       trend_consistent_with_zero=bool(abs(slope) <= 2.0 * se))
        logger.info(f"전류 완료: 마지막 10배 구간 Var J₀ 기울기 {slope:.3e} ± {se:.1e}")
    else:
        logger.warning("마지막 10배 구간의 기록 시점이 부족해 추세를 맞추지 않습니다")
    return summary


def _green_kubo_task(model: ModelConfig, realization, i: int, lam: float, params: dict):
    t = min(lam ** (-params["order"]) * params["tau"], params["t_cap"]) if lam > 0 else params["t_cap"]
    capped = lam == 0 or lam ** (-params["order"]) * params["tau"] > params["t_cap"]
    stream = derive_stream(model.seed, "green_kubo", "initial", i)
    samples = sample_gibbs(realization, lam, _sampler(params, params["n_trajectories"]), stream)
    cfg = IntegratorConfig(dt=params["dt"], scheme=params["scheme"], t_max=t)
    acc = accumulate_current(trajectory(samples.state, realization, lam, cfg, every=1), realization, None)
    values = rescaled_value(acc, realization.size) ** 2
    mean, se = _mean_stderr(values)
    return {"lambda": lam, "t": acc.elapsed, "capped": int(capped),
            "rescaled_sq_mean": float(mean), "rescaled_sq_stderr": float(se),
            "trajectories": params["n_trajectories"]}


def run_green_kubo(ctx: RunContext) -> dict:
    p, model = ctx.params, ctx.model
    realization = sample_disorder(model, model.interval, ctx.registry.derive("green_kubo", "disorder"))
    _integrator(p, p["t_cap"], realization)
    lambdas = p["lambdas"]
    ctx.registry.reserve("green_kubo", "initial", f"0..{len(lambdas) - 1}")
    rows = parallel_map(
        _green_kubo_task, [(model, realization, i, lam, p) for i, lam in enumerate(lambdas)], ctx.workers
    )
    ctx.writer.table("green_kubo.csv", {
        "lambda": "λ",
        "t": "적분 시간 min(λ^{−n}τ, t_cap)",
        "capped": "1이면 t_cap에서 잘림",
        "rescaled_sq_mean": "⟨𝓙(t)²⟩",
        "rescaled_sq_stderr": "궤적 간 표준오차",
        "trajectories": "궤적 수",
    }, rows, meta={"order": p["order"], "tau": p["tau"], "t_cap": p["t_cap"], "L": model.L})
    logger.info(
        "Green-Kubo 스캔 완료: "
        + ", ".join(f"λ={r['lambda']}: {r['rescaled_sq_mean']:.4g}" for r in rows)
    )
    return {"lambdas": lambdas, "rescaled_sq_mean": [r["rescaled_sq_mean"] for r in rows]}


def run_noneq_current(ctx: RunContext) -> dict:
    p, model = ctx.params, ctx.model
    realization = sample_disorder(model, model.interval, ctx.registry.derive("noneq_current", "disorder"))
    _check_interior(p["x0"], realization.interval, "noneq_current.params.x0")
    try:
        profile = NoneqProfile.step(realization.size, p["beta_left"], p["beta_right"])
    except ValueError as e:
        raise ConfigValidationError(str(e)) from e
    cfg = _integrator(p, p["t_max"], realization)

    samples = sample_noneq(realization, model.lam, profile, p["n_trajectories"],
                           ctx.registry.derive("noneq_current", "initial"))
    q4_0 = np.mean(samples.q ** 4, axis=0)
    acc = CurrentAccumulator(site=p["x0"])
    rows = []
    for n, state in enumerate(trajectory(samples.state, realization, model.lam, cfg, every=1)):
        accumulate_current([state], realization, p["x0"], acc)
        if n % p["record_every"]:
            continue
        mean, se = _mean_stderr(acc.J)
        q4 = np.mean(state.q ** 4, axis=0)
        rows.append({
            "t": state.t,
            "J0_mean": float(mean),
            "J0_stderr": float(se),
            "max_q4_ratio": float(np.max(q4 / q4_0)),
        })
    ctx.writer.table("noneq_current.csv", {
        "t": "시간",
        "J0_mean": "⟨J₀(t)⟩",
        "J0_stderr": "궤적 간 표준오차",
        "max_q4_ratio": "max_x ⟨q_x⁴⟩(t)/⟨q_x⁴⟩(0)",
    }, rows, meta={"beta_left": p["beta_left"], "beta_right": p["beta_right"], "x0": p["x0"]})

    summary = {
        "J0_final": rows[-1]["J0_mean"],
        "J0_final_stderr": rows[-1]["J0_stderr"],
        "max_q4_ratio": max(r["max_q4_ratio"] for r in rows),
    }
    logger.info(f"비평형 전류 완료: J₀(t_max) = {summary['J0_final']:.4g} ± {summary['J0_final_stderr']:.2g}")
    return summary


# ---------------------------------------------------------------------------
# expansion_residual
# ---------------------------------------------------------------------------

def _expansion_source(kind: str, es) -> Source:
    a, b = es.interval
    mid = (a + b) // 2 if b > a else a
    if kind == "current":
        return Source("current", max(mid, a + 1))
    return Source("mode_energy", int(np.argmin(np.abs(es.centers - mid))))


def _compare_keys(ledger_keys: dict, closed: dict) -> tuple[int, int, float]:
    scale = max([abs(c) for c in closed.values()] + [abs(c) for c in ledger_keys.values()] + [1e-300])
    keys = set(ledger_keys) | set(closed)
    diff = max((abs(ledger_keys.get(k, 0j) - closed.get(k, 0j)) for k in keys), default=0.0)
    return len(ledger_keys), len(closed), float(diff / scale)


def run_expansion_residual(ctx: RunContext) -> dict:
    p, model = ctx.params, ctx.model
    kinds = p["sources"]
    unknown = [k for k in kinds if k not in SOURCE_KINDS]
    if unknown:
        raise ConfigValidationError(
            f"expansion_residual.params.sources에 알 수 없는 소스: {', '.join(unknown)} (허용: {', '.join(SOURCE_KINDS)})"
        )
    size = p["interval_size"]
    if "current" in kinds and size < 2:
        raise ConfigValidationError("current 소스에는 interval_size ≥ 2 가 필요합니다")
    interval = centered_interval(size)
    cfg = ExpansionConfig(order=p["order"], mode="exact", exact_cap=max(DEFAULT_EXACT_CAP, size ** 4))

    realization = sample_disorder(model, interval, ctx.registry.derive("expansion_residual", "disorder"))
    es = solve(realization)

    residual_rows, ledger_rows, summary = [], [], {"sources": {}}
    for kind in kinds:
        source = _expansion_source(kind, es)
        expansion = build_expansion(source, es, cfg)

        stream = ctx.registry.derive("expansion_residual", "states", kind)
        q = stream.standard_normal((p["n_states"], es.n))
        pp = stream.standard_normal((p["n_states"], es.n))
        report = residual(expansion, ChainState(q, pp), realization, es, model.lam)
        scale = np.maximum.reduce([np.abs(report.f_value), np.abs(report.bracket_value),
                                   np.abs(report.g_value), np.full(len(report.residual), 1e-300)])
        rel = np.abs(report.residual) / scale
        residual_rows.extend(
            {"source": source.label, "state": i, "f": float(report.f_value[i]),
             "bracket": float(report.bracket_value[i]), "g": float(report.g_value[i]),
             "residual": float(report.residual[i]), "relative": float(rel[i])}
            for i in range(len(rel))
        )

        for i, (poly, led) in enumerate(zip(expansion.u_orders, expansion.u_ledgers), start=1):
            diff = (ledger_to_polynomial(led) - poly).merge()
            top = float(np.max(np.abs(poly.coeffs))) if len(poly) else 0.0
            worst = float(np.max(np.abs(diff.coeffs))) if len(diff) else 0.0
            ledger_rows.append({"source": source.label, "kind": "u", "order": i, "merged_terms": len(poly),
                                "ledger_rows": len(led), "max_relative_diff": worst / top if top else worst})
            path = ctx.writer.path(f"ledger_{kind}_u{i}.jsonl")
            write_ledger_jsonl(led, path)
            ctx.writer.register(path)

        summary["sources"][source.label] = {
            "max_relative_residual": float(rel.max()),
            **expansion.summary(),
        }
        logger.info(f"교환자 항등식 잔차: {source.label}, 최대 상대 잔차 {rel.max():.3e}")

    ctx.writer.table("expansion_residual.csv", {
        "source": "소스 (종류@대상)",
        "state": "무작위 가우스 상태 인덱스",
        "f": "f⁽¹⁾",
        "bracket": "{H, u}",
        "g": "λⁿ g",
        "residual": "f + {H, u} − λⁿ g",
        "relative": "|잔차| / max(|f|, |{H,u}|, |λⁿg|)",
    }, residual_rows, meta={"lambda": model.lam, "order": p["order"], "interval_size": size})
    ctx.writer.table("expansion_ledger.csv", {
        "source": "소스",
        "kind": "원장 종류",
        "order": "차수 i",
        "merged_terms": "병합 다항식 항 수",
        "ledger_rows": "비병합 원장 행 수",
        "max_relative_diff": "병합 원장과 재귀 결과의 최대 계수 차이 (상대)",
    }, ledger_rows)

    if p["closed_form_size"] > 0:
        summary["closed_form"] = _closed_form_check(ctx, realization, kinds, p)
    return summary


def _closed_form_check(ctx: RunContext, realization, kinds, p: dict) -> dict:
    size = p["closed_form_size"]
    interval = centered_interval(size)
    a, b = realization.interval
    if a <= interval[0] and interval[1] <= b:
        small = restrict(realization, interval)
    else:
        small = sample_disorder(ctx.model, interval, ctx.registry.derive("expansion_residual", "closed_form_disorder"))
    es = solve(small)
    cfg = ExpansionConfig(order=p["order"], mode="exact", exact_cap=max(DEFAULT_EXACT_CAP, size ** 4))

    rows, worst = [], 0.0
    for kind in kinds:
        if kind == "current" and size < 2:
            continue
        source = _expansion_source(kind, es)
        expansion = build_expansion(source, es, cfg)
        closed = closed_form_ledger(source, es, p["order"])
        for i, led in enumerate(expansion.u_ledgers, start=1):
            n_ledger, n_closed, diff = _compare_keys(led.keys(), closed[("u", i)])
            worst = max(worst, diff)
            rows.append({"source": source.label, "order": i, "ledger_terms": n_ledger,
                         "closed_form_terms": n_closed, "max_relative_diff": diff})
    ctx.writer.table("expansion_closed_form.csv", {
        "source": "소스",
        "order": "차수 i",
        "ledger_terms": "벡터화 원장 항 수",
        "closed_form_terms": "닫힌 형태 열거 항 수",
        "max_relative_diff": "같은 (튜플, 축약) 키의 최대 계수 차이 (상대)",
    }, rows, meta={"interval_size": size})
    logger.info(f"닫힌 형태 원장 비교: |Λ|={size}, 최대 상대 차이 {worst:.3e}")
    return {"interval_size": size, "max_relative_diff": worst}


# ---------------------------------------------------------------------------
# z_stats
# ---------------------------------------------------------------------------

def _z_task(model: ModelConfig, size: int, r: int, params: dict) -> dict:
    interval = centered_interval(size)
    cfg = ExpansionConfig(order=params["order"], mode="truncated", radius=params["radius"])
    q, lam = params["q"], model.lam
    last_error = None
    for attempt in range(RESAMPLE_LIMIT + 1):
        labels = ("z_stats", size, "realization", r) + (("resample", attempt) if attempt else ())
        realization = _realization(model, interval, *labels)
        es = solve(realization)
        try:
            expansions = {int(x): build_expansion(Source("current", int(x)), es, cfg) for x in es.sites[1:]}
            break
        except NearResonanceError as e:
            last_error = e
    else:
        raise last_error

    estimates = {x: z_estimate(exp, es, x, q, lam) for x, exp in expansions.items()}
    x_c = (interval[0] + interval[1] + 1) // 2
    local = {}
    for ell in params["ells"]:
        sub = (max(interval[0], x_c - ell), min(interval[1], x_c + ell))
        if sub == interval:
            local[ell] = estimates[x_c].value
        else:
            local[ell] = z_at_site(solve(restrict(realization, sub)), x_c, q, cfg, "current", lam).value
    kernel = None
    if params["decay_rate"] is not None:
        kernel = z_kernel_estimate(expansions, es, x_c, q, params["decay_rate"], lam).value
    return {
        "resamples": attempt,
        "sites": list(estimates),
        "z": [e.value for e in estimates.values()],
        "G": [e.breakdown["G"] for e in estimates.values()],
        "center": x_c,
        "local": local,
        "kernel": kernel,
    }


def run_z_stats(ctx: RunContext) -> dict:
    p, model = ctx.params, ctx.model
    n = p["n_realizations"]
    for size in p["interval_sizes"]:
        if size < 3:
            raise ConfigValidationError(f"z_stats.params.interval_sizes의 원소는 3 이상이어야 합니다 (현재: {size})")
        ctx.registry.reserve("z_stats", size, "realization", f"0..{n - 1}")

    z_rows, tail_rows, local_rows, cov_rows, bad_rows, kernel_rows = [], [], [], [], [], []
    per_size = {}
    for size in p["interval_sizes"]:
        results = parallel_map(_z_task, [(model, size, r, p) for r in range(n)], ctx.workers)
        sites = np.array(results[0]["sites"])
        Z = np.array([res["z"] for res in results])
        for r, res in enumerate(results):
            for x, zv, g in zip(res["sites"], res["z"], res["G"]):
                z_rows.append({"interval_size": size, "realization": r, "site": x, "Z": zv, "G": g, "U": zv - g})
            if res["kernel"] is not None:
                kernel_rows.append({"interval_size": size, "realization": r, "site": res["center"],
                                    "z_kernel": res["kernel"]})

        stats: dict = {"resampled": int(sum(res["resamples"] for res in results))}
        try:
            tail = fit_tail_exponent(Z.ravel(), p["thresholds"])
            stats["mu"] = tail.mu
            tail_rows.extend({"interval_size": size, "threshold": float(M), "p_exceed": float(pr)}
                             for M, pr in zip(tail.thresholds, tail.probabilities))
        except ValueError as e:
            logger.warning(f"|Λ|={size} 꼬리 지수 맞춤 생략: {e}")
            stats["mu"] = float("nan")

        diffs = {ell: [abs(res["local"][ell] - res["z"][res["sites"].index(res["center"])]) for res in results]
                 for ell in p["ells"]}
        for r, res in enumerate(results):
            full = res["z"][res["sites"].index(res["center"])]
            local_rows.extend({"interval_size": size, "realization": r, "ell": ell, "z_full": full,
                               "z_local": res["local"][ell], "difference": abs(res["local"][ell] - full)}
                              for ell in p["ells"])
        study = local_approx_study(diffs)
        meds = [study.medians[ell] for ell in sorted(study.medians)]
        stats.update(local_C=study.C, local_c=study.c, local_medians=study.medians,
                     local_fractions=study.fractions,
                     local_median_decreasing=bool(np.all(np.diff(meds) <= 0)))

        if n >= 2:
            distances, cov, _, xi = z_covariance_decay(Z, sites)
            cov_rows.extend({"interval_size": size, "distance": int(d), "covariance": float(c)}
                            for d, c in zip(distances, cov))
            stats["covariance_xi"] = xi

        M = float(np.median(Z))
        for r in range(n):
            w_plus, w_minus = bad_event_weights(Z[r], M)
            bad_rows.extend({"interval_size": size, "realization": r, "site": int(x), "w_plus": float(wp),
                             "w_minus": float(wm)} for x, wp, wm in zip(sites, w_plus, w_minus))
        stats["bad_event_threshold"] = M
        per_size[size] = stats
        logger.info(f"Z 통계: |Λ|={size}, μ̂={stats['mu']:.3f}, 재표집 {stats['resampled']}회")

    w = ctx.writer
    w.table("z_values.csv", {"interval_size": "|Λ|", "realization": "실현 인덱스", "site": "사이트 x",
                             "Z": "Z(x) = G + U", "G": "G 부분", "U": "U 부분"},
            z_rows, meta={"q": p["q"], "order": p["order"], "radius": p["radius"]})
    w.table("z_tail.csv", {"interval_size": "|Λ|", "threshold": "임계값 M", "p_exceed": "P(Z > M)"}, tail_rows)
    w.table("z_local.csv", {"interval_size": "|Λ|", "realization": "실현 인덱스", "ell": "ℓ",
                            "z_full": "Z_Λ(x)", "z_local": "Z_{Λ(x,ℓ)}(x)", "difference": "|차이|"}, local_rows)
    w.table("z_covariance.csv", {"interval_size": "|Λ|", "distance": "|x0 − y|",
                                 "covariance": "cov(Z(x0), Z(y))"}, cov_rows)
    w.table("z_bad_events.csv", {"interval_size": "|Λ|", "realization": "실현 인덱스", "site": "사이트 x",
                                 "w_plus": "w⁺(x)", "w_minus": "w⁻(x)"}, bad_rows)
    if kernel_rows:
        w.table("z_kernel.csv", {"interval_size": "|Λ|", "realization": "실현 인덱스", "site": "사이트 x",
                                 "z_kernel": "상관 커널 Z(x) 상한"}, kernel_rows,
                meta={"decay_rate": p["decay_rate"]})

    sizes = p["interval_sizes"]
    summary = {"sizes": {str(s): v for s, v in per_size.items()}}
    mu_first, mu_last = per_size[sizes[0]]["mu"], per_size[sizes[-1]]["mu"]
    if len(sizes) >= 2 and np.isfinite(mu_first) and np.isfinite(mu_last) and mu_first:
        change = abs(mu_last - mu_first) / abs(mu_first)
        summary.update(mu_relative_change=change, mu_stable=bool(change <= 0.3))
    return summary


# ---------------------------------------------------------------------------
# wavepacket
# ---------------------------------------------------------------------------

def _wavepacket_task(model: ModelConfig, r: int, params: dict):
    realization = _realization(model, model.interval, "wavepacket", "realization", r)
    cfg = IntegratorConfig(dt=params["dt"], scheme=params["scheme"], t_max=params["t_max"],
                           record_every=params["record_every"])
    es = solve(realization) if params["scheme"] == "exact_harmonic" else None
    i0 = realization.index(0)
    # 사이트 0의 조화 국소 에너지가 packet_energy가 되도록 변위
    alpha = realization.omega_sq[i0] + realization.eta * realization.degree()[i0]
    q = np.zeros(realization.size)
    q[i0] = math.sqrt(2.0 * params["packet_energy"] / alpha)
    states = list(trajectory(ChainState(q, np.zeros_like(q)), realization, model.lam, cfg, es))
    widths = [float(wavepacket_width(s, realization.interval)) for s in states]
    return [s.t for s in states], widths, energy_drift(states, realization, model.lam)


def run_wavepacket(ctx: RunContext) -> dict:
    p, model = ctx.params, ctx.model
    if p["scheme"] == "exact_harmonic" and model.lam != 0:
        raise ConfigValidationError(f"exact_harmonic 적분은 λ = 0 에서만 쓸 수 있습니다 (현재: {model.lam})")
    n = p["n_realizations"]
    ctx.registry.reserve("wavepacket", "realization", f"0..{n - 1}")
    first = _realization(model, model.interval, "wavepacket", "realization", 0)
    _integrator(p, p["t_max"], first, p["record_every"])

    results = parallel_map(_wavepacket_task, [(model, r, p) for r in range(n)], ctx.workers)
    times = results[0][0]
    widths = np.array([res[1] for res in results])
    mean, se = _mean_stderr(widths)
    rows = [{"t": t, "w_mean": float(m), "w_stderr": float(s), "realizations": n}
            for t, m, s in zip(times, mean, se)]
    ctx.writer.table("wavepacket.csv", {
        "t": "시간",
        "w_mean": "평균 패킷 폭 w(t)",
        "w_stderr": "실현 간 표준오차",
        "realizations": "실현 수",
    }, rows, meta={"lambda": model.lam, "packet_energy": p["packet_energy"], "scheme": p["scheme"]})

    summary = {
        "w_initial": float(mean[0]),
        "w_final": float(mean[-1]),
        "max_energy_drift": float(max(res[2] for res in results)),
    }
    if len(times) >= 3:
        fit = fit_line(np.log(times[1:]), np.log(np.maximum(mean[1:], 1e-300)))
        summary["loglog_slope"] = fit.slope
    logger.info(f"파동 묶음 완료: w(0)={summary['w_initial']:.3f}, w(t_max)={summary['w_final']:.3f}")
    return summary


EXPERIMENT_RUNNERS: dict[str, Callable[[RunContext], dict]] = {
    "spectrum": run_spectrum,
    "correlator": run_correlator,
    "envelope": run_envelope,
    "eigenmatch": run_eigenmatch,
    "minami": run_minami,
    "denominator": run_denominator,
    "gibbs_check": run_gibbs_check,
    "decorrelation": run_decorrelation,
    "current": run_current,
    "green_kubo": run_green_kubo,
    "noneq_current": run_noneq_current,
    "expansion_residual": run_expansion_residual,
    "z_stats": run_z_stats,
    "wavepacket": run_wavepacket,
}
