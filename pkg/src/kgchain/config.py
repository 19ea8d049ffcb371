"""설정 관리 모듈 - 기본값, 경로, 실험 설정 JSON 검증"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigValidationError

logger = logging.getLogger(__name__)


SERVICE_NAME = "kgchain"
OUT_DIR_ENV = "KGCHAIN_OUT_DIR"


# 경로 해결 함수
def get_base_dir(work_dir: Optional[Path] = None) -> Path:
    """
    작업 디렉토리 경로 반환

    Args:
        work_dir: 명시적으로 지정된 작업 디렉토리 (기본: 현재 디렉토리)
    """
    if work_dir is None:
        return Path.cwd().resolve()
    return Path(work_dir).resolve()


def get_config_file(base_dir: Path) -> Path:
    """기본 설정 파일 경로 (<base_dir>/kgchain.json)"""
    return base_dir / "kgchain.json"


def get_log_file(out_dir: Path) -> Path:
    """kgchain.log 파일 경로 반환"""
    return out_dir / "kgchain.log"


def get_run_record_file(out_dir: Path) -> Path:
    """run.json (RunRecord) 경로 반환"""
    return out_dir / "run.json"


def get_data_file(out_dir: Path, name: str) -> Path:
    """실험 산출물 경로 반환"""
    return out_dir / name


# 모델 기본값
DEFAULT_ETA = 1.0
DEFAULT_DISORDER_LAW = "uniform"
DEFAULT_DISORDER_LO = 0.5
DEFAULT_DISORDER_HI = 1.5

# 수치 임계값
NEAR_RESONANCE_THRESHOLD = 1e-13  # 𝒮 밖 단항식의 |Δ| 하한
ZERO_COEFFICIENT_TOL = 1e-14      # 최대 계수 대비 0으로 간주하는 비율
DEFAULT_TERM_BUDGET = 5_000_000   # 원장(ledger) 행 개수 상한
DEFAULT_EXACT_CAP = 10_000        # EXACT 모드에서 허용하는 |모드|⁴
DEFAULT_TUPLE_CAP = 10 ** 10      # 작은 분모 순서쌍 개수 상한
STABILITY_MARGIN = 0.5            # dt·ν_+ 상한

# 실험 기본값
DEFAULT_EPSILONS = (1e-6, 1e-2, 13)   # logspace(시작, 끝, 개수)
DEFAULT_GAMMAS = (1e-5, 1e-2, 13)
DEFAULT_Q_EXPONENT = 0.2
DEFAULT_DT = 0.02
DEFAULT_BURN_IN = 1000
DEFAULT_THINNING = 10
DEFAULT_MAX_TRIES = 200


@dataclass(frozen=True)
class Param:
    default: Any
    kind: str                      # int, float, bool, str, int_list, float_list, str_list
    minimum: Optional[float] = None
    choices: tuple = ()
    optional: bool = False


SCHEMES = ("verlet", "yoshida4", "exact_harmonic")

EXPERIMENT_PARAMS: dict[str, dict[str, Param]] = {
    "spectrum": {
        "n_realizations": Param(1, "int", 1),
        "dump_vectors": Param(False, "bool"),
    },
    "correlator": {
        "n_realizations": Param(500, "int", 1),
        "max_distance": Param(30, "int", 1),
        "n_reference": Param(21, "int", 1),
    },
    "envelope": {
        "n_realizations": Param(200, "int", 1),
        "L_values": Param([100, 200], "int_list", 0),
        "xi": Param(None, "float", 0, optional=True),
        "site": Param(0, "int"),
    },
    "eigenmatch": {
        "n_realizations": Param(100, "int", 1),
        "L_local": Param(30, "int", 1),
    },
    "minami": {
        "interval_size": Param(20, "int", 2),
        "n_realizations": Param(10_000, "int", 1),
        "gammas": Param(None, "float_list", 0, optional=True),
    },
    "denominator": {
        "m": Param(2, "int", 2),
        "sigma": Param([1, -1], "int_list"),
        "interval_size": Param(20, "int", 2),
        "trials": Param(10_000, "int", 1),
        "epsilons": Param(None, "float_list", 0, optional=True),
        "tuple_cap": Param(DEFAULT_TUPLE_CAP, "int", 1),
    },
    "gibbs_check": {
        "n_harmonic": Param(100_000, "int", 2),
        "n_chains": Param(64, "int", 1),
        "samples_per_chain": Param(50, "int", 1),
        "burn_in": Param(DEFAULT_BURN_IN, "int", 0),
        "thinning": Param(DEFAULT_THINNING, "int", 1),
    },
    "decorrelation": {
        "lambdas": Param([0.0, 0.05, 0.1, 0.2], "float_list", 0),
        "t": Param(100.0, "float", 0),
        "n_states": Param(200, "int", 1),
        "dt": Param(DEFAULT_DT, "float", 0),
        "scheme": Param("yoshida4", "str", choices=("verlet", "yoshida4")),
        "burn_in": Param(DEFAULT_BURN_IN, "int", 0),
        "thinning": Param(DEFAULT_THINNING, "int", 1),
    },
    "current": {
        "n_trajectories": Param(200, "int", 1),
        "t_max": Param(1000.0, "float", 0),
        "dt": Param(DEFAULT_DT, "float", 0),
        "x0": Param(0, "int"),
        "record_every": Param(50, "int", 1),
        "scheme": Param("verlet", "str", choices=SCHEMES),
        "burn_in": Param(DEFAULT_BURN_IN, "int", 0),
        "thinning": Param(DEFAULT_THINNING, "int", 1),
    },
    "green_kubo": {
        "lambdas": Param([0.2, 0.3, 0.4], "float_list", 0),
        "order": Param(1, "int", 1),
        "tau": Param(10.0, "float", 0),
        "t_cap": Param(2000.0, "float", 0),
        "n_trajectories": Param(50, "int", 1),
        "dt": Param(DEFAULT_DT, "float", 0),
        "scheme": Param("verlet", "str", choices=("verlet", "yoshida4")),
        "burn_in": Param(DEFAULT_BURN_IN, "int", 0),
        "thinning": Param(DEFAULT_THINNING, "int", 1),
    },
    "noneq_current": {
        "beta_left": Param(0.5, "float", 0),
        "beta_right": Param(2.0, "float", 0),
        "n_trajectories": Param(100, "int", 1),
        "t_max": Param(100.0, "float", 0),
        "dt": Param(DEFAULT_DT, "float", 0),
        "x0": Param(0, "int"),
        "record_every": Param(50, "int", 1),
        "scheme": Param("verlet", "str", choices=("verlet", "yoshida4")),
    },
    "expansion_residual": {
        "interval_size": Param(5, "int", 1),
        "order": Param(2, "int", 1),
        "sources": Param(["current", "mode_energy"], "str_list"),
        "n_states": Param(100, "int", 1),
        "closed_form_size": Param(3, "int", 0),
    },
    "z_stats": {
        "interval_sizes": Param([21, 41], "int_list", 1),
        "n_realizations": Param(1000, "int", 1),
        "q": Param(DEFAULT_Q_EXPONENT, "float", 0),
        "order": Param(1, "int", 1),
        "radius": Param(2, "int", 0),
        "thresholds": Param(None, "float_list", 0, optional=True),
        "ells": Param([2, 4, 6, 8], "int_list", 1),
        "decay_rate": Param(None, "float", 0, optional=True),
    },
    "wavepacket": {
        "n_realizations": Param(50, "int", 1),
        "t_max": Param(1000.0, "float", 0),
        "dt": Param(DEFAULT_DT, "float", 0),
        "record_every": Param(500, "int", 1),
        "scheme": Param("verlet", "str", choices=SCHEMES),
        "packet_energy": Param(1.0, "float", 0),
    },
}

EXPERIMENTS = tuple(EXPERIMENT_PARAMS)

MODEL_KEYS = {"L", "eta", "lambda", "disorder", "seed"}
DISORDER_KEYS = {"law", "lo", "hi", "values"}
TOP_KEYS = {"experiment", "model", "params", "workers", "out_dir"}


@dataclass
class ExperimentConfig:
    """검증을 통과한 실험 설정 (model은 kgchain.model.ModelConfig)"""

    experiment: str
    model: Any
    params: dict = field(default_factory=dict)
    workers: int = 1
    out_dir: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "model": self.model.to_dict(),
            "params": dict(self.params),
            "workers": self.workers,
            "out_dir": self.out_dir,
        }


def _check_param(experiment: str, name: str, value: Any, rule: Param) -> Any:
    where = f"{experiment}.params.{name}"
    if value is None:
        if rule.optional:
            return None
        raise ConfigValidationError(f"{where} 값이 비어 있습니다")

    def is_number(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool)

    if rule.kind == "int":
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigValidationError(f"{where}는 정수여야 합니다 (현재: {value!r})")
    elif rule.kind == "float":
        if not is_number(value):
            raise ConfigValidationError(f"{where}는 실수여야 합니다 (현재: {value!r})")
        value = float(value)
    elif rule.kind == "bool":
        if not isinstance(value, bool):
            raise ConfigValidationError(f"{where}는 true/false 여야 합니다 (현재: {value!r})")
    elif rule.kind == "str":
        if not isinstance(value, str):
            raise ConfigValidationError(f"{where}는 문자열이어야 합니다 (현재: {value!r})")
        if rule.choices and value not in rule.choices:
            raise ConfigValidationError(
                f"{where} 값 '{value}'은(는) 허용되지 않습니다 (허용: {', '.join(rule.choices)})"
            )
    elif rule.kind.endswith("_list"):
        if not isinstance(value, list) or not value:
            raise ConfigValidationError(f"{where}는 비어 있지 않은 목록이어야 합니다 (현재: {value!r})")
        if rule.kind == "int_list" and not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigValidationError(f"{where}의 원소는 모두 정수여야 합니다 (현재: {value!r})")
        if rule.kind == "float_list":
            if not all(is_number(v) for v in value):
                raise ConfigValidationError(f"{where}의 원소는 모두 실수여야 합니다 (현재: {value!r})")
            value = [float(v) for v in value]
        if rule.kind == "str_list" and not all(isinstance(v, str) for v in value):
            raise ConfigValidationError(f"{where}의 원소는 모두 문자열이어야 합니다 (현재: {value!r})")

    if rule.minimum is not None:
        values = value if isinstance(value, list) else [value]
        if any(v < rule.minimum for v in values):
            raise ConfigValidationError(f"{where}는 {rule.minimum} 이상이어야 합니다 (현재: {value!r})")
    return value


def _check_model(raw: Any):
    from .model import ModelConfig

    if not isinstance(raw, dict):
        raise ConfigValidationError("model은 JSON 객체여야 합니다")
    unknown = set(raw) - MODEL_KEYS
    if unknown:
        raise ConfigValidationError(f"model에 알 수 없는 키가 있습니다: {', '.join(sorted(unknown))}")
    disorder = raw.get("disorder", {})
    if not isinstance(disorder, dict):
        raise ConfigValidationError("model.disorder는 JSON 객체여야 합니다")
    unknown = set(disorder) - DISORDER_KEYS
    if unknown:
        raise ConfigValidationError(f"model.disorder에 알 수 없는 키가 있습니다: {', '.join(sorted(unknown))}")
    data = {"L": 50, **raw}
    for key in ("L", "seed"):
        if key in data and (not isinstance(data[key], int) or isinstance(data[key], bool)):
            raise ConfigValidationError(f"model.{key}는 정수여야 합니다 (현재: {data[key]!r})")
    if not 0 <= data.get("seed", 0) < 2 ** 64:
        raise ConfigValidationError(f"model.seed는 64비트 음이 아닌 정수여야 합니다 (현재: {data['seed']})")
    try:
        return ModelConfig.from_dict(data)
    except (TypeError, ValueError) as e:
        raise ConfigValidationError(f"model 설정 오류: {e}") from e


class ConfigManager:
    """실험 설정 JSON 읽기/검증"""

    @staticmethod
    def load_config(path: Path) -> dict:
        """
        설정 파일 로드

        Raises:
            FileNotFoundError: 설정 파일이 없는 경우
            ConfigValidationError: JSON 형식이 잘못된 경우
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"설정 파일이 없습니다: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigValidationError(f"설정 파일 JSON 파싱 실패: {path} ({e})") from e
        if not isinstance(data, dict):
            raise ConfigValidationError(f"설정 파일 최상위는 JSON 객체여야 합니다: {path}")
        return data

    @staticmethod
    def validate(raw: dict, experiment: Optional[str] = None) -> ExperimentConfig:
        """
        원시 설정을 검증하고 실험별 기본값을 채웁니다.

        Args:
            raw: JSON에서 읽은 dict
            experiment: CLI에서 지정한 실험 이름 (설정 파일 값과 달라서는 안 됨)

        Raises:
            ConfigValidationError: 키/타입/범위가 스키마와 맞지 않는 경우
        """
        unknown = set(raw) - TOP_KEYS
        if unknown:
            raise ConfigValidationError(f"알 수 없는 설정 키: {', '.join(sorted(unknown))}")

        name = raw.get("experiment", experiment)
        if experiment is not None and name != experiment:
            raise ConfigValidationError(
                f"설정 파일의 실험({name})과 명령어의 실험({experiment})이 다릅니다"
            )
        if name not in EXPERIMENT_PARAMS:
            raise ConfigValidationError(
                f"알 수 없는 실험입니다: {name} (허용: {', '.join(EXPERIMENTS)})"
            )

        model = _check_model(raw.get("model", {}))

        params_raw = raw.get("params", {})
        if not isinstance(params_raw, dict):
            raise ConfigValidationError("params는 JSON 객체여야 합니다")
        schema = EXPERIMENT_PARAMS[name]
        unknown = set(params_raw) - set(schema)
        if unknown:
            raise ConfigValidationError(
                f"{name} 실험에 알 수 없는 매개변수: {', '.join(sorted(unknown))}"
            )
        params = {}
        for key, rule in schema.items():
            value = params_raw.get(key, rule.default)
            if isinstance(value, list):
                value = list(value)
            params[key] = _check_param(name, key, value, rule)

        workers = raw.get("workers", 1)
        if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
            raise ConfigValidationError(f"workers는 1 이상의 정수여야 합니다 (현재: {workers!r})")

        out_dir = raw.get("out_dir")
        if out_dir is not None and not isinstance(out_dir, str):
            raise ConfigValidationError(f"out_dir는 문자열이어야 합니다 (현재: {out_dir!r})")

        return ExperimentConfig(experiment=name, model=model, params=params, workers=workers, out_dir=out_dir)

    @staticmethod
    def config_hash(config: ExperimentConfig) -> str:
        """정규화된 JSON(out_dir, workers 제외)의 sha256"""
        data = config.to_dict()
        data.pop("out_dir", None)
        data.pop("workers", None)
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @staticmethod
    def get_out_dir_from_env() -> Optional[str]:
        """KGCHAIN_OUT_DIR 환경 변수 (유일한 환경 변수 재정의)"""
        value = os.environ.get(OUT_DIR_ENV)
        return value or None

    @staticmethod
    def resolve_out_dir(config: ExperimentConfig, cli_out: Optional[str] = None) -> Path:
        """
        출력 디렉토리 결정: --out > KGCHAIN_OUT_DIR > 설정 파일 > ./runs/<experiment>
        """
        for candidate in (cli_out, ConfigManager.get_out_dir_from_env(), config.out_dir):
            if candidate:
                return Path(candidate).resolve()
        return (get_base_dir() / "runs" / config.experiment).resolve()
