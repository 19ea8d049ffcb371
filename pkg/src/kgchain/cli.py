"""
kgchain 명령줄 진입점

사용법:
    kgchain <experiment> --config <path> [--seed N] [--workers K] [--out DIR]
    kgchain validate --config <path>
    kgchain version
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .config import (
    EXPERIMENT_PARAMS,
    EXPERIMENTS,
    ConfigManager,
    ExperimentConfig,
    get_base_dir,
    get_config_file,
    get_log_file,
)
from .errors import ConfigValidationError, KgchainError
from .harness import apply_overrides, run
from .logging_config import setup_logging
from .utils import format_table

logger = logging.getLogger(__name__)


def _load_config(config_path: Optional[str], experiment: Optional[str] = None) -> ExperimentConfig:
    """
    --config가 없으면 ./kgchain.json을, 그것도 없으면 기본값만으로 검증합니다
    (실험 이름은 명령어에서).

    Raises:
        ConfigValidationError: 파일이 없거나 스키마 위반
    """
    if not config_path:
        default_file = get_config_file(get_base_dir())
        if default_file.exists():
            logger.info(f"기본 설정 파일 사용: {default_file}")
            config_path = str(default_file)
    if config_path:
        try:
            raw = ConfigManager.load_config(Path(config_path))
        except FileNotFoundError as e:
            raise ConfigValidationError(str(e)) from e
    else:
        raw = {}
    return ConfigManager.validate(raw, experiment)


def cmd_run(args) -> None:
    """실험 실행 (명령어 이름 = 실험 이름)"""
    try:
        config = _load_config(args.config, args.command)
        config = apply_overrides(config, seed=args.seed, workers=args.workers)
    except ConfigValidationError as e:
        logger.error(f"설정 검증 실패: {e}")
        sys.exit(e.exit_code)

    out_dir = ConfigManager.resolve_out_dir(config, args.out)
    setup_logging(log_file=get_log_file(out_dir))

    try:
        record = run(config, out_dir)
    except KgchainError as e:
        logger.error(f"실험이 중단되었습니다 [{e.reason}]: {e}")
        sys.exit(e.exit_code)
    except Exception as e:
        logger.error(f"실험 실패: {e}")
        sys.exit(1)

    print(f"\n✓ {record.experiment} 완료: {out_dir}\n")


def cmd_validate(args) -> None:
    """설정 파일 검증 후 확정된 매개변수 표 출력"""
    try:
        config = _load_config(args.config)
    except ConfigValidationError as e:
        logger.error(f"설정 검증 실패: {e}")
        sys.exit(e.exit_code)

    model = config.model
    rows = [
        ["experiment", config.experiment, "실험"],
        ["model.L", model.L, f"사이트 {2 * model.L + 1}개"],
        ["model.eta", model.eta, "결합 세기"],
        ["model.lambda", model.lam, "비조화성"],
        ["model.disorder", model.disorder.law, f"[{model.disorder.lo}, {model.disorder.hi}]"],
        ["model.seed", model.seed, "마스터 시드"],
        ["workers", config.workers, "병렬 프로세스"],
    ]
    schema = EXPERIMENT_PARAMS[config.experiment]
    for key, value in config.params.items():
        note = "기본값" if value == schema[key].default else "설정 파일"
        rows.append([f"params.{key}", "(자동)" if value is None else value, note])

    print(f"\n✓ 설정 검증 완료: {args.config or get_config_file(get_base_dir())}\n")
    print(format_table(["항목", "값", "비고"], rows))
    print(f"\nconfig hash: {ConfigManager.config_hash(config)}\n")


def cmd_version(args) -> None:
    print(f"kgchain {__version__}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgchain",
        description="kgchain - 무질서 비조화 Klein-Gordon 사슬 실험실",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
사용 예시:
  # 1. 설정 검증 (매개변수 표 출력)
  kgchain validate --config spectrum.json

  # 2. 실험 실행 (시드/워커/출력 디렉토리 재정의)
  kgchain spectrum --config spectrum.json --seed 7 --workers 4 --out runs/spectrum

  # 3. 버전 확인
  kgchain version

출력 디렉토리 우선순위: --out > KGCHAIN_OUT_DIR > 설정 파일 out_dir > ./runs/<experiment>
종료 코드: 0 성공, 2 설정 오류, 3 수치 중단, 1 기타
        """
    )
    subparsers = parser.add_subparsers(dest="command", help="명령어")

    for name in EXPERIMENTS:
        exp_parser = subparsers.add_parser(name, help=f"{name} 실험 실행")
        exp_parser.add_argument("--config", type=str, default=None, help="실험 설정 JSON 경로")
        exp_parser.add_argument("--seed", type=int, default=None, help="마스터 시드 재정의")
        exp_parser.add_argument("--workers", type=int, default=None, help="병렬 프로세스 수 재정의")
        exp_parser.add_argument("--out", type=str, default=None, help="출력 디렉토리")

    validate_parser = subparsers.add_parser("validate", help="설정 파일 검증")
    validate_parser.add_argument("--config", type=str, default=None, help="실험 설정 JSON 경로 (기본: ./kgchain.json)")

    subparsers.add_parser("version", help="버전 출력")
    return parser


def main(argv: Optional[list] = None) -> None:
    """메인 진입점"""
    setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        sys.exit(1)

    if args.command == "validate":
        cmd_validate(args)
    elif args.command == "version":
        cmd_version(args)
    elif args.command in EXPERIMENTS:
        cmd_run(args)
    else:
        logger.error(f"알 수 없는 명령어: {args.command}")
        parser.print_help()
        sys.exit(1)


if __name__ == "__main__":
    main()
