#!/usr/bin/env python3
"""
kgchain - 무질서 비조화 Klein-Gordon 사슬 실험실 (체크아웃에서 바로 실행)

사용법:
    ./main.py <experiment> --config <path> [--seed N] [--workers K] [--out DIR]
    ./main.py validate --config <path>
    ./main.py version
"""

import sys
from pathlib import Path

# 개발 시 모듈 경로 추가
sys.path.insert(0, str(Path(__file__).parent / "src"))

from kgchain.cli import main  # noqa: E402

if __name__ == "__main__":
    main()
