"""콘솔 표 출력과 최소제곱 직선 맞춤 유틸리티"""

import unicodedata
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats


def display_width(text: str) -> int:
    """터미널 출력 칸 수 (전각 W/F 문자는 2칸)"""
    return sum(2 if unicodedata.east_asian_width(ch) in ("W", "F") else 1 for ch in text)


def format_cell(value) -> str:
    """표 칸 문자열: float는 유효숫자 6자리, 목록은 쉼표로 잇고 None은 빈 칸"""
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return ", ".join(format_cell(v) for v in value)
    return str(value)


def _is_number(value) -> bool:
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)


def format_table(headers: Sequence[str], rows: Sequence[Sequence], widths: Optional[Sequence[int]] = None) -> str:
    """
    한글 너비를 고려한 고정폭 표 (헤더, 구분선, 행, 구분선)

    모든 값이 숫자인 열은 오른쪽, 나머지 열은 왼쪽 정렬입니다.
    widths를 생략하면 열마다 가장 넓은 칸에 맞춥니다. 넘치는 칸은 자르지 않습니다.
    """
    cells = [[format_cell(v) for v in row] for row in rows]
    if widths is None:
        widths = [
            max([display_width(h)] + [display_width(row[i]) for row in cells])
            for i, h in enumerate(headers)
        ]
    numeric = [bool(rows) and all(_is_number(row[i]) for row in rows) for i in range(len(headers))]

    def line(values, right) -> str:
        parts = []
        for text, width, r in zip(values, widths, right):
            pad = " " * max(0, width - display_width(text))
            parts.append(pad + text if r else text + pad)
        return "  ".join(parts)

    header = line(headers, numeric)
    rule = "-" * display_width(header)
    return "\n".join([header, rule, *(line(row, numeric) for row in cells), rule])


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    n_points: int


def fit_line(x, y) -> LineFit:
    """
    y = slope·x + intercept 최소제곱 맞춤

    Raises:
        ValueError: 유한한 점이 2개 미만인 경우
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = np.isfinite(x) & np.isfinite(y)
    if mask.sum() < 2:
        raise ValueError(f"직선 맞춤에 필요한 점이 부족합니다 (유효 점: {int(mask.sum())}개)")
    if mask.sum() == 2:
        slope = (y[mask][1] - y[mask][0]) / (x[mask][1] - x[mask][0])
        intercept = y[mask][0] - slope * x[mask][0]
        return LineFit(float(slope), float(intercept), 1.0, 0.0, 2)
    result = stats.linregress(x[mask], y[mask])
    return LineFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        r_squared=float(result.rvalue ** 2),
        slope_stderr=float(result.stderr),
        n_points=int(mask.sum()),
    )


def fit_loglog(x, y) -> LineFit:
    """양수인 점만 골라 log y = slope·log x + intercept 맞춤"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = (x > 0) & (y > 0)
    return fit_line(np.log(x[mask]), np.log(y[mask]))
