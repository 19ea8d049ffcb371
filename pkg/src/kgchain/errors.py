"""예외 정의 모듈

CLI 종료 코드와 RunRecord의 중단 사유(reason)가 예외 타입에서 결정됩니다.
- 2: 설정 검증 실패
- 3: 수치 계산 중단 (근공명, 항 개수 예산 초과, 고유값 분해 실패 등)
"""


class KgchainError(Exception):
    """kgchain 공통 예외"""

    reason = "error"
    exit_code = 1

    def to_dict(self) -> dict:
        return {"reason": self.reason, "message": str(self)}


class ConfigValidationError(KgchainError, ValueError):
    """실험 설정이 스키마를 만족하지 않음"""

    reason = "validation"
    exit_code = 2


class NumericalAbort(KgchainError, RuntimeError):
    """계산을 계속할 수 없는 수치적 사건"""

    reason = "numerical_abort"
    exit_code = 3


class SpectralError(NumericalAbort):
    reason = "eigensolver_failure"


class NearResonanceError(NumericalAbort):
    """𝒮 밖의 단항식에서 |Δ|가 임계값보다 작음"""

    reason = "near_resonance"

    def __init__(self, delta: float, monomial: tuple, threshold: float):
        self.delta = delta
        self.monomial = monomial
        self.threshold = threshold
        super().__init__(
            f"근공명 분모 발견: |Δ|={abs(delta):.3e} < {threshold:.1e}, 단항식={monomial}"
        )


class BudgetExceededError(NumericalAbort):
    """조합/항 개수가 설정된 상한을 넘음"""

    reason = "budget_exceeded"

    def __init__(self, what: str, count: int, budget: int):
        self.what = what
        self.count = count
        self.budget = budget
        super().__init__(f"{what} 개수 {count:,}개가 상한 {budget:,}개를 초과합니다")


class NonFiniteStateError(NumericalAbort):
    reason = "non_finite_state"


class EnvelopeFailureError(NumericalAbort):
    """heat-bath 기각 샘플링이 max_tries 안에 수락되지 않음"""

    reason = "envelope_failure"
