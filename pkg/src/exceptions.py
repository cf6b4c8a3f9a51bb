"""
EsnNet 예외 정의 모듈
수치 계산, 데이터 생성, 학습, 설정 단계에서 발생하는 오류 유형
"""

from typing import Any, Dict, Optional


class EsnNetError(Exception):
    """EsnNet에서 발생하는 모든 오류의 기본 클래스"""


class NilpotentMatrix(EsnNetError, ValueError):
    """스펙트럼 반경이 0에 가까워 스케일링할 수 없는 행렬"""

    def __init__(self, radius: float):
        self.radius = radius
        super().__init__(f"행렬의 스펙트럼 반경이 너무 작습니다 (ρ={radius:.3e}). 다른 시드로 다시 생성하세요.")


class NonFiniteState(EsnNetError, RuntimeError):
    """리저버 상태에 NaN/Inf가 발생함 (불안정한 리저버 설정)"""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"리저버 상태가 {step}번째 스텝에서 유한하지 않습니다.")


class SingularSystem(EsnNetError, ValueError):
    """정규 방정식이 수치적으로 특이함"""

    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"정규 방정식이 특이합니다 (조건수 추정치 {condition:.3e}).")


class DivergentSeries(EsnNetError, RuntimeError):
    """NARMA 재귀가 발산함"""

    def __init__(self, step: int, value: float):
        self.step = step
        self.value = value
        super().__init__(f"시계열이 {step}번째 스텝에서 발산했습니다 (값 {value:.3e}).")


class ZeroVariance(EsnNetError, ValueError):
    """목표 신호의 분산이 0임"""

    def __init__(self, message: str = "목표 신호의 분산이 0입니다."):
        super().__init__(message)


class DimensionMismatch(EsnNetError, ValueError):
    """입력 차원이 맞지 않음"""


class NonFiniteLoss(EsnNetError, RuntimeError):
    """BPTT 학습 중 손실이 유한하지 않음"""

    def __init__(self, epoch: int, batch: int, diagnostics: Optional[Dict[str, Any]] = None):
        self.epoch = epoch
        self.batch = batch
        self.diagnostics = diagnostics or {}
        super().__init__(
            f"손실이 유한하지 않습니다 (에폭 {epoch}, 배치 {batch}, 진단: {self.diagnostics})"
        )


class AllTrialsFailed(EsnNetError, RuntimeError):
    """하이퍼파라미터 탐색의 모든 시도가 실패함"""

    def __init__(self, budget: int):
        self.budget = budget
        super().__init__(f"{budget}개의 탐색 시도가 모두 실패했습니다.")


class ConfigError(EsnNetError, ValueError):
    """실험 설정 검증 실패"""
