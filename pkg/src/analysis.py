"""
결과 분석 모듈
반복 실행의 NMSE 통계, 수작업 분해 신호와 학습된 중간 신호의 상관 행렬, 신호 발췌
"""

import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))
from src.exceptions import DimensionMismatch, ZeroVariance
from src.logging_config import get_logger
from src.network import SignalRecord, TrainedNetwork, oracle_signals
from src.reservoir import DEFAULT_WASHOUT
from src.tasks import CSV_FLOAT_FORMAT, SeriesLike, as_array

# 로거 설정
logger = get_logger(__name__)

EXCERPT_LENGTH = 100
DEFAULT_MAX_LAG = 15
ENGINEERED_LABEL = "engineered"


@dataclass(frozen=True)
class RunRecord:
    """반복 실행 하나: 테스트 입력에서의 신호 기록과 테스트 NMSE"""

    run_id: int
    record: SignalRecord
    test_nmse: float
    network: Optional[TrainedNetwork] = None

    @property
    def label(self) -> str:
        return f"run_{self.run_id}"


@dataclass(frozen=True)
class RunSet:
    """같은 테스트 입력을 공유하는 실행 묶음"""

    runs: Tuple[RunRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(self.runs))
        if self.runs:
            u0 = self.runs[0].record.u.values
            for run in self.runs[1:]:
                if not np.array_equal(run.record.u.values, u0):
                    raise ValueError(f"실행 {run.run_id}의 테스트 입력이 다른 실행과 다릅니다.")
        ids = [run.run_id for run in self.runs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"run_id가 중복되었습니다: {ids}")

    def __len__(self) -> int:
        return len(self.runs)

    def __iter__(self):
        return iter(self.runs)


@dataclass(frozen=True)
class CorrelationMatrix:
    """라벨이 붙은 대칭 피어슨 상관 행렬"""

    labels: Tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        matrix = np.asarray(self.matrix, dtype=float)
        n = len(self.labels)
        if matrix.shape != (n, n):
            raise DimensionMismatch(f"상관 행렬 크기 {matrix.shape}가 라벨 수 {n}와 맞지 않습니다.")
        if not np.array_equal(matrix, matrix.T):
            raise ValueError("상관 행렬이 대칭이 아닙니다.")
        if np.any(np.abs(matrix) > 1.0):
            raise ValueError("상관 계수가 [-1, 1] 범위를 벗어났습니다.")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.matrix, columns=list(self.labels))
        frame.insert(0, "label", list(self.labels))
        return frame


class RunSummary(NamedTuple):
    mean: float
    std: float
    best_run_id: int


class LagProfile(NamedTuple):
    lags: np.ndarray
    coefficients: np.ndarray
    best_lag: int
    best_coefficient: float


def pearson(a: SeriesLike, b: SeriesLike, washout: int = 0) -> float:
    """
    washout 이후 구간의 피어슨 상관 계수

    Raises:
        ZeroVariance: 어느 한쪽 신호가 상수인 경우
    """
    a = as_array(a)
    b = as_array(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"길이 불일치: {a.shape} != {b.shape}")
    a = a[washout:]
    b = b[washout:]
    if a.shape[0] < 2:
        raise ValueError(f"상관 계수 계산에는 2개 이상의 샘플이 필요합니다: {a.shape[0]}")
    ac = a - a.mean()
    bc = b - b.mean()
    saa = float(ac @ ac)
    sbb = float(bc @ bc)
    if saa <= 0 or sbb <= 0:
        raise ZeroVariance("상관 계수를 계산할 신호의 분산이 0입니다.")
    return float(np.clip((ac @ bc) / np.sqrt(saa * sbb), -1.0, 1.0))


def _check_node_index(node_index: int):
    if node_index not in (1, 2):
        raise ValueError(f"node_index는 1 또는 2여야 합니다: {node_index}")


def correlation_matrix(signals: Mapping[str, SeriesLike], washout: int = 0) -> CorrelationMatrix:
    """신호 쌍마다 pearson을 계산해 대칭 행렬을 만듭니다 (대각은 1)."""
    labels = list(signals)
    arrays = [as_array(signals[label]) for label in labels]
    n = len(labels)
    matrix = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            matrix[i, j] = matrix[j, i] = pearson(arrays[i], arrays[j], washout)
    return CorrelationMatrix(labels=tuple(labels), matrix=matrix)


def correlation_table(engineered: SignalRecord, runs: RunSet, node_index: int,
                      washout: int = DEFAULT_WASHOUT) -> CorrelationMatrix:
    """
    기준(수작업 분해) 신호와 각 실행의 중간 신호 사이의 상관 행렬

    Args:
        engineered: 기준 신호 기록
        runs: 실행 묶음 (기준과 같은 테스트 입력)
        node_index: 1 또는 2
        washout: 제외할 초기 샘플 수

    Returns:
        CorrelationMatrix: (1+R) x (1+R) 행렬, 첫 행/열이 기준 신호
    """
    _check_node_index(node_index)
    signals = {ENGINEERED_LABEL: engineered.node_output(node_index)}
    for run in runs:
        if len(run.record) != len(engineered):
            raise DimensionMismatch(f"실행 {run.run_id}의 신호 길이가 기준과 다릅니다.")
        signals[run.label] = run.record.node_output(node_index)
    logger.info(f"노드 {node_index} 상관 행렬 계산: 기준 1개 + 실행 {len(runs)}개")
    return correlation_matrix(signals, washout)


def summarize_values(values: Mapping[int, float]) -> RunSummary:
    """run_id -> NMSE 에서 평균, 모표준편차, 최고 실행을 계산합니다."""
    if not values:
        raise ValueError("요약할 실행이 없습니다.")
    ids = sorted(values)
    array = np.array([values[i] for i in ids], dtype=float)
    best = ids[0]
    for run_id in ids[1:]:
        if values[run_id] < values[best]:
            best = run_id
    return RunSummary(mean=float(array.mean()), std=float(array.std()), best_run_id=int(best))


def summarize(runs: RunSet) -> RunSummary:
    """실행 묶음의 NMSE 평균, 모표준편차, 최고 실행 (동점이면 작은 run_id)"""
    return summarize_values({run.run_id: run.test_nmse for run in runs})


def engineered_reference(u: SeriesLike) -> SignalRecord:
    """수작업 분해 목표 신호 (y1 = u[n-9], y2 = u·y1, 최종 = NARMA-10)"""
    return oracle_signals(u)


def signal_excerpts(reference: SignalRecord, runs: RunSet, node_index: int,
                    washout: int = DEFAULT_WASHOUT, length: int = EXCERPT_LENGTH) -> pd.DataFrame:
    """washout 직후부터 length 스텝 구간의 기준/실행 신호 (timestep, engineered, run_*)"""
    _check_node_index(node_index)
    end = washout + length
    if end > len(reference):
        raise ValueError(f"발췌 구간 [{washout}, {end})이 신호 길이 {len(reference)}를 넘습니다.")
    frame = pd.DataFrame({
        "timestep": np.arange(washout, end),
        ENGINEERED_LABEL: reference.node_output(node_index).values[washout:end],
    })
    for run in runs:
        frame[run.label] = run.record.node_output(node_index).values[washout:end]
    return frame


def lag_profile(a: SeriesLike, b: SeriesLike, max_lag: int = DEFAULT_MAX_LAG,
                washout: int = DEFAULT_WASHOUT) -> LagProfile:
    """
    b를 a 대비 k 스텝 지연시켰을 때의 상관 계수 (k = -max_lag..max_lag)

    lag k에서는 a[n]과 b[n+k]를 washout 이후 구간에서 짝짓습니다.
    최고 지연은 |r|이 가장 큰 k이며, 동점이면 |k|가 작은 쪽입니다.
    """
    a = as_array(a)
    b = as_array(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"길이 불일치: {a.shape} != {b.shape}")
    T = a.shape[0]
    if T - washout - max_lag < 2:
        raise ValueError(f"지연 분석에 필요한 길이가 부족합니다 (T={T}, washout={washout}, max_lag={max_lag}).")

    lags = np.arange(-max_lag, max_lag + 1)
    coefficients = np.empty(lags.shape[0])
    for i, k in enumerate(lags):
        start = washout + max(0, -k)
        stop = T - max(0, k)
        coefficients[i] = pearson(a[start:stop], b[start + k:stop + k])

    best = min(range(lags.shape[0]), key=lambda i: (-abs(coefficients[i]), abs(lags[i]), lags[i]))
    return LagProfile(lags=lags, coefficients=coefficients, best_lag=int(lags[best]),
                      best_coefficient=float(coefficients[best]))


def lag_table(reference: SignalRecord, runs: RunSet, node_index: int, max_lag: int = DEFAULT_MAX_LAG,
              washout: int = DEFAULT_WASHOUT) -> pd.DataFrame:
    """실행별 최고 지연과 그때의 상관 계수, 지연 0의 상관 계수"""
    _check_node_index(node_index)
    rows = []
    target = reference.node_output(node_index)
    for run in runs:
        profile = lag_profile(target, run.record.node_output(node_index), max_lag, washout)
        rows.append({
            "run_id": run.run_id,
            "best_lag": profile.best_lag,
            "best_r": profile.best_coefficient,
            "r_at_zero": float(profile.coefficients[max_lag]),
        })
    return pd.DataFrame(rows, columns=["run_id", "best_lag", "best_r", "r_at_zero"])


def runs_table(rows: Sequence[Mapping]) -> pd.DataFrame:
    """실행 결과 행(run_id, seed, success, test_nmse, error)을 run_id 순서로 정렬한 DataFrame"""
    columns = ["run_id", "seed", "success", "test_nmse", "error"]
    frame = pd.DataFrame([{key: row.get(key) for key in columns} for row in rows], columns=columns)
    return frame.sort_values("run_id", kind="mergesort").reset_index(drop=True)


def save_frame_csv(frame: pd.DataFrame, path: Union[str, Path]) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return str(path)


def save_correlation_csv(matrix: CorrelationMatrix, path: Union[str, Path]) -> str:
    """첫 행이 라벨인 상관 행렬 CSV"""
    return save_frame_csv(matrix.to_frame(), path)


def load_correlation_csv(path: Union[str, Path]) -> CorrelationMatrix:
    frame = pd.read_csv(path, float_precision="round_trip")
    labels = tuple(frame["label"].astype(str))
    return CorrelationMatrix(labels=labels, matrix=frame[list(labels)].to_numpy(dtype=float))
