"""
NARMA-10 과제 모듈
입력/목표 시계열 생성, 수작업 분해 하위 과제 목표, NMSE 지표, 데이터셋 저장
"""

import os
import struct
import sys
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np
import pandas as pd

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))
from src.exceptions import DimensionMismatch, DivergentSeries, ZeroVariance
from src.logging_config import get_logger

# 로거 설정
logger = get_logger(__name__)

NARMA_ORDER = 10
DIVERGENCE_LIMIT = 10.0
DEFAULT_LENGTH = 100000
# 발산 시 시드 증가 폭. train/val/test 시드 계열(seed, seed+1, seed+2)이 겹치지 않도록 3
REGENERATION_STRIDE = 3
BINARY_MAGIC = b"RCDS"
CSV_FLOAT_FORMAT = "%.17g"


class SeriesRole(str, Enum):
    INPUT = "input"
    TARGET = "target"
    PREDICTION = "prediction"


@dataclass(frozen=True)
class Series:
    """길이 T의 64비트 실수 시계열"""

    values: np.ndarray
    role: SeriesRole = SeriesRole.TARGET

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise DimensionMismatch(f"시계열은 1차원이어야 합니다: {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("시계열에 유한하지 않은 값이 있습니다.")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "role", SeriesRole(self.role))

    def __len__(self) -> int:
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


SeriesLike = Union[Series, np.ndarray, list]


def as_array(series: SeriesLike) -> np.ndarray:
    """Series 또는 배열을 float64 배열로 변환합니다."""
    if isinstance(series, Series):
        return series.values
    return np.asarray(series, dtype=np.float64)


@dataclass(frozen=True)
class DatasetSplit:
    """train/validation/test 분할. 각 분할은 (입력, 목표) 쌍"""

    train: Tuple[Series, Series]
    validation: Tuple[Series, Series]
    test: Tuple[Series, Series]
    seeds: Tuple[int, int, int] = (0, 1, 2)

    def items(self):
        return (("train", self.train), ("validation", self.validation), ("test", self.test))


def gen_input(T: int, seed: int) -> Series:
    """[0, 0.5] 균등분포 i.i.d. 입력 시계열"""
    if T < 1:
        raise ValueError(f"길이는 1 이상이어야 합니다: {T}")
    rng = np.random.default_rng(seed)
    return Series(rng.uniform(0.0, 0.5, size=T), SeriesRole.INPUT)


def _narma_recursion(drive: np.ndarray) -> np.ndarray:
    """
    y[n] = 0.05·y[n-1]·Σ_{k=0..9} y[n-1-k] + 0.3·y[n-1] + drive[n-1] + 0.1

    음의 시간 인덱스의 값은 0입니다. narma10과 narma_tail_target이 같은 경로를 쓰므로
    분해가 원래 과제를 정확히 재현합니다.
    """
    T = drive.shape[0]
    y = [0.0] * T
    window = [0.0] * NARMA_ORDER
    prev = 0.0
    prev_drive = 0.0
    for n in range(T):
        value = 0.05 * prev * sum(window) + 0.3 * prev + prev_drive + 0.1
        if not abs(value) <= DIVERGENCE_LIMIT:
            raise DivergentSeries(n, value)
        y[n] = value
        window.pop(0)
        window.append(value)
        prev = value
        prev_drive = drive[n]
    return np.asarray(y, dtype=np.float64)


def delay_target(u: SeriesLike) -> Series:
    """모듈 1 목표: y1[n] = u[n-9] (n<9 이면 0)"""
    u = as_array(u)
    delay = NARMA_ORDER - 1
    y1 = np.zeros_like(u)
    if u.shape[0] > delay:
        y1[delay:] = u[:-delay]
    return Series(y1, SeriesRole.TARGET)


def product_target(u: SeriesLike, y1_hat: SeriesLike) -> Series:
    """모듈 2 목표: y2[n] = u[n]·ŷ1[n]"""
    u = as_array(u)
    y1_hat = as_array(y1_hat)
    if u.shape != y1_hat.shape:
        raise DimensionMismatch(f"길이 불일치: {u.shape} != {y1_hat.shape}")
    return Series(u * y1_hat, SeriesRole.TARGET)


def narma_tail_target(y2_hat: SeriesLike) -> Series:
    """모듈 3 목표: ŷ2를 최종 NARMA-10 출력으로 변환하는 재귀"""
    return Series(_narma_recursion(1.5 * as_array(y2_hat)), SeriesRole.TARGET)


def narma10(u: SeriesLike) -> Series:
    """
    NARMA-10 목표 신호를 생성합니다.

    y[n]이 시각 n의 목표가 되도록 정렬합니다 (y[0] = 0.1).

    Raises:
        DivergentSeries: |y| > 10 인 경우
    """
    u = as_array(u)
    drive = product_target(u, delay_target(u)).values
    return Series(_narma_recursion(1.5 * drive), SeriesRole.TARGET)


def nmse(y_hat: SeriesLike, y: SeriesLike, washout: int = 0) -> float:
    """
    정규화 평균제곱오차. 분산은 평가 구간의 모분산입니다.

    Args:
        y_hat: 예측
        y: 목표
        washout: 제외할 초기 샘플 수

    Returns:
        float: NMSE (평균 예측기는 정확히 1)
    """
    y_hat = as_array(y_hat)
    y = as_array(y)
    if y_hat.shape != y.shape:
        raise DimensionMismatch(f"길이 불일치: {y_hat.shape} != {y.shape}")
    y_hat = y_hat[washout:]
    y = y[washout:]
    variance = float(np.var(y))
    if not variance > 0:
        raise ZeroVariance()
    return float(np.mean((y_hat - y) ** 2) / variance)


def generate_dataset(T: int, seed: int, max_attempts: int = 20) -> Tuple[Series, Series, int]:
    """
    발산하지 않는 (입력, NARMA-10 목표) 쌍을 생성합니다.

    Returns:
        Tuple: (u, y, 실제 사용된 시드)
    """
    current = seed
    for attempt in range(max_attempts):
        u = gen_input(T, current)
        try:
            return u, narma10(u), current
        except DivergentSeries as e:
            logger.warning(f"NARMA-10 발산 (시드 {current}, 시도 {attempt + 1}): {e}. 시드를 {REGENERATION_STRIDE} 증가시킵니다.")
            current += REGENERATION_STRIDE
    raise DivergentSeries(-1, float("inf"))


def make_split(T: int = DEFAULT_LENGTH, seed: int = 0) -> DatasetSplit:
    """seed, seed+1, seed+2 로 train/validation/test를 생성합니다."""
    parts = []
    used = []
    for offset in range(3):
        u, y, used_seed = generate_dataset(T, seed + offset)
        parts.append((u, y))
        used.append(used_seed)
    logger.info(f"데이터셋 생성 완료: 길이 {T}, 시드 {used}")
    return DatasetSplit(train=parts[0], validation=parts[1], test=parts[2], seeds=tuple(used))


def save_split_csv(u: SeriesLike, y: SeriesLike, path: Union[str, Path]) -> str:
    """(index, u, y) CSV로 저장합니다."""
    u = as_array(u)
    frame = pd.DataFrame({"index": np.arange(u.shape[0]), "u": u, "y": as_array(y)})
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return str(path)


def load_split_csv(path: Union[str, Path]) -> Tuple[Series, Series]:
    frame = pd.read_csv(path, float_precision="round_trip")
    return Series(frame["u"].to_numpy(), SeriesRole.INPUT), Series(frame["y"].to_numpy(), SeriesRole.TARGET)


def save_split_binary(u: SeriesLike, y: SeriesLike, path: Union[str, Path]) -> str:
    """헤더("RCDS", u32 길이) 뒤에 리틀엔디언 f64 (u, y) 쌍을 기록합니다."""
    u = as_array(u)
    y = as_array(y)
    pairs = np.empty((u.shape[0], 2), dtype="<f8")
    pairs[:, 0] = u
    pairs[:, 1] = y
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(BINARY_MAGIC + struct.pack("<I", u.shape[0]))
        f.write(pairs.tobytes())
    return str(path)


def load_split_binary(path: Union[str, Path]) -> Tuple[Series, Series]:
    with open(path, "rb") as f:
        header = f.read(8)
        if header[:4] != BINARY_MAGIC:
            raise ValueError(f"RCDS 형식이 아닙니다: {path}")
        (length,) = struct.unpack("<I", header[4:])
        pairs = np.frombuffer(f.read(), dtype="<f8")
    if pairs.shape[0] != 2 * length:
        raise ValueError(f"RCDS 길이 불일치: 헤더 {length}, 데이터 {pairs.shape[0] // 2}")
    pairs = pairs.reshape(length, 2).astype(np.float64)
    return Series(pairs[:, 0], SeriesRole.INPUT), Series(pairs[:, 1], SeriesRole.TARGET)


def split_paths(data_dir: Union[str, Path]) -> Dict[str, Dict[str, Path]]:
    """분할별 CSV/바이너리 파일 경로"""
    data_dir = Path(data_dir)
    return {
        name: {"csv": data_dir / f"{name}.csv", "binary": data_dir / f"{name}.rcds"}
        for name in ("train", "validation", "test")
    }
