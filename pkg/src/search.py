"""
하이퍼파라미터 탐색 모듈
시드 기반 랜덤 탐색, 리저버/BPTT 탐색 공간, 검증 NMSE 목적함수
"""

import math
import os
import sys
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))
from src.bptt import BpttConfig, evaluate_bptt_config
from src.exceptions import AllTrialsFailed, EsnNetError
from src.logging_config import get_logger, log_performance
from src.network import (Architecture, chain3_spec, derive_seed, evaluate, monolithic_spec, train_engineered,
                         train_monolithic)
from src.readout import RidgeConfig
from src.reservoir import DEFAULT_WASHOUT, ReservoirParams
from src.tasks import CSV_FLOAT_FORMAT, DatasetSplit

# 로거 설정
logger = get_logger(__name__)

DEFAULT_BUDGET = 100
RESERVOIR_KEYS = ("spectral_radius", "input_scaling", "bias_scaling", "input_sparsity", "recurrent_sparsity")


class DimensionKind(str, Enum):
    UNIFORM = "uniform"
    LOG_UNIFORM = "log-uniform"
    CHOICE = "choice"


class TrialStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"


@dataclass(frozen=True)
class Dimension:
    """탐색 공간의 한 축"""

    name: str
    kind: DimensionKind
    low: Optional[float] = None
    high: Optional[float] = None
    choices: Tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", DimensionKind(self.kind))
        object.__setattr__(self, "choices", tuple(self.choices))
        if self.kind == DimensionKind.CHOICE:
            if not self.choices:
                raise ValueError(f"{self.name}: 선택지가 비어 있습니다.")
            return
        if self.low is None or self.high is None or not self.low < self.high:
            raise ValueError(f"{self.name}: 하한은 상한보다 작아야 합니다 ({self.low}, {self.high}).")
        if self.kind == DimensionKind.LOG_UNIFORM and self.low <= 0:
            raise ValueError(f"{self.name}: 로그 균등분포의 하한은 양수여야 합니다: {self.low}")

    def sample(self, rng: np.random.Generator):
        if self.kind == DimensionKind.CHOICE:
            return self.choices[int(rng.integers(len(self.choices)))]
        if self.kind == DimensionKind.LOG_UNIFORM:
            return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        return float(rng.uniform(self.low, self.high))

    def to_dict(self) -> Dict:
        if self.kind == DimensionKind.CHOICE:
            return {"kind": self.kind.value, "choices": list(self.choices)}
        return {"kind": self.kind.value, "low": self.low, "high": self.high}

    @classmethod
    def from_dict(cls, name: str, data: Mapping) -> "Dimension":
        return cls(name=name, kind=data["kind"], low=data.get("low"), high=data.get("high"),
                   choices=tuple(data.get("choices", ())))


def uniform(name: str, low: float, high: float) -> Dimension:
    return Dimension(name, DimensionKind.UNIFORM, low, high)


def log_uniform(name: str, low: float, high: float) -> Dimension:
    return Dimension(name, DimensionKind.LOG_UNIFORM, low, high)


def choice(name: str, *choices) -> Dimension:
    return Dimension(name, DimensionKind.CHOICE, choices=choices)


@dataclass(frozen=True)
class SearchSpace:
    """이름이 붙은 차원들의 모음 (선언 순서대로 샘플링)"""

    dimensions: Tuple[Dimension, ...]

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        names = self.names
        if not names or len(set(names)) != len(names):
            raise ValueError(f"탐색 공간 차원 이름이 비었거나 중복되었습니다: {names}")

    @property
    def names(self) -> List[str]:
        return [d.name for d in self.dimensions]

    def sample(self, rng: np.random.Generator) -> Dict[str, object]:
        return {d.name: d.sample(rng) for d in self.dimensions}

    def to_dict(self) -> Dict:
        return {d.name: d.to_dict() for d in self.dimensions}

    @classmethod
    def from_dict(cls, data: Mapping[str, Mapping]) -> "SearchSpace":
        return cls(tuple(Dimension.from_dict(name, spec) for name, spec in data.items()))


def default_reservoir_space() -> SearchSpace:
    return SearchSpace((
        uniform("spectral_radius", 0.1, 1.4),
        log_uniform("input_scaling", 1e-2, 1e1),
        log_uniform("bias_scaling", 1e-3, 1e1),
        uniform("input_sparsity", 0.05, 1.0),
        uniform("recurrent_sparsity", 0.05, 1.0),
    ))


def default_bptt_space() -> SearchSpace:
    return SearchSpace((
        log_uniform("lr0", 1e-5, 1e-2),
        log_uniform("weight_decay", 1e-6, 1e-2),
        log_uniform("grad_noise_eta", 1e-4, 1e-1),
        choice("batch_size", 30, 60, 120),
    ))


@dataclass(frozen=True)
class Trial:
    """탐색 시도 하나의 결과"""

    trial_id: int
    point: Dict[str, object]
    value: float
    status: TrialStatus
    seed: int
    error: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "status", TrialStatus(self.status))
        if self.status == TrialStatus.OK and not np.isfinite(self.value):
            raise ValueError(f"성공한 시도의 값은 유한해야 합니다: {self.value}")

    @property
    def ok(self) -> bool:
        return self.status == TrialStatus.OK


Objective = Callable[[Mapping[str, object], int], float]


def sample_points(space: SearchSpace, budget: int, seed: int) -> List[Dict[str, object]]:
    """시드로부터 결정적으로 budget개의 후보를 샘플링합니다."""
    rng = np.random.default_rng(seed)
    return [space.sample(rng) for _ in range(budget)]


def _run_trial(trial_id: int, point: Dict[str, object], objective: Objective, seed: int) -> Trial:
    try:
        value = float(objective(point, seed))
    except EsnNetError as e:
        logger.warning(f"시도 {trial_id} 실패: {e}")
        return Trial(trial_id, point, float("nan"), TrialStatus.FAILED, seed, error=f"{type(e).__name__}: {e}")
    if not np.isfinite(value):
        logger.warning(f"시도 {trial_id} 실패: 목적함수 값이 유한하지 않습니다 ({value})")
        return Trial(trial_id, point, float("nan"), TrialStatus.FAILED, seed, error=f"non-finite value {value}")
    logger.debug(f"시도 {trial_id}: {value:.6f}")
    return Trial(trial_id, point, value, TrialStatus.OK, seed)


def random_search(space: SearchSpace, budget: int, objective: Objective, seed: int, n_jobs: int = 1,
                  objective_seed: Optional[int] = None) -> Tuple[Trial, List[Trial]]:
    """
    랜덤 탐색을 수행합니다.

    Args:
        space: 탐색 공간
        budget: 시도 횟수
        objective: (후보, 시드) -> 검증 NMSE
        seed: 샘플링 시드
        n_jobs: 병렬 작업 수 (결과는 시도 번호 순서로 정렬됨)
        objective_seed: 모든 시도에 같은 시드를 쓰려면 지정 (기본값: 시도별 유도 시드)

    Returns:
        Tuple: (최적 시도, 전체 시도 목록)

    Raises:
        AllTrialsFailed: 모든 시도가 실패한 경우
    """
    if budget < 1:
        raise ValueError(f"budget은 1 이상이어야 합니다: {budget}")

    start_time = time.perf_counter()
    points = sample_points(space, budget, seed)
    seeds = [objective_seed if objective_seed is not None else derive_seed(seed, i) for i in range(budget)]
    trials = Parallel(n_jobs=n_jobs)(
        delayed(_run_trial)(i, point, objective, trial_seed) for i, (point, trial_seed) in enumerate(zip(points, seeds))
    )
    trials = sorted(trials, key=lambda t: t.trial_id)

    completed = [t for t in trials if t.ok]
    if not completed:
        logger.error(f"모든 시도가 실패했습니다 (budget={budget})")
        raise AllTrialsFailed(budget)

    best = completed[0]
    for trial in completed[1:]:
        if trial.value < best.value:
            best = trial

    log_performance("랜덤 탐색", time.perf_counter() - start_time, budget=budget,
                    failed=budget - len(completed), best=f"{best.value:.6f}")
    return best, trials


def apply_point(params: ReservoirParams, point: Mapping[str, object]) -> ReservoirParams:
    """탐색 후보의 리저버 항목을 파라미터에 덮어씁니다."""
    overrides = {key: point[key] for key in RESERVOIR_KEYS if key in point}
    return replace(params, **overrides)


def evaluate_reservoir_config(point: Mapping[str, object], data: DatasetSplit,
                              architecture: Union[str, Architecture] = Architecture.CHAIN3,
                              base_params: Optional[ReservoirParams] = None, seed: int = 0,
                              ridge_cfg: Optional[RidgeConfig] = None,
                              washout: int = DEFAULT_WASHOUT, size: Optional[int] = None,
                              nonlinearity: Optional[str] = None) -> float:
    """
    리저버 하이퍼파라미터 후보를 학습 분할에서 리지로 학습하고 검증 NMSE를 반환합니다.

    Args:
        point: 탐색 후보
        data: 데이터 분할
        architecture: chain3(수작업 분해 학습) 또는 monolithic
        base_params: 후보에 없는 항목의 기본값
        seed: 리저버 시드
        ridge_cfg: λ 교차검증 설정
        washout: 제외할 초기 샘플 수
        size, nonlinearity: 노드 크기/비선형 함수 (None이면 구조별 기본값)
    """
    params = apply_point(base_params or ReservoirParams(), point)
    cfg = ridge_cfg or RidgeConfig()
    architecture = Architecture(architecture)
    overrides = {key: value for key, value in (("size", size), ("nonlinearity", nonlinearity)) if value is not None}
    if architecture == Architecture.CHAIN3:
        net, _ = train_engineered(chain3_spec(params, seed, **overrides), data, cfg, washout)
    else:
        net = train_monolithic(monolithic_spec(params, seed, **overrides), data, cfg, washout)
    u, y = data.validation
    return evaluate(net, u, y, washout)


@dataclass(frozen=True)
class ReservoirObjective:
    """리저버 탐색 목적함수 (병렬 작업자에 전달할 수 있도록 함수 대신 객체로 둠)"""

    data: DatasetSplit
    architecture: Architecture = Architecture.CHAIN3
    base_params: ReservoirParams = field(default_factory=ReservoirParams)
    ridge_cfg: RidgeConfig = field(default_factory=RidgeConfig)
    washout: int = DEFAULT_WASHOUT
    size: Optional[int] = None
    nonlinearity: Optional[str] = None

    def __call__(self, point: Mapping[str, object], seed: int) -> float:
        return evaluate_reservoir_config(point, self.data, self.architecture, self.base_params, seed,
                                         self.ridge_cfg, self.washout, self.size, self.nonlinearity)


@dataclass(frozen=True)
class BpttObjective:
    """BPTT 하이퍼파라미터 탐색 목적함수"""

    data: DatasetSplit
    base_cfg: BpttConfig
    reservoir_params: ReservoirParams = field(default_factory=ReservoirParams)
    washout: int = DEFAULT_WASHOUT
    size: int = 100
    nonlinearity: str = "elu"

    def __call__(self, point: Mapping[str, object], seed: int) -> float:
        return evaluate_bptt_config(point, self.data, self.base_cfg, self.reservoir_params, seed, self.washout,
                                    self.size, self.nonlinearity)


def trials_frame(trials: Sequence[Trial], space: SearchSpace) -> pd.DataFrame:
    """trial_id, 각 차원, value, status, seed 열을 가진 DataFrame"""
    rows = []
    for trial in trials:
        row = {"trial_id": trial.trial_id}
        row.update({name: trial.point.get(name) for name in space.names})
        row.update({"value": trial.value, "status": trial.status.value, "seed": trial.seed})
        rows.append(row)
    return pd.DataFrame(rows, columns=["trial_id", *space.names, "value", "status", "seed"])


def save_trials_csv(trials: Sequence[Trial], space: SearchSpace, path: Union[str, Path]) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trials_frame(trials, space).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return str(path)


def load_trials_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")
