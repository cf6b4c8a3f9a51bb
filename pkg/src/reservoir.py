"""
에코 상태 네트워크(ESN) 리저버 모듈
결정적 시드 기반 리저버 생성, 스펙트럼 반경 스케일링, 상태 시뮬레이션
"""

import os
import sys
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))
from src.exceptions import DimensionMismatch, NilpotentMatrix, NonFiniteState
from src.logging_config import get_logger, log_performance

# 로거 설정
logger = get_logger(__name__)

DEFAULT_WASHOUT = 200
NILPOTENT_THRESHOLD = 1e-12
POWER_ITERATION_TOL = 1e-10
POWER_ITERATION_MAX_ITER = 10000
NONLINEARITIES = ("tanh", "elu")


@dataclass(frozen=True)
class ReservoirParams:
    """리저버 하이퍼파라미터"""

    size: int = 100
    spectral_radius: float = 0.9
    input_scaling: Union[float, Tuple[float, ...]] = 0.5
    bias_scaling: float = 0.1
    input_sparsity: float = 1.0
    recurrent_sparsity: float = 0.1
    nonlinearity: str = "elu"
    n_inputs: int = 1
    seed: int = 0

    def __post_init__(self):
        scaling = np.atleast_1d(np.asarray(self.input_scaling, dtype=float))
        if scaling.size == 1:
            scaling = np.full(self.n_inputs, float(scaling[0]))
        object.__setattr__(self, "input_scaling", tuple(float(s) for s in scaling))
        self.validate()

    def validate(self):
        """파라미터 불변 조건을 검증합니다."""
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"리저버 크기는 양의 정수여야 합니다: {self.size}")
        if self.n_inputs < 1:
            raise ValueError(f"입력 채널 수는 1 이상이어야 합니다: {self.n_inputs}")
        if not self.spectral_radius > 0:
            raise ValueError(f"스펙트럼 반경은 양수여야 합니다: {self.spectral_radius}")
        for name in ("input_sparsity", "recurrent_sparsity"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError(f"{name}은(는) (0, 1] 범위여야 합니다: {value}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"지원하지 않는 비선형 함수입니다: {self.nonlinearity}")
        if len(self.input_scaling) != self.n_inputs:
            raise ValueError(
                f"input_scaling 길이({len(self.input_scaling)})가 입력 채널 수({self.n_inputs})와 다릅니다."
            )
        if self.bias_scaling < 0:
            raise ValueError(f"bias_scaling은 음수일 수 없습니다: {self.bias_scaling}")

    def to_dict(self) -> dict:
        return {
            "size": int(self.size),
            "spectral_radius": float(self.spectral_radius),
            "input_scaling": list(self.input_scaling),
            "bias_scaling": float(self.bias_scaling),
            "input_sparsity": float(self.input_sparsity),
            "recurrent_sparsity": float(self.recurrent_sparsity),
            "nonlinearity": self.nonlinearity,
            "n_inputs": int(self.n_inputs),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReservoirParams":
        return cls(**data)


@dataclass(frozen=True)
class Reservoir:
    """고정된 랜덤 순환 시스템. 생성 후 변경되지 않습니다."""

    W: np.ndarray
    W_in: np.ndarray
    b: np.ndarray
    nonlinearity: str
    params: Optional[ReservoirParams] = field(default=None, compare=False)

    def __post_init__(self):
        for arr in (self.W, self.W_in, self.b):
            arr.setflags(write=False)

    @property
    def size(self) -> int:
        return self.W.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.W_in.shape[1]


@dataclass(frozen=True)
class StateTrajectory:
    """리저버 상태 궤적 (T x size). washout 구간은 제거하지 않고 기록만 합니다."""

    states: np.ndarray
    washout: int

    def __post_init__(self):
        self.states.setflags(write=False)

    @property
    def usable(self) -> np.ndarray:
        """washout 이후의 상태 행렬"""
        return self.states[self.washout:]

    def __len__(self) -> int:
        return self.states.shape[0]


def _elu(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, z, np.expm1(np.minimum(z, 0.0)))


def _elu_grad_from_output(out: np.ndarray) -> np.ndarray:
    # z<0 이면 f(z)=exp(z)-1 이므로 f'(z)=f(z)+1
    return np.where(out < 0, out + 1.0, 1.0)


def _tanh_grad_from_output(out: np.ndarray) -> np.ndarray:
    return 1.0 - out * out


_ACTIVATIONS = {
    "elu": (_elu, _elu_grad_from_output),
    "tanh": (np.tanh, _tanh_grad_from_output),
}


def activation(name: str) -> Tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]:
    """
    비선형 함수와 그 도함수를 반환합니다.

    도함수는 활성화 이후 출력값을 인자로 받습니다 (BPTT 역전파에서 전활성값을 저장하지 않기 위함).

    Args:
        name: 'elu' 또는 'tanh'

    Returns:
        Tuple: (f, df_from_output)
    """
    if name not in _ACTIVATIONS:
        raise ValueError(f"지원하지 않는 비선형 함수입니다: {name}")
    return _ACTIVATIONS[name]


def spectral_radius(M: np.ndarray) -> float:
    """
    거듭제곱법으로 행렬의 스펙트럼 반경을 추정합니다.

    모든 원소가 1인 시작 벡터를 사용해 재현성을 보장하고, 레일리 몫 크기의 변화가
    1e-10 미만이면서 고유 잔차가 충분히 작을 때 수렴으로 판단합니다.
    지배 고유값이 복소 켤레쌍이어서 수렴하지 않으면 10000회 후 전체 고유값 분해로 대체합니다.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"정방 행렬이 필요합니다: {M.shape}")

    n = M.shape[0]
    x = np.ones(n) / np.sqrt(n)
    previous = np.inf
    for _ in range(POWER_ITERATION_MAX_ITER):
        y = M @ x
        y_norm = np.linalg.norm(y)
        if y_norm <= NILPOTENT_THRESHOLD:
            break
        rayleigh = float(x @ y)
        x_new = y / y_norm
        magnitude = abs(rayleigh)
        residual = np.linalg.norm(M @ x_new - rayleigh * x_new)
        x = x_new
        if abs(magnitude - previous) < POWER_ITERATION_TOL and residual <= 1e-9 * max(magnitude, NILPOTENT_THRESHOLD):
            return magnitude
        previous = magnitude

    return float(np.max(np.abs(scipy.linalg.eigvals(M))))


def scale_spectral_radius(M: np.ndarray, target: float) -> np.ndarray:
    """
    행렬을 목표 스펙트럼 반경으로 스케일링합니다.

    Args:
        M: 정방 행렬
        target: 목표 스펙트럼 반경 ρ

    Returns:
        np.ndarray: (target / ρ(M)) · M
    """
    radius = spectral_radius(M)
    if radius <= NILPOTENT_THRESHOLD:
        raise NilpotentMatrix(radius)
    return (target / radius) * np.asarray(M, dtype=float)


def _sparse_uniform(rng: np.random.Generator, shape: Tuple[int, int], density: float) -> np.ndarray:
    """[-1, 1] 균등분포 원소를 정확히 round(density·개수)개만 남긴 행렬"""
    values = rng.uniform(-1.0, 1.0, size=shape)
    total = shape[0] * shape[1]
    keep = max(1, int(round(density * total)))
    if keep >= total:
        return values
    mask = np.zeros(total, dtype=bool)
    mask[rng.permutation(total)[:keep]] = True
    return values * mask.reshape(shape)


def init_reservoir(params: ReservoirParams) -> Reservoir:
    """
    파라미터로부터 리저버를 결정적으로 생성합니다.

    Args:
        params: 리저버 하이퍼파라미터

    Returns:
        Reservoir: 생성된 리저버
    """
    rng = np.random.default_rng(params.seed)
    W_raw = _sparse_uniform(rng, (params.size, params.size), params.recurrent_sparsity)
    W_in_raw = _sparse_uniform(rng, (params.size, params.n_inputs), params.input_sparsity)
    b = rng.uniform(-1.0, 1.0, size=params.size) * params.bias_scaling

    W = scale_spectral_radius(W_raw, params.spectral_radius)
    W_in = W_in_raw * np.asarray(params.input_scaling)[np.newaxis, :]

    return Reservoir(W=W, W_in=W_in, b=b, nonlinearity=params.nonlinearity, params=params)


def init_reservoir_with_retry(params: ReservoirParams, max_attempts: int = 10) -> Reservoir:
    """NilpotentMatrix 발생 시 시드를 1씩 증가시켜 다시 생성합니다."""
    current = params
    for attempt in range(max_attempts):
        try:
            return init_reservoir(current)
        except NilpotentMatrix as e:
            logger.warning(f"리저버 재생성 (시도 {attempt + 1}/{max_attempts}, 시드 {current.seed}): {e}")
            current = replace(current, seed=current.seed + 1)
    raise NilpotentMatrix(0.0)


def step(r: Reservoir, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """한 스텝 상태 갱신: f(W·x + W_in·u + b)"""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != (r.size,) or u.shape != (r.n_inputs,):
        raise DimensionMismatch(f"상태/입력 차원 불일치: x={x.shape}, u={u.shape}")
    f, _ = activation(r.nonlinearity)
    return f(r.W @ x + r.W_in @ u + r.b)


def run(r: Reservoir, inputs: Sequence, washout: int = DEFAULT_WASHOUT,
        initial_state: Optional[np.ndarray] = None) -> StateTrajectory:
    """
    입력 시퀀스로 리저버를 구동합니다.

    Args:
        r: 리저버
        inputs: T x n_inputs 입력 (1채널이면 길이 T 벡터도 허용)
        washout: 적합/평가에서 제외할 초기 스텝 수
        initial_state: 초기 상태 (기본값: 영벡터)

    Returns:
        StateTrajectory: T개의 상태와 washout 정보
    """
    U = np.asarray(inputs, dtype=float)
    if U.ndim == 1:
        U = U[:, np.newaxis]
    T = U.shape[0]
    if U.shape[1] != r.n_inputs:
        raise DimensionMismatch(f"입력 채널 수 불일치: {U.shape[1]} != {r.n_inputs}")
    if T <= washout:
        raise ValueError(f"시퀀스 길이({T})가 washout({washout})보다 커야 합니다.")

    start_time = time.perf_counter()
    f, _ = activation(r.nonlinearity)
    drive = U @ r.W_in.T + r.b
    states = np.empty((T, r.size))
    x = np.zeros(r.size) if initial_state is None else np.asarray(initial_state, dtype=float)
    W = r.W
    for t in range(T):
        x = f(W @ x + drive[t])
        states[t] = x

    if not np.isfinite(states).all():
        bad_step = int(np.argmin(np.isfinite(states).all(axis=1)))
        logger.error(f"비유한 상태 발생: 스텝 {bad_step}")
        raise NonFiniteState(bad_step)

    if T >= 10000:
        log_performance("리저버 시뮬레이션", time.perf_counter() - start_time, T=T, size=r.size)
    return StateTrajectory(states=states, washout=washout)
