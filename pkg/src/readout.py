"""
리지 회귀 리드아웃 모듈
닫힌 형태의 리드아웃 적합과 시계열 블록 교차검증 기반 정규화 강도 선택
"""

import os
import sys
import time
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Sequence

import numpy as np
import scipy.linalg

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))
from src.exceptions import DimensionMismatch, SingularSystem, ZeroVariance
from src.logging_config import get_logger, log_performance

# 로거 설정
logger = get_logger(__name__)

CONDITION_LIMIT = 1e12
DEFAULT_LAMBDA_GRID = tuple(float(v) for v in np.logspace(-9, 3, 13))


@dataclass(frozen=True)
class ReadoutWeights:
    """상태 벡터에서 스칼라 출력으로의 아핀 사상"""

    w: np.ndarray
    b0: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1 or not np.isfinite(w).all() or not np.isfinite(self.b0):
            raise ValueError("리드아웃 가중치는 유한한 1차원 벡터여야 합니다.")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b0", float(self.b0))

    @property
    def n_features(self) -> int:
        return self.w.shape[0]

    def to_dict(self) -> Dict:
        return {"w": self.w.tolist(), "b0": self.b0}

    @classmethod
    def from_dict(cls, data: Dict) -> "ReadoutWeights":
        return cls(w=np.asarray(data["w"], dtype=float), b0=data["b0"])


@dataclass(frozen=True)
class RidgeConfig:
    """리지 회귀 교차검증 설정"""

    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID
    folds: int = 5

    def __post_init__(self):
        grid = tuple(float(v) for v in self.lambda_grid)
        object.__setattr__(self, "lambda_grid", grid)
        if not grid:
            raise ValueError("lambda_grid가 비어 있습니다.")
        if any(v < 0 for v in grid):
            raise ValueError("λ는 음수일 수 없습니다.")
        if list(grid) != sorted(grid):
            raise ValueError("lambda_grid는 오름차순으로 정렬되어야 합니다.")
        if self.folds < 2:
            raise ValueError(f"fold 수는 2 이상이어야 합니다: {self.folds}")


class CVResult(NamedTuple):
    """교차검증 결과 (best_lambda, 그리드 순서의 평균 검증 NMSE)"""

    best_lambda: float
    scores: np.ndarray


@dataclass
class _Stats:
    """리지 회귀 충분통계량"""

    gram: np.ndarray
    cross: np.ndarray
    s_sum: np.ndarray
    y_sum: float
    count: int = field(default=0)

    def __sub__(self, other: "_Stats") -> "_Stats":
        return _Stats(self.gram - other.gram, self.cross - other.cross,
                      self.s_sum - other.s_sum, self.y_sum - other.y_sum,
                      self.count - other.count)


def _stats(S: np.ndarray, y: np.ndarray) -> _Stats:
    return _Stats(gram=S.T @ S, cross=S.T @ y, s_sum=S.sum(axis=0), y_sum=float(y.sum()), count=S.shape[0])


def _check_inputs(S, y):
    S = np.asarray(S, dtype=float)
    y = np.asarray(y, dtype=float)
    if S.ndim == 1:
        S = S[:, np.newaxis]
    if S.ndim != 2 or y.ndim != 1 or S.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"상태 행렬과 목표의 크기가 맞지 않습니다: S={S.shape}, y={y.shape}")
    return S, y


def ridge_from_stats(stats: _Stats, lam: float):
    """
    충분통계량으로부터 편향을 정규화하지 않는 리지 해를 구합니다.

    Returns:
        Tuple: (w, b0)
    """
    n = stats.count
    s_mean = stats.s_sum / n
    y_mean = stats.y_sum / n
    A = stats.gram - n * np.outer(s_mean, s_mean)
    rhs = stats.cross - n * s_mean * y_mean
    w = _solve_spd(A, rhs, lam)
    return w, y_mean - float(s_mean @ w)


def _solve_spd(A: np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:
    F = A.shape[0]
    if lam == 0:
        condition = np.linalg.cond(A)
        if not np.isfinite(condition) or condition > CONDITION_LIMIT:
            raise SingularSystem(float(condition))
    system = A + lam * np.eye(F)
    try:
        factor = scipy.linalg.cho_factor(system, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        raise SingularSystem(float(np.linalg.cond(system)))
    return scipy.linalg.cho_solve(factor, rhs)


def ridge_fit(S, y, lam: float) -> ReadoutWeights:
    """
    ‖S·w + b0 − y‖² + λ‖w‖² 를 최소화하는 리드아웃을 적합합니다.

    편향은 중심화로 처리하여 정규화하지 않으며, 정규 방정식은 촐레스키 분해로 풉니다.
    washout 구간은 호출자가 미리 제외해야 합니다.

    Args:
        S: N x F 상태 행렬
        y: 길이 N 목표
        lam: 정규화 강도 λ ≥ 0

    Returns:
        ReadoutWeights: 적합된 리드아웃
    """
    S, y = _check_inputs(S, y)
    if lam < 0:
        raise ValueError(f"λ는 음수일 수 없습니다: {lam}")
    s_mean = S.mean(axis=0)
    y_mean = float(y.mean())
    Sc = S - s_mean
    w = _solve_spd(Sc.T @ Sc, Sc.T @ (y - y_mean), lam)
    return ReadoutWeights(w=w, b0=y_mean - float(s_mean @ w))


def predict(weights: ReadoutWeights, S) -> np.ndarray:
    """리드아웃 출력 S·w + b0"""
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, np.newaxis]
    if S.shape[1] != weights.n_features:
        raise DimensionMismatch(f"특성 수 불일치: {S.shape[1]} != {weights.n_features}")
    return S @ weights.w + weights.b0


def fold_blocks(n: int, folds: int) -> List[slice]:
    """셔플 없이 연속된 블록으로 나눈 fold 구간"""
    edges = np.linspace(0, n, folds + 1).round().astype(int)
    return [slice(int(edges[k]), int(edges[k + 1])) for k in range(folds)]


def _block_nmse(y_hat: np.ndarray, y: np.ndarray) -> float:
    variance = float(np.var(y))
    if variance <= 0:
        raise ZeroVariance("검증 블록의 목표 분산이 0입니다.")
    return float(np.mean((y_hat - y) ** 2) / variance)


def cv_select_lambda(S, y, cfg: RidgeConfig) -> CVResult:
    """
    연속 블록 k-fold 교차검증으로 λ를 선택합니다.

    동점일 때는 더 큰 λ(더 강한 정규화)를 선택합니다.

    Args:
        S: N x F 상태 행렬 (washout 제외됨)
        y: 목표
        cfg: 리지 설정

    Returns:
        CVResult: 선택된 λ와 λ별 평균 검증 NMSE
    """
    S, y = _check_inputs(S, y)
    n = S.shape[0]
    if n < cfg.folds:
        raise ValueError(f"샘플 수({n})가 fold 수({cfg.folds})보다 작습니다.")

    start_time = time.perf_counter()
    # 전역 평균으로 이동해 두면 통계량 차감 시 상쇄 오차가 줄어듭니다
    S = S - S.mean(axis=0)
    blocks = fold_blocks(n, cfg.folds)
    block_stats = [_stats(S[blk], y[blk]) for blk in blocks]
    total = block_stats[0]
    for extra in block_stats[1:]:
        total = _Stats(total.gram + extra.gram, total.cross + extra.cross,
                       total.s_sum + extra.s_sum, total.y_sum + extra.y_sum,
                       total.count + extra.count)

    scores = np.full(len(cfg.lambda_grid), np.inf)
    last_error = None
    for i, lam in enumerate(cfg.lambda_grid):
        fold_scores = []
        try:
            for blk, stats in zip(blocks, block_stats):
                w, b0 = ridge_from_stats(total - stats, lam)
                fold_scores.append(_block_nmse(S[blk] @ w + b0, y[blk]))
        except (SingularSystem, ZeroVariance) as e:
            last_error = e
            logger.debug(f"λ={lam:.1e} 교차검증 실패: {e}")
            continue
        scores[i] = float(np.mean(fold_scores))

    if not np.isfinite(scores).any():
        logger.error("모든 λ에서 교차검증이 실패했습니다.")
        raise last_error if last_error is not None else SingularSystem(np.inf)

    best_index = 0
    for i, score in enumerate(scores):
        if score <= scores[best_index]:
            best_index = i

    best_lambda = cfg.lambda_grid[best_index]
    log_performance("교차검증 λ 선택", time.perf_counter() - start_time,
                    n=n, features=S.shape[1], best_lambda=f"{best_lambda:.1e}")
    return CVResult(best_lambda=best_lambda, scores=scores)


def fit_with_cv(S, y, cfg: RidgeConfig) -> ReadoutWeights:
    """교차검증으로 λ를 고른 뒤 전체 데이터로 다시 적합합니다."""
    best_lambda, _ = cv_select_lambda(S, y, cfg)
    return ridge_fit(S, y, best_lambda)
