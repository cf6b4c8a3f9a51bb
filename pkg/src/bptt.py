"""
BPTT 학습 모듈
chain3 네트워크의 리드아웃과 배치 정규화 파라미터를 시간 역전파로 함께 학습합니다.
리저버 내부 가중치(W, W_in, b)는 고정됩니다.
"""

import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))
from src.exceptions import NonFiniteLoss, NonFiniteState
from src.logging_config import get_logger, log_performance, log_training_step
from src.network import (INPUT_CHANNEL, Architecture, BatchNormState, NetworkSpec, TrainedNetwork,
                         build_reservoirs, chain3_spec, derive_seed, evaluate, network_from_dict,
                         network_to_dict)
from src.readout import ReadoutWeights
from src.reservoir import DEFAULT_WASHOUT, Reservoir, ReservoirParams, activation
from src.tasks import CSV_FLOAT_FORMAT, DatasetSplit, SeriesLike, as_array

# 로거 설정
logger = get_logger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
NOISE_DECAY_EXPONENT = 0.55


@dataclass(frozen=True)
class BpttConfig:
    """BPTT 학습 설정 (기본값: 120 에폭, 배치 60, 학습률 5e-4, 60 에폭마다 절반)"""

    epochs: int = 120
    batch_size: int = 60
    lr0: float = 0.0005
    lr_halving_epoch: int = 60
    weight_decay: float = 1e-4
    grad_clip_norm: float = 1.0
    grad_noise_eta: float = 0.01
    chunk_length: int = 100
    chunk_washout: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    bn_momentum: float = 0.99
    bn_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"에폭 수는 1 이상이어야 합니다: {self.epochs}")
        if self.chunk_length <= self.chunk_washout or self.chunk_washout < 0:
            raise ValueError(f"chunk_length({self.chunk_length})는 chunk_washout({self.chunk_washout})보다 커야 합니다.")
        if self.batch_size < 1:
            raise ValueError(f"배치 크기는 1 이상이어야 합니다: {self.batch_size}")
        if self.grad_clip_norm <= 0:
            raise ValueError(f"grad_clip_norm은 양수여야 합니다: {self.grad_clip_norm}")
        if self.grad_noise_eta < 0:
            raise ValueError(f"grad_noise_eta는 음수일 수 없습니다: {self.grad_noise_eta}")
        if not 0 < self.bn_momentum < 1:
            raise ValueError(f"bn_momentum은 (0, 1) 범위여야 합니다: {self.bn_momentum}")

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class TrainLog:
    """에폭별 학습 손실, 검증 NMSE, 학습률"""

    epoch: List[int] = field(default_factory=list)
    train_loss: List[float] = field(default_factory=list)
    val_nmse: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)

    def append(self, epoch: int, train_loss: float, val_nmse: float, lr: float):
        self.epoch.append(epoch)
        self.train_loss.append(float(train_loss))
        self.val_nmse.append(float(val_nmse))
        self.lr.append(float(lr))

    def __len__(self) -> int:
        return len(self.epoch)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"epoch": self.epoch, "train_loss": self.train_loss,
                             "val_nmse": self.val_nmse, "lr": self.lr})


@dataclass(frozen=True)
class Batch:
    """동일 길이 부분수열 묶음 (B x L)"""

    u: np.ndarray
    y: np.ndarray
    chunk_ids: np.ndarray

    @property
    def size(self) -> int:
        return self.u.shape[0]


@dataclass
class BpttModel:
    """학습 중인 네트워크: 고정 리저버 + 학습 파라미터 + 배치 정규화 running 통계"""

    spec: NetworkSpec
    reservoirs: Dict[str, Reservoir]
    params: Dict[str, np.ndarray]
    running_mean: Dict[str, np.ndarray]
    running_var: Dict[str, np.ndarray]
    bn_updates: int = 0

    def to_network(self, cfg: BpttConfig, metadata: Optional[Dict] = None) -> TrainedNetwork:
        readouts, batch_norm = {}, {}
        for node in self.spec.nodes:
            name = node.name
            readouts[name] = ReadoutWeights(w=self.params[f"{name}.w"].copy(), b0=float(self.params[f"{name}.b0"][0]))
            batch_norm[name] = BatchNormState(
                running_mean=self.running_mean[name].copy(), running_var=self.running_var[name].copy(),
                gamma=self.params[f"{name}.gamma"].copy(), beta=self.params[f"{name}.beta"].copy(),
                momentum=cfg.bn_momentum, eps=cfg.bn_eps,
            )
        return TrainedNetwork(spec=self.spec, reservoirs=self.reservoirs, readouts=readouts,
                              batch_norm=batch_norm, metadata=dict(metadata or {"regime": "bptt"}))


@dataclass
class _NodeCache:
    inputs: np.ndarray
    states: np.ndarray
    x_hat: np.ndarray
    features: np.ndarray
    inv_std: np.ndarray
    batch_mean: np.ndarray
    batch_var: np.ndarray


@dataclass
class ForwardCache:
    """역전파에 필요한 순전파 활성값"""

    model: BpttModel
    nodes: Dict[str, _NodeCache]
    outputs: Dict[str, np.ndarray]
    residual_grad: np.ndarray
    training: bool


def learning_rate(cfg: BpttConfig, epoch: int) -> float:
    """lr_halving_epoch 이전에는 lr0, 이후에는 lr0/2"""
    return cfg.lr0 if epoch < cfg.lr_halving_epoch else cfg.lr0 / 2


def epoch_seed(seed: int, epoch: int) -> int:
    return derive_seed(seed, 10_000 + epoch)


def _chunk_series(values: SeriesLike, chunk_length: int) -> np.ndarray:
    """(n_chunks, chunk_length) 형태의 겹치지 않는 부분수열 (남는 꼬리는 버림)"""
    values = as_array(values)
    n_chunks = values.shape[0] // chunk_length
    if n_chunks < 1:
        raise ValueError(f"시계열 길이({values.shape[0]})가 chunk_length({chunk_length})보다 짧습니다.")
    return values[:n_chunks * chunk_length].reshape(n_chunks, chunk_length)


def make_batches(series: Tuple[SeriesLike, SeriesLike], cfg: BpttConfig, epoch_seed: int) -> List[Batch]:
    """
    학습 시계열을 겹치지 않는 chunk_length 길이 부분수열로 나누고 섞어 배치를 만듭니다.

    Args:
        series: (입력, 목표)
        cfg: BPTT 설정
        epoch_seed: 에폭별 셔플 시드

    Returns:
        List[Batch]: batch_size개씩 묶인 배치 (마지막 배치는 더 작을 수 있음)
    """
    u_chunks = _chunk_series(series[0], cfg.chunk_length)
    y_chunks = _chunk_series(series[1], cfg.chunk_length)
    n_chunks = u_chunks.shape[0]
    order = np.random.default_rng(epoch_seed).permutation(n_chunks)
    return [
        Batch(u=u_chunks[ids], y=y_chunks[ids], chunk_ids=ids)
        for ids in (order[i:i + cfg.batch_size] for i in range(0, n_chunks, cfg.batch_size))
    ]


def init_params(spec: NetworkSpec, reservoirs: Mapping[str, Reservoir], seed: int) -> Dict[str, np.ndarray]:
    """리드아웃은 표준편차 1/√size 가우시안, 배치 정규화는 γ=1, β=0으로 초기화합니다."""
    rng = np.random.default_rng(derive_seed(seed, 1))
    params = {}
    for node in spec.nodes:
        size = reservoirs[node.name].size
        params[f"{node.name}.w"] = rng.normal(0.0, 1.0 / np.sqrt(size), size=size)
        params[f"{node.name}.b0"] = np.zeros(1)
        params[f"{node.name}.gamma"] = np.ones(size)
        params[f"{node.name}.beta"] = np.zeros(size)
    return params


def init_model(spec: NetworkSpec, seed: int) -> BpttModel:
    if spec.architecture != Architecture.CHAIN3:
        raise ValueError("BPTT 학습은 chain3 구조만 지원합니다.")
    reservoirs = build_reservoirs(spec)
    return BpttModel(
        spec=spec, reservoirs=reservoirs, params=init_params(spec, reservoirs, seed),
        running_mean={name: np.zeros(r.size) for name, r in reservoirs.items()},
        running_var={name: np.ones(r.size) for name, r in reservoirs.items()},
    )


def _run_batch(reservoir: Reservoir, inputs: np.ndarray) -> np.ndarray:
    """B개의 부분수열을 영상태에서 동시에 시뮬레이션합니다. (B, L, C) -> (B, L, F)"""
    f, _ = activation(reservoir.nonlinearity)
    B, L, _ = inputs.shape
    drive = inputs @ reservoir.W_in.T + reservoir.b
    states = np.empty((B, L, reservoir.size))
    x = np.zeros((B, reservoir.size))
    W_T = reservoir.W.T
    for t in range(L):
        x = f(x @ W_T + drive[:, t])
        states[:, t] = x
    return states


def forward_train(model: BpttModel, batch: Batch, cfg: BpttConfig, training: bool = True,
                  loss_scale: float = 1.0, mask_washout: bool = True) -> Tuple[float, ForwardCache]:
    """
    배치 전체를 펼쳐 순전파하고 손실을 계산합니다.

    학습 모드에서는 배치 통계로, 추론 모드에서는 고정된 running 통계로 상태를 정규화합니다.
    손실은 각 부분수열의 chunk_washout 이후 구간에서 최종 출력과 목표의 MSE입니다.

    Returns:
        Tuple: (손실, 역전파용 캐시)
    """
    B, L = batch.u.shape
    signals = {INPUT_CHANNEL: batch.u}
    node_caches: Dict[str, _NodeCache] = {}
    for node in model.spec.topological_order():
        name = node.name
        inputs = np.stack([signals[channel] for channel in node.inputs], axis=-1)
        states = _run_batch(model.reservoirs[name], inputs)
        if training:
            flat = states.reshape(-1, states.shape[-1])
            mean, var = flat.mean(axis=0), flat.var(axis=0)
        else:
            mean, var = model.running_mean[name], model.running_var[name]
        inv_std = 1.0 / np.sqrt(var + cfg.bn_eps)
        x_hat = (states - mean) * inv_std
        features = x_hat * model.params[f"{name}.gamma"] + model.params[f"{name}.beta"]
        signals[name] = features @ model.params[f"{name}.w"] + model.params[f"{name}.b0"][0]
        node_caches[name] = _NodeCache(inputs=inputs, states=states, x_hat=x_hat, features=features,
                                       inv_std=inv_std, batch_mean=mean, batch_var=var)

    mask = np.zeros(L)
    mask[cfg.chunk_washout if mask_washout else 0:] = 1.0
    count = B * mask.sum()
    residual = (signals[model.spec.output] - batch.y) * mask
    loss = loss_scale * float(np.sum(residual ** 2) / count)
    cache = ForwardCache(model=model, nodes=node_caches,
                         outputs={n.name: signals[n.name] for n in model.spec.nodes},
                         residual_grad=loss_scale * 2.0 * residual / count, training=training)
    return loss, cache


def backward(cache: ForwardCache) -> Dict[str, np.ndarray]:
    """
    학습 가능한 모든 파라미터(리드아웃 w, b0 / 배치 정규화 γ, β)에 대한 정확한 역전파 기울기.

    기울기는 하위 리저버의 순환을 따라 부분수열 전체로 전파됩니다 (부분수열 내 절단 없음).
    """
    model = cache.model
    order = model.spec.topological_order()
    output_grads = {node.name: np.zeros_like(cache.outputs[node.name]) for node in order}
    output_grads[model.spec.output] = output_grads[model.spec.output] + cache.residual_grad
    grads: Dict[str, np.ndarray] = {}

    for node in reversed(order):
        name = node.name
        nc = cache.nodes[name]
        reservoir = model.reservoirs[name]
        g = output_grads[name]
        w = model.params[f"{name}.w"]
        gamma = model.params[f"{name}.gamma"]

        grads[f"{name}.w"] = np.einsum("bl,blf->f", g, nc.features)
        grads[f"{name}.b0"] = np.array([g.sum()])
        d_features = g[..., np.newaxis] * w
        grads[f"{name}.gamma"] = np.einsum("blf,blf->f", d_features, nc.x_hat)
        grads[f"{name}.beta"] = d_features.sum(axis=(0, 1))

        d_x_hat = d_features * gamma
        if cache.training:
            d_states = nc.inv_std * (
                d_x_hat - d_x_hat.mean(axis=(0, 1)) - nc.x_hat * (d_x_hat * nc.x_hat).mean(axis=(0, 1))
            )
        else:
            d_states = d_x_hat * nc.inv_std

        # 리저버 순환을 따라 시간 역방향으로 전파
        _, df = activation(reservoir.nonlinearity)
        slopes = df(nc.states)
        B, L, F = nc.states.shape
        d_pre = np.empty((B, L, F))
        carry = np.zeros((B, F))
        for t in range(L - 1, -1, -1):
            carry = (d_states[:, t] + carry @ reservoir.W) * slopes[:, t]
            d_pre[:, t] = carry

        d_inputs = d_pre @ reservoir.W_in
        for index, channel in enumerate(node.inputs):
            if channel != INPUT_CHANNEL:
                output_grads[channel] = output_grads[channel] + d_inputs[..., index]

    return grads


def update_running_stats(model: BpttModel, cache: ForwardCache, momentum: float):
    """
    running 통계를 momentum으로 갱신합니다 (학습 모드 순전파 이후에만 호출).

    편향 보정 지수이동평균이므로 초기값(평균 0, 분산 1)은 남지 않으며, 첫 갱신 후 값은 첫 배치 통계와 같습니다.
    """
    previous = 1.0 - momentum ** model.bn_updates
    model.bn_updates += 1
    current = 1.0 - momentum ** model.bn_updates
    for name, nc in cache.nodes.items():
        model.running_mean[name] = (momentum * previous * model.running_mean[name]
                                    + (1 - momentum) * nc.batch_mean) / current
        model.running_var[name] = (momentum * previous * model.running_var[name]
                                   + (1 - momentum) * nc.batch_var) / current


def population_stats(model: BpttModel, series: Tuple[SeriesLike, SeriesLike],
                     cfg: BpttConfig) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    """
    학습 시계열 전체 부분수열에 대한 노드별 상태 평균과 분산을 다시 추정합니다.

    노드는 위상 순서로 처리되며, 하위 노드의 입력은 방금 추정한 상위 노드 통계로 정규화한 출력입니다.
    통계는 학습 배치와 같이 모든 B×L 위치에서 계산합니다.

    Returns:
        Tuple: (노드별 평균, 노드별 분산)
    """
    signals = {INPUT_CHANNEL: _chunk_series(series[0], cfg.chunk_length)}
    means, variances = {}, {}
    for node in model.spec.topological_order():
        name = node.name
        inputs = np.stack([signals[channel] for channel in node.inputs], axis=-1)
        states = _run_batch(model.reservoirs[name], inputs)
        flat = states.reshape(-1, states.shape[-1])
        means[name], variances[name] = flat.mean(axis=0), flat.var(axis=0)
        x_hat = (states - means[name]) / np.sqrt(variances[name] + cfg.bn_eps)
        features = x_hat * model.params[f"{name}.gamma"] + model.params[f"{name}.beta"]
        signals[name] = features @ model.params[f"{name}.w"] + model.params[f"{name}.b0"][0]
    return means, variances


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    """전체 노름이 max_norm을 넘으면 비율을 유지한 채 max_norm으로 줄입니다."""
    norm = global_norm(grads)
    scale = max_norm / norm if norm > max_norm else 1.0
    return {key: g * scale for key, g in grads.items()}, norm


class AdamOptimizer:
    """Adam 1차/2차 모멘트 상태"""

    def __init__(self, params: Mapping[str, np.ndarray], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {key: np.zeros_like(p) for key, p in params.items()}
        self.v = {key: np.zeros_like(p) for key, p in params.items()}

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], lr: float) -> Dict[str, np.ndarray]:
        self.t += 1
        updated = {}
        for key in sorted(params):
            g = grads[key]
            self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1 - self.beta2) * g * g
            m_hat = self.m[key] / (1 - self.beta1 ** self.t)
            v_hat = self.v[key] / (1 - self.beta2 ** self.t)
            updated[key] = params[key] - lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return updated

    def to_dict(self) -> Dict:
        return {
            "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "t": self.t,
            "m": {key: value.tolist() for key, value in self.m.items()},
            "v": {key: value.tolist() for key, value in self.v.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AdamOptimizer":
        optimizer = cls({}, beta1=data["beta1"], beta2=data["beta2"], eps=data["eps"])
        optimizer.t = int(data["t"])
        optimizer.m = {key: np.asarray(value, dtype=float) for key, value in data["m"].items()}
        optimizer.v = {key: np.asarray(value, dtype=float) for key, value in data["v"].items()}
        return optimizer


def apply_update(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], cfg: BpttConfig,
                 step_index: int, optimizer: AdamOptimizer, lr: float,
                 rng: Optional[np.random.Generator] = None) -> Dict[str, np.ndarray]:
    """
    한 번의 파라미터 갱신.

    순서: (1) 분산 η/(1+t)^0.55 의 가우시안 기울기 잡음 (2) 전체 노름 클리핑
    (3) 리드아웃 가중치에만 분리된 weight decay (4) Adam 갱신
    """
    if step_index < 1:
        raise ValueError(f"step_index는 1 이상이어야 합니다: {step_index}")
    noisy = {key: np.asarray(grads[key], dtype=float) for key in sorted(grads)}
    if cfg.grad_noise_eta > 0:
        if rng is None:
            raise ValueError("기울기 잡음에는 난수 생성기가 필요합니다.")
        std = np.sqrt(cfg.grad_noise_eta / (1 + step_index) ** NOISE_DECAY_EXPONENT)
        noisy = {key: g + rng.normal(0.0, std, size=g.shape) for key, g in noisy.items()}

    clipped, _ = clip_by_global_norm(noisy, cfg.grad_clip_norm)

    decayed = {
        key: p - lr * cfg.weight_decay * p if key.endswith(".w") else np.array(p, dtype=float)
        for key, p in params.items()
    }
    return optimizer.step(decayed, clipped, lr)


def gradient_check(model: BpttModel, batch: Batch, cfg: BpttConfig, h: float = 1e-5,
                   absolute_floor: float = 1e-7) -> float:
    """
    중앙 유한차분과 해석적 기울기의 최대 상대 오차를 계산합니다 (학습 모드 손실 기준).

    Returns:
        float: max |a - n| / max(|a|, |n|, absolute_floor)
    """
    _, cache = forward_train(model, batch, cfg, training=True)
    analytic = backward(cache)
    worst = 0.0
    original = model.params
    for key in sorted(original):
        for index in np.ndindex(original[key].shape):
            losses = []
            for sign in (1.0, -1.0):
                perturbed = {k: v.copy() for k, v in original.items()}
                perturbed[key][index] += sign * h
                model.params = perturbed
                losses.append(forward_train(model, batch, cfg, training=True)[0])
            model.params = original
            numeric = (losses[0] - losses[1]) / (2 * h)
            a = float(analytic[key][index])
            error = abs(a - numeric) / max(abs(a), abs(numeric), absolute_floor)
            worst = max(worst, error)
    return worst


def _validation_nmse(net: TrainedNetwork, data: DatasetSplit, washout: int) -> float:
    u, y = data.validation
    try:
        value = evaluate(net, u, y, washout)
    except NonFiniteState as e:
        logger.warning(f"검증 순전파 실패: {e}")
        return float("inf")
    return value if np.isfinite(value) else float("inf")


def save_checkpoint(path: Union[str, Path], model: BpttModel, optimizer: AdamOptimizer, epoch: int,
                    cfg: BpttConfig) -> str:
    """네트워크 JSON 형식에 옵티마이저 상태를 더한 체크포인트"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "epoch": epoch,
        "config": cfg.to_dict(),
        "network": network_to_dict(model.to_network(cfg)),
        "optimizer": optimizer.to_dict(),
    }
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(document, f, ensure_ascii=False, indent=2, sort_keys=True)
    return str(path)


def load_checkpoint(path: Union[str, Path]) -> Tuple[TrainedNetwork, AdamOptimizer, int]:
    with open(path, 'r', encoding='utf-8') as f:
        document = json.load(f)
    if document.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"지원하지 않는 체크포인트 형식입니다: {document.get('format_version')}")
    return (network_from_dict(document["network"]), AdamOptimizer.from_dict(document["optimizer"]),
            int(document["epoch"]))


def bptt_train(spec: NetworkSpec, data: DatasetSplit, cfg: BpttConfig, washout: int = DEFAULT_WASHOUT,
               checkpoint_path: Optional[Union[str, Path]] = None) -> Tuple[TrainedNetwork, TrainLog]:
    """
    chain3 네트워크를 BPTT로 학습하고 검증 NMSE가 가장 좋았던 에폭의 스냅샷을 반환합니다.

    Args:
        spec: chain3 명세 (리저버는 명세의 시드로 새로 생성)
        data: 데이터 분할
        cfg: BPTT 설정
        washout: 검증 평가에서 제외할 초기 샘플 수
        checkpoint_path: 지정하면 매 에폭 끝에 체크포인트를 덮어씁니다

    Returns:
        Tuple: (학습된 네트워크, 학습 로그)
    """
    logger.info(f"BPTT 학습 시작: 에폭 {cfg.epochs}, 배치 {cfg.batch_size}, lr0 {cfg.lr0}, 시드 {cfg.seed}")
    start_time = time.perf_counter()
    model = init_model(spec, cfg.seed)
    optimizer = AdamOptimizer(model.params, cfg.beta1, cfg.beta2, cfg.adam_eps)
    noise_rng = np.random.default_rng(derive_seed(cfg.seed, 2))
    log = TrainLog()
    best_net: Optional[TrainedNetwork] = None
    best_value = float("inf")
    step_index = 0

    for epoch in range(cfg.epochs):
        epoch_start = time.perf_counter()
        lr = learning_rate(cfg, epoch)
        losses = []
        for batch_index, batch in enumerate(make_batches(data.train, cfg, epoch_seed(cfg.seed, epoch))):
            loss, cache = forward_train(model, batch, cfg, training=True)
            if not np.isfinite(loss):
                diagnostics = {key: float(np.linalg.norm(p)) for key, p in model.params.items()}
                logger.error(f"비유한 손실 발생: 에폭 {epoch}, 배치 {batch_index}")
                raise NonFiniteLoss(epoch, batch_index, diagnostics)
            grads = backward(cache)
            step_index += 1
            model.params = apply_update(model.params, grads, cfg, step_index, optimizer, lr, noise_rng)
            update_running_stats(model, cache, cfg.bn_momentum)
            losses.append(loss)

        # 검증과 스냅샷은 현재 파라미터 기준 학습 집합 통계로 평가
        model.running_mean, model.running_var = population_stats(model, data.train, cfg)
        net = model.to_network(cfg, {"regime": "bptt", "epoch": epoch, "seed": cfg.seed})
        val_nmse = _validation_nmse(net, data, washout)
        train_loss = float(np.mean(losses))
        log.append(epoch, train_loss, val_nmse, lr)
        log_training_step(epoch, train_loss=train_loss, val_nmse=val_nmse, lr=lr,
                          seconds=time.perf_counter() - epoch_start)

        if best_net is None or val_nmse < best_value:
            best_net, best_value = net, val_nmse
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, model, optimizer, epoch, cfg)

    best_net = replace(best_net, metadata={**best_net.metadata, "best_val_nmse": best_value})
    log_performance("BPTT 학습", time.perf_counter() - start_time, epochs=cfg.epochs, best_val_nmse=f"{best_value:.4f}")
    return best_net, log


def save_train_log_csv(log: TrainLog, path: Union[str, Path]) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    log.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return str(path)


def evaluate_bptt_config(point: Mapping[str, object], data: DatasetSplit, base_cfg: BpttConfig,
                         reservoir_params: ReservoirParams, seed: int,
                         washout: int = DEFAULT_WASHOUT, size: int = 100, nonlinearity: str = "elu") -> float:
    """BPTT 하이퍼파라미터 후보의 최고 검증 NMSE (탐색 목적함수)"""
    overrides = {key: point[key] for key in ("lr0", "weight_decay", "grad_noise_eta", "batch_size") if key in point}
    if "batch_size" in overrides:
        overrides["batch_size"] = int(overrides["batch_size"])
    cfg = replace(base_cfg, seed=seed, **overrides)
    spec = chain3_spec(reservoir_params, seed, size=size, nonlinearity=nonlinearity)
    _, log = bptt_train(spec, data, cfg, washout)
    return float(min(log.val_nmse))
