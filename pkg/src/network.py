"""
다중 리저버 네트워크 모듈
리저버 DAG(chain3) 또는 단일 리저버 구성, 순전파, 리지 기반 학습(수작업 분해/전이), 중간 신호 기록
"""

import json
import os
import sys
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))
from src.exceptions import DimensionMismatch
from src.logging_config import get_logger, log_performance
from src.readout import ReadoutWeights, RidgeConfig, cv_select_lambda, predict, ridge_fit
from src.reservoir import (DEFAULT_WASHOUT, Reservoir, ReservoirParams, init_reservoir_with_retry, run)
from src.tasks import (CSV_FLOAT_FORMAT, DatasetSplit, Series, SeriesLike, SeriesRole, as_array,
                       delay_target, narma_tail_target, nmse, product_target)

# 로거 설정
logger = get_logger(__name__)

NETWORK_FORMAT_VERSION = 1
INPUT_CHANNEL = "u"
CHAIN3_NODES = ("esn1", "esn2", "esn3")
MONOLITHIC_NODE = "esn"


class Architecture(str, Enum):
    MONOLITHIC = "monolithic"
    CHAIN3 = "chain3"


@dataclass(frozen=True)
class NodeSpec:
    """네트워크 노드: 리저버 파라미터와 입력 채널 라우팅"""

    name: str
    params: ReservoirParams
    inputs: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if len(self.inputs) != self.params.n_inputs:
            raise DimensionMismatch(
                f"노드 {self.name}: 입력 채널 {len(self.inputs)}개, 리저버 입력 {self.params.n_inputs}개"
            )


@dataclass(frozen=True)
class NetworkSpec:
    """리저버 DAG 명세. 각 노드는 리드아웃으로 스칼라 하나를 출력합니다."""

    architecture: Architecture
    nodes: Tuple[NodeSpec, ...]
    output: str

    def __post_init__(self):
        object.__setattr__(self, "architecture", Architecture(self.architecture))
        object.__setattr__(self, "nodes", tuple(self.nodes))
        names = [node.name for node in self.nodes]
        if len(set(names)) != len(names) or INPUT_CHANNEL in names:
            raise ValueError(f"노드 이름이 중복되었거나 예약어를 사용했습니다: {names}")
        if self.output not in names:
            raise ValueError(f"출력 노드 {self.output}가 존재하지 않습니다.")
        for node in self.nodes:
            for channel in node.inputs:
                if channel != INPUT_CHANNEL and channel not in names:
                    raise ValueError(f"노드 {node.name}의 입력 {channel}이(가) 존재하지 않습니다.")
        expected = 3 if self.architecture == Architecture.CHAIN3 else 1
        if len(self.nodes) != expected:
            raise ValueError(f"{self.architecture.value} 구조는 노드 {expected}개가 필요합니다: {len(self.nodes)}")
        self.topological_order()

    def node(self, name: str) -> NodeSpec:
        for node in self.nodes:
            if node.name == name:
                return node
        raise KeyError(name)

    def topological_order(self) -> List[NodeSpec]:
        """의존성 순서대로 정렬된 노드 목록 (순환이 있으면 ValueError)"""
        remaining = {node.name: node for node in self.nodes}
        done = {INPUT_CHANNEL}
        order = []
        while remaining:
            ready = sorted(name for name, node in remaining.items() if set(node.inputs) <= done)
            if not ready:
                raise ValueError(f"라우팅에 순환이 있습니다: {sorted(remaining)}")
            for name in ready:
                order.append(remaining.pop(name))
                done.add(name)
        return order

    def to_dict(self) -> Dict:
        return {
            "architecture": self.architecture.value,
            "output": self.output,
            "nodes": [
                {"name": node.name, "inputs": list(node.inputs), "params": node.params.to_dict()}
                for node in self.nodes
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "NetworkSpec":
        nodes = tuple(
            NodeSpec(name=n["name"], params=ReservoirParams.from_dict(n["params"]), inputs=tuple(n["inputs"]))
            for n in data["nodes"]
        )
        return cls(architecture=data["architecture"], nodes=nodes, output=data["output"])


@dataclass(frozen=True)
class BatchNormState:
    """노드 상태 벡터의 배치 정규화 통계와 학습된 스케일/시프트"""

    running_mean: np.ndarray
    running_var: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    momentum: float = 0.99
    eps: float = 1e-5

    def __post_init__(self):
        if np.any(np.asarray(self.running_var) <= 0):
            raise ValueError("running_var는 양수여야 합니다.")

    def normalize(self, states: np.ndarray) -> np.ndarray:
        """추론 모드 정규화 (고정된 running 통계 사용)"""
        return (states - self.running_mean) / np.sqrt(self.running_var + self.eps) * self.gamma + self.beta

    def to_dict(self) -> Dict:
        return {
            "running_mean": np.asarray(self.running_mean).tolist(),
            "running_var": np.asarray(self.running_var).tolist(),
            "gamma": np.asarray(self.gamma).tolist(),
            "beta": np.asarray(self.beta).tolist(),
            "momentum": self.momentum,
            "eps": self.eps,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BatchNormState":
        return cls(
            running_mean=np.asarray(data["running_mean"], dtype=float),
            running_var=np.asarray(data["running_var"], dtype=float),
            gamma=np.asarray(data["gamma"], dtype=float),
            beta=np.asarray(data["beta"], dtype=float),
            momentum=float(data["momentum"]),
            eps=float(data["eps"]),
        )


@dataclass(frozen=True)
class TrainedNetwork:
    """학습된 네트워크: 명세 + 노드별 리저버/리드아웃 (+ BPTT 학습 시 배치 정규화)"""

    spec: NetworkSpec
    reservoirs: Dict[str, Reservoir]
    readouts: Dict[str, ReadoutWeights]
    batch_norm: Dict[str, Optional[BatchNormState]] = field(default_factory=dict)
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for node in self.spec.nodes:
            if node.name not in self.reservoirs or node.name not in self.readouts:
                raise ValueError(f"노드 {node.name}의 리저버 또는 리드아웃이 없습니다.")
            if self.readouts[node.name].n_features != self.reservoirs[node.name].size:
                raise DimensionMismatch(
                    f"노드 {node.name}: 리드아웃 차원 {self.readouts[node.name].n_features} != "
                    f"리저버 크기 {self.reservoirs[node.name].size}"
                )


@dataclass(frozen=True)
class SignalRecord:
    """노드별 출력 신호와 사용된 입력"""

    u: Series
    signals: Dict[str, Series]
    output: str

    def __post_init__(self):
        lengths = {len(self.u)} | {len(s) for s in self.signals.values()}
        if len(lengths) != 1:
            raise DimensionMismatch(f"신호 길이가 서로 다릅니다: {sorted(lengths)}")

    @property
    def final(self) -> Series:
        return self.signals[self.output]

    def node_output(self, index: int) -> Series:
        """chain3 노드 번호(1부터)의 출력"""
        return self.signals[CHAIN3_NODES[index - 1]]

    def __len__(self) -> int:
        return len(self.u)


def derive_seed(seed: int, index: int) -> int:
    """마스터 시드와 노드 번호로부터 독립적인 시드를 유도합니다."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def _node_params(template: ReservoirParams, size: int, nonlinearity: str, n_inputs: int, seed: int) -> ReservoirParams:
    return replace(template, size=size, nonlinearity=nonlinearity, n_inputs=n_inputs,
                   input_scaling=template.input_scaling[0], seed=seed)


def chain3_spec(params: ReservoirParams, seed: int, size: int = 100, nonlinearity: str = "elu") -> NetworkSpec:
    """
    3개의 ESN을 연결한 구조를 만듭니다.

    ESN 1은 u, ESN 2는 (u, ŷ1), ESN 3은 ŷ2만 입력으로 받습니다.
    """
    routing = {"esn1": (INPUT_CHANNEL,), "esn2": (INPUT_CHANNEL, "esn1"), "esn3": ("esn2",)}
    nodes = tuple(
        NodeSpec(name=name,
                 params=_node_params(params, size, nonlinearity, len(routing[name]), derive_seed(seed, index)),
                 inputs=routing[name])
        for index, name in enumerate(CHAIN3_NODES)
    )
    return NetworkSpec(architecture=Architecture.CHAIN3, nodes=nodes, output="esn3")


def monolithic_spec(params: ReservoirParams, seed: int, size: int = 300, nonlinearity: str = "tanh") -> NetworkSpec:
    """단일 ESN 기준 모델 (300 노드, tanh)"""
    node = NodeSpec(name=MONOLITHIC_NODE,
                    params=_node_params(params, size, nonlinearity, 1, derive_seed(seed, 0)),
                    inputs=(INPUT_CHANNEL,))
    return NetworkSpec(architecture=Architecture.MONOLITHIC, nodes=(node,), output=MONOLITHIC_NODE)


def build_reservoirs(spec: NetworkSpec) -> Dict[str, Reservoir]:
    return {node.name: init_reservoir_with_retry(node.params) for node in spec.nodes}


def _channels(node: NodeSpec, signals: Mapping[str, np.ndarray]) -> np.ndarray:
    return np.column_stack([signals[channel] for channel in node.inputs])


def node_features(net: TrainedNetwork, name: str, states: np.ndarray) -> np.ndarray:
    """리드아웃에 들어가는 특성 (배치 정규화가 있으면 적용)"""
    bn = net.batch_norm.get(name)
    return states if bn is None else bn.normalize(states)


def forward(net: TrainedNetwork, u: SeriesLike) -> SignalRecord:
    """
    노드를 위상 순서대로 시뮬레이션합니다. 각 노드의 스칼라 출력은 하위 노드의 입력 채널이 됩니다.

    Args:
        net: 학습된 네트워크
        u: 입력 시계열

    Returns:
        SignalRecord: 노드별 출력 신호
    """
    u = as_array(u)
    signals: Dict[str, np.ndarray] = {INPUT_CHANNEL: u}
    for node in net.spec.topological_order():
        trajectory = run(net.reservoirs[node.name], _channels(node, signals), washout=0)
        features = node_features(net, node.name, trajectory.states)
        signals[node.name] = predict(net.readouts[node.name], features)
    return SignalRecord(
        u=Series(u, SeriesRole.INPUT),
        signals={node.name: Series(signals[node.name], SeriesRole.PREDICTION) for node in net.spec.nodes},
        output=net.spec.output,
    )


def record_signals(net: TrainedNetwork, u: SeriesLike) -> SignalRecord:
    """순전파를 수행하고 모든 노드 출력을 기록합니다."""
    record = forward(net, u)
    logger.info(f"중간 신호 기록 완료: 노드 {list(record.signals)}, 길이 {len(record)}")
    return record


def evaluate(net: TrainedNetwork, u: SeriesLike, y: SeriesLike, washout: int = DEFAULT_WASHOUT) -> float:
    """최종 출력의 NMSE (washout 구간 제외)"""
    return nmse(forward(net, u).final, y, washout)


TargetBuilder = Callable[[Mapping[str, np.ndarray]], SeriesLike]


def _train_sequential(spec: NetworkSpec, u: SeriesLike, targets: Mapping[str, TargetBuilder],
                      cfg: RidgeConfig, washout: int, regime: str) -> Tuple[TrainedNetwork, SignalRecord]:
    """
    노드를 순서대로 학습합니다. 각 노드는 이미 학습된 선행 노드의 실제 출력을 입력으로 받습니다.
    """
    start_time = time.perf_counter()
    u = as_array(u)
    reservoirs = build_reservoirs(spec)
    signals: Dict[str, np.ndarray] = {INPUT_CHANNEL: u}
    readouts: Dict[str, ReadoutWeights] = {}
    lambdas: Dict[str, float] = {}

    for node in spec.topological_order():
        trajectory = run(reservoirs[node.name], _channels(node, signals), washout=washout)
        target = as_array(targets[node.name](signals))
        if target.shape != u.shape:
            raise DimensionMismatch(f"노드 {node.name} 목표 길이 {target.shape} != 입력 길이 {u.shape}")
        best_lambda, _ = cv_select_lambda(trajectory.usable, target[washout:], cfg)
        readouts[node.name] = ridge_fit(trajectory.usable, target[washout:], best_lambda)
        lambdas[node.name] = best_lambda
        signals[node.name] = predict(readouts[node.name], trajectory.states)
        logger.info(f"노드 {node.name} 학습 완료 (λ={best_lambda:.1e}, 학습 NMSE={nmse(signals[node.name], target, washout):.4f})")

    net = TrainedNetwork(spec=spec, reservoirs=reservoirs, readouts=readouts,
                         batch_norm={node.name: None for node in spec.nodes},
                         metadata={"regime": regime, "lambdas": lambdas, "washout": washout})
    record = SignalRecord(
        u=Series(u, SeriesRole.INPUT),
        signals={node.name: Series(signals[node.name], SeriesRole.PREDICTION) for node in spec.nodes},
        output=spec.output,
    )
    log_performance(f"{regime} 학습", time.perf_counter() - start_time, nodes=len(spec.nodes), T=u.shape[0])
    return net, record


def engineered_targets(washout: int = 0) -> Dict[str, TargetBuilder]:
    """
    수작업 분해 목표: 지연선, 곱셈, NARMA 꼬리 재귀

    washout 구간의 ŷ2는 리저버 과도 응답이므로, 노드 3 재귀는 그 구간에서 정확한 곱셈 목표 u·y1로 구동됩니다.
    """
    def tail(signals: Mapping[str, np.ndarray]) -> Series:
        u = signals[INPUT_CHANNEL]
        drive = np.array(signals["esn2"], dtype=np.float64)
        drive[:washout] = product_target(u, delay_target(u)).values[:washout]
        return narma_tail_target(drive)

    return {
        "esn1": lambda s: delay_target(s[INPUT_CHANNEL]),
        "esn2": lambda s: product_target(s[INPUT_CHANNEL], s["esn1"]),
        "esn3": tail,
    }


def train_engineered(spec: NetworkSpec, data: DatasetSplit, cfg: RidgeConfig,
                     washout: int = DEFAULT_WASHOUT) -> Tuple[TrainedNetwork, SignalRecord]:
    """
    chain3 네트워크를 수작업 분해 목표로 점진적으로 학습합니다.

    노드 2의 목표는 노드 1의 실제 출력 ŷ1을 사용하므로, 각 노드는 선행 노드의 근사 오차에 강건해집니다.

    Returns:
        Tuple: (학습된 네트워크, 학습 입력에서의 신호 기록)
    """
    if spec.architecture != Architecture.CHAIN3:
        raise ValueError("train_engineered는 chain3 구조만 지원합니다.")
    u, _ = data.train
    return _train_sequential(spec, u, engineered_targets(washout), cfg, washout, "engineered")


def train_monolithic(spec: NetworkSpec, data: DatasetSplit, cfg: RidgeConfig,
                     washout: int = DEFAULT_WASHOUT) -> TrainedNetwork:
    """단일 리저버의 리드아웃을 NARMA-10 목표에 적합합니다."""
    if spec.architecture != Architecture.MONOLITHIC:
        raise ValueError("train_monolithic은 monolithic 구조만 지원합니다.")
    u, y = data.train
    net, _ = _train_sequential(spec, u, {spec.output: lambda s: y}, cfg, washout, "monolithic")
    return net


def train_transfer(spec: NetworkSpec, targets: SignalRecord, data: DatasetSplit, cfg: RidgeConfig,
                   washout: int = DEFAULT_WASHOUT) -> TrainedNetwork:
    """
    원본(BPTT) 네트워크가 기록한 중간 신호를 목표로 새 chain3 네트워크를 학습합니다.

    노드 1, 2는 기록된 ŷ1, ŷ2에, 노드 3은 원래 NARMA-10 목표에 적합합니다.
    """
    if spec.architecture != Architecture.CHAIN3:
        raise ValueError("train_transfer는 chain3 구조만 지원합니다.")
    u, y = data.train
    if len(targets) != len(u) or not np.array_equal(targets.u.values, u.values):
        raise ValueError("전이 목표는 같은 학습 입력에서 기록되어야 합니다.")
    builders = {
        "esn1": lambda s: targets.signals["esn1"],
        "esn2": lambda s: targets.signals["esn2"],
        "esn3": lambda s: y,
    }
    net, _ = _train_sequential(spec, u, builders, cfg, washout, "transfer")
    return net


def oracle_signals(u: SeriesLike) -> SignalRecord:
    """모든 노드를 목표 함수로 대체한 신호 (최종 출력은 narma10(u)와 같음)"""
    u = as_array(u)
    y1 = delay_target(u)
    y2 = product_target(u, y1)
    y3 = narma_tail_target(y2)
    return SignalRecord(u=Series(u, SeriesRole.INPUT), signals={"esn1": y1, "esn2": y2, "esn3": y3}, output="esn3")


def network_to_dict(net: TrainedNetwork) -> Dict:
    nodes = []
    for node in net.spec.nodes:
        reservoir = net.reservoirs[node.name]
        bn = net.batch_norm.get(node.name)
        nodes.append({
            "name": node.name,
            "inputs": list(node.inputs),
            "params": node.params.to_dict(),
            "W": reservoir.W.tolist(),
            "W_in": reservoir.W_in.tolist(),
            "b": reservoir.b.tolist(),
            "readout": net.readouts[node.name].to_dict(),
            "batch_norm": None if bn is None else bn.to_dict(),
        })
    return {
        "format_version": NETWORK_FORMAT_VERSION,
        "architecture": net.spec.architecture.value,
        "output": net.spec.output,
        "nodes": nodes,
        "metadata": net.metadata,
    }


def network_from_dict(data: Mapping) -> TrainedNetwork:
    if data.get("format_version") != NETWORK_FORMAT_VERSION:
        raise ValueError(f"지원하지 않는 네트워크 형식 버전입니다: {data.get('format_version')}")
    spec = NetworkSpec.from_dict(data)
    reservoirs, readouts, batch_norm = {}, {}, {}
    for node_data, node in zip(data["nodes"], spec.nodes):
        reservoirs[node.name] = Reservoir(
            W=np.asarray(node_data["W"], dtype=float),
            W_in=np.asarray(node_data["W_in"], dtype=float),
            b=np.asarray(node_data["b"], dtype=float),
            nonlinearity=node.params.nonlinearity,
            params=node.params,
        )
        readouts[node.name] = ReadoutWeights.from_dict(node_data["readout"])
        bn = node_data.get("batch_norm")
        batch_norm[node.name] = None if bn is None else BatchNormState.from_dict(bn)
    return TrainedNetwork(spec=spec, reservoirs=reservoirs, readouts=readouts,
                          batch_norm=batch_norm, metadata=dict(data.get("metadata", {})))


def save_network(net: TrainedNetwork, path: Union[str, Path]) -> str:
    """네트워크를 버전이 있는 JSON 문서로 저장합니다."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(network_to_dict(net), f, ensure_ascii=False, indent=2, sort_keys=True)
    logger.info(f"네트워크 저장 완료: {path}")
    return str(path)


def load_network(path: Union[str, Path]) -> TrainedNetwork:
    with open(path, 'r', encoding='utf-8') as f:
        return network_from_dict(json.load(f))


def signals_frame(record: SignalRecord) -> pd.DataFrame:
    """(index, u, y1, y2, yfinal) 형태의 DataFrame"""
    frame = pd.DataFrame({"index": np.arange(len(record)), "u": record.u.values})
    for index, name in enumerate(CHAIN3_NODES[:-1], start=1):
        if name in record.signals:
            frame[f"y{index}"] = record.signals[name].values
    frame["yfinal"] = record.final.values
    return frame


def save_signals_csv(record: SignalRecord, path: Union[str, Path]) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    signals_frame(record).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return str(path)


def load_signals_csv(path: Union[str, Path]) -> SignalRecord:
    frame = pd.read_csv(path, float_precision="round_trip")
    u = Series(frame["u"].to_numpy(), SeriesRole.INPUT)
    if "y1" in frame.columns:
        signals = {
            "esn1": Series(frame["y1"].to_numpy(), SeriesRole.PREDICTION),
            "esn2": Series(frame["y2"].to_numpy(), SeriesRole.PREDICTION),
            "esn3": Series(frame["yfinal"].to_numpy(), SeriesRole.PREDICTION),
        }
        return SignalRecord(u=u, signals=signals, output="esn3")
    return SignalRecord(u=u, signals={MONOLITHIC_NODE: Series(frame["yfinal"].to_numpy(), SeriesRole.PREDICTION)},
                        output=MONOLITHIC_NODE)
