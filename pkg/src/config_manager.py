"""
실험 설정 관리 시스템
JSON 설정 파일, 규모 프리셋, --set 덮어쓰기를 기본 설정에 병합하고 계산 전에 검증하는 클래스
"""

import copy
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))
from config.defaults import (ARCHITECTURES, DEFAULT_EXPERIMENT_CONFIG, NON_REPRODUCIBLE_KEYS, REGIMES,
                             SCALE_PRESETS, SEARCH_TARGETS)
from src.bptt import BpttConfig
from src.exceptions import ConfigError
from src.logging_config import get_logger
from src.network import Architecture, NetworkSpec, chain3_spec, monolithic_spec
from src.readout import RidgeConfig
from src.reservoir import ReservoirParams
from src.search import RESERVOIR_KEYS
from src.utils import load_json

# 로거 설정
logger = get_logger(__name__)

PARAMS_FILE_VERSION = 1
BPTT_SEARCH_KEYS = ("lr0", "weight_decay", "grad_noise_eta", "batch_size")


@dataclass(frozen=True)
class TaskConfig:
    length: int
    seed: int
    washout: int


@dataclass(frozen=True)
class TransferConfig:
    source_network: Optional[str]
    train_source: bool
    source_repetitions: int


@dataclass(frozen=True)
class SearchConfig:
    target: str
    budget: int


@dataclass(frozen=True)
class ExperimentConfig:
    """검증이 끝난 실험 설정"""

    seed: int
    jobs: int
    output_dir: str
    repetitions: int
    architecture: Architecture
    regime: str
    task: TaskConfig
    reservoir: ReservoirParams
    reservoir_size: Optional[int]
    nonlinearity: Optional[str]
    ridge: RidgeConfig
    bptt: BpttConfig
    transfer: TransferConfig
    search: SearchConfig
    raw: Dict[str, Any] = field(default_factory=dict, compare=False)

    def echo(self) -> Dict[str, Any]:
        """결과에 영향을 주는 설정만 남긴 반향 (보고서 기록용)"""
        return {key: copy.deepcopy(value) for key, value in self.raw.items() if key not in NON_REPRODUCIBLE_KEYS}

    def run_seed(self, run_id: int, offset: int = 0) -> int:
        """반복 실행 시드: master + offset + run_id"""
        return self.seed + offset + run_id

    def network_spec(self, seed: int, architecture: Optional[Architecture] = None) -> NetworkSpec:
        architecture = Architecture(architecture or self.architecture)
        builder = chain3_spec if architecture == Architecture.CHAIN3 else monolithic_spec
        kwargs = {}
        if self.reservoir_size is not None:
            kwargs["size"] = self.reservoir_size
        if self.nonlinearity is not None:
            kwargs["nonlinearity"] = self.nonlinearity
        return builder(self.reservoir, seed, **kwargs)


def deep_merge(base: Mapping[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    """update를 base 위에 재귀적으로 병합한 새 딕셔너리"""
    merged = copy.deepcopy(dict(base))
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def check_keys(data: Mapping[str, Any], schema: Mapping[str, Any] = DEFAULT_EXPERIMENT_CONFIG, prefix: str = ""):
    """기본 설정에 없는 키를 모든 깊이에서 거부합니다."""
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"알 수 없는 설정 키입니다: {path}")
        if isinstance(schema[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{path}는 객체여야 합니다: {value!r}")
            check_keys(value, schema[key], f"{path}.")


def parse_override(expression: str) -> Dict[str, Any]:
    """
    'a.b=value' 형식을 중첩 딕셔너리로 변환합니다.

    값은 JSON으로 해석하고, 실패하면 문자열로 취급합니다.
    """
    if "=" not in expression:
        raise ConfigError(f"--set 형식은 key=value 입니다: {expression}")
    key, text = expression.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"--set 키가 비어 있습니다: {expression}")
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    override: Dict[str, Any] = {parts[-1]: value}
    for part in reversed(parts[:-1]):
        override = {part: override}
    return override


def load_params_file(path: str) -> Dict[str, Any]:
    """tune 명령이 저장한 best_params.json"""
    data = load_json(path)
    if data is None:
        raise ConfigError(f"파라미터 파일을 찾을 수 없습니다: {path}")
    if data.get("format_version") != PARAMS_FILE_VERSION or "point" not in data:
        raise ConfigError(f"지원하지 않는 파라미터 파일 형식입니다: {path}")
    return data


class ConfigManager:
    """실험 설정을 로드, 병합, 검증하는 클래스"""

    def __init__(self, config_file: Optional[str] = None):
        """
        설정 관리자 초기화

        Args:
            config_file: JSON 설정 파일 경로 (없으면 기본 설정만 사용)
        """
        self.config_file = Path(config_file) if config_file else None

    def _load_file(self) -> Dict[str, Any]:
        """설정 파일을 로드합니다."""
        if self.config_file is None:
            return {}
        if not self.config_file.exists():
            raise ConfigError(f"설정 파일을 찾을 수 없습니다: {self.config_file}")
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"설정 파일 JSON 파싱 실패 ({self.config_file}): {e}")
        if not isinstance(data, dict):
            raise ConfigError(f"설정 파일의 최상위는 객체여야 합니다: {self.config_file}")
        return data

    def merge(self, overrides: Iterable[str] = (), scale: Optional[str] = None,
              flags: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
        """
        우선순위(플래그 > --set > 프리셋 > 파일 > 기본값)대로 병합한 원시 설정

        Args:
            overrides: 'a.b=value' 목록
            scale: 'desk' 또는 'full'
            flags: seed / jobs / output_dir 명령행 값 (None은 무시)
        """
        file_data = self._load_file()
        check_keys(file_data)
        raw = deep_merge(DEFAULT_EXPERIMENT_CONFIG, file_data)

        if scale is not None:
            if scale not in SCALE_PRESETS:
                raise ConfigError(f"알 수 없는 규모 프리셋입니다: {scale}")
            raw = deep_merge(raw, SCALE_PRESETS[scale])

        for expression in overrides:
            override = parse_override(expression)
            check_keys(override)
            raw = deep_merge(raw, override)

        for key, value in (flags or {}).items():
            if value is not None:
                raw[key] = value

        params_file = raw["reservoir"].get("params_file")
        if params_file:
            raw = self._apply_params_file(raw, params_file)
        return raw

    @staticmethod
    def _apply_params_file(raw: Dict[str, Any], path: str) -> Dict[str, Any]:
        data = load_params_file(path)
        point = data["point"]
        if data.get("target") == "bptt":
            update = {"bptt": {key: point[key] for key in BPTT_SEARCH_KEYS if key in point}}
        else:
            update = {"reservoir": {key: point[key] for key in RESERVOIR_KEYS if key in point}}
        logger.info(f"탐색 결과 파라미터 적용 ({path}): {update}")
        return deep_merge(raw, update)

    def load(self, overrides: Iterable[str] = (), scale: Optional[str] = None,
             flags: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
        """병합 후 검증까지 마친 ExperimentConfig를 반환합니다."""
        raw = self.merge(overrides, scale, flags)
        config = self.build(raw)
        logger.info(f"실험 설정 로드 완료: regime={config.regime}, architecture={config.architecture.value}, "
                    f"repetitions={config.repetitions}, seed={config.seed}")
        return config

    @staticmethod
    def build(raw: Mapping[str, Any]) -> ExperimentConfig:
        """
        원시 설정을 검증하여 ExperimentConfig로 변환합니다.

        Raises:
            ConfigError: 값이 잘못되었거나 조합이 모순인 경우
        """
        check_keys(raw)
        regime = raw["regime"]
        architecture = raw["architecture"]
        if regime not in REGIMES:
            raise ConfigError(f"알 수 없는 학습 방식입니다: {regime} (가능: {', '.join(REGIMES)})")
        if architecture not in ARCHITECTURES:
            raise ConfigError(f"알 수 없는 구조입니다: {architecture} (가능: {', '.join(ARCHITECTURES)})")
        if (regime == "monolithic") != (architecture == "monolithic"):
            raise ConfigError(f"학습 방식 {regime}은(는) 구조 {architecture}와 함께 쓸 수 없습니다.")

        task = raw["task"]
        transfer = raw["transfer"]
        search = raw["search"]
        reservoir = dict(raw["reservoir"])

        if regime == "transfer" and not transfer["source_network"] and not transfer["train_source"]:
            raise ConfigError("transfer 학습에는 transfer.source_network 또는 transfer.train_source=true가 필요합니다.")
        if transfer["source_network"] and not Path(transfer["source_network"]).exists():
            raise ConfigError(f"원본 네트워크 파일을 찾을 수 없습니다: {transfer['source_network']}")
        if search["target"] not in SEARCH_TARGETS:
            raise ConfigError(f"알 수 없는 탐색 대상입니다: {search['target']}")

        try:
            for name in ("seed", "repetitions", "jobs"):
                if int(raw[name]) != raw[name]:
                    raise ValueError(f"{name}은(는) 정수여야 합니다: {raw[name]}")
            if raw["repetitions"] < 1:
                raise ValueError(f"repetitions는 1 이상이어야 합니다: {raw['repetitions']}")
            if raw["jobs"] == 0:
                raise ValueError("jobs는 0일 수 없습니다.")
            if task["length"] <= task["washout"] or task["washout"] < 0:
                raise ValueError(f"task.length({task['length']})는 task.washout({task['washout']})보다 커야 합니다.")
            if search["budget"] < 1:
                raise ValueError(f"search.budget은 1 이상이어야 합니다: {search['budget']}")
            if transfer["source_repetitions"] < 1:
                raise ValueError(f"transfer.source_repetitions는 1 이상이어야 합니다: {transfer['source_repetitions']}")

            size = reservoir.pop("size")
            nonlinearity = reservoir.pop("nonlinearity")
            reservoir.pop("params_file")
            params = ReservoirParams(**reservoir)
            if size is not None or nonlinearity is not None:
                # 노드 크기/비선형 함수 덮어쓰기도 계산 전에 검증
                replace(params, size=size or params.size, nonlinearity=nonlinearity or params.nonlinearity)

            config = ExperimentConfig(
                seed=int(raw["seed"]),
                jobs=int(raw["jobs"]),
                output_dir=str(raw["output_dir"]),
                repetitions=int(raw["repetitions"]),
                architecture=Architecture(architecture),
                regime=regime,
                task=TaskConfig(length=int(task["length"]), seed=int(task["seed"]), washout=int(task["washout"])),
                reservoir=params,
                reservoir_size=None if size is None else int(size),
                nonlinearity=nonlinearity,
                ridge=RidgeConfig(lambda_grid=raw["ridge"]["lambda_grid"], folds=int(raw["ridge"]["folds"])),
                bptt=BpttConfig(**{**raw["bptt"], "batch_size": int(raw["bptt"]["batch_size"])}),
                transfer=TransferConfig(source_network=transfer["source_network"],
                                        train_source=bool(transfer["train_source"]),
                                        source_repetitions=int(transfer["source_repetitions"])),
                search=SearchConfig(target=search["target"], budget=int(search["budget"])),
                raw=copy.deepcopy(dict(raw)),
            )
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as e:
            raise ConfigError(f"설정 값이 올바르지 않습니다: {e}")

        if config.regime in ("bptt", "transfer") and config.bptt.chunk_length > config.task.length:
            raise ConfigError(f"bptt.chunk_length({config.bptt.chunk_length})가 task.length({config.task.length})보다 깁니다.")
        return config
