"""
EsnNet 테스트 공통 설정
작은 리저버와 짧은 시계열로 전체 흐름을 빠르게 검증합니다.
"""

import os
import sys
from pathlib import Path

# 테스트 중에는 logs/ 파일 로그를 남기지 않음 (src 모듈 import 전에 설정)
os.environ.setdefault("ESN_LOG_TO_FILE", "0")

# 프로젝트 루트를 Python 경로에 추가
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

import pytest

from src.bptt import BpttConfig
from src.reservoir import ReservoirParams
from src.tasks import make_split

RUN_SLOW = os.getenv("ESN_RUN_SLOW") == "1"


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason="ESN_RUN_SLOW=1 일 때만 실행")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    """사용자 환경 변수가 테스트 결과에 섞이지 않도록 제거"""
    for name in ("ESN_OUTPUT_DIR", "ESN_MASTER_SEED", "ESN_JOBS"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture(scope="session")
def small_split():
    return make_split(600, 0)


@pytest.fixture(scope="session")
def medium_split():
    return make_split(2000, 0)


@pytest.fixture
def small_params():
    return ReservoirParams(size=10)


@pytest.fixture
def tiny_bptt_config():
    return BpttConfig(epochs=1, batch_size=3, chunk_length=20, chunk_washout=5, grad_noise_eta=0.0, seed=0)


@pytest.fixture
def tiny_cli_args(tmp_path):
    """CLI 통합 테스트용 최소 규모 설정"""
    out = tmp_path / "results"
    return out, [
        "--out", str(out),
        "--set", "task.length=600",
        "--set", "task.washout=50",
        "--set", "reservoir.size=10",
        "--set", "repetitions=2",
        "--set", "bptt.epochs=1",
        "--set", "bptt.batch_size=5",
        "--set", "bptt.chunk_length=20",
        "--set", "bptt.chunk_washout=5",
        "--set", "transfer.source_repetitions=2",
        "--set", "search.budget=2",
    ]
