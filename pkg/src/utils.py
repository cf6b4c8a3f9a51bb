"""
공통 유틸리티 함수 모음
환경 변수 관리, JSON 파일 처리, 경로/시간 포맷 등
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
from dotenv import load_dotenv


def load_environment() -> Dict[str, Any]:
    """
    환경 변수를 로드합니다 (필수 변수는 없음).

    설정되지 않은 ESN_OUTPUT_DIR / ESN_MASTER_SEED / ESN_JOBS는 None이며,
    이 경우 설정 파일과 기본 설정(results, 42, 1)이 적용됩니다.
    """
    load_dotenv()

    try:
        master_seed = int(os.environ["ESN_MASTER_SEED"]) if os.getenv("ESN_MASTER_SEED") else None
        jobs = int(os.environ["ESN_JOBS"]) if os.getenv("ESN_JOBS") else None
    except ValueError as e:
        raise ValueError(f"ESN_MASTER_SEED/ESN_JOBS는 정수여야 합니다: {e}")

    return {
        "output_dir": os.getenv("ESN_OUTPUT_DIR") or None,
        "master_seed": master_seed,
        "jobs": jobs,
        "log_level": os.getenv("ESN_LOG_LEVEL", "INFO"),
    }


def _to_builtin(value: Any) -> Any:
    """numpy 스칼라/배열을 JSON 직렬화 가능한 타입으로 변환합니다."""
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return value.as_posix()
    return value


def save_json(data: Dict[str, Any], path: Union[str, Path]) -> str:
    """키를 정렬한 결정적 JSON으로 저장합니다 (타임스탬프 없음)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_to_builtin(data), f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return str(path)


def load_json(path: Union[str, Path]) -> Optional[Dict[str, Any]]:
    """JSON 파일을 불러옵니다. 파일이 없으면 None"""
    path = Path(path)
    if not path.exists():
        return None
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def relative_path(path: Union[str, Path], root: Union[str, Path]) -> str:
    """root 기준 POSIX 상대 경로 (보고서의 산출물 경로 표기용)"""
    return Path(os.path.relpath(Path(path), Path(root))).as_posix()


def format_duration(seconds: float) -> str:
    """초를 분:초 형식으로 변환합니다."""
    if seconds < 0:
        return "00:00"

    minutes = int(seconds // 60)
    remaining_seconds = int(seconds % 60)
    return f"{minutes:02d}:{remaining_seconds:02d}"
