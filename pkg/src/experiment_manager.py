"""
실험 결과 관리 시스템
데이터셋 캐시, 실행 산출물 경로, 실험 보고서(JSON)를 저장, 로드, 관리하는 클래스
"""

import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))
from src import __version__
from src.logging_config import get_logger
from src.tasks import (DatasetSplit, load_split_binary, make_split, save_split_binary, save_split_csv,
                       split_paths)
from src.utils import load_json, relative_path, save_json

# 로거 설정
logger = get_logger(__name__)

REPORT_FORMAT_VERSION = 1
DATA_MANIFEST_VERSION = 1
TOOL_NAME = "esnnet"


@dataclass
class ExperimentReport:
    """
    실험 보고서

    산출물 경로는 보고서 파일이 있는 디렉터리 기준 상대 경로입니다.
    타임스탬프를 넣지 않으므로 같은 설정으로 다시 실행하면 바이트 단위로 같은 보고서가 만들어집니다.
    """

    command: str
    regime: str
    architecture: str
    config: Dict[str, Any]
    seeds: Dict[str, Any]
    runs: List[Dict[str, Any]] = field(default_factory=list)
    summary: Optional[Dict[str, Any]] = None
    artifacts: List[str] = field(default_factory=list)
    data: List[str] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)
    tool: str = TOOL_NAME
    version: str = __version__
    format_version: int = REPORT_FORMAT_VERSION

    @property
    def completed(self) -> List[Dict[str, Any]]:
        return [row for row in self.runs if row.get("success")]

    @property
    def all_succeeded(self) -> bool:
        return all(row.get("success") for row in self.runs)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["artifacts"] = sorted(set(self.artifacts))
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentReport":
        if data.get("format_version") != REPORT_FORMAT_VERSION:
            raise ValueError(f"지원하지 않는 보고서 형식 버전입니다: {data.get('format_version')}")
        return cls(**data)


class ExperimentManager:
    """한 명령 실행의 산출물 디렉터리와 보고서를 관리하는 클래스"""

    def __init__(self, output_dir: Union[str, Path], subdir: str = ""):
        """
        실험 관리자 초기화

        Args:
            output_dir: 최상위 출력 디렉터리
            subdir: 이번 명령의 산출물 디렉터리 (예: 'runs/engineered')
        """
        self.output_dir = Path(output_dir)
        self.base_dir = self.output_dir / subdir if subdir else self.output_dir
        self.data_dir = self.output_dir / "data"
        self.base_dir.mkdir(parents=True, exist_ok=True)
        self.artifacts: List[str] = []
        logger.info(f"산출물 디렉터리 설정: {self.base_dir}")

    def path(self, *parts: str) -> Path:
        """base_dir 아래 경로 (상위 디렉터리 생성)"""
        path = self.base_dir.joinpath(*parts)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def relative(self, path: Union[str, Path]) -> str:
        return relative_path(path, self.base_dir)

    def register(self, path: Union[str, Path]) -> str:
        """산출물을 보고서 목록에 등록하고 상대 경로를 반환합니다."""
        rel = self.relative(path)
        if rel not in self.artifacts:
            self.artifacts.append(rel)
        return rel

    def _manifest_path(self) -> Path:
        return self.data_dir / "manifest.json"

    def save_dataset(self, split: DatasetSplit, length: int, seed: int) -> List[Path]:
        """분할별 CSV와 RCDS 바이너리, 매니페스트를 저장합니다."""
        written = []
        paths = split_paths(self.data_dir)
        for name, (u, y) in split.items():
            save_split_csv(u, y, paths[name]["csv"])
            save_split_binary(u, y, paths[name]["binary"])
            written.extend([paths[name]["csv"], paths[name]["binary"]])
        manifest = {
            "format_version": DATA_MANIFEST_VERSION,
            "length": length,
            "seed": seed,
            "split_seeds": list(split.seeds),
        }
        save_json(manifest, self._manifest_path())
        written.append(self._manifest_path())
        logger.info(f"데이터셋 저장 완료: {self.data_dir} (길이 {length}, 시드 {list(split.seeds)})")
        return written

    def load_or_generate_dataset(self, length: int, seed: int) -> DatasetSplit:
        """
        매니페스트가 일치하면 저장된 데이터셋을 불러오고, 아니면 새로 생성해 저장합니다.
        """
        manifest = load_json(self._manifest_path())
        paths = split_paths(self.data_dir)
        if (manifest is not None and manifest.get("format_version") == DATA_MANIFEST_VERSION
                and manifest.get("length") == length and manifest.get("seed") == seed
                and all(p["binary"].exists() for p in paths.values())):
            logger.info(f"저장된 데이터셋 사용: {self.data_dir}")
            parts = [load_split_binary(paths[name]["binary"]) for name in ("train", "validation", "test")]
            return DatasetSplit(train=parts[0], validation=parts[1], test=parts[2],
                                seeds=tuple(manifest["split_seeds"]))

        logger.info(f"데이터셋 생성: 길이 {length}, 시드 {seed}")
        split = make_split(length, seed)
        self.save_dataset(split, length, seed)
        return split

    def data_files(self) -> List[str]:
        """보고서에 기록할 데이터셋 파일 경로 (base_dir 기준)"""
        paths = split_paths(self.data_dir)
        return [self.relative(paths[name]["binary"]) for name in ("train", "validation", "test")]

    def save_report(self, report: ExperimentReport, filename: str = "report.json") -> str:
        """보고서를 base_dir에 저장합니다."""
        report.artifacts = sorted(set(report.artifacts) | set(self.artifacts))
        path = save_json(report.to_dict(), self.path(filename))
        logger.info(f"보고서 저장 완료: {path} (실행 {len(report.runs)}개, 성공 {len(report.completed)}개)")
        return path

    @staticmethod
    def load_report(path: Union[str, Path]) -> ExperimentReport:
        data = load_json(path)
        if data is None:
            raise FileNotFoundError(f"보고서를 찾을 수 없습니다: {path}")
        return ExperimentReport.from_dict(data)

    @staticmethod
    def resolve(report_path: Union[str, Path], relative: str) -> Path:
        """보고서 기준 상대 경로를 실제 경로로 변환합니다."""
        return Path(report_path).parent / relative
