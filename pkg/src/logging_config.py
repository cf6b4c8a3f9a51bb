"""
EsnNet 로깅 설정 모듈
통합된 로깅 설정을 제공합니다.
"""

import logging
import os
from datetime import datetime
from pathlib import Path

# 로그 레벨을 낮추는 외부 라이브러리 (requirements.txt에 있는 것만)
QUIETED_LIBRARIES = ('joblib',)

# EsnNet 관련 로거들
ESNNET_LOGGERS = (
    'src.reservoir',
    'src.readout',
    'src.tasks',
    'src.network',
    'src.bptt',
    'src.search',
    'src.analysis',
    'src.experiment_manager',
    'src.config_manager',
    'src.main',
)


def setup_logging(log_level=None, log_to_file=None):
    """
    EsnNet 실험 도구의 로깅을 설정합니다.

    Args:
        log_level: 로그 레벨 (기본값: 환경 변수 ESN_LOG_LEVEL, 없으면 INFO)
        log_to_file: 파일로 로그 저장 여부 (기본값: 환경 변수 ESN_LOG_TO_FILE, 없으면 True)
    """
    if log_level is None:
        log_level = getattr(logging, os.getenv("ESN_LOG_LEVEL", "INFO").upper(), logging.INFO)
    if log_to_file is None:
        log_to_file = os.getenv("ESN_LOG_TO_FILE", "1").lower() not in ("0", "false", "no")

    # 로그 포맷 설정
    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    date_format = '%Y-%m-%d %H:%M:%S'

    # 루트 로거 가져오기 (재호출 시 핸들러 중복 방지)
    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)

    # 콘솔 핸들러 추가
    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)
    console_formatter = logging.Formatter(log_format, date_format)
    console_handler.setFormatter(console_formatter)
    root_logger.addHandler(console_handler)

    # 파일 핸들러 추가 (선택사항)
    if log_to_file:
        log_dir = Path(os.getenv("ESN_LOG_DIR", "logs"))
        log_dir.mkdir(parents=True, exist_ok=True)

        # 일별 로그 파일
        today = datetime.now().strftime('%Y-%m-%d')
        log_file = log_dir / f"esnnet_{today}.log"

        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(log_level)
        file_formatter = logging.Formatter(log_format, date_format)
        file_handler.setFormatter(file_formatter)
        root_logger.addHandler(file_handler)

        # 에러 전용 로그 파일
        error_log_file = log_dir / f"esnnet_errors_{today}.log"
        error_handler = logging.FileHandler(error_log_file, encoding='utf-8')
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(file_formatter)
        root_logger.addHandler(error_handler)

    # 외부 라이브러리 로그 레벨 조정
    for library in QUIETED_LIBRARIES:
        logging.getLogger(library).setLevel(logging.WARNING)

    for logger_name in ESNNET_LOGGERS:
        logger = logging.getLogger(logger_name)
        logger.setLevel(log_level)

    return root_logger


def get_logger(name: str) -> logging.Logger:
    """
    지정된 이름의 로거를 반환합니다.

    Args:
        name: 로거 이름

    Returns:
        logging.Logger: 설정된 로거
    """
    return logging.getLogger(name)


def log_function_call(func_name: str, **kwargs):
    """
    함수 호출을 로그로 기록합니다.

    Args:
        func_name: 함수 이름
        **kwargs: 함수 매개변수
    """
    logger = get_logger('function_calls')
    params = ', '.join([f"{k}={v}" for k, v in kwargs.items()])
    logger.info(f"함수 호출: {func_name}({params})")


def log_performance(operation: str, duration: float, **metadata):
    """
    성능 메트릭을 로그로 기록합니다.

    Args:
        operation: 작업 이름
        duration: 소요 시간 (초)
        **metadata: 추가 메타데이터
    """
    logger = get_logger('performance')
    meta_str = ', '.join([f"{k}={v}" for k, v in metadata.items()])
    logger.info(f"성능: {operation} - {duration:.2f}초 ({meta_str})")


def log_training_step(epoch: int, **metrics):
    """
    BPTT 학습의 에폭별 지표를 로그로 기록합니다.

    Args:
        epoch: 에폭 번호 (0부터 시작)
        **metrics: 손실, 검증 NMSE, 학습률 등
    """
    logger = get_logger('training')
    meta_str = ', '.join(
        [f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in metrics.items()]
    )
    logger.info(f"학습: 에폭 {epoch} ({meta_str})")


# 기본 로깅 설정 적용
setup_logging()
