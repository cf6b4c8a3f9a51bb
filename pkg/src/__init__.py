"""EsnNet - 다중 리저버 에코 상태 네트워크 학습 도구"""

__version__ = "1.0.0"
