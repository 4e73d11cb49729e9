"""로깅 초기화 유틸리티"""

import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s - %(message)s"


def setup_logging(level: str = "INFO") -> None:
    """루트 로거를 한 번만 설정합니다.

    Args:
        level: 로그 레벨 이름 (DEBUG, INFO, WARNING ...)
    """
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        numeric = logging.INFO
    logging.basicConfig(level=numeric, format=LOG_FORMAT, force=True)
