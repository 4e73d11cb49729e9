"""
툴킷 공통 예외 정의

CLI 종료 코드 규칙:
    ConfigError → 2, DataError / FileNotFoundError / OSError → 3
"""


class SfocdaError(Exception):
    """툴킷에서 발생하는 모든 예외의 기반 클래스"""


class ShapeError(SfocdaError, ValueError):
    """텐서 차원이 연산의 전제 조건과 맞지 않을 때 발생합니다."""


class ContractError(SfocdaError, RuntimeError):
    """호출 규약(사전 조건)을 위반했을 때 발생합니다."""


class ConfigError(SfocdaError, ValueError):
    """설정 값이 없거나 허용 범위를 벗어났을 때 발생합니다."""


class DataError(SfocdaError, ValueError):
    """데이터셋 내용이 올바르지 않을 때 발생합니다."""


EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_DATA_ERROR = 3


def exit_code_for(exc: BaseException) -> int:
    """예외 종류를 CLI 종료 코드로 변환합니다."""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG_ERROR
    if isinstance(exc, (DataError, FileNotFoundError, OSError)):
        return EXIT_DATA_ERROR
    return 1
