"""
LangSmith 실행 추적 (선택)

config.yaml의 langsmith_enabled가 true일 때만 파이프라인 단계 함수를 traceable로 감쌉니다.
LANGSMITH_API_KEY는 .env 파일에서 로드됩니다.
"""

import os
from typing import Callable, TypeVar

from dotenv import load_dotenv
from langsmith import traceable

from config.config_loader import CONFIG

F = TypeVar("F", bound=Callable)


def tracing_enabled() -> bool:
    return bool(CONFIG.get("langsmith_enabled", False))


def configure_tracing() -> bool:
    """추적 환경 변수를 설정하고 활성화 여부를 반환합니다."""
    if not tracing_enabled():
        return False
    load_dotenv()
    os.environ.setdefault("LANGSMITH_TRACING", "true")
    if CONFIG.get("langsmith_project_name"):
        os.environ.setdefault("LANGSMITH_PROJECT", CONFIG["langsmith_project_name"])
    return True


def traced(name: str) -> Callable[[F], F]:
    """추적이 꺼져 있으면 함수를 그대로 돌려주는 데코레이터"""

    def decorator(fn: F) -> F:
        if not configure_tracing():
            return fn
        return traceable(name=name, run_type="chain")(fn)

    return decorator
