"""
설정 파일 로더 유틸리티

실험 설정 파일(YAML 또는 key=value)을 읽어 중첩 딕셔너리로 만듭니다.
민감하지 않은 설정 값만 다루며, API 키 같은 비밀 값은 .env에서 읽습니다.

지원 형식:
    - .yaml / .yml: PyYAML로 읽는 중첩 매핑
    - 그 외 확장자: UTF-8 `key=value` 줄. 점(.)으로 섹션을 나누고 (`stage2.tau=0.9`),
      `#` 뒤는 주석이며, 값은 YAML 스칼라 규칙으로 해석합니다.
"""

import copy
import logging
import os
from typing import Any, Dict, Iterable, Optional

import yaml

logger = logging.getLogger(__name__)


def parse_key_value_text(text: str, source: str = "<text>") -> Dict[str, Any]:
    """
    key=value 형식 텍스트를 중첩 딕셔너리로 변환합니다.

    Args:
        text: 설정 텍스트
        source: 오류 메시지에 쓸 출처 이름

    Returns:
        설정 딕셔너리

    Raises:
        ValueError: '='가 없는 줄이나 빈 키가 있는 경우
    """
    config: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: 'key=value' 형식이 아닙니다: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: 키가 비어 있습니다.")
        set_dotted(config, key, _parse_scalar(value))
    return config


def _parse_scalar(value: str) -> Any:
    if value == "":
        return None
    try:
        return yaml.safe_load(value)
    except yaml.YAMLError:
        return value


def set_dotted(config: Dict[str, Any], key: str, value: Any) -> None:
    """'a.b.c' 키에 값을 넣습니다. 중간 섹션은 필요하면 만듭니다."""
    parts = key.split(".")
    node = config
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """override를 base 위에 재귀적으로 덮어쓴 새 딕셔너리를 반환합니다."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def apply_overrides(config: Dict[str, Any], overrides: Optional[Iterable[str]]) -> Dict[str, Any]:
    """
    명령행 `--set key=value` 목록을 설정에 적용합니다.

    Raises:
        ValueError: 형식이 잘못된 항목이 있는 경우
    """
    merged = copy.deepcopy(config)
    for item in overrides or []:
        override = parse_key_value_text(item, source="--set")
        if not override:
            raise ValueError(f"--set 값이 비어 있습니다: {item!r}")
        merged = deep_merge(merged, override)
    return merged


def load_config(config_path: str = "config.yaml") -> Dict[str, Any]:
    """
    설정 파일을 로드합니다.

    Args:
        config_path: 설정 파일 경로 (기본값: "config.yaml")

    Returns:
        설정 딕셔너리

    Raises:
        FileNotFoundError: 설정 파일이 없는 경우
        yaml.YAMLError: YAML 파싱 오류가 발생한 경우
        ValueError: key=value 파일 형식 오류
    """
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            text = f.read()
    except FileNotFoundError:
        raise FileNotFoundError(f"설정 파일을 찾을 수 없습니다: {config_path}")
    if os.path.splitext(config_path)[1].lower() in (".yaml", ".yml"):
        try:
            config = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise yaml.YAMLError(f"YAML 파싱 오류: {e}")
        if config is None:
            return {}
        if not isinstance(config, dict):
            raise ValueError(f"설정 파일 최상위는 매핑이어야 합니다: {config_path}")
        return config
    return parse_key_value_text(text, source=config_path)


def get_config_value(key: str, default: Any = None) -> Any:
    """
    전역 설정 값을 가져옵니다. 점으로 구분된 키(`stage2.tau`)를 지원합니다.

    Args:
        key: 설정 키
        default: 기본값

    Returns:
        설정 값
    """
    node: Any = CONFIG
    for part in key.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def default_config() -> Dict[str, Any]:
    """전역 기본 설정의 사본"""
    return copy.deepcopy(CONFIG)


# 전역 설정 로드 (모듈 import 시 실행)
CONFIG_DIR = os.path.dirname(os.path.abspath(__file__))
try:
    config_file_path = os.path.join(CONFIG_DIR, "config.yaml")
    CONFIG = load_config(config_file_path)
except (FileNotFoundError, yaml.YAMLError, ValueError) as e:
    logger.warning("경고: 설정 파일 로드 실패 - %s", e)
    # 설정 파일이 없어도 기본값으로 동작하도록 fallback 설정
    CONFIG = {
        "seed": 0,
        "data": {"root": "data/toy"},
        "model": {"in_channels": 3, "num_classes": 6, "widths": [16, 32, 64]},
        "injection": {"beta": 0.3, "sites": [1, 2], "variant": "inter", "mix_alpha": 0.1, "patches": 4},
        "photometric": {"enabled": True},
        "stage1": {"iters": 3000, "base_lr": 2.5e-4, "momentum": 0.9, "weight_decay": 5e-4, "power": 0.9, "batch": 4},
        "stage2": {"iters": 1500, "base_lr": 1e-4, "tau": 0.9, "q": 50, "batch": 4, "sampler": "random"},
        "eval": {"splits": [], "batch": 16},
        "langsmith_enabled": False,
        "langsmith_project_name": "sfocda-toolkit",
    }
