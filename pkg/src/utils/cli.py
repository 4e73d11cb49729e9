"""스크립트 공통 인자와 종료 코드 처리"""

import argparse
import logging
from typing import Callable

from src.utils.errors import EXIT_OK, exit_code_for
from src.utils.logging_utils import setup_logging

logger = logging.getLogger(__name__)


def add_common_args(parser: argparse.ArgumentParser, with_config: bool = True) -> None:
    """--config / --set / --log-level 인자를 추가합니다."""
    if with_config:
        parser.add_argument("--config", default=None, help="설정 파일 (.yaml 또는 key=value)")
        parser.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="설정 덮어쓰기 (여러 번 사용 가능, 예: --set stage2.tau=0.9)",
        )
    parser.add_argument("--log-level", default="INFO", help="로그 레벨 (기본값: INFO)")


def run_cli(main: Callable[[argparse.Namespace], None], args: argparse.Namespace) -> int:
    """main을 실행하고 예외를 CLI 종료 코드로 변환합니다 (설정 오류 2, 데이터 오류 3)."""
    setup_logging(args.log_level)
    try:
        main(args)
    except Exception as e:
        code = exit_code_for(e)
        if code == 1:
            raise
        logger.error("[오류] %s: %s", type(e).__name__, e)
        return code
    return EXIT_OK
