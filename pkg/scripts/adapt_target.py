"""Stage-II 소스 없는 대상 적응 스크립트.

이 스크립트의 설정 스키마에는 소스 데이터 경로를 지정할 방법이 없습니다.
"""

from __future__ import annotations

import argparse
import os
import sys

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dotenv import load_dotenv

from src.pipeline.config import load_adapt
from src.pipeline.stages import adapt_target
from src.utils.cli import add_common_args, run_cli


def parse_args() -> argparse.Namespace:
    """명령행 인자를 파싱합니다."""
    parser = argparse.ArgumentParser(description="소스 모델만으로 compound 대상 도메인에 적응합니다.")
    parser.add_argument("--checkpoint", required=True, help="Stage-I 체크포인트 디렉터리")
    parser.add_argument("--out", required=True, help="출력 디렉터리")
    add_common_args(parser)
    return parser.parse_args()


def run(args: argparse.Namespace) -> None:
    cfg = load_adapt(args.config, args.overrides)
    result = adapt_target(cfg, args.checkpoint, args.out)
    print(f"[Stage-II 완료] 체크포인트: {result.checkpoint} (의사 라벨 coverage={result.pseudo_labels.coverage:.4f})")


def main() -> int:
    """스크립트 진입점."""
    load_dotenv()
    return run_cli(run, parse_args())


if __name__ == "__main__":
    sys.exit(main())
