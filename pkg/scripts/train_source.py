"""Stage-I 소스 모델 학습 스크립트."""

from __future__ import annotations

import argparse
import os
import sys

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dotenv import load_dotenv

from src.pipeline.config import load_experiment
from src.pipeline.stages import train_source
from src.utils.cli import add_common_args, run_cli


def parse_args() -> argparse.Namespace:
    """명령행 인자를 파싱합니다."""
    parser = argparse.ArgumentParser(description="라벨 있는 소스 도메인에서 CPSS + 광도 변환으로 모델을 학습합니다.")
    parser.add_argument("--out", required=True, help="출력 디렉터리 (checkpoint/, metrics.csv, metrics.json)")
    add_common_args(parser)
    return parser.parse_args()


def run(args: argparse.Namespace) -> None:
    cfg = load_experiment(args.config, args.overrides)
    result = train_source(cfg, args.out)
    print(f"[Stage-I 완료] 체크포인트: {result.checkpoint}")


def main() -> int:
    """스크립트 진입점."""
    load_dotenv()
    return run_cli(run, parse_args())


if __name__ == "__main__":
    sys.exit(main())
