"""체크포인트 mIoU 평가 스크립트."""

from __future__ import annotations

import argparse
import os
import sys

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dotenv import load_dotenv

from src.pipeline.config import load_experiment
from src.pipeline.evaluate import evaluate
from src.utils.cli import add_common_args, run_cli


def parse_args() -> argparse.Namespace:
    """명령행 인자를 파싱합니다."""
    parser = argparse.ArgumentParser(description="체크포인트를 도메인별 test split에서 평가합니다.")
    parser.add_argument("--checkpoint", required=True, help="체크포인트 디렉터리")
    parser.add_argument("--splits", default="", help="쉼표로 구분한 도메인 이름 (생략 시 전체)")
    parser.add_argument("--data", default=None, help="데이터셋 루트 (생략 시 설정의 data.root)")
    parser.add_argument("--out", default=None, help="지표 파일 출력 디렉터리")
    add_common_args(parser)
    return parser.parse_args()


def run(args: argparse.Namespace) -> None:
    cfg = load_experiment(args.config, args.overrides)
    splits = [s for s in args.splits.split(",") if s] or cfg.eval.splits or None
    report = evaluate(args.checkpoint, args.data or cfg.data.root, splits, cfg.eval.batch, args.out)
    print(f"[평가 완료] C={report.compound_avg:.4f} C+O={report.compound_open_avg:.4f}")


def main() -> int:
    """스크립트 진입점."""
    load_dotenv()
    return run_cli(run, parse_args())


if __name__ == "__main__":
    sys.exit(main())
