"""Stage-I 하이퍼파라미터 민감도 스윕 스크립트."""

from __future__ import annotations

import argparse
import os
import sys

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dotenv import load_dotenv

from src.pipeline.config import resolve_config_dict
from src.pipeline.sweep import AXES, sweep
from src.utils.cli import add_common_args, run_cli


def parse_args() -> argparse.Namespace:
    """명령행 인자를 파싱합니다."""
    parser = argparse.ArgumentParser(description="축 하나를 바꿔 가며 train-source를 반복 실행합니다.")
    parser.add_argument("--axis", required=True, choices=AXES, help="스윕 축")
    parser.add_argument("--values", required=True, help="쉼표로 구분한 값 (예: 0,0.1,0.3,0.5,0.7)")
    parser.add_argument("--seeds", type=int, default=3, help="값마다 실행할 seed 개수 (기본값: 3)")
    parser.add_argument("--workers", type=int, default=1, help="병렬 프로세스 수")
    parser.add_argument("--out", default="runs/sweep", help="출력 디렉터리")
    add_common_args(parser)
    return parser.parse_args()


def run(args: argparse.Namespace) -> None:
    base = resolve_config_dict(args.config, args.overrides)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    summary = sweep(base, args.axis, values, args.seeds, args.out, workers=args.workers)
    print(f"[스윕 완료] {len(summary)}개 값 → {args.out}")


def main() -> int:
    """스크립트 진입점."""
    load_dotenv()
    return run_cli(run, parse_args())


if __name__ == "__main__":
    sys.exit(main())
