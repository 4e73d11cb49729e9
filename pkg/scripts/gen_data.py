"""합성 다중 도메인 분할 데이터셋을 생성하는 스크립트."""

from __future__ import annotations

import argparse
import os
import sys

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dotenv import load_dotenv

from src.data.export import export_png
from src.data.synthetic import SceneSpec, generate_domains
from src.utils.cli import add_common_args, run_cli


def parse_args() -> argparse.Namespace:
    """명령행 인자를 파싱합니다."""
    parser = argparse.ArgumentParser(description="소스/compound/open 도메인 합성 데이터셋을 생성합니다.")
    parser.add_argument("--spec", default=None, help="장면/도메인 정의 YAML (생략 시 기본 5개 도메인)")
    parser.add_argument("--out", required=True, help="출력 디렉터리")
    parser.add_argument("--seed", type=int, default=0, help="전역 seed")
    parser.add_argument("--train-per-domain", type=int, default=200, help="도메인별 train 샘플 수")
    parser.add_argument("--test-per-domain", type=int, default=50, help="도메인별 test 샘플 수")
    parser.add_argument("--workers", type=int, default=4, help="생성 스레드 수")
    parser.add_argument("--png", type=int, default=0, metavar="N", help="앞쪽 N개 샘플을 PNG로도 내보냅니다")
    add_common_args(parser, with_config=False)
    return parser.parse_args()


def run(args: argparse.Namespace) -> None:
    spec = SceneSpec.load(args.spec) if args.spec else SceneSpec()
    manifest = generate_domains(
        spec, args.out, args.seed, args.train_per_domain, args.test_per_domain, workers=args.workers
    )
    if args.png:
        count = export_png(manifest, os.path.join(args.out, "png"), limit=args.png)
        print(f"[PNG] {count}개 샘플을 내보냈습니다.")


def main() -> int:
    """스크립트 진입점."""
    load_dotenv()
    return run_cli(run, parse_args())


if __name__ == "__main__":
    sys.exit(main())
