"""이미지 수준 CPSS 시각화 스크립트."""

from __future__ import annotations

import argparse
import os
import sys

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dotenv import load_dotenv

from src.core.style_aug import PatchGrid
from src.data.dataset import Manifest
from src.pipeline.stylize import STYLIZE_VARIANTS, stylize_files
from src.utils.cli import add_common_args, run_cli
from src.utils.errors import ConfigError


def parse_args() -> argparse.Namespace:
    """명령행 인자를 파싱합니다."""
    parser = argparse.ArgumentParser(description="이미지 패치 스타일을 교환해 저장하고 전/후 패치 통계를 기록합니다.")
    parser.add_argument("images", nargs="*", help="입력 SFOT 이미지 파일")
    parser.add_argument("--data", default=None, help="manifest 루트 (images 대신 샘플 선택)")
    parser.add_argument("--domains", default="", help="--data와 함께: 도메인마다 1장씩 고를 도메인 목록")
    parser.add_argument("--grid", default="2x4", help="패치 격자 HxW (기본값: 2x4)")
    parser.add_argument("--variant", default="inter", choices=STYLIZE_VARIANTS, help="스타일 연산자")
    parser.add_argument("--seed", type=int, default=0, help="순열 seed")
    parser.add_argument("--identity", action="store_true", help="항등 순열 (출력 == 입력)")
    parser.add_argument("--out", required=True, help="출력 디렉터리")
    add_common_args(parser, with_config=False)
    return parser.parse_args()


def select_images(args: argparse.Namespace) -> list:
    if args.images:
        return list(args.images)
    if not args.data:
        raise ConfigError("입력 이미지 또는 --data가 필요합니다.")
    manifest = Manifest.load(args.data)
    domains = [d for d in args.domains.split(",") if d] or manifest.domains()
    paths = []
    for domain in domains:
        sample = next((s for s in manifest.samples if s.domain == domain and s.split == "test"), None)
        if sample is None:
            raise ConfigError(f"도메인 {domain}의 test 샘플이 없습니다.")
        paths.append(str(manifest.root / sample.image))
    return paths


def run(args: argparse.Namespace) -> None:
    written = stylize_files(select_images(args), args.out, PatchGrid.parse(args.grid), args.variant, args.seed, args.identity)
    print(f"[스타일 변환 완료] {len(written)}장 → {args.out}")


def main() -> int:
    """스크립트 진입점."""
    load_dotenv()
    return run_cli(run, parse_args())


if __name__ == "__main__":
    sys.exit(main())
