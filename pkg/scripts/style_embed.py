"""스타일 임베딩 추출과 잠재 도메인 군집화 스크립트."""

from __future__ import annotations

import argparse
import os
import sys

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dotenv import load_dotenv

from src.core.segnet import load_checkpoint
from src.data.clustering import cluster_latent_domains, oracle_agreement
from src.data.dataset import ROLES, DomainView, Manifest
from src.data.style_embed import embed_view, write_embeddings_csv
from src.pipeline.config import load_experiment
from src.utils.cli import add_common_args, run_cli


def parse_args() -> argparse.Namespace:
    """명령행 인자를 파싱합니다."""
    parser = argparse.ArgumentParser(description="블록 1 특징의 채널 평균/표준편차 임베딩을 CSV로 내보냅니다.")
    parser.add_argument("--checkpoint", required=True, help="체크포인트 디렉터리")
    parser.add_argument("--out", required=True, help="출력 CSV 경로")
    parser.add_argument("--data", default=None, help="데이터셋 루트 (생략 시 설정의 data.root)")
    parser.add_argument("--roles", default="compound", help="쉼표로 구분한 역할 (기본값: compound)")
    parser.add_argument("--split", default="train", choices=("train", "test"), help="분할")
    parser.add_argument("--clusters", type=int, default=0, help="k > 0이면 k-means 후 oracle ARI를 기록합니다")
    add_common_args(parser)
    return parser.parse_args()


def run(args: argparse.Namespace) -> None:
    cfg = load_experiment(args.config, args.overrides)
    roles = [r for r in args.roles.split(",") if r in ROLES]
    manifest = Manifest.load(args.data or cfg.data.root)
    view = DomainView(manifest, roles, split=args.split)
    model = load_checkpoint(args.checkpoint)
    paths, domains, embeddings = embed_view(model, view, cfg.eval.batch)
    write_embeddings_csv(args.out, paths, domains, embeddings)
    if args.clusters > 0:
        assignments = cluster_latent_domains(embeddings, args.clusters, cfg.seed)
        score = oracle_agreement(assignments, domains)
        print(f"[군집화] k={args.clusters} ARI={score:.4f}")


def main() -> int:
    """스크립트 진입점."""
    load_dotenv()
    return run_cli(run, parse_args())


if __name__ == "__main__":
    sys.exit(main())
