"""
스타일 임베딩: 인코더 블록 1 특징맵의 채널별 평균과 표준편차를 이어붙인 벡터
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.core.segnet import SegNet
from src.core.tensor import no_grad
from src.data.dataset import DomainView

logger = logging.getLogger(__name__)


def extract_style_embedding(model: SegNet, img) -> np.ndarray:
    """평가 모드(CPSS 없음)에서 [N, 2·C₁] 임베딩을 계산합니다."""
    with no_grad():
        feat = model.features(img, 1).data.astype(np.float64)
    flat = feat.reshape(feat.shape[0], feat.shape[1], -1)
    return np.concatenate([flat.mean(axis=2), flat.std(axis=2)], axis=1)


def embed_view(model: SegNet, view: DomainView, batch_size: int = 16) -> Tuple[List[str], List[str], np.ndarray]:
    """뷰의 모든 샘플을 임베딩합니다. (이미지 경로, 도메인 태그, 임베딩 행렬)"""
    rows = []
    for _, images, _ in view.iter_batches(batch_size, with_labels=False):
        rows.append(extract_style_embedding(model, images))
    width = 2 * model.cfg.widths[0]
    matrix = np.concatenate(rows) if rows else np.zeros((0, width))
    return view.image_paths(), [s.domain for s in view.samples], matrix


def write_embeddings_csv(
    path: Union[str, Path], paths: Sequence[str], domains: Sequence[str], embeddings: np.ndarray
) -> Path:
    """`path,domain,e0..e(2C₁−1)` 헤더의 CSV를 씁니다."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(embeddings, columns=[f"e{i}" for i in range(embeddings.shape[1])])
    frame.insert(0, "domain", list(domains))
    frame.insert(0, "path", list(paths))
    frame.to_csv(path, index=False, float_format="%.8g")
    logger.info("[스타일 임베딩] %d개 → %s", len(frame), path)
    return path


def read_embeddings_csv(path: Union[str, Path]) -> Tuple[List[str], List[str], np.ndarray]:
    frame = pd.read_csv(path)
    cols = [c for c in frame.columns if c.startswith("e")]
    return frame["path"].tolist(), frame["domain"].tolist(), frame[cols].to_numpy(dtype=np.float64)
