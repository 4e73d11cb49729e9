"""점검용 PNG 내보내기 (이미지, 컬러 라벨)"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from src.core.sfot import read_tensor
from src.core.segnet import IGNORE
from src.data.dataset import Manifest

PALETTE = np.array(
    [
        [120, 100, 80],
        [70, 70, 75],
        [130, 180, 240],
        [220, 60, 50],
        [60, 180, 80],
        [240, 215, 50],
    ],
    dtype=np.uint8,
)


def image_to_pil(img: np.ndarray) -> Image.Image:
    """[3,H,W] ∈ [0,1] → RGB PIL 이미지"""
    arr = (np.clip(img, 0.0, 1.0).transpose(1, 2, 0) * 255.0 + 0.5).astype(np.uint8)
    return Image.fromarray(arr)


def label_to_pil(label: np.ndarray) -> Image.Image:
    """클래스 맵을 팔레트 색으로 칠합니다. IGNORE와 팔레트 밖 클래스는 검정."""
    out = np.zeros(label.shape + (3,), dtype=np.uint8)
    known = (label != IGNORE) & (label < len(PALETTE))
    out[known] = PALETTE[label[known]]
    return Image.fromarray(out)


def export_png(manifest: Manifest, out: Union[str, Path], limit: Optional[int] = None) -> int:
    """manifest의 이미지(와 라벨)를 PNG로 씁니다. 쓴 샘플 수를 반환합니다."""
    out = Path(out)
    count = 0
    for s in manifest.samples[:limit]:
        target = out / Path(s.image).with_suffix("").with_suffix(".png")
        target.parent.mkdir(parents=True, exist_ok=True)
        image_to_pil(read_tensor(manifest.root / s.image)).save(target)
        if s.label is not None:
            label_to_pil(read_tensor(manifest.root / s.label)).save(target.with_name(target.stem + "_label.png"))
        count += 1
    return count
