"""
의사 라벨 디스크 캐시

키 = sha256(체크포인트 해시, τ, q). 위치는 `<data root>/pseudo_labels/<key>/`이며
샘플별 u8 SFOT 맵, index.json(이미지 경로 순서), thresholds.json을 담습니다.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.pseudo_label import ClassThresholds, PseudoLabelMap
from src.core.sfot import read_tensor, write_tensor

logger = logging.getLogger(__name__)

STORE_DIR = "pseudo_labels"


def cache_key(checkpoint_hash: str, tau: float, q: float) -> str:
    payload = json.dumps([checkpoint_hash, float(tau), float(q)])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class PseudoLabelStore:
    def __init__(self, data_root: Union[str, Path]):
        self.base = Path(data_root) / STORE_DIR

    def path(self, key: str) -> Path:
        return self.base / key

    def load(self, key: str, image_paths: Sequence[str]) -> Optional[Tuple[PseudoLabelMap, ClassThresholds]]:
        """캐시가 있고 샘플 순서가 같으면 (라벨, 임계값), 아니면 None."""
        directory = self.path(key)
        index_file = directory / "index.json"
        if not index_file.exists():
            return None
        index: List[str] = json.loads(index_file.read_text(encoding="utf-8"))
        if index != list(image_paths):
            logger.warning("[의사 라벨] 캐시 샘플 목록이 달라 다시 계산합니다: %s", directory)
            return None
        labels = np.stack([read_tensor(directory / f"{i:05d}.sfot") for i in range(len(index))])
        thresholds = ClassThresholds.from_json(json.loads((directory / "thresholds.json").read_text(encoding="utf-8")))
        logger.info("[의사 라벨] 캐시에서 불러왔습니다: %s", directory)
        return PseudoLabelMap(labels), thresholds

    def save(self, key: str, image_paths: Sequence[str], labels: PseudoLabelMap, thresholds: ClassThresholds) -> Path:
        directory = self.path(key)
        directory.mkdir(parents=True, exist_ok=True)
        for i, lbl in enumerate(labels.labels):
            write_tensor(directory / f"{i:05d}.sfot", lbl.astype(np.uint8))
        (directory / "thresholds.json").write_text(json.dumps(thresholds.to_json(), indent=1), encoding="utf-8")
        (directory / "index.json").write_text(json.dumps(list(image_paths), indent=1), encoding="utf-8")
        return directory
