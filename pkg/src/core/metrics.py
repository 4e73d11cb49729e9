"""
분할 평가 지표 (혼동 행렬 기반 IoU / mIoU)
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from src.core.segnet import IGNORE


class SegMetric:
    """split 전체에 걸쳐 혼동 행렬을 누적합니다. 행 = 정답, 열 = 예측."""

    def __init__(self, n_class: int):
        self.n_class = n_class
        self.confusion_matrix = np.zeros((n_class, n_class), dtype=np.int64)

    def generate_confusion_matrix(self, preds: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """ignore 라벨을 제외하고 한 배치의 혼동 행렬을 만듭니다."""
        labels = labels.astype(np.int64)
        index = (labels != IGNORE) & (labels >= 0) & (labels < self.n_class)
        mask = self.n_class * labels[index] + preds.astype(np.int64)[index]
        count = np.bincount(mask, minlength=self.n_class ** 2)
        return count.reshape(self.n_class, self.n_class)

    def add_batch(self, preds: np.ndarray, labels: np.ndarray) -> None:
        assert preds.shape == labels.shape, f"{preds.shape} != {labels.shape}"
        self.confusion_matrix += self.generate_confusion_matrix(preds, labels)

    def reset(self) -> None:
        self.confusion_matrix = np.zeros((self.n_class, self.n_class), dtype=np.int64)

    def pixel_accuracy(self) -> float:
        total = self.confusion_matrix.sum()
        return float(np.diag(self.confusion_matrix).sum() / total) if total else 0.0

    def iou(self) -> Tuple[np.ndarray, float]:
        """클래스별 IoU = TP/(TP+FP+FN)와 mIoU.

        정답과 예측 어디에도 나타나지 않은 클래스(TP+FP+FN = 0)는 NaN이며 평균에서 빠집니다.
        """
        tp = np.diag(self.confusion_matrix).astype(np.float64)
        union = self.confusion_matrix.sum(axis=1) + self.confusion_matrix.sum(axis=0) - tp
        iou = np.full(self.n_class, np.nan)
        present = union > 0
        iou[present] = tp[present] / union[present]
        miou = float(np.mean(iou[present])) if present.any() else float("nan")
        return iou, miou
