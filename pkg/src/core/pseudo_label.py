"""
최대 확률 임계값(MPT) 의사 라벨 생성

1) 대상 학습 집합 전체를 한 번 훑으며 예측 클래스별 최대 확률 값을 모읍니다.
2) 클래스마다 상위 q% 값이 통과하도록 임계값을 정하고 전역 상한 τ로 자릅니다.
3) 최대 확률이 해당 클래스 임계값 이상인 픽셀에만 argmax 라벨을 붙입니다.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Union

import numpy as np

from src.core.rng import Rng
from src.core.segnet import IGNORE
from src.core.tensor import Tensor
from src.utils.errors import ConfigError, ContractError, ShapeError

logger = logging.getLogger(__name__)

RESERVOIR_CAP = 1_000_000
DIFFUSE_TOL = 1e-6


@dataclass
class ClassThresholds:
    """클래스별 유효 임계값 t_c (항상 t_c ≤ τ)"""

    thresholds: np.ndarray
    tau: float
    q: float
    counts: np.ndarray = field(default=None)

    def to_json(self) -> Dict[str, float]:
        out: Dict[str, float] = {str(c): float(t) for c, t in enumerate(self.thresholds)}
        out["tau"] = float(self.tau)
        out["q"] = float(self.q)
        return out

    @classmethod
    def from_json(cls, payload: Dict[str, float]) -> "ClassThresholds":
        classes = sorted(int(k) for k in payload if k not in ("tau", "q"))
        thresholds = np.array([payload[str(c)] for c in classes], dtype=np.float64)
        return cls(thresholds, float(payload["tau"]), float(payload["q"]))


@dataclass
class PseudoLabelMap:
    """픽셀별 클래스 또는 IGNORE(255) 라벨 [N, H, W]"""

    labels: np.ndarray

    @property
    def coverage(self) -> float:
        if self.labels.size == 0:
            return 0.0
        return float(np.count_nonzero(self.labels != IGNORE)) / self.labels.size

    def class_coverage(self, num_classes: int) -> np.ndarray:
        counts = np.bincount(self.labels[self.labels != IGNORE].ravel(), minlength=num_classes)[:num_classes]
        return counts / max(1, self.labels.size)


def _validate_params(tau: float, q: float) -> None:
    if not 0.0 < tau <= 1.0:
        raise ConfigError(f"tau는 (0,1] 범위여야 합니다: {tau}")
    if not 0.0 < q <= 100.0:
        raise ConfigError(f"q는 (0,100] 범위여야 합니다: {q}")


def _as_array(probs) -> np.ndarray:
    arr = probs.data if isinstance(probs, Tensor) else np.asarray(probs)
    if arr.ndim != 4:
        raise ShapeError(f"확률 맵은 [N,C,H,W]여야 합니다: {arr.shape}")
    return arr


def percentile_index(m: int, q: float) -> int:
    """내림차순 정렬된 m개 값에서 상위 q%가 통과하는 경계 인덱스 ceil(m·q/100) − 1."""
    return max(0, math.ceil(Fraction(m) * Fraction(str(q)) / 100) - 1)


class ThresholdAccumulator:
    """클래스별 저장소(reservoir)에 최대 확률 값을 스트리밍으로 모읍니다.

    저장소가 cap을 넘으면 균등 저장소 표집(Algorithm R)으로 대체합니다.
    """

    def __init__(self, num_classes: int, cap: int = RESERVOIR_CAP, rng: Optional[Rng] = None):
        self.num_classes = num_classes
        self.cap = cap
        self.rng = rng or Rng(0, 0)
        self.reservoirs: List[np.ndarray] = [np.zeros(0, np.float64) for _ in range(num_classes)]
        self.seen = np.zeros(num_classes, dtype=np.int64)

    def add(self, probs) -> None:
        arr = _as_array(probs)
        if arr.shape[1] != self.num_classes:
            raise ShapeError(f"클래스 수가 다릅니다: {arr.shape[1]} != {self.num_classes}")
        pred = arr.argmax(axis=1)
        conf = arr.max(axis=1)
        for c in range(self.num_classes):
            values = conf[pred == c].astype(np.float64)
            if values.size:
                self._push(c, values)

    def _push(self, c: int, values: np.ndarray) -> None:
        res = self.reservoirs[c]
        room = self.cap - res.size
        if room > 0:
            head = values[:room]
            res = np.concatenate([res, head])
            self.seen[c] += head.size
            values = values[room:]
        if values.size:
            totals = self.seen[c] + np.arange(1, values.size + 1)
            draws = np.floor(self.rng.random(values.size) * totals).astype(np.int64)
            keep = draws < self.cap
            res[draws[keep]] = values[keep]
            self.seen[c] += values.size
            logger.debug("[MPT] 클래스 %d 저장소가 가득 차 표집으로 대체합니다 (seen=%d)", c, self.seen[c])
        self.reservoirs[c] = res

    def finalize(self, tau: float, q: float) -> ClassThresholds:
        """클래스별 t_c = min(τ, 상위 q% 경계값). 픽셀이 없는 클래스는 τ."""
        _validate_params(tau, q)
        if not self.seen.any():
            raise ContractError("임계값을 추정할 픽셀이 없습니다.")
        thresholds = np.full(self.num_classes, float(tau), dtype=np.float64)
        for c, res in enumerate(self.reservoirs):
            if res.size == 0:
                continue
            ordered = np.sort(res)[::-1]
            thresholds[c] = min(float(tau), float(ordered[percentile_index(ordered.size, q)]))
        return ClassThresholds(thresholds, float(tau), float(q), counts=self.seen.copy())


def mpt_thresholds(
    probs: Union[Tensor, np.ndarray, Iterable[np.ndarray]],
    tau: float = 0.9,
    q: float = 50.0,
    cap: int = RESERVOIR_CAP,
) -> ClassThresholds:
    """대상 집합 전체의 softmax 맵에서 MPT 클래스 임계값을 추정합니다.

    Args:
        probs: [N,C,H,W] 확률 맵 하나 또는 그런 배치들의 반복자
        tau: 전역 상한 τ ∈ (0,1]
        q: 백분위 파라미터 ∈ (0,100]
        cap: 클래스별 저장소 상한

    Raises:
        ContractError: 입력 집합이 비었을 때
    """
    _validate_params(tau, q)
    batches = [probs] if isinstance(probs, (Tensor, np.ndarray)) else probs
    acc: Optional[ThresholdAccumulator] = None
    for batch in batches:
        arr = _as_array(batch)
        if acc is None:
            acc = ThresholdAccumulator(arr.shape[1], cap=cap)
        acc.add(arr)
    if acc is None:
        raise ContractError("임계값을 추정할 확률 맵이 없습니다.")
    return acc.finalize(tau, q)


def assign_pseudo_labels(probs, th: ClassThresholds) -> PseudoLabelMap:
    """최대 확률 ≥ t_argmax인 픽셀에 argmax 라벨을, 나머지에 IGNORE를 붙입니다.

    지배 클래스가 없는 완전히 균등한 예측(최대 확률 ≤ 1/C)은 할당하지 않습니다.
    argmax 동률은 가장 낮은 클래스 번호로 정합니다.
    """
    arr = _as_array(probs)
    c = arr.shape[1]
    if th.thresholds.size != c:
        raise ShapeError(f"임계값 수({th.thresholds.size})가 클래스 수({c})와 다릅니다.")
    pred = arr.argmax(axis=1)
    conf = arr.max(axis=1).astype(np.float64)
    dominant = conf * c > 1.0 + DIFFUSE_TOL
    passed = dominant & (conf >= th.thresholds[pred])
    labels = np.where(passed, pred, IGNORE).astype(np.uint8)
    return PseudoLabelMap(labels)
