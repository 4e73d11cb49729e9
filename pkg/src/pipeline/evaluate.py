"""
mIoU 평가와 지표 보고서 입출력

출력 파일:
    metrics.csv   `split,class,iou` (split = 도메인 이름, test 분할)
    metrics.json  split별 mIoU와 C / C+O 평균, 설정 해시 (실행 시간 없음, 바이트 결정적)
    run_info.json 실행 시간, 설정 해시, seed
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.core.metrics import SegMetric
from src.core.segnet import SegNet, checkpoint_hash, load_checkpoint
from src.core.tensor import no_grad
from src.data.dataset import TARGET_ROLES, DomainView, Manifest
from src.utils.audit import AuditLog
from src.utils.errors import ConfigError, ContractError
from src.utils.tracing import traced

logger = logging.getLogger(__name__)

METRICS_CSV = "metrics.csv"
METRICS_JSON = "metrics.json"
RUN_INFO = "run_info.json"


def _nan_to_none(value: float) -> Optional[float]:
    return None if value is None or math.isnan(value) else float(value)


def _mean(values: Sequence[float]) -> float:
    values = [v for v in values if not math.isnan(v)]
    return float(np.mean(values)) if values else float("nan")


@dataclass
class SplitResult:
    name: str
    role: str
    iou: np.ndarray
    miou: float


@dataclass
class MetricsReport:
    """split별 IoU와 도메인 평균

    C는 compound 도메인 mIoU의 평균, C+O는 compound와 open 도메인 전체의 평균입니다.
    """

    classes: List[str]
    splits: Dict[str, SplitResult] = field(default_factory=dict)
    config_hash: str = ""
    seed: int = 0
    runtime: float = 0.0

    def miou(self, name: str) -> float:
        return self.splits[name].miou

    def _role_mious(self, roles: Sequence[str]) -> List[float]:
        return [r.miou for r in self.splits.values() if r.role in roles]

    @property
    def compound_avg(self) -> float:
        return _mean(self._role_mious(("compound",)))

    @property
    def compound_open_avg(self) -> float:
        return _mean(self._role_mious(TARGET_ROLES))

    @property
    def open_avg(self) -> float:
        return _mean(self._role_mious(("open",)))

    @property
    def source_avg(self) -> float:
        return _mean(self._role_mious(("source",)))

    def summary(self) -> Dict:
        """바이트 결정적인 요약 (실행 시간 제외)"""
        return {
            "classes": list(self.classes),
            "config_hash": self.config_hash,
            "splits": {
                name: {
                    "role": r.role,
                    "miou": _nan_to_none(r.miou),
                    "iou": {cls: _nan_to_none(v) for cls, v in zip(self.classes, r.iou)},
                }
                for name, r in self.splits.items()
            },
            "source": _nan_to_none(self.source_avg),
            "C": _nan_to_none(self.compound_avg),
            "C+O": _nan_to_none(self.compound_open_avg),
            "open": _nan_to_none(self.open_avg),
        }

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"split": name, "class": cls, "iou": float(v)}
            for name, r in self.splits.items()
            for cls, v in zip(self.classes, r.iou)
        ]
        return pd.DataFrame(rows, columns=["split", "class", "iou"])

    def write(self, out_dir: Union[str, Path]) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(out / METRICS_CSV, index=False, float_format="%.10f", na_rep="nan", lineterminator="\n")
        (out / METRICS_JSON).write_text(json.dumps(self.summary(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
        run_info = {"runtime_seconds": round(self.runtime, 3), "config_hash": self.config_hash, "seed": self.seed}
        (out / RUN_INFO).write_text(json.dumps(run_info, indent=1) + "\n", encoding="utf-8")
        return out

    @classmethod
    def read(cls, out_dir: Union[str, Path]) -> "MetricsReport":
        out = Path(out_dir)
        summary = json.loads((out / METRICS_JSON).read_text(encoding="utf-8"))
        classes = summary["classes"]
        splits = {}
        for name, entry in summary["splits"].items():
            iou = np.array([np.nan if entry["iou"][c] is None else entry["iou"][c] for c in classes])
            miou = float("nan") if entry["miou"] is None else entry["miou"]
            splits[name] = SplitResult(name, entry["role"], iou, miou)
        return cls(classes, splits, summary.get("config_hash", ""))

    def log(self, tag: str) -> None:
        for name, r in self.splits.items():
            logger.info("[%s] %-10s (%s) mIoU=%.4f", tag, name, r.role, r.miou)
        logger.info("[%s] C=%.4f C+O=%.4f", tag, self.compound_avg, self.compound_open_avg)


def predict(model: SegNet, images: np.ndarray) -> np.ndarray:
    """평가 모드 argmax 예측 [N,H,W]"""
    with no_grad():
        logits = model.forward(images, mode="eval")
    return logits.data.argmax(axis=1)


def evaluate_view(model: SegNet, view: DomainView, name: str, batch: int = 16) -> SplitResult:
    """
    한 split 전체에 혼동 행렬을 누적해 IoU를 계산합니다.

    Raises:
        ContractError: 라벨이 없는 split
    """
    if not view.labeled:
        raise ContractError(f"평가할 라벨이 없는 split입니다: {name}")
    metric = SegMetric(model.cfg.num_classes)
    for _, images, labels in view.iter_batches(batch):
        metric.add_batch(predict(model, images), labels)
    iou, miou = metric.iou()
    return SplitResult(name, view.samples[0].role, iou, miou)


def evaluate_model(
    model: SegNet,
    manifest: Manifest,
    domains: Optional[Sequence[str]] = None,
    batch: int = 16,
    audit: Optional[AuditLog] = None,
    source_free: bool = False,
) -> MetricsReport:
    """도메인별 test 분할을 평가합니다.

    Args:
        model: 평가할 모델 (변경되지 않음)
        manifest: 데이터셋
        domains: 평가할 도메인 이름 (None이면 허용된 모든 도메인)
        batch: 평가 배치 크기
        audit: 파일 접근 기록
        source_free: True면 source 역할 도메인을 열지 않습니다
    """
    roles = TARGET_ROLES if source_free else ("source",) + TARGET_ROLES
    available = [d for role in roles for d in manifest.domains(role)]
    if domains:
        missing = [d for d in domains if d not in available]
        if missing:
            raise ConfigError(f"평가할 수 없는 split입니다: {missing} (가능: {available})")
        selected = [d for d in available if d in domains]
    else:
        selected = available
    report = MetricsReport(list(manifest.classes))
    for domain in selected:
        view = DomainView(manifest, roles, split="test", domains=[domain], audit=audit, source_free=source_free)
        report.splits[domain] = evaluate_view(model, view, domain, batch)
    return report


@traced("evaluate")
def evaluate(
    checkpoint: Union[str, Path],
    data_root: Union[str, Path],
    splits: Optional[Sequence[str]] = None,
    batch: int = 16,
    out_dir: Optional[Union[str, Path]] = None,
) -> MetricsReport:
    """체크포인트를 읽어 지정 split을 평가합니다. 체크포인트는 바뀌지 않습니다."""
    start = time.perf_counter()
    before = checkpoint_hash(checkpoint)
    model = load_checkpoint(checkpoint)
    manifest = Manifest.load(data_root)
    if manifest.num_classes != model.cfg.num_classes:
        raise ConfigError(f"체크포인트 클래스 수({model.cfg.num_classes})와 데이터셋({manifest.num_classes})이 다릅니다.")
    report = evaluate_model(model, manifest, splits, batch)
    report.config_hash = before
    report.runtime = time.perf_counter() - start
    if checkpoint_hash(checkpoint) != before:
        raise ContractError(f"평가 중 체크포인트가 변경되었습니다: {checkpoint}")
    report.log("평가")
    if out_dir is not None:
        report.write(out_dir)
    return report
