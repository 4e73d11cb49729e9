"""
데이터셋 manifest 입출력과 역할별 읽기 뷰

manifest.json 구조:
    {"version": 1, "classes": [...],
     "samples": [{"image", "label" | null, "domain", "role", "split"}, ...]}

경로는 manifest가 있는 디렉터리 기준 상대 경로입니다.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.sfot import read_tensor
from src.utils.audit import AuditLog
from src.utils.errors import ContractError, DataError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
ROLES = ("source", "compound", "open")
SPLITS = ("train", "test")
TARGET_ROLES = ("compound", "open")


@dataclass(frozen=True)
class Sample:
    image: str
    label: Optional[str]
    domain: str
    role: str
    split: str


@dataclass
class Manifest:
    """데이터셋 전체 목록"""

    root: Path
    classes: List[str]
    samples: List[Sample]
    version: int = MANIFEST_VERSION

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def domains(self, role: Optional[str] = None) -> List[str]:
        """등장 순서를 유지한 도메인 이름 목록"""
        seen: Dict[str, None] = {}
        for s in self.samples:
            if role is None or s.role == role:
                seen.setdefault(s.domain, None)
        return list(seen)

    def split_name(self, domain: str, split: str) -> str:
        return f"{domain}/{split}"

    def to_json(self) -> Dict:
        return {
            "version": self.version,
            "classes": list(self.classes),
            "samples": [asdict(s) for s in self.samples],
        }

    def write(self) -> Path:
        path = self.root / MANIFEST_NAME
        path.write_text(json.dumps(self.to_json(), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, root: Union[str, Path]) -> "Manifest":
        """manifest.json을 읽고 필드를 검증합니다.

        Raises:
            FileNotFoundError: manifest가 없을 때
            DataError: 형식이 잘못되었을 때
        """
        path = Path(root)
        if path.suffix != ".json":
            path = path / MANIFEST_NAME
        root = path.parent
        if not path.exists():
            raise FileNotFoundError(f"manifest를 찾을 수 없습니다: {path}")
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DataError(f"manifest JSON 파싱 오류: {path}: {e}") from e
        if payload.get("version") != MANIFEST_VERSION:
            raise DataError(f"지원하지 않는 manifest 버전입니다: {payload.get('version')}")
        samples = []
        for i, raw in enumerate(payload.get("samples", [])):
            try:
                sample = Sample(raw["image"], raw.get("label"), raw["domain"], raw["role"], raw.get("split", "train"))
            except KeyError as e:
                raise DataError(f"manifest 샘플 {i}에 필드 {e}가 없습니다.") from e
            if sample.role not in ROLES:
                raise DataError(f"알 수 없는 역할입니다: {sample.role} (샘플 {i})")
            if sample.split not in SPLITS:
                raise DataError(f"알 수 없는 split입니다: {sample.split} (샘플 {i})")
            if sample.role == "source" and sample.label is None:
                raise DataError(f"소스 샘플에는 라벨이 있어야 합니다: {sample.image}")
            samples.append(sample)
        return cls(root, list(payload.get("classes", [])), samples, payload["version"])

    def check_files(self) -> None:
        """참조된 파일이 모두 존재하고 이미지/라벨 크기가 맞는지 확인합니다."""
        for s in self.samples:
            img = read_tensor(self.root / s.image)
            if img.ndim != 3 or img.shape[0] != 3:
                raise DataError(f"이미지 모양이 [3,H,W]가 아닙니다: {s.image} {img.shape}")
            if s.label is not None:
                lbl = read_tensor(self.root / s.label)
                if lbl.shape != img.shape[1:]:
                    raise DataError(f"라벨 크기가 이미지와 다릅니다: {s.label} {lbl.shape} != {img.shape[1:]}")


class DomainView:
    """역할/분할로 걸러낸 읽기 전용 샘플 뷰

    모든 파일 읽기는 AuditLog에 기록됩니다. ``source_free=True``인 뷰는
    소스 역할 샘플을 담을 수 없습니다.
    """

    def __init__(
        self,
        manifest: Manifest,
        roles: Sequence[str],
        split: Optional[str] = None,
        domains: Optional[Sequence[str]] = None,
        audit: Optional[AuditLog] = None,
        source_free: bool = False,
    ):
        if source_free and "source" in roles:
            raise DataError("소스 없는(source-free) 뷰에는 source 역할을 요청할 수 없습니다.")
        self.manifest = manifest
        self.roles = tuple(roles)
        self.split = split
        self.audit = audit if audit is not None else AuditLog()
        self.source_free = source_free
        self.samples: List[Sample] = [
            s for s in manifest.samples
            if s.role in self.roles
            and (split is None or s.split == split)
            and (domains is None or s.domain in domains)
        ]

    @classmethod
    def for_adaptation(
        cls, manifest: Manifest, split: str, audit: Optional[AuditLog] = None, domains: Optional[Sequence[str]] = None
    ) -> "DomainView":
        return cls(manifest, TARGET_ROLES, split=split, domains=domains, audit=audit, source_free=True)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def labeled(self) -> bool:
        return bool(self.samples) and all(s.label is not None for s in self.samples)

    def image_paths(self) -> List[str]:
        return [s.image for s in self.samples]

    def oracle_domain_ids(self) -> np.ndarray:
        """도메인 태그를 정수 id로 공개합니다 (Oracle 샘플러와 평가 전용)."""
        names = sorted({s.domain for s in self.samples})
        logger.info("[Oracle] 도메인 태그를 사용합니다: %s", names)
        lookup = {name: i for i, name in enumerate(names)}
        return np.array([lookup[s.domain] for s in self.samples], dtype=np.int64)

    def _read(self, rel: str, role: str) -> np.ndarray:
        if self.source_free and role == "source":
            raise DataError(f"소스 없는 뷰에서 소스 파일을 열 수 없습니다: {rel}")
        path = self.manifest.root / rel
        self.audit.record(path, role)
        return read_tensor(path)

    def load_image(self, i: int) -> np.ndarray:
        s = self.samples[i]
        img = self._read(s.image, s.role)
        return img.astype(np.float32, copy=False)

    def load_label(self, i: int) -> np.ndarray:
        s = self.samples[i]
        if s.label is None:
            raise ContractError(f"라벨이 없는 샘플입니다: {s.image}")
        return self._read(s.label, s.role)

    def load_batch(self, indices: Iterable[int], with_labels: bool = True) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        indices = list(indices)
        images = np.stack([self.load_image(i) for i in indices])
        if not with_labels:
            return images, None
        return images, np.stack([self.load_label(i) for i in indices])

    def iter_batches(self, batch_size: int, with_labels: bool = True):
        """뷰 순서대로 (인덱스, 이미지, 라벨) 배치를 냅니다."""
        for start in range(0, len(self), batch_size):
            idx = list(range(start, min(start + batch_size, len(self))))
            images, labels = self.load_batch(idx, with_labels)
            yield idx, images, labels
