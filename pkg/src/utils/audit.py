"""
파일 접근 감사 로그

데이터 뷰가 여는 모든 파일을 (경로, 역할, 종류)로 기록합니다.
적응 단계가 소스 데이터를 한 번도 열지 않았음을 사후에 확인하는 데 씁니다.
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Union


@dataclass(frozen=True)
class AuditEntry:
    path: str
    role: str
    kind: str


class AuditLog:
    """스레드 안전한 파일 접근 기록"""

    def __init__(self):
        self._entries: List[AuditEntry] = []
        self._lock = threading.Lock()

    def record(self, path: Union[str, Path], role: str, kind: str = "read") -> None:
        with self._lock:
            self._entries.append(AuditEntry(str(path), role, kind))

    @property
    def entries(self) -> List[AuditEntry]:
        with self._lock:
            return list(self._entries)

    def paths_for_role(self, role: str) -> List[str]:
        return [e.path for e in self.entries if e.role == role]

    def __len__(self) -> int:
        return len(self.entries)

    def write(self, path: Union[str, Path]) -> Path:
        """한 줄에 하나씩 JSON 레코드로 저장합니다."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for entry in self.entries:
                f.write(json.dumps(asdict(entry), ensure_ascii=False) + "\n")
        return path
