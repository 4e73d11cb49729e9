"""
카운터 기반 난수 생성기

(seed, stream) 쌍이 같고 호출 순서가 같으면 플랫폼과 무관하게 같은 값 시퀀스를 냅니다.
Philox는 카운터 기반이므로 이미지/연산마다 derive()로 스트림을 쪼개도 상태를 공유하지 않습니다.
"""

from __future__ import annotations

import hashlib
from typing import Optional

import numpy as np

MASK64 = (1 << 64) - 1


class Rng:
    """numpy Philox 위에 얹은 결정적 난수 스트림"""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & MASK64
        self.stream = int(stream) & MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed | (self.stream << 64)))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"

    def derive(self, *labels) -> "Rng":
        """부모 상태를 소비하지 않고 라벨로부터 독립된 하위 스트림을 만듭니다.

        Args:
            labels: 하위 스트림을 구분하는 값들 (문자열/정수)

        Returns:
            같은 seed, 새 stream id를 가진 Rng
        """
        digest = hashlib.sha256(repr((self.stream, labels)).encode("utf-8")).digest()
        return Rng(self.seed, int.from_bytes(digest[:8], "little"))

    # --- 분포 ---
    def random(self, size=None):
        return self._gen.random(size)

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low: int, high: Optional[int] = None, size=None):
        return self._gen.integers(low, high, size)

    def beta(self, a: float, b: float, size=None):
        return self._gen.beta(a, b, size)

    def bernoulli(self, p: float) -> bool:
        """확률 p로 True. p=0이면 항상 False, p=1이면 항상 True입니다."""
        return bool(self._gen.random() < p)

    def choice(self, n: int, size=None, p=None, replace: bool = True):
        return self._gen.choice(n, size=size, p=p, replace=replace)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def derangement(self, n: int) -> np.ndarray:
        """고정점이 없는 균등 순열 (n < 2이면 항등 순열)."""
        if n < 2:
            return np.arange(n)
        while True:
            perm = self._gen.permutation(n)
            if not np.any(perm == np.arange(n)):
                return perm
