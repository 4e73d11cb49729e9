"""
배치 인덱스 샘플러

- UniformSampler: 전체 집합을 에폭마다 섞어 순환합니다 (random 모드).
- BalancedSampler: 배치마다 도메인 id별 최소 1개를 보장합니다 (oracle / clustering 모드).
"""

from __future__ import annotations

from typing import Dict, Iterator, List

import numpy as np

from src.core.rng import Rng
from src.utils.errors import ConfigError


class _CyclicQueue:
    """에폭마다 seed 고정으로 다시 섞어 끝없이 순환하는 인덱스 큐"""

    def __init__(self, items: np.ndarray, rng: Rng):
        if len(items) == 0:
            raise ConfigError("빈 집합으로 샘플러를 만들 수 없습니다.")
        self.items = np.asarray(items, dtype=np.int64)
        self.rng = rng
        self.epoch = 0
        self.order = self._shuffle()
        self.pos = 0

    def _shuffle(self) -> np.ndarray:
        return self.items[self.rng.derive("epoch", self.epoch).permutation(len(self.items))]

    def pop(self) -> int:
        if self.pos == len(self.order):
            self.epoch += 1
            self.order = self._shuffle()
            self.pos = 0
        value = int(self.order[self.pos])
        self.pos += 1
        return value


class UniformSampler:
    def __init__(self, size: int, batch_size: int, rng: Rng):
        if batch_size < 1:
            raise ConfigError(f"배치 크기는 1 이상이어야 합니다: {batch_size}")
        self.batch_size = batch_size
        self.queue = _CyclicQueue(np.arange(size), rng.derive("uniform"))

    def next_batch(self) -> np.ndarray:
        return np.array([self.queue.pop() for _ in range(self.batch_size)], dtype=np.int64)

    def __iter__(self) -> Iterator[np.ndarray]:
        while True:
            yield self.next_batch()


class BalancedSampler:
    """배치마다 각 도메인에서 1개씩 뽑고 나머지 칸은 도메인 크기에 비례해 채웁니다."""

    def __init__(self, domain_ids: np.ndarray, batch_size: int, rng: Rng):
        domain_ids = np.asarray(domain_ids, dtype=np.int64)
        self.domains: List[int] = sorted(int(d) for d in np.unique(domain_ids))
        if batch_size < len(self.domains):
            raise ConfigError(f"배치 크기({batch_size})가 도메인 수({len(self.domains)})보다 작습니다.")
        self.batch_size = batch_size
        self.rng = rng.derive("balanced")
        self.queues: Dict[int, _CyclicQueue] = {
            d: _CyclicQueue(np.flatnonzero(domain_ids == d), self.rng.derive("domain", d)) for d in self.domains
        }
        sizes = np.array([len(self.queues[d].items) for d in self.domains], dtype=np.float64)
        self.weights = sizes / sizes.sum()
        self.step = 0

    def next_batch(self) -> np.ndarray:
        batch = [self.queues[d].pop() for d in self.domains]
        extra = self.batch_size - len(self.domains)
        if extra:
            picks = self.rng.derive("fill", self.step).choice(len(self.domains), size=extra, p=self.weights)
            batch.extend(self.queues[self.domains[int(j)]].pop() for j in picks)
        self.step += 1
        return np.array(batch, dtype=np.int64)

    def __iter__(self) -> Iterator[np.ndarray]:
        while True:
            yield self.next_batch()


def balanced_sampler(domain_ids: np.ndarray, batch_size: int, rng: Rng) -> BalancedSampler:
    return BalancedSampler(domain_ids, batch_size, rng)
