"""
스타일 임베딩 k-means 군집화 (잠재 도메인 복원)
"""

from __future__ import annotations

import logging
import warnings
from typing import Optional, Sequence

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import adjusted_rand_score

from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

MAX_ITER = 100
TOL = 1e-6


def cluster_latent_domains(
    embeddings: Sequence[np.ndarray],
    k: int,
    seed: int,
    max_iter: int = MAX_ITER,
    tol: float = TOL,
) -> np.ndarray:
    """스타일 임베딩을 k개 잠재 도메인으로 나눕니다 (k-means++ 초기화, Lloyd 반복).

    Args:
        embeddings: 샘플별 임베딩 [N, D]
        k: 군집 수 (k=1이면 전부 0)
        seed: 초기화 seed
        max_iter: 최대 반복 수
        tol: 중심 이동량 수렴 기준

    Returns:
        샘플별 군집 id [N]

    Raises:
        ConfigError: k < 1 또는 샘플 수 < k
    """
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2:
        raise ConfigError(f"임베딩은 [N, D] 행렬이어야 합니다: {X.shape}")
    n = X.shape[0]
    if k < 1:
        raise ConfigError(f"군집 수는 1 이상이어야 합니다: {k}")
    if n < k:
        raise ConfigError(f"샘플 수({n})가 군집 수({k})보다 적습니다.")
    if k == 1:
        return np.zeros(n, dtype=np.int64)

    km = KMeans(n_clusters=k, init="k-means++", n_init=1, max_iter=max_iter, tol=tol, random_state=seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        km.fit(X)
    for w in caught:
        logger.warning("[군집화] %s", w.message)
    logger.debug("[군집화] %d회 반복 후 종료 (inertia=%.4f)", km.n_iter_, km.inertia_)
    return km.labels_.astype(np.int64)


def oracle_agreement(assignments: np.ndarray, tags: Sequence, log: bool = True) -> float:
    """군집 결과와 실제 도메인 태그의 adjusted Rand index."""
    score = float(adjusted_rand_score(list(tags), np.asarray(assignments)))
    if log:
        logger.info("[군집화] oracle 태그 대비 ARI=%.4f", score)
    return score


def cluster_sizes(assignments: np.ndarray, k: Optional[int] = None) -> np.ndarray:
    return np.bincount(np.asarray(assignments), minlength=k or 0)
