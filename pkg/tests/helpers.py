"""테스트 공용 도우미: 소형 실험 설정, 중앙 차분 그래디언트 검사"""

from typing import Callable, Sequence

import numpy as np

from config.config_loader import deep_merge, default_config
from src.core.tensor import Tensor, no_grad, tsum


def tiny_config_dict(data_root, **sections) -> dict:
    """빠르게 도는 실험 설정 딕셔너리 (config.yaml 기본값 위에 덮어씀)"""
    payload = deep_merge(
        default_config(),
        {
            "seed": 3,
            "data": {"root": str(data_root)},
            "model": {"widths": [4, 8]},
            "injection": {"sites": [1, 2], "patches": 4, "beta": 0.5},
            "stage1": {"iters": 4, "batch": 2, "log_every": 2},
            "stage2": {"iters": 3, "batch": 3, "log_every": 1, "tau": 0.9, "q": 50},
            "eval": {"splits": [], "batch": 8},
        },
    )
    return deep_merge(payload, sections)


def weighted_sum(t: Tensor, seed: int = 0) -> Tensor:
    """출력에 고정 난수 가중치를 곱해 합한 스칼라 (모든 출력 원소에 그래디언트가 흐르도록)."""
    weights = np.random.default_rng(seed).normal(size=t.shape).astype(t.dtype)
    return tsum(t * Tensor(weights, dtype=t.dtype))


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    n_coords: int = 10,
    h: float = 1e-3,
    seed: int = 0,
    floor: float = 1e-2,
) -> float:
    """
    해석적 그래디언트와 중앙 차분 그래디언트의 최대 상대 오차를 반환합니다.

    입력마다 무작위 좌표 n_coords개를 float64로 검사합니다.
    상대 오차 = |a − n| / max(|a|, |n|, floor)
    """
    tensors = [Tensor(np.array(x, dtype=np.float64), requires_grad=True) for x in inputs]
    fn(*tensors).backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        for _ in range(n_coords):
            idx = tuple(int(rng.integers(0, s)) for s in t.shape)
            orig = t.data[idx]
            with no_grad():
                t.data[idx] = orig + h
                plus = fn(*tensors).item()
                t.data[idx] = orig - h
                minus = fn(*tensors).item()
            t.data[idx] = orig
            numeric = (plus - minus) / (2 * h)
            a = float(analytic[idx])
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
    return worst
