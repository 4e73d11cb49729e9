"""
이미지 단위 광도 변환 (color jitter, Gaussian blur, grayscale)

네트워크에 들어가기 전 [N,3,H,W] ∈ [0,1] 이미지에만 적용합니다. 라벨 맵은 건드리지 않습니다.
적용 순서는 밝기 → 대비 → 채도 → 색조 → 블러 → 흑백으로 고정입니다.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from src.core.rng import Rng
from src.utils.errors import ConfigError, ShapeError

LUMA = np.array([0.299, 0.587, 0.114])

# RGB ↔ YIQ 변환 (색조 회전용)
_RGB_TO_YIQ = np.array([
    [0.299, 0.587, 0.114],
    [0.596, -0.274, -0.322],
    [0.211, -0.523, 0.312],
])
_YIQ_TO_RGB = np.linalg.inv(_RGB_TO_YIQ)


@dataclass
class PhotometricConfig:
    """광도 변환 세기와 적용 확률"""

    enabled: bool = True
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.1
    jitter_prob: float = 0.8
    blur_prob: float = 0.5
    blur_sigma: Tuple[float, float] = (0.1, 2.0)
    grayscale_prob: float = 0.2

    def __post_init__(self):
        self.blur_sigma = tuple(float(s) for s in self.blur_sigma)
        self.validate()

    def validate(self) -> None:
        for name in ("brightness", "contrast", "saturation", "hue"):
            if getattr(self, name) < 0:
                raise ConfigError(f"photometric.{name}는 0 이상이어야 합니다: {getattr(self, name)}")
        if self.hue > 0.5:
            raise ConfigError(f"photometric.hue는 0.5 이하여야 합니다: {self.hue}")
        for name in ("jitter_prob", "blur_prob", "grayscale_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"photometric.{name}는 [0,1] 범위여야 합니다: {getattr(self, name)}")
        low, high = self.blur_sigma
        if not 0 < low <= high:
            raise ConfigError(f"photometric.blur_sigma 범위가 올바르지 않습니다: {self.blur_sigma}")


def _check_rgb(img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"[3,H,W] RGB 이미지가 필요합니다: {img.shape}")


def _gray(img: np.ndarray) -> np.ndarray:
    return np.tensordot(LUMA, img, axes=([0], [0]))


def adjust_brightness(img: np.ndarray, factor: float) -> np.ndarray:
    return np.clip(img * factor, 0.0, 1.0)


def adjust_contrast(img: np.ndarray, factor: float) -> np.ndarray:
    mean = _gray(img).mean()
    return np.clip(mean + factor * (img - mean), 0.0, 1.0)


def adjust_saturation(img: np.ndarray, factor: float) -> np.ndarray:
    gray = _gray(img)[None]
    return np.clip(gray + factor * (img - gray), 0.0, 1.0)


def adjust_hue(img: np.ndarray, shift: float) -> np.ndarray:
    """YIQ 평면에서 색도 벡터를 shift 바퀴만큼 회전합니다 (shift ∈ [-0.5, 0.5])."""
    theta = 2 * math.pi * shift
    rot = np.array([
        [1.0, 0.0, 0.0],
        [0.0, math.cos(theta), -math.sin(theta)],
        [0.0, math.sin(theta), math.cos(theta)],
    ])
    matrix = _YIQ_TO_RGB @ rot @ _RGB_TO_YIQ
    return np.clip(np.tensordot(matrix, img, axes=([1], [0])), 0.0, 1.0)


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """채널별 가우시안 블러. 커널 반경 ceil(3σ), 경계는 반사(reflect) 처리합니다."""
    radius = int(math.ceil(3 * sigma))
    out = np.empty_like(img)
    for c in range(img.shape[0]):
        out[c] = ndimage.gaussian_filter(img[c], sigma=sigma, mode="reflect", radius=radius)
    return out


def to_grayscale(img: np.ndarray) -> np.ndarray:
    gray = _gray(img)
    return np.broadcast_to(gray, img.shape).copy()


def photometric_single(img: np.ndarray, cfg: PhotometricConfig, rng: Rng) -> np.ndarray:
    """[3,H,W] 이미지 한 장에 광도 변환을 적용합니다."""
    _check_rgb(img)
    out = img.astype(np.float64)
    if cfg.enabled and rng.bernoulli(cfg.jitter_prob):
        if cfg.brightness > 0:
            out = adjust_brightness(out, rng.uniform(max(0.0, 1 - cfg.brightness), 1 + cfg.brightness))
        if cfg.contrast > 0:
            out = adjust_contrast(out, rng.uniform(max(0.0, 1 - cfg.contrast), 1 + cfg.contrast))
        if cfg.saturation > 0:
            out = adjust_saturation(out, rng.uniform(max(0.0, 1 - cfg.saturation), 1 + cfg.saturation))
        if cfg.hue > 0:
            out = adjust_hue(out, rng.uniform(-cfg.hue, cfg.hue))
    if cfg.enabled and rng.bernoulli(cfg.blur_prob):
        out = gaussian_blur(out, rng.uniform(*cfg.blur_sigma))
    if cfg.enabled and rng.bernoulli(cfg.grayscale_prob):
        out = to_grayscale(out)
    return np.clip(out, 0.0, 1.0).astype(img.dtype)


def photometric(img: np.ndarray, cfg: PhotometricConfig, rng: Rng) -> np.ndarray:
    """[N,3,H,W] 배치에 이미지별 독립 스트림으로 광도 변환을 적용합니다.

    Raises:
        ShapeError: 채널 수가 3이 아닐 때
    """
    img = np.asarray(img)
    if img.ndim != 4 or img.shape[1] != 3:
        raise ShapeError(f"[N,3,H,W] 이미지 배치가 필요합니다: {img.shape}")
    return np.stack([photometric_single(img[i], cfg, rng.derive("photometric", i)) for i in range(img.shape[0])])
