"""
절차적 다중 도메인 합성 분할 데이터 생성기

장면 기하(클래스 영역 배치)는 모든 도메인이 같은 분포에서 뽑고, 도메인끼리는
스타일 변환(채널별 색 affine, 가산 가우시안 노이즈, 블러)만 다릅니다.

기본 구성: 소스 1개(synthetic), compound 3개(rainy/snowy/cloudy), open 1개(overcast)
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import yaml
from scipy import ndimage

from src.core.rng import Rng
from src.core.sfot import read_tensor, write_tensor
from src.data.dataset import ROLES, Manifest, Sample
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CLASSES = ("background", "road-band", "sky-band", "blob-A", "blob-B", "stripe")

DEFAULT_COLORS = (
    (0.45, 0.40, 0.35),
    (0.30, 0.30, 0.32),
    (0.55, 0.75, 0.95),
    (0.85, 0.25, 0.20),
    (0.25, 0.70, 0.30),
    (0.95, 0.85, 0.20),
)


@dataclass
class DomainStyle:
    """도메인 스타일: out = clip(blur(gain·img + offset) + noise)"""

    name: str
    role: str
    gain: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    offset: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    noise: float = 0.0
    blur: float = 0.0

    def __post_init__(self):
        self.gain = tuple(float(v) for v in self.gain)
        self.offset = tuple(float(v) for v in self.offset)
        if self.role not in ROLES:
            raise ConfigError(f"도메인 {self.name}의 역할이 올바르지 않습니다: {self.role}")
        if len(self.gain) != 3 or len(self.offset) != 3:
            raise ConfigError(f"도메인 {self.name}의 gain/offset은 3채널이어야 합니다.")
        if self.noise < 0 or self.blur < 0:
            raise ConfigError(f"도메인 {self.name}의 noise/blur는 0 이상이어야 합니다.")


def default_domains() -> List[DomainStyle]:
    return [
        DomainStyle("synthetic", "source", noise=0.02),
        DomainStyle("rainy", "compound", gain=(0.50, 0.55, 0.70), offset=(0.02, 0.05, 0.20), noise=0.06, blur=1.0),
        DomainStyle("snowy", "compound", gain=(0.40, 0.40, 0.40), offset=(0.55, 0.55, 0.57), noise=0.04, blur=0.5),
        DomainStyle("cloudy", "compound", gain=(0.50, 0.50, 0.52), offset=(0.05, 0.05, 0.06), noise=0.03),
        DomainStyle("overcast", "open", gain=(0.90, 0.70, 0.50), offset=(0.12, 0.06, 0.00), noise=0.03, blur=0.7),
    ]


@dataclass
class SceneSpec:
    """장면 기하와 도메인 스타일 정의"""

    size: int = 64
    classes: Tuple[str, ...] = DEFAULT_CLASSES
    colors: Tuple[Tuple[float, float, float], ...] = DEFAULT_COLORS
    texture: float = 0.04
    blobs: Tuple[int, int] = (1, 3)
    domains: List[DomainStyle] = field(default_factory=default_domains)

    def __post_init__(self):
        self.classes = tuple(self.classes)
        self.colors = tuple(tuple(float(v) for v in c) for c in self.colors)
        self.blobs = tuple(int(v) for v in self.blobs)
        self.domains = [d if isinstance(d, DomainStyle) else DomainStyle(**d) for d in self.domains]
        self.validate()

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def validate(self) -> None:
        if len(self.classes) != len(DEFAULT_CLASSES):
            raise ConfigError(f"장면 생성기는 {len(DEFAULT_CLASSES)}개 클래스를 사용합니다: {len(self.classes)}")
        if len(self.colors) != len(self.classes):
            raise ConfigError("클래스 색상 수가 클래스 수와 다릅니다.")
        if self.size < 8:
            raise ConfigError(f"이미지 크기가 너무 작습니다: {self.size}")
        if not 0 <= self.blobs[0] <= self.blobs[1]:
            raise ConfigError(f"blobs 범위가 올바르지 않습니다: {self.blobs}")
        names = [d.name for d in self.domains]
        if len(set(names)) != len(names):
            raise ConfigError(f"도메인 이름이 중복됩니다: {names}")
        counts = {role: sum(d.role == role for d in self.domains) for role in ROLES}
        if counts["source"] < 1 or counts["open"] < 1:
            raise ConfigError(f"source와 open 도메인이 각각 1개 이상 필요합니다: {counts}")
        if counts["compound"] < 2:
            raise ConfigError(f"compound 하위 도메인은 2개 이상이어야 합니다: {counts['compound']}")

    @classmethod
    def from_dict(cls, payload: Optional[Dict]) -> "SceneSpec":
        payload = dict(payload or {})
        unknown = set(payload) - {"size", "classes", "colors", "texture", "blobs", "domains"}
        if unknown:
            raise ConfigError(f"알 수 없는 장면 설정 키: {sorted(unknown)}")
        return cls(**payload)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SceneSpec":
        """YAML 장면 정의 파일을 읽습니다."""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"장면 정의 파일을 찾을 수 없습니다: {path}")
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(yaml.safe_load(f))


def render_scene(spec: SceneSpec, rng: Rng) -> Tuple[np.ndarray, np.ndarray]:
    """도메인 스타일 적용 전의 장면 (이미지 [3,H,W] f32, 라벨 [H,W] u8).

    뒤에 그린 영역이 앞 영역을 덮으므로 모든 픽셀은 정확히 하나의 클래스에 속합니다.
    """
    s = spec.size
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    label = np.zeros((s, s), dtype=np.uint8)

    sky = int(rng.integers(s // 8, s // 3))
    label[:sky] = 2

    horizon = int(rng.integers(s // 2, 3 * s // 4))
    spread = rng.uniform(0.1, 0.5)
    center = rng.uniform(0.35, 0.65) * s
    half = (yy - horizon) * spread + s * 0.05
    label[(yy >= horizon) & (np.abs(xx - center) <= half)] = 1

    for k in range(int(rng.integers(spec.blobs[0], spec.blobs[1] + 1))):
        cy, cx = rng.uniform(0.2, 0.8) * s, rng.uniform(0.1, 0.9) * s
        ry, rx = rng.uniform(0.06, 0.18) * s, rng.uniform(0.06, 0.18) * s
        if k % 2 == 0:
            label[((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0] = 3
        else:
            label[(np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)] = 4

    x0 = int(rng.integers(0, s - 2))
    width = int(rng.integers(2, max(3, s // 12)))
    top = int(rng.integers(sky, max(sky + 1, horizon)))
    label[top:, x0:x0 + width] = 5

    colors = np.asarray(spec.colors, dtype=np.float64)
    image = colors[label].transpose(2, 0, 1)
    if spec.texture > 0:
        image = image + rng.normal(0.0, spec.texture, size=image.shape)
    return np.clip(image, 0.0, 1.0).astype(np.float32), label


def apply_domain_style(image: np.ndarray, style: DomainStyle, rng: Rng) -> np.ndarray:
    """스타일 변환. 라벨은 바뀌지 않습니다."""
    gain = np.asarray(style.gain)[:, None, None]
    offset = np.asarray(style.offset)[:, None, None]
    out = gain * image.astype(np.float64) + offset
    if style.blur > 0:
        out = np.stack([ndimage.gaussian_filter(ch, sigma=style.blur, mode="reflect") for ch in out])
    if style.noise > 0:
        out = out + rng.normal(0.0, style.noise, size=out.shape)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def generate_sample(spec: SceneSpec, style: DomainStyle, scene_rng: Rng) -> Tuple[np.ndarray, np.ndarray]:
    """장면 하나를 렌더링하고 도메인 스타일을 입힙니다.

    노이즈 스트림은 장면 스트림에서만 파생하므로 스타일이 같은 두 도메인은
    같은 장면 seed에서 픽셀 단위로 같은 이미지를 만듭니다.
    """
    image, label = render_scene(spec, scene_rng.derive("geometry"))
    return apply_domain_style(image, style, scene_rng.derive("style-noise")), label


def _sample_paths(domain: str, split: str, index: int) -> Tuple[str, str]:
    stem = f"{domain}/{split}/{index:05d}"
    return f"{stem}.img.sfot", f"{stem}.lbl.sfot"


def generate_domains(
    spec: SceneSpec,
    out: Union[str, Path],
    seed: int,
    train_per_domain: int = 200,
    test_per_domain: int = 50,
    workers: int = 4,
) -> Manifest:
    """모든 도메인의 train/test 샘플과 manifest.json을 씁니다.

    compound/open 도메인의 train 샘플은 라벨 없이 기록됩니다 (라벨 파일도 쓰지 않음).

    Args:
        spec: 장면/도메인 정의
        out: 출력 디렉터리
        seed: 전역 seed
        train_per_domain: 도메인별 train 샘플 수
        test_per_domain: 도메인별 test 샘플 수
        workers: 이미지 생성 스레드 수

    Returns:
        작성된 Manifest
    """
    if train_per_domain < 1 or test_per_domain < 1:
        raise ConfigError(f"도메인별 샘플 수는 1 이상이어야 합니다: train={train_per_domain}, test={test_per_domain}")
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    base = Rng(seed)
    start = time.perf_counter()

    jobs = []
    for style in spec.domains:
        for split, count in (("train", train_per_domain), ("test", test_per_domain)):
            for i in range(count):
                jobs.append((style, split, i))

    def work(job) -> Sample:
        style, split, i = job
        image, label = generate_sample(spec, style, base.derive("scene", style.name, split, i))
        image_rel, label_rel = _sample_paths(style.name, split, i)
        write_tensor(root / image_rel, image)
        keep_label = style.role == "source" or split == "test"
        if keep_label:
            write_tensor(root / label_rel, label)
        return Sample(image_rel, label_rel if keep_label else None, style.name, style.role, split)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        samples = list(pool.map(work, jobs))

    manifest = Manifest(root, list(spec.classes), samples)
    manifest.write()
    logger.info(
        "[데이터 생성] 도메인 %d개, 샘플 %d개 → %s (%.1fs)",
        len(spec.domains), len(samples), root, time.perf_counter() - start,
    )
    return manifest


def domain_mean_colors(manifest: Manifest, split: str = "test") -> Tuple[np.ndarray, List[str]]:
    """샘플별 채널 평균 색 [N,3]과 도메인 태그 (도메인 구분성 점검용)."""
    feats, tags = [], []
    for s in manifest.samples:
        if s.split != split:
            continue
        feats.append(read_tensor(manifest.root / s.image).reshape(3, -1).mean(axis=1))
        tags.append(s.domain)
    return np.asarray(feats), tags
