"""
소형 인코더-디코더 분할 네트워크, 손실 함수, SGD 최적화기, 체크포인트 입출력

인코더 블록 l(1부터)은 conv-bias-ReLU ×2 후 최대 풀링(2)이며, 스타일 주입 사이트 l은
블록 l의 마지막 풀링 직전입니다. 사이트 0은 네트워크 입력(이미지 수준)입니다.
디코더는 1×1 분류 헤드와 최근접 업샘플링입니다 (1×1 합성곱과 최근접 업샘플은 교환 가능하므로
저해상도에서 헤드를 먼저 적용합니다).
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from src.core.rng import Rng
from src.core.sfot import read_tensor, write_tensor
from src.core.style_aug import InjectionConfig, InjectionLayer
from src.core.tensor import Tensor, conv2d, masked_cross_entropy, maxpool2d, relu, upsample_nearest
from src.utils.errors import ConfigError, ContractError, DataError, ShapeError

logger = logging.getLogger(__name__)

IGNORE = 255
CHECKPOINT_MANIFEST = "manifest.txt"
CHECKPOINT_HEADER = "sfocda-checkpoint 1"


@dataclass
class SegNetConfig:
    """네트워크 구조 설정"""

    in_channels: int = 3
    num_classes: int = 6
    widths: Tuple[int, ...] = (16, 32, 64)

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if self.num_classes < 2:
            raise ConfigError(f"클래스 수는 2 이상이어야 합니다: {self.num_classes}")
        if not self.widths or any(w < 1 for w in self.widths):
            raise ConfigError(f"블록 너비 목록이 올바르지 않습니다: {self.widths}")
        if self.in_channels < 1:
            raise ConfigError(f"입력 채널 수가 올바르지 않습니다: {self.in_channels}")

    @property
    def depth(self) -> int:
        return len(self.widths)

    @property
    def pool_factor(self) -> int:
        return 2 ** self.depth


class SegNet:
    """CPSS 주입 사이트를 가진 분할 네트워크"""

    def __init__(self, cfg: SegNetConfig, injection: Optional[InjectionConfig] = None, rng: Optional[Rng] = None):
        self.cfg = cfg
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        rng = rng or Rng(0)
        cin = cfg.in_channels
        for b, width in enumerate(cfg.widths, start=1):
            for k, fan_in in ((1, cin), (2, width)):
                std = np.sqrt(2.0 / (fan_in * 9))
                weight = rng.derive("init", b, k).normal(0.0, std, size=(width, fan_in, 3, 3))
                self.params[f"block{b}.conv{k}.weight"] = Tensor(weight.astype(np.float32), requires_grad=True)
                self.params[f"block{b}.conv{k}.bias"] = Tensor(np.zeros(width, np.float32), requires_grad=True)
            cin = width
        head = rng.derive("init", "head").normal(0.0, np.sqrt(1.0 / cin), size=(cfg.num_classes, cin, 1, 1))
        self.params["head.weight"] = Tensor(head.astype(np.float32), requires_grad=True)
        self.params["head.bias"] = Tensor(np.zeros(cfg.num_classes, np.float32), requires_grad=True)
        self.injection: Optional[InjectionConfig] = None
        self.layers: Dict[int, InjectionLayer] = {}
        self.attach_injection(injection)

    # --- 구성 ---
    def attach_injection(self, injection: Optional[InjectionConfig], input_size: Optional[Tuple[int, int]] = None) -> None:
        """주입 설정을 붙이거나(None이면) 떼어냅니다.

        Args:
            injection: 주입 설정
            input_size: 학습 입력 (H, W). 주어지면 사이트별 특징 평면에 패치 격자가 들어가는지 미리 확인합니다.

        Raises:
            ConfigError: 주입 위치가 블록 수를 넘거나 격자가 특징 평면보다 클 때
        """
        self.injection = injection
        self.layers = {}
        if injection is None:
            return
        bad = [s for s in injection.sites if s > self.cfg.depth]
        if bad:
            raise ConfigError(f"주입 위치 {bad}가 블록 수({self.cfg.depth})를 넘습니다.")
        if input_size is not None:
            for site in injection.sites:
                self._check_grid(site, *self.site_plane(site, *input_size))
        self.layers = {site: InjectionLayer(injection, site) for site in injection.sites}

    @staticmethod
    def site_plane(site: int, height: int, width: int) -> Tuple[int, int]:
        """입력 (H, W)에서 주입 사이트의 특징 평면 크기. 사이트 b ≥ 1은 풀링 b−1번 뒤입니다."""
        shift = max(site - 1, 0)
        return height >> shift, width >> shift

    def _check_grid(self, site: int, height: int, width: int) -> None:
        grid = self.injection.grid if self.injection is not None else None
        if grid is not None and (grid.n_h > height or grid.n_w > width):
            raise ConfigError(f"사이트 {site}의 특징 평면 {height}x{width}가 패치 격자 {grid}보다 작습니다.")

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.params.items())

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def clone(self) -> "SegNet":
        """파라미터를 깊은 복사한 새 모델 (그래디언트/최적화 상태 제외)."""
        twin = SegNet.__new__(SegNet)
        twin.cfg = self.cfg
        twin.params = OrderedDict((k, Tensor(v.data.copy(), requires_grad=True)) for k, v in self.params.items())
        twin.attach_injection(self.injection)
        return twin

    # --- 순전파 ---
    def _check_input(self, img: Tensor) -> None:
        if img.ndim != 4 or img.shape[1] != self.cfg.in_channels:
            raise ShapeError(f"입력은 [N,{self.cfg.in_channels},H,W]이어야 합니다: {img.shape}")
        f = self.cfg.pool_factor
        if img.shape[2] % f or img.shape[3] % f:
            raise ShapeError(f"공간 크기 {img.shape[2]}x{img.shape[3]}가 전체 풀링 배율 {f}로 나누어떨어지지 않습니다.")

    def _site(self, site: int, x: Tensor, rng: Optional[Rng], training: bool) -> Tensor:
        layer = self.layers.get(site)
        if layer is None or not training:
            return x
        if rng is None:
            raise ContractError("학습 모드에서 스타일 주입을 쓰려면 rng가 필요합니다.")
        self._check_grid(site, x.shape[2], x.shape[3])
        return layer(x, rng.derive("site", site), training)

    def _block(self, b: int, x: Tensor) -> Tensor:
        x = relu(conv2d(x, self.params[f"block{b}.conv1.weight"], self.params[f"block{b}.conv1.bias"], pad=1))
        return relu(conv2d(x, self.params[f"block{b}.conv2.weight"], self.params[f"block{b}.conv2.bias"], pad=1))

    def forward(self, img: Union[Tensor, np.ndarray], mode: str = "eval", rng: Optional[Rng] = None) -> Tensor:
        """입력 해상도의 픽셀별 클래스 로짓 [N, C, H, W]를 반환합니다.

        Args:
            img: [N, in_channels, H, W] 이미지
            mode: "train"이면 스타일 주입이 설정대로 발동, "eval"이면 항상 통과
            rng: 학습 모드의 주입 난수 스트림
        """
        if mode not in ("train", "eval"):
            raise ContractError(f"mode는 train/eval 중 하나여야 합니다: {mode}")
        x = img if isinstance(img, Tensor) else Tensor(img)
        self._check_input(x)
        training = mode == "train"
        x = self._site(0, x, rng, training)
        for b in range(1, self.cfg.depth + 1):
            x = self._block(b, x)
            x = self._site(b, x, rng, training)
            x = maxpool2d(x, 2)
        logits = conv2d(x, self.params["head.weight"], self.params["head.bias"])
        return upsample_nearest(logits, self.cfg.pool_factor)

    __call__ = forward

    def features(self, img: Union[Tensor, np.ndarray], block: int) -> Tensor:
        """평가 모드에서 블록 block의 풀링 직전 활성값을 반환합니다."""
        if not 1 <= block <= self.cfg.depth:
            raise ContractError(f"블록 번호는 1..{self.cfg.depth} 범위여야 합니다: {block}")
        x = img if isinstance(img, Tensor) else Tensor(img)
        self._check_input(x)
        for b in range(1, block + 1):
            x = self._block(b, x)
            if b < block:
                x = maxpool2d(x, 2)
        return x


# ---------------------------------------------------------------------------
# 손실
# ---------------------------------------------------------------------------
def source_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """소스 분할 교차 엔트로피: ignore가 아닌 픽셀의 평균 −log p(정답)."""
    return masked_cross_entropy(logits, labels, IGNORE)


def ssl_loss(logits: Tensor, pseudo) -> Tensor:
    """의사 라벨 자기 학습 손실. 라벨이 할당된 픽셀만 사용합니다 (source_loss와 같은 구현)."""
    labels = getattr(pseudo, "labels", pseudo)
    return masked_cross_entropy(logits, labels, IGNORE)


# ---------------------------------------------------------------------------
# 최적화기
# ---------------------------------------------------------------------------
@dataclass
class OptimState:
    """모멘텀 SGD + 다항 감쇠 학습률 상태"""

    base_lr: float = 2.5e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    power: float = 0.9
    total_iters: int = 3000
    iter: int = 0
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)

    def lr(self, iteration: Optional[int] = None) -> float:
        """lr(i) = base_lr · (1 − i/T)^power, i ≥ T이면 0."""
        i = self.iter if iteration is None else iteration
        if self.total_iters <= 0 or i >= self.total_iters:
            return 0.0
        return self.base_lr * (1.0 - i / self.total_iters) ** self.power


def sgd_step(model: SegNet, opt: OptimState) -> SegNet:
    """v ← m·v + g + wd·p, p ← p − lr·v 후 iter를 증가시키고 그래디언트를 비웁니다.

    Raises:
        ContractError: 그래디언트가 채워지지 않은 파라미터가 있을 때
    """
    missing = [name for name, p in model.named_parameters() if p.grad is None]
    if missing:
        raise ContractError(f"그래디언트가 없는 파라미터가 있습니다: {missing[:3]}")
    lr = opt.lr()
    for name, p in model.named_parameters():
        v = opt.velocity.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        v = (opt.momentum * v + p.grad + opt.weight_decay * p.data).astype(p.dtype)
        opt.velocity[name] = v
        p.data = (p.data - lr * v).astype(p.dtype)
    opt.iter += 1
    model.zero_grad()
    return model


def skip_step(model: SegNet, opt: OptimState) -> None:
    """손실 마스크가 빈 배치: 파라미터는 그대로 두고 반복 카운터만 진행합니다."""
    model.zero_grad()
    opt.iter += 1


# ---------------------------------------------------------------------------
# 체크포인트
# ---------------------------------------------------------------------------
def save_checkpoint(model: SegNet, directory: Union[str, Path]) -> Path:
    """파라미터별 SFOT 파일과 manifest.txt를 디렉터리에 씁니다."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [CHECKPOINT_HEADER, "config " + json.dumps(asdict(model.cfg), sort_keys=True)]
    for name, p in model.named_parameters():
        write_tensor(directory / f"{name}.sfot", p.data.astype(np.float32))
        lines.append(f"param {name} {','.join(str(d) for d in p.shape)}")
    (directory / CHECKPOINT_MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return directory


def _read_manifest(directory: Path) -> Tuple[SegNetConfig, List[Tuple[str, Tuple[int, ...]]]]:
    path = directory / CHECKPOINT_MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"체크포인트 manifest를 찾을 수 없습니다: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise DataError(f"체크포인트 형식이 아닙니다: {path}")
    cfg, params = None, []
    for line in lines[1:]:
        kind, _, rest = line.partition(" ")
        if kind == "config":
            cfg = SegNetConfig(**json.loads(rest))
        elif kind == "param":
            name, dims = rest.split(" ")
            params.append((name, tuple(int(d) for d in dims.split(",") if d)))
    if cfg is None:
        raise DataError(f"체크포인트 manifest에 config 줄이 없습니다: {path}")
    return cfg, params


def load_checkpoint(directory: Union[str, Path], injection: Optional[InjectionConfig] = None) -> SegNet:
    """체크포인트 디렉터리에서 모델을 복원합니다.

    Raises:
        FileNotFoundError: manifest 또는 파라미터 파일이 없을 때
        DataError: 모양이 manifest와 다를 때
    """
    directory = Path(directory)
    cfg, params = _read_manifest(directory)
    model = SegNet(cfg)
    for name, dims in params:
        if name not in model.params:
            raise DataError(f"알 수 없는 파라미터입니다: {name}")
        data = read_tensor(directory / f"{name}.sfot")
        if data.shape != dims or data.shape != model.params[name].shape:
            raise DataError(f"파라미터 {name} 모양이 맞지 않습니다: {data.shape} != {dims}")
        model.params[name] = Tensor(data, requires_grad=True)
    model.attach_injection(injection)
    return model


def checkpoint_hash(directory: Union[str, Path]) -> str:
    """manifest와 파라미터 파일 내용의 sha256."""
    directory = Path(directory)
    _, params = _read_manifest(directory)
    digest = hashlib.sha256((directory / CHECKPOINT_MANIFEST).read_bytes())
    for name, _ in params:
        digest.update((directory / f"{name}.sfot").read_bytes())
    return digest.hexdigest()
