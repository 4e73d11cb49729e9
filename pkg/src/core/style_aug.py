"""
특징 통계(스타일) 연산자 모음

- AdaIN: 콘텐츠를 자신의 평균/표준편차로 정규화한 뒤 스타일 쪽 통계로 되돌립니다.
- Cross-Patch Style Swap(CPSS): 특징맵을 n_h × n_w 패치로 나누고 패치 스타일을 순열로 교환합니다.
  intra는 샘플 안에서, inter는 배치 전체(B·n 슬롯)에서 교환합니다.
- MixStyle / CrossNorm: 샘플 단위(1×1 격자) 비교 기준 연산자입니다.
- inject: 학습 중에만 확률 β로 위 연산자 중 하나를 적용합니다.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from src.core.rng import Rng
from src.core.tensor import Tensor, clamp_min, patch_expand, patch_sum, sqrt, take
from src.utils.errors import ConfigError, ContractError, ShapeError

EPS = 1e-5
VARIANTS = ("intra", "inter", "mixstyle", "crossnorm", "off")


@dataclass(frozen=True)
class PatchGrid:
    """H×W 평면을 n_h × n_w 직사각형 패치로 나누는 격자. 나머지는 마지막 행/열 패치가 흡수합니다."""

    n_h: int = 1
    n_w: int = 1

    def __post_init__(self):
        if self.n_h < 1 or self.n_w < 1:
            raise ConfigError(f"패치 격자는 1x1 이상이어야 합니다: {self.n_h}x{self.n_w}")

    @classmethod
    def parse(cls, text: str) -> "PatchGrid":
        """'2x4' 형식 문자열을 격자로 변환합니다."""
        try:
            n_h, n_w = (int(part) for part in text.lower().split("x"))
        except ValueError as e:
            raise ConfigError(f"격자 형식은 'HxW'여야 합니다: {text!r}") from e
        return cls(n_h, n_w)

    @property
    def n(self) -> int:
        return self.n_h * self.n_w

    def __str__(self) -> str:
        return f"{self.n_h}x{self.n_w}"

    def boundaries(self, height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
        """각 축의 분할 시작 오프셋을 반환합니다."""
        if self.n_h > height or self.n_w > width:
            raise ShapeError(f"격자 {self} 가 특징 평면 {height}x{width} 보다 큽니다.")
        rows = np.arange(self.n_h, dtype=np.int64) * (height // self.n_h)
        cols = np.arange(self.n_w, dtype=np.int64) * (width // self.n_w)
        return rows, cols

    def sizes(self, height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
        rows, cols = self.boundaries(height, width)
        return np.diff(np.append(rows, height)), np.diff(np.append(cols, width))


def grid_for_patch_count(n: int) -> Optional[PatchGrid]:
    """패치 수 n을 가장 정사각형에 가까운 격자로 바꿉니다 (n_h ≤ n_w). n=0이면 None(CPSS 비활성)."""
    if n < 0:
        raise ConfigError(f"패치 수는 0 이상이어야 합니다: {n}")
    if n == 0:
        return None
    n_h = max(d for d in range(1, int(np.sqrt(n)) + 1) if n % d == 0)
    return PatchGrid(n_h, n // n_h)


@dataclass
class PatchStyle:
    """샘플·패치·채널별 평균과 ε로 하한을 둔 모표준편차. 모양은 [N, C, n_h, n_w]."""

    mean: Tensor
    std: Tensor
    row_sizes: np.ndarray
    col_sizes: np.ndarray

    def expand(self, stats: Tensor) -> Tensor:
        return patch_expand(stats, self.row_sizes, self.col_sizes)


@dataclass
class SwapPlan:
    """슬롯 순열. assignment[k]는 슬롯 k에 스타일을 주는 기증(donor) 슬롯입니다.

    슬롯 번호는 (샘플, 패치 행, 패치 열) 순서의 선형 인덱스입니다.
    """

    assignment: np.ndarray
    scope: str
    slots_per_sample: int

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        size = self.assignment.size
        if not np.array_equal(np.sort(self.assignment), np.arange(size)):
            raise ContractError("SwapPlan assignment가 순열이 아닙니다.")
        if self.scope not in ("intra", "inter"):
            raise ContractError(f"알 수 없는 SwapPlan 범위입니다: {self.scope}")
        if self.scope == "intra":
            owner = np.arange(size) // self.slots_per_sample
            if np.any(self.assignment // self.slots_per_sample != owner):
                raise ContractError("intra 계획의 기증 패치가 다른 샘플에 있습니다.")

    def inverse(self) -> "SwapPlan":
        return SwapPlan(np.argsort(self.assignment), self.scope, self.slots_per_sample)

    @classmethod
    def identity(cls, batch: int, slots_per_sample: int, scope: str = "inter") -> "SwapPlan":
        return cls(np.arange(batch * slots_per_sample), scope, slots_per_sample)


def make_intra_plan(batch: int, grid: PatchGrid, rng: Rng, derangement: bool = False) -> SwapPlan:
    """샘플마다 독립적인 균등 순열을 뽑습니다."""
    n = grid.n
    parts = []
    for b in range(batch):
        perm = rng.derangement(n) if derangement else rng.permutation(n)
        parts.append(perm + b * n)
    return SwapPlan(np.concatenate(parts) if parts else np.zeros(0, np.int64), "intra", n)


def make_inter_plan(batch: int, grid: PatchGrid, rng: Rng) -> SwapPlan:
    """배치 전체 B·n 슬롯에 대한 하나의 균등 순열을 뽑습니다."""
    return SwapPlan(rng.permutation(batch * grid.n), "inter", grid.n)


# ---------------------------------------------------------------------------
# 통계 계산과 재스타일링
# ---------------------------------------------------------------------------
def compute_patch_style(feat: Tensor, grid: PatchGrid, eps: float = EPS) -> PatchStyle:
    """패치·채널별 평균과 모표준편차(1/M)를 계산합니다. feat에 대해 미분 가능합니다."""
    if feat.ndim != 4:
        raise ShapeError(f"[N,C,H,W] 특징맵이 필요합니다: {feat.shape}")
    _, _, h, w = feat.shape
    rows, cols = grid.boundaries(h, w)
    row_sizes, col_sizes = grid.sizes(h, w)
    counts = np.outer(row_sizes, col_sizes).astype(feat.dtype)
    mean = patch_sum(feat, rows, cols) / counts
    centered = feat - patch_expand(mean, row_sizes, col_sizes)
    var = patch_sum(centered * centered, rows, cols) / counts
    std = clamp_min(sqrt(var), eps)
    return PatchStyle(mean, std, row_sizes, col_sizes)


def _permute_slots(stats: Tensor, plan: SwapPlan) -> Tensor:
    n, c, n_h, n_w = stats.shape
    if plan.assignment.size != n * n_h * n_w:
        raise ContractError(f"계획 슬롯 수({plan.assignment.size})가 통계 슬롯 수({n * n_h * n_w})와 다릅니다.")
    flat = stats.transpose(0, 2, 3, 1).reshape(n * n_h * n_w, c)
    donor = take(flat, plan.assignment, axis=0)
    return donor.reshape(n, n_h, n_w, c).transpose(0, 3, 1, 2)


def _restyle(feat: Tensor, style: PatchStyle, new_mean: Tensor, new_std: Tensor) -> Tensor:
    normalized = (feat - style.expand(style.mean)) / style.expand(style.std)
    return normalized * style.expand(new_std) + style.expand(new_mean)


def swap_styles(feat: Tensor, grid: PatchGrid, plan: SwapPlan, detach_donor: bool = False) -> Tensor:
    """계획에 따라 각 패치를 기증 패치의 통계로 재스타일링합니다."""
    style = compute_patch_style(feat, grid)
    donor_mean = _permute_slots(style.mean, plan)
    donor_std = _permute_slots(style.std, plan)
    if detach_donor:
        donor_mean, donor_std = donor_mean.detach(), donor_std.detach()
    return _restyle(feat, style, donor_mean, donor_std)


def adain(content: Tensor, style: Tensor) -> Tensor:
    """AdaIN: σ(style)·(content − μ(content))/σ(content) + μ(style), 샘플 전체(1×1 격자) 기준.

    style의 배치가 1이면 모든 콘텐츠 샘플에 같은 스타일을 씁니다.
    """
    if content.ndim != 4 or style.ndim != 4 or content.shape[1] != style.shape[1]:
        raise ShapeError(f"채널 수가 같은 [N,C,H,W] 입력이 필요합니다: {content.shape}, {style.shape}")
    if style.shape[0] not in (1, content.shape[0]):
        raise ShapeError(f"style 배치({style.shape[0]})는 1이거나 content 배치({content.shape[0]})와 같아야 합니다.")
    grid = PatchGrid(1, 1)
    c_style = compute_patch_style(content, grid)
    s_style = compute_patch_style(style, grid)
    normalized = (content - c_style.mean) / c_style.std
    return normalized * s_style.std + s_style.mean


def cpss_intra(
    feat: Tensor,
    grid: PatchGrid,
    rng: Optional[Rng] = None,
    plan: Optional[SwapPlan] = None,
    derangement: bool = False,
    detach_donor: bool = False,
) -> Tensor:
    """샘플 내부 패치끼리 스타일을 교환합니다 (intra-image CPSS)."""
    if plan is None:
        if rng is None:
            raise ContractError("cpss_intra에는 rng 또는 plan이 필요합니다.")
        plan = make_intra_plan(feat.shape[0], grid, rng, derangement)
    if plan.scope != "intra":
        raise ContractError("cpss_intra에는 intra 범위 계획이 필요합니다.")
    return swap_styles(feat, grid, plan, detach_donor)


def cpss_inter(
    feats: Tensor,
    grid: PatchGrid,
    rng: Optional[Rng] = None,
    plan: Optional[SwapPlan] = None,
    detach_donor: bool = False,
) -> Tensor:
    """배치 전체 B·n 패치 사이에서 스타일을 교환합니다 (inter-image CPSS)."""
    if plan is None:
        if rng is None:
            raise ContractError("cpss_inter에는 rng 또는 plan이 필요합니다.")
        plan = make_inter_plan(feats.shape[0], grid, rng)
    return swap_styles(feats, grid, plan, detach_donor)


def crossnorm(
    feats: Tensor,
    rng: Optional[Rng] = None,
    perm: Optional[np.ndarray] = None,
    detach_donor: bool = False,
) -> Tensor:
    """샘플 전체 통계를 무작위 짝과 교환합니다 (1×1 격자 inter CPSS와 동일)."""
    if perm is None:
        if rng is None:
            raise ContractError("crossnorm에는 rng 또는 perm이 필요합니다.")
        perm = rng.permutation(feats.shape[0])
    return cpss_inter(feats, PatchGrid(1, 1), plan=SwapPlan(perm, "inter", 1), detach_donor=detach_donor)


def mixstyle(
    feats: Tensor,
    rng: Optional[Rng] = None,
    alpha: float = 0.1,
    lam: Union[None, float, np.ndarray] = None,
    perm: Optional[np.ndarray] = None,
    detach_donor: bool = False,
) -> Tensor:
    """MixStyle: λ·자기 통계 + (1−λ)·짝 통계로 섞은 통계로 재스타일링합니다. λ ~ Beta(α, α)."""
    batch = feats.shape[0]
    if perm is None or lam is None:
        if rng is None:
            raise ContractError("mixstyle에는 rng 또는 (lam, perm)이 필요합니다.")
    if perm is None:
        perm = rng.permutation(batch)
    if lam is None:
        lam = rng.beta(alpha, alpha, size=batch)
    lam = np.broadcast_to(np.asarray(lam, dtype=feats.dtype), (batch,)).reshape(batch, 1, 1, 1)
    style = compute_patch_style(feats, PatchGrid(1, 1))
    plan = SwapPlan(perm, "inter", 1)
    donor_mean = _permute_slots(style.mean, plan)
    donor_std = _permute_slots(style.std, plan)
    if detach_donor:
        donor_mean, donor_std = donor_mean.detach(), donor_std.detach()
    mixed_mean = style.mean * lam + donor_mean * (1 - lam)
    mixed_std = style.std * lam + donor_std * (1 - lam)
    return _restyle(feats, style, mixed_mean, mixed_std)


# ---------------------------------------------------------------------------
# 주입 계층
# ---------------------------------------------------------------------------
@dataclass
class InjectionConfig:
    """스타일 연산자 주입 설정.

    Attributes:
        beta: 학습 중 사이트별 활성화 확률
        sites: 주입 블록 번호 (0 = 네트워크 입력)
        variant: intra / inter / mixstyle / crossnorm / off
        mix_alpha: MixStyle의 Beta 분포 파라미터
        patches: 패치 수 n (0이면 CPSS 비활성)
        derangement: intra 교환에서 고정점을 허용하지 않음
        detach_donor: 기증 통계로 그래디언트를 흘리지 않음
    """

    beta: float = 0.3
    sites: Tuple[int, ...] = (1, 2)
    variant: str = "inter"
    mix_alpha: float = 0.1
    patches: int = 4
    derangement: bool = False
    detach_donor: bool = False

    def __post_init__(self):
        self.sites = tuple(sorted(set(int(s) for s in self.sites)))
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= float(self.beta) <= 1.0:
            raise ConfigError(f"beta는 [0,1] 범위여야 합니다: {self.beta}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"알 수 없는 스타일 연산자입니다: {self.variant} (허용: {', '.join(VARIANTS)})")
        if any(s < 0 for s in self.sites):
            raise ConfigError(f"주입 위치는 0 이상이어야 합니다: {self.sites}")
        if self.mix_alpha <= 0:
            raise ConfigError(f"mix_alpha는 양수여야 합니다: {self.mix_alpha}")
        grid_for_patch_count(self.patches)

    @property
    def grid(self) -> Optional[PatchGrid]:
        return grid_for_patch_count(self.patches)

    @property
    def active(self) -> bool:
        return self.variant != "off" and self.beta > 0 and self.patches > 0 and bool(self.sites)


def _apply_variant(feat: Tensor, cfg: InjectionConfig, grid: PatchGrid, rng: Rng):
    batch = feat.shape[0]
    if cfg.variant == "intra":
        plan = make_intra_plan(batch, grid, rng, cfg.derangement)
        return swap_styles(feat, grid, plan, cfg.detach_donor), plan
    if cfg.variant == "inter":
        plan = make_inter_plan(batch, grid, rng)
        return swap_styles(feat, grid, plan, cfg.detach_donor), plan
    if cfg.variant == "crossnorm":
        plan = make_inter_plan(batch, PatchGrid(1, 1), rng)
        return swap_styles(feat, PatchGrid(1, 1), plan, cfg.detach_donor), plan
    if cfg.variant == "mixstyle":
        return mixstyle(feat, rng=rng, alpha=cfg.mix_alpha, detach_donor=cfg.detach_donor), None
    raise ConfigError(f"알 수 없는 스타일 연산자입니다: {cfg.variant}")


def inject(feat: Tensor, cfg: InjectionConfig, grid: Optional[PatchGrid], rng: Rng, training: bool) -> Tensor:
    """학습 모드에서 Bernoulli(β)가 성공하면 설정된 연산자를 적용하고, 아니면 입력을 그대로 돌려줍니다."""
    cfg.validate()
    if not training or cfg.variant == "off" or grid is None:
        return feat
    if not rng.bernoulli(cfg.beta):
        return feat
    out, _ = _apply_variant(feat, cfg, grid, rng)
    return out


@dataclass
class InjectionLayer:
    """네트워크 한 사이트에 붙는 주입 계층. 마지막 호출의 발동 여부와 계획을 기록합니다."""

    cfg: InjectionConfig
    site: int
    fired: bool = field(default=False, init=False)
    last_plan: Optional[SwapPlan] = field(default=None, init=False)

    def __call__(self, feat: Tensor, rng: Rng, training: bool) -> Tensor:
        self.fired, self.last_plan = False, None
        grid = self.cfg.grid
        if not training or not self.cfg.active or grid is None:
            return feat
        if not rng.bernoulli(self.cfg.beta):
            return feat
        out, plan = _apply_variant(feat, self.cfg, grid, rng)
        self.fired, self.last_plan = True, plan
        return out
