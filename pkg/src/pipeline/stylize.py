"""
이미지 수준(사이트 0) 스타일 연산자 적용과 패치 통계 기록
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.rng import Rng
from src.core.sfot import read_tensor, write_tensor
from src.core.style_aug import (
    PatchGrid,
    SwapPlan,
    compute_patch_style,
    cpss_inter,
    cpss_intra,
    make_inter_plan,
    make_intra_plan,
    mixstyle,
)
from src.core.tensor import Tensor, no_grad
from src.data.export import image_to_pil
from src.utils.errors import ConfigError, ContractError

logger = logging.getLogger(__name__)

STYLIZE_VARIANTS = ("intra", "inter", "crossnorm", "mixstyle")


def _patch_stats(images: np.ndarray, grid: PatchGrid) -> Dict[str, list]:
    style = compute_patch_style(Tensor(images.astype(np.float64)), grid)
    return {"mean": style.mean.data.tolist(), "std": style.std.data.tolist()}


def stylize(
    images: np.ndarray,
    grid: PatchGrid,
    variant: str = "inter",
    seed: int = 0,
    identity: bool = False,
    mix_alpha: float = 0.1,
) -> Tuple[np.ndarray, Dict]:
    """
    이미지 배치 [N,3,H,W]에 스타일 연산자를 적용합니다.

    Args:
        images: 입력 이미지
        grid: 패치 격자 (crossnorm/mixstyle은 1x1로 고정)
        variant: intra / inter / crossnorm / mixstyle
        seed: 순열 seed
        identity: 항등 순열 사용 (출력 == 입력)
        mix_alpha: mixstyle의 Beta 파라미터

    Returns:
        (출력 이미지, 전/후 패치 통계와 기증 슬롯을 담은 딕셔너리)

    Raises:
        ConfigError: 알 수 없는 variant
        ContractError: inter 계열에 이미지가 1장뿐일 때
    """
    if variant not in STYLIZE_VARIANTS:
        raise ConfigError(f"알 수 없는 스타일 연산자입니다: {variant} (허용: {', '.join(STYLIZE_VARIANTS)})")
    images = np.asarray(images, dtype=np.float64)
    n = images.shape[0]
    if n < 1:
        raise ContractError("입력 이미지가 없습니다.")
    if variant != "intra" and n < 2:
        raise ContractError(f"{variant} 연산자는 이미지가 2장 이상 필요합니다.")
    if variant in ("crossnorm", "mixstyle"):
        grid = PatchGrid(1, 1)
    rng = Rng(seed).derive("stylize", variant)
    feats = Tensor(images)
    plan: Optional[SwapPlan] = None
    with no_grad():
        if identity:
            out = images.copy()
            plan = SwapPlan.identity(n, grid.n, "intra" if variant == "intra" else "inter")
        elif variant == "intra":
            plan = make_intra_plan(n, grid, rng)
            out = cpss_intra(feats, grid, plan=plan).data
        elif variant in ("inter", "crossnorm"):
            plan = make_inter_plan(n, grid, rng)
            out = cpss_inter(feats, grid, plan=plan).data
        else:
            out = mixstyle(feats, rng=rng, alpha=mix_alpha).data
    stats = {
        "grid": str(grid),
        "variant": variant,
        "seed": seed,
        "identity": identity,
        "donor_slots": None if plan is None else plan.assignment.tolist(),
        "pre": _patch_stats(images, grid),
        "post": _patch_stats(out, grid),
    }
    return out, stats


def stylize_files(
    paths: Sequence[Union[str, Path]],
    out_dir: Union[str, Path],
    grid: PatchGrid,
    variant: str = "inter",
    seed: int = 0,
    identity: bool = False,
) -> List[Path]:
    """SFOT 이미지 파일들을 스타일 변환해 SFOT + PNG와 stats.json으로 저장합니다."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images = np.stack([read_tensor(p) for p in paths])
    result, stats = stylize(images, grid, variant, seed, identity)
    stats["inputs"] = [str(p) for p in paths]
    written = []
    for i, img in enumerate(result):
        target = out / f"stylized_{i:03d}.sfot"
        write_tensor(target, img.astype(np.float32))
        image_to_pil(img).save(out / f"stylized_{i:03d}.png")
        written.append(target)
    (out / "stats.json").write_text(json.dumps(stats, indent=1) + "\n", encoding="utf-8")
    logger.info("[스타일 변환] %s %s 이미지 %d장 → %s", variant, grid, len(written), out)
    return written
