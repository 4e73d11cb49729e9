"""
하이퍼파라미터 민감도 스윕

축 하나의 값 목록 × seed 개수만큼 train_source를 실행하고 값별 평균/표준편차를 집계합니다.

축:
    patches      패치 수 n (0 = CPSS 비활성)
    beta         주입 확률 β
    block        주입 위치 (여러 위치는 '+'로 연결, 예: 1+2)
    variant      스타일 연산자 (off / mixstyle / crossnorm / intra / inter)
    photometric  광도 변환 on/off
"""

from __future__ import annotations

import copy
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import pandas as pd

from src.core.style_aug import VARIANTS
from src.pipeline.config import ExperimentConfig, parse_sites
from src.pipeline.stages import train_source
from src.utils.errors import ConfigError
from src.utils.tracing import traced

logger = logging.getLogger(__name__)

AXES = ("patches", "beta", "block", "variant", "photometric")
METRIC_COLUMNS = ("source", "C", "C+O", "open")
RUNS_CSV = "sweep_runs.csv"
SUMMARY_CSV = "sweep.csv"

_TRUE = {"1", "true", "on", "yes"}
_FALSE = {"0", "false", "off", "no"}


def apply_axis_value(base: Dict[str, Any], axis: str, value: str) -> Dict[str, Any]:
    """
    설정 딕셔너리 사본에 축 값을 적용합니다.

    Raises:
        ConfigError: 알 수 없는 축 또는 축에 맞지 않는 값
    """
    if axis not in AXES:
        raise ConfigError(f"알 수 없는 스윕 축입니다: {axis} (허용: {', '.join(AXES)})")
    cfg = copy.deepcopy(base)
    text = str(value).strip()
    try:
        if axis == "patches":
            n = int(text)
            if n < 0:
                raise ValueError(text)
            cfg["injection"]["patches"] = n
        elif axis == "beta":
            beta = float(text)
            if not 0.0 <= beta <= 1.0:
                raise ValueError(text)
            cfg["injection"]["beta"] = beta
        elif axis == "block":
            cfg["injection"]["sites"] = list(parse_sites(text))
        elif axis == "variant":
            if text not in VARIANTS:
                raise ValueError(text)
            cfg["injection"]["variant"] = text
        elif axis == "photometric":
            if text.lower() not in _TRUE | _FALSE:
                raise ValueError(text)
            cfg["stage1"]["use_photometric"] = text.lower() in _TRUE
    except ValueError as e:
        raise ConfigError(f"축 {axis}에 맞지 않는 값입니다: {value!r}") from e
    return cfg


def _run_point(job) -> Dict[str, Any]:
    """프로세스 풀 작업자: 한 (값, seed) 조합을 학습하고 지표 행을 반환합니다."""
    axis, value, seed_index, payload, out_dir = job
    cfg = ExperimentConfig.from_dict(payload)
    result = train_source(cfg, out_dir)
    report = result.report
    return {
        "axis": axis,
        "value": value,
        "seed": cfg.seed,
        "seed_index": seed_index,
        "source": report.source_avg,
        "C": report.compound_avg,
        "C+O": report.compound_open_avg,
        "open": report.open_avg,
        "config_hash": report.config_hash,
    }


def aggregate(runs: pd.DataFrame, values: Sequence[str]) -> pd.DataFrame:
    """값별 평균과 표준편차 (값 순서는 입력 순서 유지)"""
    grouped = runs.groupby("value", sort=False)[list(METRIC_COLUMNS)].agg(["mean", "std"])
    grouped.columns = [f"{metric}_{stat}" for metric, stat in grouped.columns]
    grouped = grouped.reindex([str(v) for v in values])
    grouped.insert(0, "runs", runs.groupby("value", sort=False).size().reindex([str(v) for v in values]).values)
    return grouped.reset_index()


@traced("sweep")
def sweep(
    base: Dict[str, Any],
    axis: str,
    values: Sequence[str],
    seeds: int,
    out_dir: Union[str, Path],
    workers: int = 1,
) -> pd.DataFrame:
    """
    (값, seed) 조합마다 train_source를 실행하고 CSV 두 개를 씁니다.

    Args:
        base: 해석이 끝난 기본 설정 딕셔너리
        axis: 스윕 축
        values: 축 값 목록 (문자열)
        seeds: seed 개수 (seed = base seed + i)
        out_dir: 출력 디렉터리
        workers: 병렬 프로세스 수

    Returns:
        값별 집계 DataFrame
    """
    if axis not in AXES:
        raise ConfigError(f"알 수 없는 스윕 축입니다: {axis} (허용: {', '.join(AXES)})")
    if not values:
        raise ConfigError("스윕 값이 비어 있습니다.")
    if seeds < 1:
        raise ConfigError(f"seed 개수는 1 이상이어야 합니다: {seeds}")
    out = Path(out_dir)
    base_seed = int(base.get("seed", 0))
    jobs = []
    for value in values:
        payload = apply_axis_value(base, axis, value)
        for i in range(seeds):
            point = copy.deepcopy(payload)
            point["seed"] = base_seed + i
            ExperimentConfig.from_dict(point)
            jobs.append((axis, str(value), i, point, str(out / f"{axis}={value}" / f"seed{i}")))
    logger.info("[스윕] 축=%s 값=%s seed=%d → 실행 %d개", axis, list(values), seeds, len(jobs))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows: List[Dict[str, Any]] = list(pool.map(_run_point, jobs))
    else:
        rows = [_run_point(job) for job in jobs]

    out.mkdir(parents=True, exist_ok=True)
    runs = pd.DataFrame(rows)
    runs.to_csv(out / RUNS_CSV, index=False, float_format="%.10f", na_rep="nan", lineterminator="\n")
    summary = aggregate(runs, values)
    summary.insert(0, "axis", axis)
    summary.to_csv(out / SUMMARY_CSV, index=False, float_format="%.10f", na_rep="nan", lineterminator="\n")
    for _, row in summary.iterrows():
        logger.info("[스윕] %s=%s C=%.4f±%.4f open=%.4f", axis, row["value"], row["C_mean"], row["C_std"], row["open_mean"])
    return summary
