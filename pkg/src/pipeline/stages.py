"""
2단계 학습 파이프라인

Stage-I  train_source: 라벨 있는 소스 데이터로 광도 변환 + CPSS 증강 하에 일반화 모델 학습
Stage-II adapt_target: 소스 데이터 없이 소스 모델만으로 MPT 의사 라벨을 만들고,
                       복제한 모델을 compound 대상 데이터에서 자기 학습
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional, Tuple, Union

import numpy as np

from src.core.photometric import PhotometricConfig, photometric
from src.core.pseudo_label import (
    ClassThresholds,
    PseudoLabelMap,
    ThresholdAccumulator,
    assign_pseudo_labels,
)
from src.core.rng import Rng
from src.core.segnet import (
    IGNORE,
    OptimState,
    SegNet,
    checkpoint_hash,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    skip_step,
    source_loss,
    ssl_loss,
)
from src.core.tensor import no_grad, softmax_channels
from src.data.clustering import cluster_latent_domains, cluster_sizes
from src.data.dataset import DomainView, Manifest
from src.data.pseudo_store import PseudoLabelStore, cache_key
from src.data.sampler import BalancedSampler, UniformSampler
from src.data.style_embed import extract_style_embedding
from src.pipeline.config import AdaptConfig, ExperimentConfig, TrainSchedule
from src.pipeline.evaluate import MetricsReport, evaluate_model
from src.utils.audit import AuditLog
from src.utils.errors import ConfigError, ContractError
from src.utils.tracing import traced

logger = logging.getLogger(__name__)

CHECKPOINT_DIR = "checkpoint"
AUDIT_LOG = "audit.jsonl"
RESOLVED_CONFIG = "config.json"


@dataclass
class StageResult:
    model: SegNet
    report: MetricsReport
    checkpoint: Path
    pseudo_labels: Optional[PseudoLabelMap] = None
    thresholds: Optional[ClassThresholds] = None
    audit: Optional[AuditLog] = None


def _check_classes(model_classes: int, manifest: Manifest, where: str) -> None:
    if manifest.num_classes != model_classes:
        raise ConfigError(f"[{where}] 모델 클래스 수({model_classes})와 데이터셋 클래스 수({manifest.num_classes})가 다릅니다.")


def train_loop(
    model: SegNet,
    schedule: TrainSchedule,
    images: np.ndarray,
    labels: np.ndarray,
    sampler: Iterator[np.ndarray],
    photo_cfg: PhotometricConfig,
    rng: Rng,
    loss_fn: Callable,
    tag: str,
) -> OptimState:
    """공통 SGD 루프. 손실 마스크가 빈 배치는 건너뜁니다 (파라미터 불변)."""
    opt = OptimState(
        base_lr=schedule.base_lr,
        momentum=schedule.momentum,
        weight_decay=schedule.weight_decay,
        power=schedule.power,
        total_iters=schedule.iters,
    )
    skipped = 0
    running, steps = 0.0, 0
    lr = opt.lr()
    for i in range(schedule.iters):
        idx = next(sampler)
        batch = images[idx]
        if schedule.use_photometric and photo_cfg.enabled:
            batch = photometric(batch, photo_cfg, rng.derive("photometric", i))
        k = schedule.loss_images or len(idx)
        target = labels[idx][:k]
        if np.any(target != IGNORE):
            logits = model.forward(batch, mode="train", rng=rng.derive("cpss", i))
            loss = loss_fn(logits[:k] if k < len(idx) else logits, target)
            loss.backward()
            running += loss.item()
            steps += 1
            lr = opt.lr()
            sgd_step(model, opt)
        else:
            skip_step(model, opt)
            skipped += 1
        if (i + 1) % schedule.log_every == 0 or i + 1 == schedule.iters:
            # 건너뛴 반복은 평균에 넣지 않음
            if steps:
                logger.info("[%s] iter %d/%d loss=%.4f lr=%.2e", tag, i + 1, schedule.iters, running / steps, lr)
            running, steps = 0.0, 0
    if skipped:
        logger.info("[%s] 손실 마스크가 비어 건너뛴 반복: %d", tag, skipped)
    return opt


def _write_config(out: Path, payload: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / RESOLVED_CONFIG).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


@traced("train_source")
def train_source(cfg: ExperimentConfig, out_dir: Union[str, Path]) -> StageResult:
    """
    Stage-I: 소스 학습 후 체크포인트를 저장하고 모든 test split을 평가합니다.

    Args:
        cfg: 실험 설정
        out_dir: 출력 디렉터리 (checkpoint/, metrics.*, config.json)

    Returns:
        StageResult

    Raises:
        FileNotFoundError: 데이터셋이 없을 때
        ContractError: 소스 학습 데이터에 라벨이 없을 때
    """
    start = time.perf_counter()
    out = Path(out_dir)
    manifest = Manifest.load(cfg.data.root)
    _check_classes(cfg.model.num_classes, manifest, "Stage-I")
    view = DomainView(manifest, ("source",), split="train")
    if not view.labeled:
        raise ContractError("라벨 있는 소스 학습 데이터가 없습니다.")
    images, labels = view.load_batch(range(len(view)))
    logger.info("[Stage-I] 소스 학습 샘플 %d개, 반복 %d회", len(view), cfg.stage1.iters)

    rng = Rng(cfg.seed).derive("stage1")
    injection = cfg.injection if cfg.stage1.use_cpss else None
    model = SegNet(cfg.model, rng=Rng(cfg.seed).derive("model"))
    model.attach_injection(injection, images.shape[2:])
    sampler = iter(UniformSampler(len(view), cfg.stage1.batch, rng.derive("sampler")))
    train_loop(model, cfg.stage1, images, labels, sampler, cfg.photometric, rng, source_loss, "Stage-I")

    checkpoint = save_checkpoint(model, out / CHECKPOINT_DIR)
    report = evaluate_model(model, manifest, cfg.eval.splits or None, cfg.eval.batch)
    report.config_hash = cfg.config_hash()
    report.seed = cfg.seed
    report.runtime = time.perf_counter() - start
    report.log("Stage-I")
    report.write(out)
    _write_config(out, cfg.to_dict())
    return StageResult(model, report, checkpoint)


def _source_probabilities(model: SegNet, images: np.ndarray, batch: int) -> Iterator[np.ndarray]:
    with no_grad():
        for s in range(0, len(images), batch):
            yield softmax_channels(model.forward(images[s:s + batch], mode="eval")).data


def generate_pseudo_labels(
    model: SegNet, images: np.ndarray, tau: float, q: float, batch: int, rng: Rng
) -> Tuple[PseudoLabelMap, ClassThresholds]:
    """고정된 소스 모델로 MPT 임계값을 추정하고 의사 라벨을 붙입니다 (대상 집합을 두 번 훑음)."""
    acc = ThresholdAccumulator(model.cfg.num_classes, rng=rng.derive("reservoir"))
    for probs in _source_probabilities(model, images, batch):
        acc.add(probs)
    thresholds = acc.finalize(tau, q)
    maps = [assign_pseudo_labels(p, thresholds).labels for p in _source_probabilities(model, images, batch)]
    return PseudoLabelMap(np.concatenate(maps)), thresholds


def _stage2_sampler(cfg: AdaptConfig, view: DomainView, source_model: SegNet, images: np.ndarray, rng: Rng):
    mode, batch = cfg.stage2.sampler, cfg.stage2.batch
    if mode == "random":
        return iter(UniformSampler(len(view), batch, rng))
    if mode == "oracle":
        return iter(BalancedSampler(view.oracle_domain_ids(), batch, rng))
    embeddings = np.concatenate(
        [extract_style_embedding(source_model, images[s:s + cfg.eval.batch]) for s in range(0, len(images), cfg.eval.batch)]
    )
    assignments = cluster_latent_domains(embeddings, cfg.stage2.clusters, cfg.seed)
    logger.info("[군집화] 잠재 도메인 %d개, 크기=%s", cfg.stage2.clusters, cluster_sizes(assignments).tolist())
    return iter(BalancedSampler(assignments, batch, rng))


@traced("adapt_target")
def adapt_target(cfg: AdaptConfig, source_checkpoint: Union[str, Path], out_dir: Union[str, Path]) -> StageResult:
    """
    Stage-II: 소스 없는 대상 적응.

    1) 고정된 소스 모델로 compound 학습 데이터에 MPT 의사 라벨 생성 (캐시 사용)
    2) 소스 모델 복제
    3) 의사 라벨 자기 학습 손실로 CPSS + 광도 변환 하에 학습
    4) compound / open test split 평가

    소스 역할 파일은 한 번도 열지 않으며, 열린 파일 목록을 audit.jsonl에 남깁니다.

    Raises:
        ConfigError: 체크포인트와 설정/데이터셋의 클래스 수가 다를 때
    """
    start = time.perf_counter()
    out = Path(out_dir)
    audit = AuditLog()
    manifest = Manifest.load(cfg.data.root)
    source_model = load_checkpoint(source_checkpoint)
    if source_model.cfg.num_classes != cfg.model.num_classes:
        raise ConfigError(
            f"체크포인트 클래스 수({source_model.cfg.num_classes})가 설정({cfg.model.num_classes})과 다릅니다."
        )
    _check_classes(cfg.model.num_classes, manifest, "Stage-II")

    view = DomainView.for_adaptation(manifest, "train", audit, domains=manifest.domains("compound"))
    if len(view) == 0:
        raise ContractError("compound 대상 학습 데이터가 없습니다.")
    images, _ = view.load_batch(range(len(view)), with_labels=False)
    rng = Rng(cfg.seed).derive("stage2")

    stage2 = cfg.stage2
    store = PseudoLabelStore(cfg.data.root)
    key = cache_key(checkpoint_hash(source_checkpoint), stage2.tau, stage2.q)
    cached = store.load(key, view.image_paths()) if stage2.cache_pseudo_labels else None
    if cached is None:
        pseudo, thresholds = generate_pseudo_labels(source_model, images, stage2.tau, stage2.q, cfg.eval.batch, rng)
        if stage2.cache_pseudo_labels:
            store.save(key, view.image_paths(), pseudo, thresholds)
    else:
        pseudo, thresholds = cached
    logger.info(
        "[의사 라벨] coverage=%.4f 임계값=%s",
        pseudo.coverage, np.round(thresholds.thresholds, 4).tolist(),
    )

    model = source_model.clone()
    model.attach_injection(cfg.injection if stage2.use_cpss else None, images.shape[2:])
    sampler = _stage2_sampler(cfg, view, source_model, images, rng.derive("sampler"))
    train_loop(model, stage2, images, pseudo.labels, sampler, cfg.photometric, rng, ssl_loss, "Stage-II")

    checkpoint = save_checkpoint(model, out / CHECKPOINT_DIR)
    report = evaluate_model(model, manifest, cfg.eval.splits or None, cfg.eval.batch, audit=audit, source_free=True)
    report.config_hash = cfg.config_hash()
    report.seed = cfg.seed
    report.runtime = time.perf_counter() - start
    report.log("Stage-II")
    report.write(out)
    _write_config(out, cfg.to_dict())
    audit.write(out / AUDIT_LOG)
    if audit.paths_for_role("source"):
        raise ContractError("적응 단계에서 소스 파일이 열렸습니다.")
    return StageResult(model, report, checkpoint, pseudo, thresholds, audit)
