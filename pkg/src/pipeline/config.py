"""
실험 설정의 타입 뷰

설정 딕셔너리(config.yaml 기본값 + 실험 파일 + --set)를 검증된 dataclass로 바꿉니다.
적응 단계는 AdaptConfig를 쓰며, 이 스키마에는 stage1 섹션도 소스 데이터 필드도 없습니다.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple, Type, TypeVar

import yaml

from config.config_loader import apply_overrides, deep_merge, default_config, load_config
from src.core.photometric import PhotometricConfig
from src.core.segnet import SegNetConfig
from src.core.style_aug import InjectionConfig
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

SAMPLER_MODES = ("random", "oracle", "clustering")
TRACING_KEYS = ("langsmith_enabled", "langsmith_project_name")

T = TypeVar("T")


def _build(cls: Type[T], payload: Optional[Dict[str, Any]], section: str) -> T:
    """dataclass를 딕셔너리에서 만들고 알 수 없는 키를 거부합니다."""
    payload = dict(payload or {})
    types = {f.name: str(f.type) for f in dataclasses.fields(cls)}
    unknown = sorted(set(payload) - set(types))
    if unknown:
        raise ConfigError(f"[{section}] 알 수 없는 설정 키입니다: {unknown}")
    for key, value in payload.items():
        # YAML 1.1은 '1e-4' 같은 표기를 문자열로 읽음
        if types[key] in ("float", "int") and isinstance(value, str):
            try:
                payload[key] = float(value) if types[key] == "float" else int(value)
            except ValueError as e:
                raise ConfigError(f"[{section}] {key} 값이 숫자가 아닙니다: {value!r}") from e
    try:
        return cls(**payload)
    except TypeError as e:
        raise ConfigError(f"[{section}] 설정 값 형식이 올바르지 않습니다: {e}") from e


@dataclass
class DataConfig:
    root: str = "data/toy"


@dataclass
class TrainSchedule:
    """SGD 일정과 단계별 증강 스위치"""

    iters: int = 3000
    base_lr: float = 2.5e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    power: float = 0.9
    batch: int = 4
    use_cpss: bool = True
    use_photometric: bool = True
    loss_images: int = 0
    log_every: int = 100

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.iters < 0:
            raise ConfigError(f"iters는 0 이상이어야 합니다: {self.iters}")
        if self.base_lr < 0 or self.weight_decay < 0:
            raise ConfigError(f"학습률과 weight decay는 음수일 수 없습니다: {self.base_lr}, {self.weight_decay}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum은 [0,1) 범위여야 합니다: {self.momentum}")
        if self.power <= 0:
            raise ConfigError(f"power는 양수여야 합니다: {self.power}")
        if self.batch < 1:
            raise ConfigError(f"batch는 1 이상이어야 합니다: {self.batch}")
        if not 0 <= self.loss_images <= self.batch:
            raise ConfigError(f"loss_images는 0..batch 범위여야 합니다: {self.loss_images}")
        if self.log_every < 1:
            raise ConfigError(f"log_every는 1 이상이어야 합니다: {self.log_every}")


@dataclass
class Stage1Config(TrainSchedule):
    pass


@dataclass
class Stage2Config(TrainSchedule):
    iters: int = 1500
    base_lr: float = 1e-4
    tau: float = 0.9
    q: float = 50.0
    sampler: str = "random"
    clusters: int = 3
    cache_pseudo_labels: bool = True

    def validate(self) -> None:
        super().validate()
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"stage2.tau는 (0,1] 범위여야 합니다: {self.tau}")
        if not 0.0 < self.q <= 100.0:
            raise ConfigError(f"stage2.q는 (0,100] 범위여야 합니다: {self.q}")
        if self.sampler not in SAMPLER_MODES:
            raise ConfigError(f"알 수 없는 샘플러 모드입니다: {self.sampler} (허용: {', '.join(SAMPLER_MODES)})")
        if self.clusters < 1:
            raise ConfigError(f"stage2.clusters는 1 이상이어야 합니다: {self.clusters}")


@dataclass
class EvalConfig:
    splits: List[str] = field(default_factory=list)
    batch: int = 16

    def __post_init__(self):
        if isinstance(self.splits, str):
            self.splits = [s for s in self.splits.split(",") if s]
        self.splits = list(self.splits or [])
        if self.batch < 1:
            raise ConfigError(f"eval.batch는 1 이상이어야 합니다: {self.batch}")


def _check_sites(model: SegNetConfig, injection: InjectionConfig) -> None:
    bad = [s for s in injection.sites if s > model.depth]
    if bad:
        raise ConfigError(f"주입 위치 {bad}가 블록 수({model.depth})를 넘습니다.")


def _canonical_hash(payload: Dict[str, Any]) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class ExperimentConfig:
    """Stage-I(소스 학습)와 평가에 쓰는 전체 설정"""

    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    model: SegNetConfig = field(default_factory=SegNetConfig)
    injection: InjectionConfig = field(default_factory=InjectionConfig)
    photometric: PhotometricConfig = field(default_factory=PhotometricConfig)
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        _check_sites(self.model, self.injection)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "ExperimentConfig":
        payload = {k: v for k, v in payload.items() if k not in TRACING_KEYS}
        unknown = sorted(set(payload) - {f.name for f in dataclasses.fields(cls)})
        if unknown:
            raise ConfigError(f"알 수 없는 최상위 설정 키입니다: {unknown}")
        return cls(
            seed=int(payload.get("seed", 0)),
            data=_build(DataConfig, payload.get("data"), "data"),
            model=_build(SegNetConfig, payload.get("model"), "model"),
            injection=_build(InjectionConfig, payload.get("injection"), "injection"),
            photometric=_build(PhotometricConfig, payload.get("photometric"), "photometric"),
            stage1=_build(Stage1Config, payload.get("stage1"), "stage1"),
            stage2=_build(Stage2Config, payload.get("stage2"), "stage2"),
            eval=_build(EvalConfig, payload.get("eval"), "eval"),
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        return _canonical_hash(self.to_dict())

    def adapt_view(self) -> "AdaptConfig":
        """적응 단계 스키마로 변환합니다 (stage1 섹션 제거)."""
        payload = self.to_dict()
        payload.pop("stage1")
        return AdaptConfig.from_dict(payload)


@dataclass
class AdaptConfig:
    """Stage-II(소스 없는 적응) 설정. 소스 데이터를 가리킬 수 있는 필드가 없습니다."""

    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    model: SegNetConfig = field(default_factory=SegNetConfig)
    injection: InjectionConfig = field(default_factory=InjectionConfig)
    photometric: PhotometricConfig = field(default_factory=PhotometricConfig)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        _check_sites(self.model, self.injection)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any], drop_stage1: bool = False) -> "AdaptConfig":
        payload = {k: v for k, v in payload.items() if k not in TRACING_KEYS}
        if drop_stage1 and "stage1" in payload:
            payload.pop("stage1")
            logger.info("[소스 없음] stage1 섹션은 적응 단계에서 사용하지 않습니다.")
        unknown = sorted(set(payload) - {f.name for f in dataclasses.fields(cls)})
        if unknown:
            raise ConfigError(f"적응 단계 설정에 허용되지 않는 키입니다: {unknown}")
        return cls(
            seed=int(payload.get("seed", 0)),
            data=_build(DataConfig, payload.get("data"), "data"),
            model=_build(SegNetConfig, payload.get("model"), "model"),
            injection=_build(InjectionConfig, payload.get("injection"), "injection"),
            photometric=_build(PhotometricConfig, payload.get("photometric"), "photometric"),
            stage2=_build(Stage2Config, payload.get("stage2"), "stage2"),
            eval=_build(EvalConfig, payload.get("eval"), "eval"),
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        return _canonical_hash(self.to_dict())


def resolve_config_dict(path: Optional[str] = None, overrides: Optional[Iterable[str]] = None) -> Dict[str, Any]:
    """기본 설정 위에 설정 파일과 --set 항목을 차례로 덮어씁니다.

    Raises:
        ConfigError: 파일 형식 또는 --set 형식 오류
        FileNotFoundError: 설정 파일이 없을 때
    """
    merged = default_config()
    try:
        if path:
            merged = deep_merge(merged, load_config(path))
        return apply_overrides(merged, overrides)
    except (ValueError, yaml.YAMLError) as e:
        raise ConfigError(str(e)) from e


def load_experiment(path: Optional[str] = None, overrides: Optional[Iterable[str]] = None) -> ExperimentConfig:
    return ExperimentConfig.from_dict(resolve_config_dict(path, overrides))


def load_adapt(path: Optional[str] = None, overrides: Optional[Iterable[str]] = None) -> AdaptConfig:
    return AdaptConfig.from_dict(resolve_config_dict(path, overrides), drop_stage1=True)


def parse_sites(value: Any) -> Tuple[int, ...]:
    """'1+2', 2, [1, 2] 형태의 주입 위치 표기를 튜플로 바꿉니다."""
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    try:
        return tuple(int(part) for part in str(value).split("+"))
    except ValueError as e:
        raise ConfigError(f"주입 위치 표기가 올바르지 않습니다: {value!r}") from e
