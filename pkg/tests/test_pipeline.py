"""Stage-I / Stage-II 파이프라인, 평가, 스타일 변환, 스윕, CLI 종료 코드 테스트"""

import argparse
import json
import re
import shutil

import numpy as np
import pytest

from src.core.photometric import PhotometricConfig
from src.core.rng import Rng
from src.core.segnet import IGNORE, SegNet, SegNetConfig, checkpoint_hash, load_checkpoint, save_checkpoint, source_loss
from src.core.sfot import read_tensor
from src.core.style_aug import PatchGrid
from src.core.tensor import Tensor
from src.data.dataset import DomainView
from src.data.pseudo_store import STORE_DIR
from src.data.synthetic import generate_domains
from src.pipeline.config import AdaptConfig, ExperimentConfig, Stage1Config
from src.pipeline.evaluate import METRICS_CSV, METRICS_JSON, RUN_INFO, MetricsReport, evaluate
from src.pipeline.stages import AUDIT_LOG, CHECKPOINT_DIR, RESOLVED_CONFIG, adapt_target, train_loop, train_source
from src.pipeline.stylize import stylize, stylize_files
from src.pipeline.sweep import RUNS_CSV, SUMMARY_CSV, apply_axis_value, sweep
from src.utils.cli import run_cli
from src.utils.errors import ConfigError, DataError
from tests.helpers import tiny_config_dict

TARGET_DOMAINS = ("rainy", "snowy", "cloudy", "overcast")


def _adapt_cfg(payload: dict) -> AdaptConfig:
    return AdaptConfig.from_dict(payload, drop_stage1=True)


@pytest.fixture(scope="module")
def source_run(tmp_path_factory, tiny_data):
    """모듈에서 공유하는 Stage-I 결과"""
    out = tmp_path_factory.mktemp("stage1")
    cfg = ExperimentConfig.from_dict(tiny_config_dict(tiny_data.root))
    return train_source(cfg, out), out


def test_stage1_outputs(source_run, tiny_data):
    result, out = source_run
    for name in (METRICS_CSV, METRICS_JSON, RUN_INFO, RESOLVED_CONFIG):
        assert (out / name).exists()
    assert (out / CHECKPOINT_DIR / "manifest.txt").exists()
    assert set(result.report.splits) == {"synthetic", *TARGET_DOMAINS}
    summary = json.loads((out / METRICS_JSON).read_text(encoding="utf-8"))
    assert set(summary) >= {"C", "C+O", "source", "splits", "config_hash"}
    assert "runtime_seconds" not in summary
    assert "runtime_seconds" in json.loads((out / RUN_INFO).read_text(encoding="utf-8"))
    back = MetricsReport.read(out)
    assert back.miou("rainy") == pytest.approx(result.report.miou("rainy"))


def test_domain_averages(source_run):
    report = source_run[0].report
    compound = [report.miou(d) for d in ("rainy", "snowy", "cloudy")]
    assert report.compound_avg == pytest.approx(np.mean(compound))
    assert report.compound_open_avg == pytest.approx(np.mean(compound + [report.miou("overcast")]))


def test_adapt_end_to_end_is_source_free(source_run, tiny_cfg, tmp_path):
    """적응 단계는 source 역할 파일을 하나도 열지 않고 대상 split만 평가합니다"""
    result, _ = source_run
    out = tmp_path / "stage2"
    adapted = adapt_target(_adapt_cfg(tiny_cfg()), result.checkpoint, out)

    assert set(adapted.report.splits) == set(TARGET_DOMAINS)
    for name in (METRICS_CSV, METRICS_JSON, RUN_INFO, AUDIT_LOG, RESOLVED_CONFIG):
        assert (out / name).exists()
    assert "stage1" not in json.loads((out / RESOLVED_CONFIG).read_text(encoding="utf-8"))

    entries = [json.loads(line) for line in (out / AUDIT_LOG).read_text(encoding="utf-8").splitlines()]
    assert entries
    assert {e["role"] for e in entries} <= {"compound", "open"}
    assert not any("/synthetic/" in e["path"].replace("\\", "/") for e in entries)
    assert adapted.audit.paths_for_role("source") == []

    assert adapted.pseudo_labels.labels.shape == (18, 16, 16)
    assert np.all(adapted.thresholds.thresholds <= 0.9)


def test_pseudo_label_cache_is_reused(source_run, tiny_cfg, tiny_data, tmp_path):
    result, _ = source_run
    cfg = _adapt_cfg(tiny_cfg(stage2={"q": 30}))
    first = adapt_target(cfg, result.checkpoint, tmp_path / "a")
    assert any((tiny_data.root / STORE_DIR).iterdir())
    second = adapt_target(cfg, result.checkpoint, tmp_path / "b")
    np.testing.assert_array_equal(first.pseudo_labels.labels, second.pseudo_labels.labels)
    np.testing.assert_array_equal(first.thresholds.thresholds, second.thresholds.thresholds)


def test_adapt_never_opens_planted_source_files(source_run, tiny_cfg, tiny_data, tmp_path):
    """소스 파일이 데이터 루트에 그대로 있어도 감사 로그에는 나타나지 않습니다"""
    source_files = [s.image for s in tiny_data.samples if s.role == "source"]
    assert source_files and all((tiny_data.root / p).exists() for p in source_files)
    adapted = adapt_target(_adapt_cfg(tiny_cfg(stage2={"sampler": "oracle"})), source_run[0].checkpoint, tmp_path)
    opened = {e.path for e in adapted.audit.entries}
    assert not opened & {str(tiny_data.root / p) for p in source_files}


def test_adapt_with_clustering_sampler(source_run, tiny_cfg, tmp_path):
    adapted = adapt_target(_adapt_cfg(tiny_cfg(stage2={"sampler": "clustering", "clusters": 3})), source_run[0].checkpoint, tmp_path)
    assert set(adapted.report.splits) == set(TARGET_DOMAINS)


def test_zero_iteration_adapt_matches_source_model(source_run, tiny_cfg, tmp_path):
    """반복 0회 적응은 Stage-I 모델과 같은 대상 split 지표를 냅니다"""
    result, _ = source_run
    adapted = adapt_target(_adapt_cfg(tiny_cfg(stage2={"iters": 0})), result.checkpoint, tmp_path)
    for domain in TARGET_DOMAINS:
        np.testing.assert_array_equal(adapted.report.splits[domain].iou, result.report.splits[domain].iou)
    assert checkpoint_hash(adapted.checkpoint) == checkpoint_hash(result.checkpoint)


def test_diffuse_source_model_leaves_parameters_unchanged(source_run, tiny_cfg, tmp_path):
    """헤드가 0이면 모든 픽셀이 균등 분포 → τ=1에서 의사 라벨 0개, 파라미터 불변"""
    model = load_checkpoint(source_run[0].checkpoint)
    for name in ("head.weight", "head.bias"):
        model.params[name] = Tensor(np.zeros_like(model.params[name].data), requires_grad=True)
    ckpt = save_checkpoint(model, tmp_path / "diffuse")
    cfg = _adapt_cfg(tiny_cfg(stage2={"tau": 1.0, "q": 100, "iters": 3}))
    adapted = adapt_target(cfg, ckpt, tmp_path / "out")
    assert adapted.pseudo_labels.coverage == 0.0
    for name, p in model.named_parameters():
        np.testing.assert_array_equal(adapted.model.params[name].data, p.data)


def test_runs_are_byte_deterministic(source_run, tiny_cfg, tmp_path):
    """같은 설정 두 번 실행 → metrics.csv / metrics.json 바이트 동일"""
    payload = tiny_cfg()
    a = train_source(ExperimentConfig.from_dict(payload), tmp_path / "s1")
    b = train_source(ExperimentConfig.from_dict(payload), tmp_path / "s2")
    for name in (METRICS_CSV, METRICS_JSON):
        assert (tmp_path / "s1" / name).read_bytes() == (tmp_path / "s2" / name).read_bytes()
    assert checkpoint_hash(a.checkpoint) == checkpoint_hash(b.checkpoint)

    adapt_payload = tiny_cfg(stage2={"cache_pseudo_labels": False})
    adapt_target(_adapt_cfg(adapt_payload), a.checkpoint, tmp_path / "t1")
    adapt_target(_adapt_cfg(adapt_payload), a.checkpoint, tmp_path / "t2")
    for name in (METRICS_CSV, METRICS_JSON):
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t2" / name).read_bytes()


def test_adapt_rejects_class_mismatch(source_run, tiny_cfg, tmp_path):
    cfg = _adapt_cfg(tiny_cfg(model={"num_classes": 5}))
    with pytest.raises(ConfigError):
        adapt_target(cfg, source_run[0].checkpoint, tmp_path)


def test_evaluate_does_not_modify_checkpoint(source_run, tiny_data, tmp_path):
    ckpt = source_run[0].checkpoint
    before = checkpoint_hash(ckpt)
    report = evaluate(ckpt, tiny_data.root, ["rainy", "overcast"], batch=8, out_dir=tmp_path)
    assert list(report.splits) == ["rainy", "overcast"]
    assert checkpoint_hash(ckpt) == before
    assert report.miou("rainy") == pytest.approx(source_run[0].report.miou("rainy"))
    assert (tmp_path / METRICS_CSV).exists()
    with pytest.raises(ConfigError):
        evaluate(ckpt, tiny_data.root, ["foggy"])


def test_stylize_identity_returns_input(tiny_data):
    view = DomainView(tiny_data, ["compound"], split="test")
    images, _ = view.load_batch(range(3), with_labels=False)
    out, stats = stylize(images, PatchGrid(2, 2), "inter", identity=True)
    np.testing.assert_array_equal(out, images.astype(np.float64))
    assert stats["donor_slots"] == list(range(12))


def test_stylize_inter_moves_patch_statistics(tiny_data):
    """출력 패치 k의 통계는 기증 슬롯 assignment[k]의 입력 통계와 같습니다"""
    view = DomainView(tiny_data, ["compound", "open"], split="test")
    images, _ = view.load_batch(range(4), with_labels=False)
    out, stats = stylize(images, PatchGrid(2, 2), "inter", seed=3)
    pre = np.asarray(stats["pre"]["mean"]).transpose(0, 2, 3, 1).reshape(-1, 3)
    post = np.asarray(stats["post"]["mean"]).transpose(0, 2, 3, 1).reshape(-1, 3)
    donors = np.asarray(stats["donor_slots"])
    np.testing.assert_allclose(post, pre[donors], atol=1e-6)
    assert out.shape == images.shape


def test_stylize_files_are_byte_deterministic(tiny_data, tmp_path):
    paths = [tiny_data.root / s.image for s in tiny_data.samples if s.split == "test"][:3]
    first = stylize_files(paths, tmp_path / "a", PatchGrid(2, 4), "inter", seed=1)
    second = stylize_files(paths, tmp_path / "b", PatchGrid(2, 4), "inter", seed=1)
    for x, y in zip(first, second):
        assert x.read_bytes() == y.read_bytes()
        assert read_tensor(x).shape == (3, 16, 16)
    assert (tmp_path / "a" / "stats.json").read_bytes() == (tmp_path / "b" / "stats.json").read_bytes()


def test_stylize_errors():
    images = np.zeros((1, 3, 8, 8))
    with pytest.raises(ConfigError):
        stylize(images, PatchGrid(2, 2), "swap")
    out, _ = stylize(images, PatchGrid(2, 2), "intra", seed=0)
    assert out.shape == images.shape


def test_sweep_single_point(tiny_cfg, tmp_path):
    summary = sweep(tiny_cfg(), "beta", ["0.5"], seeds=1, out_dir=tmp_path)
    assert len(summary) == 1
    assert summary.loc[0, "value"] == "0.5" and summary.loc[0, "runs"] == 1
    assert (tmp_path / RUNS_CSV).exists() and (tmp_path / SUMMARY_CSV).exists()


@pytest.mark.parametrize("axis,value", [("beta", "2"), ("patches", "-1"), ("variant", "swap"), ("block", "a"), ("photometric", "maybe")])
def test_sweep_rejects_bad_axis_values(tiny_cfg, axis, value):
    with pytest.raises(ConfigError):
        apply_axis_value(tiny_cfg(), axis, value)


def test_sweep_rejects_unknown_axis(tiny_cfg, tmp_path):
    with pytest.raises(ConfigError):
        sweep(tiny_cfg(), "lr", ["0.1"], seeds=1, out_dir=tmp_path)
    with pytest.raises(ConfigError):
        sweep(tiny_cfg(), "beta", ["0.5"], seeds=0, out_dir=tmp_path)


def test_axis_values_land_in_config(tiny_cfg):
    assert apply_axis_value(tiny_cfg(), "block", "1+2")["injection"]["sites"] == [1, 2]
    assert apply_axis_value(tiny_cfg(), "photometric", "off")["stage1"]["use_photometric"] is False
    assert apply_axis_value(tiny_cfg(), "patches", "8")["injection"]["patches"] == 8


def _raiser(exc):
    def main(_args):
        raise exc

    return main


@pytest.mark.parametrize(
    "exc,code",
    [(ConfigError("x"), 2), (DataError("x"), 3), (FileNotFoundError("x"), 3), (OSError("x"), 3)],
)
def test_cli_exit_codes(exc, code):
    assert run_cli(_raiser(exc), argparse.Namespace(log_level="WARNING")) == code


def test_cli_success_and_unexpected_errors():
    assert run_cli(lambda _args: None, argparse.Namespace(log_level="WARNING")) == 0
    with pytest.raises(KeyError):
        run_cli(_raiser(KeyError("x")), argparse.Namespace(log_level="WARNING"))


def test_full_chain_is_byte_deterministic(tiny_spec, tmp_path):
    """gen-data → train-source → adapt-target → evaluate 두 번 → 지표 파일 바이트 동일"""
    outputs = []
    for run in ("first", "second"):
        root = tmp_path / "data"
        if root.exists():
            shutil.rmtree(root)
        manifest = generate_domains(tiny_spec, root, seed=5, train_per_domain=4, test_per_domain=2)
        payload = tiny_config_dict(manifest.root)
        out = tmp_path / run
        stage1 = train_source(ExperimentConfig.from_dict(payload), out / "stage1")
        stage2 = adapt_target(_adapt_cfg(payload), stage1.checkpoint, out / "stage2")
        evaluate(stage2.checkpoint, manifest.root, out_dir=out / "eval")
        outputs.append(out)
    for stage in ("stage1", "stage2", "eval"):
        for name in (METRICS_CSV, METRICS_JSON):
            assert (outputs[0] / stage / name).read_bytes() == (outputs[1] / stage / name).read_bytes()


def test_logged_loss_averages_only_executed_steps(caplog):
    """손실 마스크가 빈 반복은 로그 평균의 분모에서 빠집니다"""
    rng = np.random.default_rng(0)
    images = rng.random((2, 3, 8, 8)).astype(np.float32)
    labels = np.stack([rng.integers(0, 6, size=(8, 8)), np.full((8, 8), IGNORE)]).astype(np.uint8)
    model = SegNet(SegNetConfig(widths=(4, 8)), rng=Rng(0))
    schedule = Stage1Config(iters=4, batch=1, log_every=4, use_cpss=False, use_photometric=False, base_lr=0.01)
    seen = []

    def recording_loss(logits, target):
        loss = source_loss(logits, target)
        seen.append(loss.item())
        return loss

    sampler = iter([np.array([0]), np.array([1]), np.array([1]), np.array([0])])
    with caplog.at_level("INFO", logger="src.pipeline.stages"):
        opt = train_loop(model, schedule, images, labels, sampler, PhotometricConfig(), Rng(1), recording_loss, "테스트")
    assert opt.iter == 4 and len(seen) == 2
    logged = [float(m.group(1)) for r in caplog.records if (m := re.search(r"loss=([0-9.]+)", r.getMessage()))]
    assert logged == [pytest.approx(np.mean(seen), abs=1e-4)]
