"""분할 네트워크, SGD, 체크포인트 테스트"""

import numpy as np
import pytest

from src.core.rng import Rng
from src.core.segnet import (
    IGNORE,
    OptimState,
    SegNet,
    SegNetConfig,
    checkpoint_hash,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    skip_step,
    source_loss,
)
from src.core.style_aug import InjectionConfig
from src.core.tensor import Tensor
from src.utils.errors import ConfigError, ContractError, ShapeError

SMALL = SegNetConfig(widths=(4, 8))


def _batch(n=2, size=8, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.random((n, 3, size, size)).astype(np.float32)
    labels = rng.integers(0, 6, size=(n, size, size)).astype(np.uint8)
    return images, labels


def test_forward_shape_and_determinism():
    """로짓은 입력 해상도이며 같은 seed의 모델은 같은 출력을 냅니다"""
    images, _ = _batch()
    a = SegNet(SMALL, rng=Rng(1)).forward(images)
    b = SegNet(SMALL, rng=Rng(1)).forward(images)
    assert a.shape == (2, 6, 8, 8)
    np.testing.assert_array_equal(a.data, b.data)


def test_forward_rejects_bad_input():
    model = SegNet(SMALL)
    with pytest.raises(ShapeError):
        model.forward(np.zeros((1, 3, 6, 8), np.float32))
    with pytest.raises(ShapeError):
        model.forward(np.zeros((1, 1, 8, 8), np.float32))
    with pytest.raises(ContractError):
        model.forward(np.zeros((1, 3, 8, 8), np.float32), mode="test")


def test_eval_mode_ignores_injection():
    """평가 모드에서는 β=1 주입이 붙어 있어도 출력이 바뀌지 않습니다"""
    images, _ = _batch()
    plain = SegNet(SMALL, rng=Rng(2))
    injected = SegNet(SMALL, injection=InjectionConfig(beta=1.0, sites=(0, 1, 2), patches=4), rng=Rng(2))
    np.testing.assert_array_equal(plain.forward(images).data, injected.forward(images).data)
    train_out = injected.forward(images, mode="train", rng=Rng(3)).data
    assert not np.allclose(train_out, plain.forward(images).data)
    assert all(layer.fired for layer in injected.layers.values())


def test_train_mode_injection_needs_rng():
    images, _ = _batch()
    model = SegNet(SMALL, injection=InjectionConfig(beta=1.0, sites=(1,), patches=4))
    with pytest.raises(ContractError):
        model.forward(images, mode="train")


def test_attach_injection_rejects_deep_site():
    with pytest.raises(ConfigError):
        SegNet(SMALL, injection=InjectionConfig(sites=(3,)))


def test_attach_injection_rejects_grid_larger_than_feature_plane():
    """8x8 입력, 블록 2 사이트의 특징 평면은 4x4이므로 1x7 격자는 들어가지 않습니다"""
    model = SegNet(SMALL)
    assert model.site_plane(0, 8, 8) == (8, 8)
    assert model.site_plane(2, 8, 8) == (4, 4)
    with pytest.raises(ConfigError):
        model.attach_injection(InjectionConfig(sites=(2,), patches=7), input_size=(8, 8))
    model.attach_injection(InjectionConfig(sites=(2,), patches=4), input_size=(8, 8))
    assert set(model.layers) == {2}


def test_train_forward_rejects_grid_larger_than_feature_plane():
    images, _ = _batch(size=8)
    model = SegNet(SMALL, injection=InjectionConfig(beta=1.0, sites=(2,), patches=7))
    with pytest.raises(ConfigError):
        model.forward(images, mode="train", rng=Rng(0))
    assert model.forward(images).shape[2:] == (8, 8)


def test_features_shape():
    images, _ = _batch()
    model = SegNet(SMALL)
    assert model.features(images, 1).shape == (2, 4, 8, 8)
    assert model.features(images, 2).shape == (2, 8, 4, 4)
    with pytest.raises(ContractError):
        model.features(images, 3)


def test_poly_lr_schedule():
    opt = OptimState(base_lr=0.01, power=0.9, total_iters=100)
    assert opt.lr(0) == pytest.approx(0.01)
    assert opt.lr(50) == pytest.approx(0.01 * 0.5 ** 0.9)
    assert opt.lr(100) == 0.0
    assert opt.lr(150) == 0.0
    assert OptimState(total_iters=0).lr(0) == 0.0


def test_sgd_step_matches_formula():
    """v ← m·v + g + wd·p, p ← p − lr·v"""
    images, labels = _batch()
    model = SegNet(SMALL, rng=Rng(4))
    before = {k: v.data.copy() for k, v in model.named_parameters()}
    source_loss(model.forward(images), labels).backward()
    grads = {k: v.grad.copy() for k, v in model.named_parameters()}
    opt = OptimState(base_lr=0.1, momentum=0.9, weight_decay=1e-3, total_iters=10)
    sgd_step(model, opt)
    assert opt.iter == 1
    for name, p in model.named_parameters():
        v = grads[name] + 1e-3 * before[name]
        np.testing.assert_allclose(p.data, before[name] - 0.1 * v, rtol=1e-5, atol=1e-7)
        assert p.grad is None


def test_training_reduces_loss():
    images, labels = _batch(seed=1)
    model = SegNet(SMALL, rng=Rng(5))
    opt = OptimState(base_lr=0.01, weight_decay=0.0, total_iters=40)
    first = None
    for _ in range(40):
        loss = source_loss(model.forward(images), labels)
        first = loss.item() if first is None else first
        loss.backward()
        sgd_step(model, opt)
    assert source_loss(model.forward(images), labels).item() < first


def test_sgd_requires_gradients():
    with pytest.raises(ContractError):
        sgd_step(SegNet(SMALL), OptimState())


def test_empty_mask_step_leaves_parameters():
    """라벨이 모두 ignore인 배치는 파라미터를 바꾸지 않고 반복만 진행합니다"""
    images, _ = _batch()
    model = SegNet(SMALL, rng=Rng(6))
    before = {k: v.data.copy() for k, v in model.named_parameters()}
    loss = source_loss(model.forward(images), np.full((2, 8, 8), IGNORE, np.uint8))
    assert loss.item() == 0.0
    opt = OptimState()
    skip_step(model, opt)
    assert opt.iter == 1
    for name, p in model.named_parameters():
        np.testing.assert_array_equal(p.data, before[name])


def test_clone_is_independent():
    model = SegNet(SMALL, injection=InjectionConfig(sites=(1,)), rng=Rng(7))
    twin = model.clone()
    twin.params["head.bias"].data += 1.0
    assert not np.array_equal(twin.params["head.bias"].data, model.params["head.bias"].data)
    assert set(twin.layers) == {1}


def test_checkpoint_roundtrip_and_hash(tmp_path):
    """저장한 체크포인트를 다시 읽으면 같은 출력, 같은 해시"""
    images, _ = _batch()
    model = SegNet(SMALL, rng=Rng(8))
    save_checkpoint(model, tmp_path / "a")
    save_checkpoint(model, tmp_path / "b")
    loaded = load_checkpoint(tmp_path / "a")
    np.testing.assert_array_equal(loaded.forward(images).data, model.forward(images).data)
    assert loaded.cfg == model.cfg
    assert checkpoint_hash(tmp_path / "a") == checkpoint_hash(tmp_path / "b")
    loaded.params["head.bias"] = Tensor(loaded.params["head.bias"].data + 1, requires_grad=True)
    save_checkpoint(loaded, tmp_path / "c")
    assert checkpoint_hash(tmp_path / "c") != checkpoint_hash(tmp_path / "a")


def test_load_missing_checkpoint(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "none")
