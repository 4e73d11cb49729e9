"""MPT 의사 라벨 생성 테스트"""

import numpy as np
import pytest

from src.core.pseudo_label import (
    ClassThresholds,
    PseudoLabelMap,
    ThresholdAccumulator,
    assign_pseudo_labels,
    mpt_thresholds,
    percentile_index,
)
from src.core.rng import Rng
from src.core.segnet import IGNORE
from src.utils.errors import ConfigError, ContractError, ShapeError

TAUS = (0.5, 0.9, 1.0)
QS = (10, 50, 100)


def _random_maps(rng, n, c, size=4):
    """날카로운 맵, 흐릿한 맵, 완전히 균등한 픽셀이 섞인 확률 맵 [n,c,size,size]"""
    logits = rng.normal(size=(n, c, size, size)) * rng.uniform(0.5, 8.0, size=(n, 1, 1, 1))
    logits[:, :, 0, 0] = 0.0
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _oracle(probs, tau, q):
    """정렬 기반 독립 구현: (임계값 리스트, 라벨 배열)"""
    n, c, h, w = probs.shape
    per_class = [[] for _ in range(c)]
    best = np.zeros((n, h, w), dtype=np.int64)
    conf = np.zeros((n, h, w))
    for i in range(n):
        for y in range(h):
            for x in range(w):
                column = [float(probs[i, k, y, x]) for k in range(c)]
                k_best = column.index(max(column))
                best[i, y, x] = k_best
                conf[i, y, x] = column[k_best]
                per_class[k_best].append(column[k_best])
    thresholds = []
    for values in per_class:
        if not values:
            thresholds.append(tau)
            continue
        ordered = sorted(values, reverse=True)
        idx = max(0, (len(ordered) * q + 99) // 100 - 1)
        thresholds.append(min(tau, ordered[idx]))
    labels = np.full((n, h, w), IGNORE, dtype=np.uint8)
    for i in range(n):
        for y in range(h):
            for x in range(w):
                k = best[i, y, x]
                p = conf[i, y, x]
                if p * c > 1.0 + 1e-6 and p >= thresholds[k]:
                    labels[i, y, x] = k
    return thresholds, labels


def test_matches_brute_force_oracle():
    """(τ, q) 격자 전체에서 임계값과 할당이 정렬 기반 구현과 정확히 일치합니다 (총 10⁴개 이상의 맵)"""
    rng = np.random.default_rng(0)
    for trial in range(40):
        c = int(rng.integers(2, 7))
        probs = _random_maps(rng, 28, c)
        for tau in TAUS:
            for q in QS:
                th = mpt_thresholds(probs, tau=tau, q=q)
                expected_th, expected_labels = _oracle(probs, tau, q)
                np.testing.assert_array_equal(th.thresholds, np.array(expected_th))
                np.testing.assert_array_equal(assign_pseudo_labels(probs, th).labels, expected_labels)


def test_coverage_monotone_in_q_and_tau():
    """q가 커질수록, τ가 작아질수록 할당 비율은 줄지 않습니다"""
    probs = _random_maps(np.random.default_rng(1), 20, 5, size=6)
    coverage = {
        (tau, q): assign_pseudo_labels(probs, mpt_thresholds(probs, tau=tau, q=q)).coverage
        for tau in TAUS
        for q in QS
    }
    for tau in TAUS:
        assert coverage[(tau, 10)] <= coverage[(tau, 50)] <= coverage[(tau, 100)]
    for q in QS:
        assert coverage[(1.0, q)] <= coverage[(0.9, q)] <= coverage[(0.5, q)]


def test_thresholds_never_exceed_tau():
    probs = _random_maps(np.random.default_rng(2), 10, 4)
    for tau in TAUS:
        th = mpt_thresholds(probs, tau=tau, q=100)
        assert np.all(th.thresholds <= tau)


def test_q100_tau1_labels_every_dominant_pixel():
    """q=100, τ=1이면 지배 클래스가 있는 모든 픽셀이 할당됩니다"""
    probs = _random_maps(np.random.default_rng(3), 6, 3)
    labels = assign_pseudo_labels(probs, mpt_thresholds(probs, tau=1.0, q=100)).labels
    assert np.all(labels[:, 0, 0] == IGNORE)
    mask = np.ones(labels.shape, bool)
    mask[:, 0, 0] = False
    np.testing.assert_array_equal(labels[mask], probs.argmax(axis=1)[mask])


def test_diffuse_predictions_get_no_labels():
    """모든 픽셀이 균등 분포(1/C)이면 τ와 무관하게 할당 비율 0"""
    probs = np.full((2, 4, 4, 4), 0.25)
    for tau in TAUS:
        result = assign_pseudo_labels(probs, mpt_thresholds(probs, tau=tau, q=100))
        assert result.coverage == 0.0
        assert np.all(result.labels == IGNORE)


def test_class_without_pixels_uses_tau():
    probs = np.zeros((1, 3, 2, 2))
    probs[:, 0] = 0.8
    probs[:, 1] = 0.2
    th = mpt_thresholds(probs, tau=0.9, q=50)
    assert th.thresholds[0] == pytest.approx(0.8)
    assert th.thresholds[1] == 0.9 and th.thresholds[2] == 0.9


@pytest.mark.parametrize("m,q,expected", [(1, 10, 0), (10, 10, 0), (10, 50, 4), (3, 50, 1), (10, 100, 9), (7, 33.3, 2)])
def test_percentile_index(m, q, expected):
    assert percentile_index(m, q) == expected


def test_reservoir_is_capped():
    """저장소 상한을 넘으면 표집으로 대체되고 본 픽셀 수는 모두 셉니다"""
    acc = ThresholdAccumulator(2, cap=10, rng=Rng(0))
    probs = _random_maps(np.random.default_rng(4), 5, 2)
    acc.add(probs)
    acc.add(probs)
    assert all(res.size <= 10 for res in acc.reservoirs)
    assert acc.seen.sum() == 2 * 5 * 16
    assert all(res.dtype == np.float64 for res in acc.reservoirs)
    th = acc.finalize(0.9, 50)
    assert np.all(th.thresholds <= 0.9)


def test_empty_accumulator_raises():
    with pytest.raises(ContractError):
        ThresholdAccumulator(3).finalize(0.9, 50)
    with pytest.raises(ContractError):
        mpt_thresholds(iter([]), tau=0.9, q=50)


@pytest.mark.parametrize("tau,q", [(0.0, 50), (1.1, 50), (0.9, 0), (0.9, 101)])
def test_parameter_ranges(tau, q):
    with pytest.raises(ConfigError):
        mpt_thresholds(np.full((1, 2, 2, 2), 0.5), tau=tau, q=q)


def test_threshold_count_must_match_classes():
    th = ClassThresholds(np.array([0.5, 0.5]), 0.9, 50)
    with pytest.raises(ShapeError):
        assign_pseudo_labels(np.full((1, 3, 2, 2), 1 / 3), th)


def test_thresholds_json_roundtrip():
    th = ClassThresholds(np.array([0.4, 0.75, 0.9]), 0.9, 50.0)
    back = ClassThresholds.from_json(th.to_json())
    np.testing.assert_array_equal(back.thresholds, th.thresholds)
    assert (back.tau, back.q) == (0.9, 50.0)


def test_class_coverage():
    labels = np.array([[[0, 1], [IGNORE, 1]]], dtype=np.uint8)
    pl = PseudoLabelMap(labels)
    assert pl.coverage == 0.75
    np.testing.assert_allclose(pl.class_coverage(3), [0.25, 0.5, 0.0])
