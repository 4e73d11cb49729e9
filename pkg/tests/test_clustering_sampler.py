"""잠재 도메인 군집화, 샘플러, 스타일 임베딩 테스트"""

import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from src.core.rng import Rng
from src.core.segnet import SegNet, SegNetConfig
from src.core.style_aug import PatchGrid
from src.data.clustering import cluster_latent_domains, cluster_sizes, oracle_agreement
from src.data.dataset import DomainView
from src.data.sampler import BalancedSampler, UniformSampler, balanced_sampler
from src.data.style_embed import embed_view, extract_style_embedding, read_embeddings_csv, write_embeddings_csv
from src.pipeline.stylize import stylize
from src.utils.errors import ConfigError


def _blobs(seed=0, per=30, centers=((0, 0), (5, 5), (0, 8))):
    rng = np.random.default_rng(seed)
    points = [rng.normal(loc=c, scale=0.3, size=(per, 2)) for c in centers]
    tags = np.repeat(np.arange(len(centers)), per)
    return np.concatenate(points), tags


def test_well_separated_clusters_match_tags():
    X, tags = _blobs()
    assignments = cluster_latent_domains(X, 3, seed=0)
    assert oracle_agreement(assignments, tags) > 0.9
    assert sorted(cluster_sizes(assignments, 3).tolist()) == [30, 30, 30]


def test_k1_is_single_cluster():
    X, _ = _blobs()
    np.testing.assert_array_equal(cluster_latent_domains(X, 1, seed=0), 0)


def test_duplicate_point_clouds():
    """완전히 겹친 두 점 구름은 k=2에서 각각 한 군집이 됩니다"""
    X = np.concatenate([np.zeros((10, 3)), np.ones((10, 3))])
    assignments = cluster_latent_domains(X, 2, seed=1)
    assert len(set(assignments[:10].tolist())) == 1
    assert len(set(assignments[10:].tolist())) == 1
    assert assignments[0] != assignments[-1]


def test_all_identical_points_terminate():
    """모든 점이 같아도 종료합니다 (구분되는 군집 수 부족은 경고만 남김)"""
    assignments = cluster_latent_domains(np.ones((6, 2)), 3, seed=0)
    assert assignments.shape == (6,)


def test_clustering_is_seeded():
    X, _ = _blobs(seed=3)
    np.testing.assert_array_equal(cluster_latent_domains(X, 3, seed=5), cluster_latent_domains(X, 3, seed=5))


def test_clustering_errors():
    with pytest.raises(ConfigError):
        cluster_latent_domains(np.zeros((2, 2)), 3, seed=0)
    with pytest.raises(ConfigError):
        cluster_latent_domains(np.zeros((5, 2)), 0, seed=0)
    with pytest.raises(ConfigError):
        cluster_latent_domains(np.zeros(5), 2, seed=0)


def test_separated_partition_does_not_depend_on_seed():
    """잘 분리된 데이터에서는 seed가 달라도 분할 자체는 같습니다 (군집 번호만 다를 수 있음)"""
    X, tags = _blobs(seed=4)
    a = cluster_latent_domains(X, 3, seed=0)
    b = cluster_latent_domains(X, 3, seed=17)
    assert oracle_agreement(a, b, log=False) == pytest.approx(1.0)
    assert oracle_agreement(a, tags, log=False) == pytest.approx(1.0)


def test_clustering_logs_degenerate_input(caplog):
    with caplog.at_level("WARNING", logger="src.data.clustering"):
        cluster_latent_domains(np.ones((6, 2)), 3, seed=0)
    assert any("[군집화]" in r.getMessage() for r in caplog.records)


def test_balanced_batches_cover_every_domain():
    """3개 도메인, B=3 → 모든 배치가 도메인별 1개"""
    ids = np.array([0] * 10 + [1] * 3 + [2] * 7)
    sampler = balanced_sampler(ids, 3, Rng(0))
    for _ in range(50):
        batch = sampler.next_batch()
        assert sorted(ids[batch].tolist()) == [0, 1, 2]


def test_balanced_batches_with_extra_slots():
    ids = np.array([0] * 10 + [1] * 3 + [2] * 7)
    sampler = BalancedSampler(ids, 5, Rng(1))
    for _, batch in zip(range(50), sampler):
        assert len(batch) == 5
        assert set(ids[batch].tolist()) == {0, 1, 2}


def test_balanced_within_domain_epochs():
    """도메인 안에서는 에폭마다 모든 샘플을 한 번씩 돕니다"""
    ids = np.array([0] * 4 + [1] * 4)
    sampler = BalancedSampler(ids, 2, Rng(2))
    drawn = np.concatenate([sampler.next_batch() for _ in range(4)])
    assert sorted(drawn.tolist()) == list(range(8))


def test_balanced_rejects_small_batch():
    with pytest.raises(ConfigError):
        BalancedSampler(np.array([0, 1, 2]), 2, Rng(0))


def test_same_seed_same_stream():
    ids = np.array([0, 0, 1, 1, 2, 2, 2])
    a = BalancedSampler(ids, 4, Rng(9))
    b = BalancedSampler(ids, 4, Rng(9))
    for _ in range(20):
        np.testing.assert_array_equal(a.next_batch(), b.next_batch())


def test_uniform_sampler_proportional_frequencies():
    """균등 샘플러는 긴 실행에서 도메인 크기에 비례해 뽑습니다 (±2%)"""
    ids = np.array([0] * 50 + [1] * 30 + [2] * 20)
    sampler = UniformSampler(len(ids), 10, Rng(3))
    drawn = np.concatenate([sampler.next_batch() for _ in range(10_000)])
    freq = np.bincount(ids[drawn], minlength=3) / drawn.size
    np.testing.assert_allclose(freq, [0.5, 0.3, 0.2], atol=0.02)


def test_style_embedding_shape_and_determinism():
    model = SegNet(SegNetConfig(widths=(4, 8)), rng=Rng(0))
    img = np.random.default_rng(0).random((2, 3, 8, 8)).astype(np.float32)
    a = extract_style_embedding(model, img)
    b = extract_style_embedding(model, img.copy())
    assert a.shape == (2, 8)
    assert a.dtype == np.float64
    np.testing.assert_array_equal(a, b)
    assert np.all(np.isfinite(a))


def test_style_embedding_changes_with_style(tiny_data):
    """이미지 수준 스타일 교환 후에는 임베딩이 달라집니다"""
    model = SegNet(SegNetConfig(widths=(4, 8)), rng=Rng(1))
    view = DomainView(tiny_data, ["source", "compound"], split="test")
    images = np.stack([view.load_image(0), view.load_image(len(view) - 1)])
    stylized, _ = stylize(images, PatchGrid(2, 2), "inter", seed=0)
    before = extract_style_embedding(model, images)
    after = extract_style_embedding(model, stylized.astype(np.float32))
    assert not np.allclose(np.linalg.norm(before, axis=1), np.linalg.norm(after, axis=1))


def test_embed_view_and_csv(tmp_path, tiny_data):
    model = SegNet(SegNetConfig(widths=(4, 8)), rng=Rng(2))
    view = DomainView.for_adaptation(tiny_data, "test")
    paths, domains, E = embed_view(model, view, batch_size=5)
    assert E.shape == (len(view), 8)
    assert set(domains) == {"rainy", "snowy", "cloudy", "overcast"}
    write_embeddings_csv(tmp_path / "emb.csv", paths, domains, E)
    paths2, domains2, E2 = read_embeddings_csv(tmp_path / "emb.csv")
    assert paths2 == paths and domains2 == domains
    np.testing.assert_allclose(E2, E, rtol=1e-6)


def test_style_embeddings_group_by_domain(tiny_data):
    """같은 도메인 샘플끼리의 평균 임베딩 거리가 다른 도메인 사이보다 짧습니다"""
    model = SegNet(SegNetConfig(widths=(4, 8)), rng=Rng(0))
    view = DomainView(tiny_data, ["source", "compound", "open"], split="test")
    images = np.stack([view.load_image(i) for i in range(len(view))])
    domains = np.array([s.domain for s in view.samples])
    dist = squareform(pdist(extract_style_embedding(model, images)))
    same = domains[:, None] == domains[None, :]
    off_diag = ~np.eye(len(domains), dtype=bool)
    intra = dist[same & off_diag].mean()
    inter = dist[~same].mean()
    assert len(set(domains.tolist())) == 5
    assert intra < inter
