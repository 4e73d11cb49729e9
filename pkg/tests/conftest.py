"""
공용 pytest 픽스처

작은 합성 데이터셋(16x16, 도메인별 train 6 / test 3)과 작은 네트워크 설정을 제공합니다.
"""

import os
import sys

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest

from src.data.synthetic import SceneSpec, generate_domains
from tests.helpers import tiny_config_dict

TINY_SIZE = 16


@pytest.fixture(scope="session")
def tiny_spec() -> SceneSpec:
    return SceneSpec(size=TINY_SIZE)


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory, tiny_spec):
    """세션 전체에서 공유하는 읽기 전용 소형 데이터셋 (manifest 반환)"""
    root = tmp_path_factory.mktemp("tiny_data")
    return generate_domains(tiny_spec, root, seed=7, train_per_domain=6, test_per_domain=3, workers=2)


@pytest.fixture
def tiny_cfg(tiny_data):
    return lambda **sections: tiny_config_dict(tiny_data.root, **sections)
