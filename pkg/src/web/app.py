"""
🎨 SF-OCDA 뷰어

생성된 도메인 샘플을 둘러보고, 이미지 수준 CPSS를 격자/연산자/seed를 바꿔 가며 실행하고,
실행 디렉터리의 지표 파일을 확인하는 Streamlit 앱입니다.
"""

import os
import subprocess
import sys

# 프로젝트 루트를 Python 경로에 추가
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
sys.path.insert(0, PROJECT_ROOT)

import numpy as np
import pandas as pd
import streamlit as st

from config.config_loader import CONFIG
from src.core.sfot import read_tensor
from src.core.style_aug import PatchGrid
from src.data.dataset import Manifest
from src.data.export import image_to_pil, label_to_pil
from src.pipeline.evaluate import METRICS_CSV, MetricsReport
from src.pipeline.stylize import STYLIZE_VARIANTS, stylize
from src.pipeline.sweep import SUMMARY_CSV


@st.cache_data
def load_manifest(root: str) -> Manifest:
    return Manifest.load(root)


def show_domains(manifest: Manifest) -> None:
    """도메인별 test 샘플 몇 장과 라벨을 나란히 보여줍니다."""
    per_domain = st.slider("도메인별 샘플 수", 1, 8, 4)
    show_labels = st.checkbox("라벨 표시", value=True)
    for domain in manifest.domains():
        samples = [s for s in manifest.samples if s.domain == domain and s.split == "test"][:per_domain]
        if not samples:
            continue
        st.subheader(f"{domain} ({samples[0].role})")
        cols = st.columns(len(samples))
        for col, s in zip(cols, samples):
            col.image(image_to_pil(read_tensor(manifest.root / s.image)), use_container_width=True)
            if show_labels and s.label is not None:
                col.image(label_to_pil(read_tensor(manifest.root / s.label)), use_container_width=True)


def show_stylize(manifest: Manifest) -> None:
    """도메인마다 한 장씩 골라 이미지 수준 스타일 교환을 실행합니다."""
    domains = st.multiselect("도메인", manifest.domains(), default=manifest.domains()[:2])
    c1, c2, c3, c4 = st.columns(4)
    grid_text = c1.text_input("격자 (HxW)", "2x4")
    variant = c2.selectbox("연산자", STYLIZE_VARIANTS, index=STYLIZE_VARIANTS.index("inter"))
    seed = int(c3.number_input("seed", min_value=0, value=0, step=1))
    identity = c4.checkbox("항등 순열", value=False)
    if not domains:
        st.info("도메인을 하나 이상 선택하세요.")
        return
    paths = []
    for domain in domains:
        sample = next(s for s in manifest.samples if s.domain == domain and s.split == "test")
        paths.append(manifest.root / sample.image)
    images = np.stack([read_tensor(p) for p in paths])
    try:
        out, stats = stylize(images, PatchGrid.parse(grid_text), variant, seed, identity)
    except Exception as e:
        st.error(f"스타일 변환 실패: {e}")
        return
    st.caption("위: 원본 / 아래: 변환 결과")
    cols = st.columns(len(paths))
    for col, before, after, domain in zip(cols, images, out, domains):
        col.image(image_to_pil(before), caption=domain, use_container_width=True)
        col.image(image_to_pil(after), use_container_width=True)
    with st.expander("기증 슬롯과 패치 통계"):
        st.json({"grid": stats["grid"], "donor_slots": stats["donor_slots"]})


def show_metrics(run_dir: str) -> None:
    """metrics.json / metrics.csv / sweep.csv를 표로 보여줍니다."""
    if os.path.exists(os.path.join(run_dir, SUMMARY_CSV)):
        st.subheader("스윕 요약")
        st.dataframe(pd.read_csv(os.path.join(run_dir, SUMMARY_CSV)))
    if not os.path.exists(os.path.join(run_dir, METRICS_CSV)):
        st.info("이 디렉터리에는 metrics 파일이 없습니다.")
        return
    report = MetricsReport.read(run_dir)
    c1, c2, c3 = st.columns(3)
    c1.metric("C (compound 평균)", f"{report.compound_avg:.4f}")
    c2.metric("C+O", f"{report.compound_open_avg:.4f}")
    c3.metric("open", f"{report.open_avg:.4f}")
    frame = pd.read_csv(os.path.join(run_dir, METRICS_CSV))
    st.dataframe(frame.pivot(index="class", columns="split", values="iou"))


def main():
    """메인 애플리케이션 함수"""
    st.set_page_config(page_title="SF-OCDA 뷰어", page_icon="🎨", layout="wide")
    st.title("🎨 SF-OCDA 뷰어")
    st.caption("소스 없는 open compound 도메인 적응 실험 도구")

    with st.sidebar:
        st.header("⚙️ 설정")
        data_root = st.text_input("데이터셋 루트", CONFIG.get("data", {}).get("root", "data/toy"))
        run_dir = st.text_input("실행 디렉터리", "runs/stage1")
        st.divider()
        st.header("🧪 데이터 생성")
        seed = int(st.number_input("생성 seed", min_value=0, value=0, step=1))
        if st.button("합성 데이터셋 생성", type="primary"):
            with st.spinner("데이터셋을 생성하는 중..."):
                command = [sys.executable, os.path.join(PROJECT_ROOT, "main.py"), "gen-data", "--out", data_root, "--seed", str(seed)]
                result = subprocess.run(command, capture_output=True, text=True, encoding="utf-8")
            if result.returncode == 0:
                st.sidebar.success("✅ 생성 완료!")
                load_manifest.clear()
            else:
                st.sidebar.error("❌ 생성 실패.")
                with st.sidebar.expander("오류 로그 보기"):
                    st.code(result.stderr)

    tab_domains, tab_stylize, tab_metrics = st.tabs(["도메인", "스타일 교환", "지표"])
    try:
        manifest = load_manifest(data_root)
    except (FileNotFoundError, ValueError) as e:
        manifest = None
        tab_domains.warning(f"데이터셋을 읽을 수 없습니다: {e}")
    if manifest is not None:
        with tab_domains:
            show_domains(manifest)
        with tab_stylize:
            show_stylize(manifest)
    with tab_metrics:
        show_metrics(run_dir)


if __name__ == "__main__":
    main()
