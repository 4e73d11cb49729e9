"""
SF-OCDA 툴킷 - 메인 실행 파일

이 파일은 프로젝트의 다양한 기능을 실행할 수 있는 통합 진입점입니다.
명령 뒤의 인자는 해당 스크립트에 그대로 전달되고, 스크립트의 종료 코드를 그대로 돌려줍니다.
"""

import os
import subprocess
import sys

# 프로젝트 루트를 Python 경로에 추가 (모든 스크립트에서 공통 사용)
PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, PROJECT_ROOT)

# 명령어 → (스크립트, 설명)
COMMANDS = {
    "gen-data": ("scripts/gen_data.py", "합성 다중 도메인 데이터셋 생성"),
    "train-source": ("scripts/train_source.py", "Stage-I 소스 모델 학습"),
    "adapt-target": ("scripts/adapt_target.py", "Stage-II 소스 없는 대상 적응"),
    "evaluate": ("scripts/evaluate.py", "체크포인트 mIoU 평가"),
    "stylize": ("scripts/stylize.py", "이미지 수준 패치 스타일 교환"),
    "style-embed": ("scripts/style_embed.py", "스타일 임베딩 CSV 내보내기 / 군집화"),
    "sweep": ("scripts/sweep.py", "하이퍼파라미터 민감도 스윕"),
}


def run_script(script: str, args: list) -> int:
    """스크립트를 현재 인터프리터로 실행하고 종료 코드를 반환합니다."""
    command = [sys.executable, os.path.join(PROJECT_ROOT, script), *args]
    return subprocess.run(command).returncode


def run_streamlit_app() -> int:
    """Streamlit 웹 애플리케이션을 실행합니다."""
    print("SF-OCDA 뷰어를 시작합니다...")
    # Streamlit 앱은 src/web/app.py에 있습니다.
    command = [
        sys.executable, "-m", "streamlit", "run", os.path.join(PROJECT_ROOT, "src/web/app.py"),
        "--server.port", "8000",
        "--server.address", "localhost",
    ]
    return subprocess.run(command).returncode


def run_tests(args: list) -> int:
    """pytest로 테스트를 실행합니다. 느린 재현 테스트는 SFOCDA_RUN_SLOW=1일 때만 실행됩니다."""
    print("테스트를 실행합니다...")
    command = [sys.executable, "-m", "pytest", os.path.join(PROJECT_ROOT, "tests"), *args]
    return subprocess.run(command).returncode


def print_usage() -> None:
    print("SF-OCDA 툴킷 메인 진입점")
    print("사용 가능한 명령어:")
    for name, (_, description) in COMMANDS.items():
        print(f"  - {name}: {description}")
    print("  - app: Streamlit 뷰어 실행")
    print("  - test: 테스트 실행")
    print("\n예시: python main.py train-source --config config/config.yaml --out runs/stage1")


if __name__ == "__main__":
    if len(sys.argv) < 2:
        print_usage()
        print("명령어를 입력해주세요.")
        sys.exit(1)

    command, rest = sys.argv[1], sys.argv[2:]
    if command in COMMANDS:
        sys.exit(run_script(COMMANDS[command][0], rest))
    elif command == "app":
        sys.exit(run_streamlit_app())
    elif command == "test":
        sys.exit(run_tests(rest))
    else:
        print_usage()
        print(f"알 수 없는 명령어: {command}")
        sys.exit(1)
