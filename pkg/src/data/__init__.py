"""데이터 생성, manifest, 임베딩, 군집화, 샘플링"""
