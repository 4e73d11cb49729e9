"""학습/적응/평가 파이프라인"""
