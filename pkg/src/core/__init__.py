"""핵심 수치 연산 모듈"""
