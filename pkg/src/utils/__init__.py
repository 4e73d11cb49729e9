"""유틸리티 함수들"""
