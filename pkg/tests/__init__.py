"""테스트 모듈"""
