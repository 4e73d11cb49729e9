"""설정 관리 모듈"""
