"""웹 애플리케이션 모듈"""
