"""기업용 AI 가드레일 시스템 - 메인 패키지"""
