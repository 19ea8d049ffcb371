"""kgchain - 무질서 비조화 Klein-Gordon 사슬 실험실"""

__version__ = "0.3.0"
