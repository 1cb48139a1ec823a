"""
pytest設定ファイル
pyproject.tomlでpythonpath = ["src"]を設定済み
"""

from pathlib import Path

import pytest


@pytest.fixture(autouse=True)
def isolated_logs(tmp_path, monkeypatch):
    """テスト中のログ出力先を一時ディレクトリにする"""
    logs = tmp_path / "logs"
    monkeypatch.setattr("utils.logger.get_logs_path", lambda: logs)
    monkeypatch.setattr("utils.logger.AppLogger.min_level", "DEBUG")
    return logs


@pytest.fixture
def fixtures_path() -> Path:
    """tests/fixtures のパス"""
    return Path(__file__).parent / "tests" / "fixtures"
