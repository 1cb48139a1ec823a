"""
config モジュールのユニットテスト
"""

import json

import pytest

from config import (
    DEFAULT_SETTINGS,
    ensure_directories,
    get_base_path,
    get_cases_path,
    get_config_path,
    get_data_path,
    get_logs_path,
    get_output_path,
    get_placements_path,
    load_settings,
    validate_settings,
)


class TestPathFunctions:
    """パス関連関数のテスト"""

    def test_get_base_path(self):
        """ベースパスの取得"""
        base_path = get_base_path()

        assert base_path.exists()
        assert (base_path / "src").is_dir()

    def test_get_config_path(self):
        """設定パスの取得"""
        assert get_config_path().name == "config"

    def test_get_data_paths(self):
        """同梱データのパス"""
        assert get_data_path().name == "data"
        assert get_cases_path().parent == get_data_path()
        assert get_placements_path().parent == get_data_path()

    def test_bundled_cases_exist(self):
        """同梱ケースと配置が存在する"""
        for name in ("case5", "case14", "case30"):
            assert (get_cases_path() / f"{name}.m").is_file()
            assert (get_placements_path() / f"{name}.txt").is_file()

    def test_get_logs_path(self):
        """ログパスの取得"""
        assert "logs" in str(get_logs_path())

    def test_relative_output_dir(self, tmp_path, monkeypatch):
        """相対パスの output_dir はリポジトリ基準で解決される"""
        monkeypatch.setattr("config.get_config_path", lambda: tmp_path)
        (tmp_path / "settings.json").write_text(json.dumps({"output_dir": "results"}))

        assert get_output_path() == get_base_path() / "results"

    def test_absolute_output_dir(self, tmp_path, monkeypatch):
        """絶対パスの output_dir はそのまま使われる"""
        monkeypatch.setattr("config.get_config_path", lambda: tmp_path)
        target = tmp_path / "out"
        (tmp_path / "settings.json").write_text(json.dumps({"output_dir": str(target)}))

        assert get_output_path() == target


class TestLoadSettings:
    """load_settings関数のテスト"""

    def test_load_default_settings(self, tmp_path, monkeypatch):
        """デフォルト設定の読み込み（ファイルが存在しない場合）"""
        monkeypatch.setattr("config.get_config_path", lambda: tmp_path)

        settings = load_settings()

        assert settings == DEFAULT_SETTINGS
        assert settings["pf_tol"] == 1e-8
        assert settings["glfp_max_dim"] == 24

    def test_load_existing_settings(self, tmp_path, monkeypatch):
        """既存設定ファイルの読み込み（不足項目はデフォルトで補完）"""
        (tmp_path / "settings.json").write_text(json.dumps({"pf_max_iter": 50, "glfp_tol": 1e-6}))
        monkeypatch.setattr("config.get_config_path", lambda: tmp_path)

        settings = load_settings()

        assert settings["pf_max_iter"] == 50
        assert settings["glfp_tol"] == 1e-6
        assert settings["interval_tol"] == DEFAULT_SETTINGS["interval_tol"]

    def test_load_invalid_json(self, tmp_path, monkeypatch):
        """不正なJSONの場合はデフォルト設定"""
        (tmp_path / "settings.json").write_text("{ invalid json }")
        monkeypatch.setattr("config.get_config_path", lambda: tmp_path)

        assert load_settings() == DEFAULT_SETTINGS

    def test_load_returns_copy(self, tmp_path, monkeypatch):
        """返した辞書を書き換えても既定値は変わらない"""
        monkeypatch.setattr("config.get_config_path", lambda: tmp_path)

        settings = load_settings()
        settings["pf_tol"] = 1.0

        assert DEFAULT_SETTINGS["pf_tol"] == 1e-8


class TestValidateSettings:
    """validate_settings関数のテスト"""

    def test_defaults_are_valid(self):
        """既定値は有効"""
        is_valid, errors = validate_settings(dict(DEFAULT_SETTINGS))

        assert is_valid is True
        assert errors == []

    @pytest.mark.parametrize("key", ["pf_tol", "interval_tol", "theta_tol", "glfp_tol", "sigma_floor"])
    def test_non_positive_tolerance(self, key):
        """許容値が0以下は無効"""
        settings = {**DEFAULT_SETTINGS, key: 0}

        is_valid, errors = validate_settings(settings)

        assert is_valid is False
        assert any(key in e for e in errors)

    def test_bool_is_not_int(self):
        """真偽値は整数として扱わない"""
        is_valid, errors = validate_settings({**DEFAULT_SETTINGS, "pf_max_iter": True})

        assert is_valid is False
        assert any("pf_max_iter" in e for e in errors)

    def test_float_iteration_count(self):
        """反復回数に小数は無効"""
        is_valid, _ = validate_settings({**DEFAULT_SETTINGS, "max_root_iter": 2.5})

        assert is_valid is False

    @pytest.mark.parametrize("fraction", [0, 1.5, -0.1])
    def test_sigma_fraction_range(self, fraction):
        """摂動の標準偏差比は (0, 1]"""
        is_valid, _ = validate_settings({**DEFAULT_SETTINGS, "perturbation_sigma_fraction": fraction})

        assert is_valid is False

    def test_multiple_errors(self):
        """複数の誤りはすべて報告される"""
        settings = {**DEFAULT_SETTINGS, "pf_tol": -1, "glfp_max_dim": 0, "output_dir": 3}

        is_valid, errors = validate_settings(settings)

        assert is_valid is False
        assert len(errors) == 3


class TestEnsureDirectories:
    """ensure_directories関数のテスト"""

    def test_creates_directories(self, tmp_path, monkeypatch):
        """設定・ログディレクトリを作成する"""
        monkeypatch.setattr("config.get_config_path", lambda: tmp_path / "config")
        monkeypatch.setattr("config.get_logs_path", lambda: tmp_path / "logs")

        ensure_directories()

        assert (tmp_path / "config").is_dir()
        assert (tmp_path / "logs").is_dir()
