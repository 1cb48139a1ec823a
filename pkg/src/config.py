"""
設定・パス解決モジュール
リポジトリ内の設定ファイル・同梱データ・ログ出力先への絶対パスを提供し、
ソルバーおよび実験の既定値を読み込む。
"""

import json
from pathlib import Path
from typing import Any, Dict


# 設定ファイルに項目がない場合に使う既定値
DEFAULT_SETTINGS: Dict[str, Any] = {
    "pf_tol": 1e-8,                       # 潮流計算の電力ミスマッチ許容値（p.u.）
    "pf_max_iter": 30,                    # ニュートン法の最大反復回数
    "interval_tol": 1e-10,                # 区間反復の収束判定（∞ノルム）
    "interval_max_iter": 1000,
    "theta_tol": 1e-10,                   # 永年方程式の残差許容値
    "max_root_iter": 200,
    "glfp_tol": 1e-8,                     # GLFP二分法の幅
    "glfp_max_dim": 24,                   # 符号ベクトル列挙の次元上限
    "sigma_floor": 1e-8,                  # 重み行列の分散下限
    "perturbation_sigma_fraction": 0.5,   # 摂動の標準偏差（最大偏差に対する比）
    "empirical_weight_samples": 1000,
    "log_retention_days": 30,
    "log_level": "INFO",                  # これより低いレベルのログは書き出さない
    "output_dir": "output",
}


def get_base_path() -> Path:
    """リポジトリのルートディレクトリ（srcの親）を返す"""
    return Path(__file__).parent.parent


def get_config_path() -> Path:
    """設定ディレクトリのパスを取得"""
    return get_base_path() / "config"


def get_data_path() -> Path:
    """同梱データディレクトリのパスを取得"""
    return get_base_path() / "data"


def get_cases_path() -> Path:
    """同梱ケースファイル（MATPOWER形式）のディレクトリ"""
    return get_data_path() / "cases"


def get_placements_path() -> Path:
    """同梱PMU配置ファイルのディレクトリ"""
    return get_data_path() / "placements"


def get_logs_path() -> Path:
    """ログディレクトリのパスを取得"""
    return get_base_path() / "logs"


def get_output_path() -> Path:
    """既定の出力ディレクトリ"""
    settings = load_settings()
    output = Path(settings["output_dir"])
    if not output.is_absolute():
        output = get_base_path() / output
    return output


def load_settings() -> Dict[str, Any]:
    """
    設定ファイルを読み込む。
    ファイルが存在しない場合・読めない場合はデフォルト設定を返す。
    """
    settings_path = get_config_path() / "settings.json"

    if not settings_path.exists():
        return dict(DEFAULT_SETTINGS)

    try:
        with open(settings_path, 'r', encoding='utf-8') as f:
            loaded_settings = json.load(f)
            # デフォルト値とマージ（ファイルにない項目はデフォルト値を使用）
            return {**DEFAULT_SETTINGS, **loaded_settings}
    except (json.JSONDecodeError, IOError):
        return dict(DEFAULT_SETTINGS)


def validate_settings(settings: Dict[str, Any]) -> tuple[bool, list[str]]:
    """
    設定値のバリデーションを行う。

    Args:
        settings: 検証する設定辞書

    Returns:
        (有効かどうか, エラーメッセージのリスト)
    """
    errors = []

    positive_reals = ["pf_tol", "interval_tol", "theta_tol", "glfp_tol", "sigma_floor"]
    for key in positive_reals:
        value = settings.get(key, DEFAULT_SETTINGS[key])
        if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
            errors.append(f"{key} は正の実数で指定してください: {value!r}")

    positive_ints = [
        "pf_max_iter",
        "interval_max_iter",
        "max_root_iter",
        "glfp_max_dim",
        "empirical_weight_samples",
        "log_retention_days",
    ]
    for key in positive_ints:
        value = settings.get(key, DEFAULT_SETTINGS[key])
        if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
            errors.append(f"{key} は正の整数で指定してください: {value!r}")

    fraction = settings.get("perturbation_sigma_fraction", DEFAULT_SETTINGS["perturbation_sigma_fraction"])
    if not isinstance(fraction, (int, float)) or not (0 < fraction <= 1):
        errors.append(f"perturbation_sigma_fraction は (0, 1] の範囲で指定してください: {fraction!r}")

    log_level = settings.get("log_level", DEFAULT_SETTINGS["log_level"])
    if log_level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        errors.append(f"log_level は DEBUG/INFO/WARNING/ERROR/CRITICAL のいずれかです: {log_level!r}")

    if not isinstance(settings.get("output_dir", ""), str):
        errors.append("output_dir は文字列で指定してください")

    return len(errors) == 0, errors


def ensure_directories() -> None:
    """
    必要なディレクトリを確認し、存在しない場合は作成する。
    CLI起動時に呼び出される。
    """
    for directory in [get_config_path(), get_logs_path()]:
        directory.mkdir(parents=True, exist_ok=True)
