"""
ログ出力基盤モジュール
JSON Lines形式でログを出力し、日次ローテーションと保持期間管理を行う。

試行やGLFPの符号ベクトルは複数スレッドから並行に実行されるため、
ファイルへの追記はモジュール共通のロックで直列化する。
"""

import json
import math
import sys
import threading
from datetime import datetime, timedelta
from pathlib import Path
from queue import Queue
from typing import Any, Dict, Optional

import numpy as np

# srcディレクトリをパスに追加（相対インポート用）
sys.path.insert(0, str(Path(__file__).parent.parent))
from config import get_logs_path

_write_lock = threading.Lock()

LEVEL_ORDER = {"DEBUG": 10, "INFO": 20, "WARNING": 30, "ERROR": 40, "CRITICAL": 50}


def _jsonable(value: Any) -> Any:
    """詳細情報の値をJSONに書ける組み込み型にする（NaN・inf は null）"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class AppLogger:
    """
    アプリケーションロガー
    JSON Lines形式でログを出力する。
    """

    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"

    # ログ保持期間（日）
    RETENTION_DAYS = 30

    # これより低いレベルは出力しない（set_log_levelで変更）
    min_level = DEBUG

    def __init__(self, module_name: str, log_queue: Optional[Queue] = None):
        """
        Args:
            module_name: ログを出力するモジュール名（例: "bench_service"）
            log_queue: 進捗表示用キュー（オプション）
        """
        self.module_name = module_name
        self.log_queue = log_queue
        self._ensure_log_directory()

    def _ensure_log_directory(self) -> None:
        try:
            get_logs_path().mkdir(parents=True, exist_ok=True)
        except OSError as e:
            print(f"ログディレクトリ作成エラー: {e}", file=sys.stderr)

    def _get_log_file_path(self) -> Path:
        """今日のログファイルパスを取得"""
        today = datetime.now().strftime("%Y-%m-%d")
        return get_logs_path() / f"app_{today}.json"

    def is_enabled(self, level: str) -> bool:
        return LEVEL_ORDER[level] >= LEVEL_ORDER[AppLogger.min_level]

    def _write_log(
        self,
        level: str,
        message: str,
        details: Optional[Dict[str, Any]] = None
    ) -> None:
        """
        ログを1行のJSONとして追記し、キューがあれば進捗表示用にも送る

        Args:
            level: ログレベル
            message: ログメッセージ
            details: 追加情報（numpyの値はそのまま渡してよい）
        """
        if not self.is_enabled(level):
            return

        log_record = {
            "timestamp": datetime.now().astimezone().isoformat(),
            "level": level,
            "module": self.module_name,
            "thread": threading.current_thread().name,
            "message": message,
        }
        if details:
            log_record["details"] = _jsonable(details)

        line = json.dumps(log_record, ensure_ascii=False, default=str)
        try:
            with _write_lock, open(self._get_log_file_path(), 'a', encoding='utf-8') as f:
                f.write(line + '\n')
        except OSError as e:
            print(f"ログ書き込みエラー: {e}", file=sys.stderr)

        if self.log_queue is not None:
            self.log_queue.put({
                "level": level,
                "message": f"[{datetime.now().strftime('%H:%M:%S')}] {message}",
                "details": log_record.get("details"),
            })

    def debug(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        self._write_log(self.DEBUG, message, details)

    def info(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        self._write_log(self.INFO, message, details)

    def warning(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        self._write_log(self.WARNING, message, details)

    def error(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        self._write_log(self.ERROR, message, details)

    def critical(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        self._write_log(self.CRITICAL, message, details)


def get_logger(module_name: str, log_queue: Optional[Queue] = None) -> AppLogger:
    """
    ロガーインスタンスを取得する

    Args:
        module_name: モジュール名
        log_queue: 進捗表示用キュー（オプション）

    Returns:
        AppLoggerインスタンス
    """
    return AppLogger(module_name, log_queue)


def set_log_level(level: str) -> None:
    """
    出力する最低ログレベルを設定する（全ロガー共通）

    Raises:
        ValueError: 未対応のレベル名
    """
    if level not in LEVEL_ORDER:
        raise ValueError(f"未対応のログレベル: {level}")
    AppLogger.min_level = level


def cleanup_old_logs(retention_days: int = AppLogger.RETENTION_DAYS) -> int:
    """
    指定日数より古いログファイルを削除する

    Args:
        retention_days: 保持日数（デフォルト30日）

    Returns:
        削除したファイル数
    """
    logs_path = get_logs_path()
    if not logs_path.exists():
        return 0

    cutoff_date = datetime.now() - timedelta(days=retention_days)
    deleted_count = 0

    for log_file in logs_path.glob("app_*.json"):
        try:
            # app_YYYY-MM-DD.json
            file_date = datetime.strptime(log_file.stem.replace("app_", ""), "%Y-%m-%d")
            if file_date < cutoff_date:
                log_file.unlink()
                deleted_count += 1
        except (ValueError, OSError):
            continue

    return deleted_count
