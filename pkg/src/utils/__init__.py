"""ユーティリティパッケージ"""
from .logger import get_logger, set_log_level, AppLogger, cleanup_old_logs
from .case_parser import parse_case, write_case, parse_placement, case_from_ppc
from .linalg import lu_solve, norm2_vec, norm2_mat, column_rank

__all__ = [
    'get_logger',
    'set_log_level',
    'AppLogger',
    'cleanup_old_logs',
    'parse_case',
    'write_case',
    'parse_placement',
    'case_from_ppc',
    'lu_solve',
    'norm2_vec',
    'norm2_mat',
    'column_rank',
]
