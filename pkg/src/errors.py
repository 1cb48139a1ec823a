"""
例外定義
推定ツール全体で使う例外階層。各クラスはCLIの終了コードを持つ。
"""

from typing import Optional


class LseError(Exception):
    """推定ツールの基底例外（データ・検証エラー）"""
    exit_code = 2


class CaseFormatError(LseError):
    """ケースファイルの構文・内容エラー"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            location = f"{line}行目" if column is None else f"{line}行{column}列"
            message = f"{location}: {message}"
        super().__init__(message)


class NetworkTopologyError(LseError):
    """系統トポロジの不整合（非連結・インピーダンス0）"""


class PlacementError(LseError):
    """PMU配置の不備（未知の母線・不可観測）"""


class NonFiniteInputError(LseError):
    """NaN/Infを含む入力"""


class DimensionGuardError(LseError):
    """次元の上限超過・長さ不一致"""


class InfeasibleProblemError(LseError):
    """全ての部分問題が実行不可能"""


class NumericalError(LseError):
    """数値計算の失敗"""
    exit_code = 3


class SingularMatrixError(NumericalError):
    """特異行列"""


class RankDeficientError(NumericalError):
    """列フルランクでない観測行列"""


class ConvergenceError(NumericalError):
    """反復計算の非収束"""
