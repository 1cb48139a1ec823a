"""
実験モデル定義
ベンチマーク実験の設定・試行ごとの記録・集計結果を定義する。
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np


class Method(Enum):
    """推定手法"""
    INTERVAL = "interval"
    CONVEX = "convex"
    GLFP = "glfp"

    @classmethod
    def from_string(cls, value: str) -> 'Method':
        for item in cls:
            if item.value == value:
                return item
        raise ValueError(f"未対応の推定手法: {value}")


class WeightMode(Enum):
    """重み行列の分散の求め方"""
    KNOWN = "known"            # 雑音生成時の標準偏差をそのまま使う
    EMPIRICAL = "empirical"    # 追加の雑音標本から推定する


class ChiPMode(Enum):
    """χ_P の求め方"""
    MATRIX = "matrix"    # 要素ごとの上界行列の2ノルム
    PAPER = "paper"      # r, x の絶対変化量の最大値


class DeviationMode(Enum):
    """パラメータ偏差 Δp の決め方"""
    REALIZED = "realized"      # 摂動ケースと公称値の差の絶対値
    WORST_CASE = "worst_case"  # r, x が ±max_rel_dev 変化したときの最大偏差


@dataclass
class ExperimentConfig:
    """ベンチマーク実験の設定"""
    case_name: str
    placement: str
    seed: int
    max_rel_dev: float = 0.3
    tve_bound: float = 0.01
    methods: Tuple[Method, ...] = (Method.INTERVAL, Method.CONVEX)
    trials: int = 10
    chi_p_mode: ChiPMode = ChiPMode.PAPER
    deviation_mode: DeviationMode = DeviationMode.REALIZED
    weight_mode: WeightMode = WeightMode.KNOWN
    perturb_charging: bool = False
    jobs: int = 1
    glfp_jobs: int = 1

    def validate(self) -> Tuple[bool, List[str]]:
        """設定値の範囲を検証する"""
        errors = []
        if not 0 <= self.max_rel_dev < 1:
            errors.append(f"max_rel_dev は 0 以上 1 未満である必要があります: {self.max_rel_dev}")
        if not 0 <= self.tve_bound < 1:
            errors.append(f"tve_bound は 0 以上 1 未満である必要があります: {self.tve_bound}")
        if self.trials < 1:
            errors.append(f"trials は1以上である必要があります: {self.trials}")
        if not self.methods:
            errors.append("推定手法が指定されていません")
        if self.jobs < 0 or self.glfp_jobs < 0:
            errors.append("jobs は0以上である必要があります")
        return len(errors) == 0, errors


@dataclass
class TrialRecord:
    """1試行・1手法の結果"""
    trial: int
    method: Method
    runtime_s: float = float("nan")
    rmse_pu: float = float("nan")
    containment_rate: float = float("nan")
    mean_bound_width: float = float("nan")
    error: str = ""
    estimate: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    diagnostics: Dict[str, object] = field(default_factory=dict)
    exception: Optional[Exception] = field(default=None, repr=False, compare=False)

    @property
    def failed(self) -> bool:
        return bool(self.error)

    def to_row(self) -> dict:
        """レポートCSVの1行"""
        return {
            "trial": self.trial,
            "method": self.method.value,
            "runtime_s": self.runtime_s,
            "rmse_pu": self.rmse_pu,
            "containment_rate": self.containment_rate,
            "mean_bound_width": self.mean_bound_width,
            "error": self.error,
        }


@dataclass
class MethodSummary:
    """手法ごとの集計（中央値・平均）"""
    method: Method
    runtime_s: float
    rmse_pu: float
    containment_rate: float
    mean_bound_width: float
    completed_trials: int
    failed_trials: int

    def to_dict(self) -> dict:
        def clean(value: float) -> Optional[float]:
            return None if value != value else value
        return {
            "runtime_s": clean(self.runtime_s),
            "rmse_pu": clean(self.rmse_pu),
            "containment_rate": clean(self.containment_rate),
            "mean_bound_width": clean(self.mean_bound_width),
            "completed_trials": self.completed_trials,
            "failed_trials": self.failed_trials,
        }


@dataclass
class ExperimentReport:
    """実験全体の結果"""
    config: ExperimentConfig
    bus_ids: List[int]
    records: List[TrialRecord] = field(default_factory=list)
    x_true: Dict[int, np.ndarray] = field(default_factory=dict)
    summaries: Dict[Method, MethodSummary] = field(default_factory=dict)
    trial_errors: Dict[int, str] = field(default_factory=dict)

    def records_for(self, method: Method) -> List[TrialRecord]:
        return [r for r in self.records if r.method == method]

    def record(self, trial: int, method: Method) -> Optional[TrialRecord]:
        for r in self.records:
            if r.trial == trial and r.method == method:
                return r
        return None
