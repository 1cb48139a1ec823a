"""
推定結果モデル定義
区間推定・BDU推定・GLFP推定の入出力を保持する。
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


@dataclass
class AugmentedSystem:
    """
    拡大線形系 A0 f = b_z（f = [x; y_d]）。

    全ての C_k の非零列を横に並べて c_stack に保持する:
        C_k[:, c_cols[j]] = c_stack[:, j]（c_owner[j] == k の列 j）、それ以外の列は0
    """
    a0: np.ndarray
    a0_inv: np.ndarray
    b_z: np.ndarray
    f0: np.ndarray
    n_state: int
    n_meas: int
    c_stack: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    c_cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    c_owner: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    n_param: int = 0

    @property
    def size(self) -> int:
        return self.a0.shape[0]

    def columns(self, k: int) -> np.ndarray:
        """C_k の非零列"""
        return self.c_cols[self.c_owner == k]

    def c_matrix(self, k: int) -> np.ndarray:
        """C_k を密行列で返す（テスト・診断用）"""
        c = np.zeros((self.size, self.size))
        mask = self.c_owner == k
        c[:, self.c_cols[mask]] = self.c_stack[:, mask]
        return c


@dataclass
class IntervalVector:
    """中心・半径表現の区間ベクトル center + radius·[-1, 1]"""
    center: np.ndarray
    radius: np.ndarray
    iterations: int = 0
    converged: bool = True

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.radius

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.radius


@dataclass
class StateBounds:
    """状態の外側包含区間 [lower, upper]"""
    lower: np.ndarray
    upper: np.ndarray
    center: np.ndarray
    iterations: int
    converged: bool

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


@dataclass(frozen=True)
class BduConfig:
    """有界データ不確かさ推定の設定"""
    chi_p: float
    chi_y: float = 0.0
    theta_tol: float = 1e-10
    max_root_iter: int = 200


@dataclass
class BduSolution:
    """BDU推定の解（theta が inf のとき x_hat = 0）"""
    x_hat: np.ndarray
    theta: float
    residual_norm: float
    secular_residual: float
    root_iterations: int
    objective: float = 0.0
    runtime_seconds: float = 0.0

    def diagnostics(self) -> dict:
        return {
            "theta": None if np.isinf(self.theta) else self.theta,
            "residual_norm": self.residual_norm,
            "secular_residual": self.secular_residual,
            "root_iterations": self.root_iterations,
            "objective": self.objective,
            "runtime_seconds": self.runtime_seconds,
        }


@dataclass
class GlfpProblem:
    """一般化線形分数計画の入力（行 l_i、計測値 y、不確かな列の指示ベクトル ζ）"""
    p: np.ndarray
    y: np.ndarray
    zeta: np.ndarray
    lambda_set: Tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.p.shape[1]

    def objective(self, x: np.ndarray) -> float:
        """max_i |l_i x − y_i| / (ζᵀ|x| + 1)（閉じた象限で符号ごとの比と一致）"""
        x = np.asarray(x, dtype=float)
        numerator = np.max(np.abs(self.p @ x - self.y)) if len(self.y) else 0.0
        return float(numerator / (self.zeta @ np.abs(x) + 1.0))


@dataclass
class SignedSubproblem:
    """符号ベクトル s ごとの部分問題の結果（v_s = inf は実行不可能または枝刈り）"""
    s: np.ndarray
    v_s: float
    x_s: Optional[np.ndarray] = None
    pruned: bool = False
    feasibility_checks: int = 0


@dataclass
class GlfpSolution:
    """GLFP推定の解"""
    xi_hat: float
    x_star: np.ndarray
    s_star: np.ndarray
    evaluated_signs: int
    pruned_signs: int
    runtime_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "xi_hat": self.xi_hat,
            "x_star": [float(v) for v in self.x_star],
            "evaluated_signs": self.evaluated_signs,
            "pruned_signs": self.pruned_signs,
            "runtime_seconds": self.runtime_seconds,
        }
