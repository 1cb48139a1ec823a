"""
第1段階単体法による実行可能性判定
A z ≤ b, z ≥ 0 を満たす z が存在するかを、人工変数の和の最小化で判定する。
巡回はブランドの規則（最小添字規則）で防ぐ。
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import ConvergenceError
from utils.linalg import ensure_finite

PIVOT_EPS = 1e-12
DEFAULT_FEAS_TOL = 1e-9


@dataclass
class FeasibilityResult:
    """判定結果（feasible のとき witness は A z ≤ b, z ≥ 0 の解）"""
    feasible: bool
    witness: Optional[np.ndarray]
    infeasibility: float
    pivots: int


def _pivot(tableau: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])


def check_feasibility(
    a_ub: np.ndarray,
    b_ub: np.ndarray,
    tol: float = DEFAULT_FEAS_TOL,
    max_pivots: Optional[int] = None,
) -> FeasibilityResult:
    """
    {z ≥ 0 : a_ub z ≤ b_ub} の実行可能性を判定する。

    b_i < 0 の行は符号を反転し、スラックを −1 係数、人工変数を基底に置く。
    第1段階の最適値（人工変数の和）が tol·max(1, ‖b‖∞) 以下なら実行可能。

    Raises:
        ConvergenceError: ピボット回数が上限を超えた場合
    """
    a_ub = np.atleast_2d(np.asarray(a_ub, dtype=float))
    b_ub = np.asarray(b_ub, dtype=float)
    ensure_finite(a_ub, b_ub, name="線形不等式")
    m, n = a_ub.shape

    negative = b_ub < 0
    sign = np.where(negative, -1.0, 1.0)
    art_rows = np.flatnonzero(negative)
    n_art = len(art_rows)
    width = n + m + n_art

    tableau = np.zeros((m + 1, width + 1))
    tableau[:m, :n] = sign[:, None] * a_ub
    tableau[np.arange(m), n + np.arange(m)] = sign
    tableau[art_rows, n + m + np.arange(n_art)] = 1.0
    tableau[:m, -1] = sign * b_ub

    basis = n + np.arange(m)
    basis[art_rows] = n + m + np.arange(n_art)

    # 目的行: 人工変数の和を最小化（被約費用 = c − c_Bᵀ B⁻¹ A）
    cost = np.zeros(width)
    cost[n + m:] = 1.0
    tableau[m, :width] = cost - cost[basis] @ tableau[:m, :width]
    tableau[m, -1] = -cost[basis] @ tableau[:m, -1]

    limit = max_pivots if max_pivots is not None else 50 * (m + width + 1)
    pivots = 0
    while n_art > 0:
        entering = np.flatnonzero(tableau[m, :width] < -PIVOT_EPS)
        if entering.size == 0:
            break
        col = int(entering[0])
        column = tableau[:m, col]
        candidates = np.flatnonzero(column > PIVOT_EPS)
        if candidates.size == 0:
            # 第1段階の目的は下に有界なので起こらない
            break
        ratios = tableau[candidates, -1] / column[candidates]
        best = ratios.min()
        ties = candidates[ratios <= best + PIVOT_EPS * max(1.0, abs(best))]
        row = int(ties[np.argmin(basis[ties])])

        _pivot(tableau, row, col)
        basis[row] = col
        pivots += 1
        if pivots > limit:
            raise ConvergenceError(f"単体法のピボット回数が上限 {limit} を超えました")

    infeasibility = float(-tableau[m, -1]) if n_art > 0 else 0.0
    scale = max(1.0, float(np.max(np.abs(b_ub))) if b_ub.size else 1.0)
    feasible = infeasibility <= tol * scale

    witness = None
    if feasible:
        witness = np.zeros(n)
        in_x = basis < n
        witness[basis[in_x]] = np.maximum(tableau[:m, -1][in_x], 0.0)

    return FeasibilityResult(feasible=feasible, witness=witness, infeasibility=infeasibility, pivots=pivots)
