"""
線形代数ユーティリティ
全ての推定器が使う密行列演算（LU分解による求解、2ノルム、列ランク）。
入力に NaN/Inf が含まれる場合は NonFiniteInputError を送出する。
"""

from typing import Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from errors import ConvergenceError, NonFiniteInputError, SingularMatrixError

# ピボットの特異判定しきい値（‖a‖∞ に対する相対値）
PIVOT_RTOL = 1e-12

NORM2_TOL = 1e-10
NORM2_MAX_ITER = 10000


def ensure_finite(*arrays, name: str = "入力") -> None:
    """全ての配列が有限値のみであることを確認"""
    for array in arrays:
        data = array.data if sp.issparse(array) else np.asarray(array)
        if not np.all(np.isfinite(data)):
            raise NonFiniteInputError(f"{name}に NaN または Inf が含まれています")


def lu_factor(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    部分ピボット付きLU分解を行い、ピボットの大きさを検査する。

    Raises:
        SingularMatrixError: |U_ii| < 1e-12·‖a‖∞ のピボットがある場合
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"正方行列が必要です: {a.shape}")
    ensure_finite(a, name="係数行列")

    if a.size == 0:
        raise SingularMatrixError("空の係数行列です")

    scale = np.abs(a).sum(axis=1).max()
    lu, piv = sla.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if scale == 0 or pivots.min() < PIVOT_RTOL * scale:
        raise SingularMatrixError(
            f"特異行列です（最小ピボット {pivots.min():.3e}, ‖a‖∞ {scale:.3e}）"
        )
    return lu, piv


def lu_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    a X = b を部分ピボット付きLU分解で解く。

    Args:
        a: 正方行列
        b: 右辺（ベクトルまたは行列、行数は a と一致）

    Returns:
        解 X（b と同じ形状）
    """
    b = np.asarray(b, dtype=float)
    ensure_finite(b, name="右辺")
    factor = lu_factor(a)
    if b.shape[0] != factor[0].shape[0]:
        raise ValueError(f"右辺の行数が一致しません: {b.shape[0]} != {factor[0].shape[0]}")
    return sla.lu_solve(factor, b, check_finite=False)


def inverse(a: np.ndarray) -> np.ndarray:
    """lu_solve(a, I)"""
    a = np.asarray(a, dtype=float)
    return lu_solve(a, np.eye(a.shape[0]))


def norm2_vec(v: np.ndarray) -> float:
    """ユークリッドノルム"""
    v = np.asarray(v, dtype=float)
    ensure_finite(v, name="ベクトル")
    return float(np.linalg.norm(v.ravel()))


def norm2_mat(a, tol: float = NORM2_TOL, max_iter: int = NORM2_MAX_ITER) -> float:
    """
    最大特異値を aᵀa のべき乗法で求める。

    初期ベクトルは固定シードの乱数（結果を決定的にするため）。
    反復間の相対変化が tol 以下になった時点で収束とみなす。

    Raises:
        ConvergenceError: max_iter 回で収束しない場合
    """
    if sp.issparse(a):
        a = a.tocsr().astype(float)
    else:
        a = np.atleast_2d(np.asarray(a, dtype=float))
    ensure_finite(a, name="行列")

    if a.shape[0] == 0 or a.shape[1] == 0:
        return 0.0

    v = np.random.default_rng(0).standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0

    for _ in range(max_iter):
        av = a @ v
        w = a.T @ av
        w_norm = float(np.linalg.norm(w))
        if w_norm == 0.0:
            # 初期ベクトルが零空間に入った（a = 0 のときのみ現実的に起きる）
            return float(np.linalg.norm(av))
        new_sigma = float(np.sqrt(w_norm))
        v = w / w_norm
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1.0):
            # 最終ベクトルでのレイリー商は下界なので、より大きい方を返す
            return max(new_sigma, float(np.linalg.norm(a @ v)))
        sigma = new_sigma

    raise ConvergenceError(f"最大特異値のべき乗法が {max_iter} 回で収束しませんでした")


def column_rank(a: np.ndarray, rtol: float = 1e-10) -> int:
    """列ピボット付きQR分解で数値的な列ランクを求める"""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    ensure_finite(a, name="行列")
    if a.size == 0:
        return 0
    r = sla.qr(a, mode="r", pivoting=True, check_finite=False)[0]
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0:
        return 0
    return int(np.sum(diag > rtol * diag[0]))
