"""
区間推定サービス
拡大線形系 A(ε) f = b_z の外側解を中心・半径表現の不動点反復で求め、
重み付き最小二乗推定値の上下限を与える。

    A0 = [[P0, -I], [0, P0ᵀW⁻¹]]、  A_k = [[P_k, 0], [0, P_kᵀW⁻¹]]
    C_k = A0⁻¹ A_k Δp_k、            f0 = A0⁻¹ b_z
    u ← mag([w]) + Σ_k |C_k| u       （u⁽⁰⁾ = 0）
"""

from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from errors import ConvergenceError, DimensionGuardError, SingularMatrixError
from models.estimate import AugmentedSystem, IntervalVector, StateBounds
from models.measurement import MeasurementModel, UncertaintySpec
from utils.linalg import ensure_finite, inverse
from utils.logger import get_logger

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1000
SPECTRAL_ITER = 200


def _weight_inverse_diagonal(w: np.ndarray) -> np.ndarray:
    """対角重み行列 W の W⁻¹ の対角成分"""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    diag = np.diag(w).copy()
    if w.shape[0] != w.shape[1] or np.count_nonzero(w - np.diag(diag)):
        raise ValueError("重み行列は対角行列である必要があります")
    if np.any(diag <= 0):
        raise SingularMatrixError("重み行列の対角成分が正ではありません")
    return 1.0 / diag


def build_augmented(
    model: MeasurementModel,
    w: np.ndarray,
    spec: UncertaintySpec,
    y: np.ndarray,
) -> AugmentedSystem:
    """
    拡大系を組み立て、A0⁻¹、f0、C_k（非零列を横に並べたもの）を計算する。

    A0⁻¹ は G = P0ᵀW⁻¹P0、H = G⁻¹P0ᵀW⁻¹ を使ったブロック形
        [[H, G⁻¹], [P0 H − I, P0 G⁻¹]]
    で求める。

    Raises:
        SingularMatrixError: A0 が特異な（G が特異な）場合
        ValueError: W が対角行列でない場合
    """
    p0 = np.asarray(model.p0, dtype=float)
    y = np.asarray(y, dtype=float)
    n, n_state = p0.shape
    if y.shape != (n,):
        raise DimensionGuardError(f"計測値の長さが一致しません: {y.shape} != ({n},)")
    ensure_finite(p0, y, w, name="区間推定の入力")

    w_inv = _weight_inverse_diagonal(w)
    p0_sparse = sp.csr_matrix(p0)
    normal = sp.csr_matrix(p0_sparse.T @ sp.diags(w_inv))      # P0ᵀW⁻¹
    size = n + n_state

    a0 = np.zeros((size, size))
    a0[:n, :n_state] = p0
    a0[:n, n_state:] = -np.eye(n)
    a0[n:, n_state:] = normal.toarray()

    g_inv = inverse((normal @ p0_sparse).toarray())
    h = np.asarray((normal.T @ g_inv).T)                     # G⁻¹ は対称
    top = np.hstack([h, g_inv])
    bottom = np.asarray(p0_sparse @ top)
    bottom[:, :n] -= np.eye(n)
    a0_inv = np.vstack([top, bottom])

    b_z = np.concatenate([y, np.zeros(n_state)])
    f0 = a0_inv[:, :n] @ y

    # A_k の上側 [P_k, 0] は状態列に、下側 [0, P_kᵀW⁻¹] は y_d の列に効く
    stack = spec.stack
    c_top = np.asarray((stack.top.T @ a0_inv[:, :n].T).T)
    c_bottom = np.asarray((stack.bottom.T @ a0_inv[:, n:].T).T) * w_inv[stack.bottom_rows]

    return AugmentedSystem(
        a0=a0, a0_inv=a0_inv, b_z=b_z, f0=f0, n_state=n_state, n_meas=n,
        c_stack=np.hstack([c_top, c_bottom]),
        c_cols=np.concatenate([stack.top_cols, n_state + stack.bottom_rows]),
        c_owner=np.concatenate([stack.top_owner, stack.bottom_owner]),
        n_param=spec.n_param,
    )


def interval_weights(sys: AugmentedSystem, delta_y: Optional[np.ndarray] = None) -> np.ndarray:
    """
    mag([w]) = Σ_i |A0⁻¹ e_i| Δy_i + Σ_k |C_k f0|。

    delta_y が None のときは計測値の不確かさを含めない。
    """
    mag = np.zeros(sys.size)
    if sys.c_cols.size:
        owner = sp.csr_matrix(
            (np.ones(sys.c_cols.size), (np.arange(sys.c_cols.size), sys.c_owner)),
            shape=(sys.c_cols.size, max(sys.n_param, int(sys.c_owner.max()) + 1)),
        )
        per_param = np.asarray((owner.T @ (sys.c_stack * sys.f0[sys.c_cols]).T).T)
        mag += np.abs(per_param).sum(axis=1)
    if delta_y is not None:
        delta_y = np.asarray(delta_y, dtype=float)
        if delta_y.shape != (sys.n_meas,):
            raise DimensionGuardError(f"Δy の長さが一致しません: {delta_y.shape} != ({sys.n_meas},)")
        mag = mag + np.abs(sys.a0_inv[:, :sys.n_meas]) @ delta_y
    return mag


def iteration_matrix(sys: AugmentedSystem) -> np.ndarray:
    """Σ_k |C_k|（密行列）"""
    if not sys.c_cols.size:
        return np.zeros((sys.size, sys.size))
    scatter = sp.csr_matrix(
        (np.ones(sys.c_cols.size), (np.arange(sys.c_cols.size), sys.c_cols)),
        shape=(sys.c_cols.size, sys.size),
    )
    return np.asarray((scatter.T @ np.abs(sys.c_stack).T).T)


def spectral_radius_bounds(m: np.ndarray, iterations: int = SPECTRAL_ITER) -> Tuple[float, float]:
    """
    非負行列のスペクトル半径の下界・上界（Collatz–Wielandt）をべき乗法で求める。

    下界は非負ベクトルの台の上での min (Mv)_i/v_i、上界は正ベクトルでの max (Mv)_i/v_i。
    """
    if m.size == 0:
        return 0.0, 0.0
    v = np.ones(m.shape[0])
    lower = 0.0
    upper = float(np.max(m.sum(axis=1)))
    for _ in range(iterations):
        mv = m @ v
        support = v > 0
        if np.any(support):
            lower = max(lower, float(np.min(mv[support] / v[support])))
        positive = v + 1e-12 * np.max(v)
        upper = min(upper, float(np.max((m @ positive) / positive)))
        norm = np.max(mv)
        if norm == 0.0:
            return 0.0, 0.0
        v = mv / norm
        if upper - lower <= 1e-6 * max(upper, 1e-12) or lower >= 1.0 or upper < 1.0:
            break
    return lower, upper


def _check_contraction(m: np.ndarray, u: np.ndarray) -> None:
    """
    収束した u > 0 で Σ|C_k| u < u なら ρ(Σ|C_k|) < 1 が成り立つ。
    そう判定できない場合はスペクトル半径の範囲を求め、下界が1以上なら発散とする。
    """
    if u.size == 0:
        return
    if np.all(u > 0) and np.all(m @ u < u):
        return
    lower, upper = spectral_radius_bounds(m)
    if lower >= 1.0:
        raise ConvergenceError(f"区間反復が発散します（Σ|C_k| のスペクトル半径 ≥ {lower:.6f}）")


def iterate_radius(
    sys: AugmentedSystem,
    meas_unc: Optional[np.ndarray] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> IntervalVector:
    """
    u⁽ʲ⁺¹⁾ = mag([w]) + Σ_k |C_k| u⁽ʲ⁾ を u⁽⁰⁾ = 0 から反復する。

    Args:
        sys: 拡大系
        meas_unc: 行ごとの計測値の不確かさ Δy（None なら計測値は確定値として扱う）
        tol: ‖u⁽ʲ⁺¹⁾ − u⁽ʲ⁾‖∞ の収束判定値
        max_iter: 最大反復回数

    Returns:
        中心 f0・半径 u の IntervalVector

    Raises:
        ConvergenceError: Σ|C_k| のスペクトル半径が1以上、または max_iter 回で収束しない場合
    """
    logger = get_logger("interval_service")
    mag_w = interval_weights(sys, meas_unc)
    m = iteration_matrix(sys)

    u = np.zeros(sys.size)
    for iteration in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            u_next = mag_w + m @ u
            step = float(np.max(np.abs(u_next - u))) if u.size else 0.0
        u = u_next
        if not np.isfinite(step):
            break
        if step <= tol:
            _check_contraction(m, u)
            logger.info("区間反復が収束しました", {
                "iterations": iteration, "max_radius": float(np.max(u[:sys.n_state])) if sys.n_state else 0.0,
            })
            return IntervalVector(center=sys.f0.copy(), radius=u, iterations=iteration, converged=True)

    lower, upper = spectral_radius_bounds(m)
    if upper >= 1.0:
        raise ConvergenceError(
            f"区間反復が発散します（Σ|C_k| のスペクトル半径の範囲 [{lower:.6f}, {upper:.6f}]）"
        )
    raise ConvergenceError(f"区間反復が {max_iter} 回で収束しませんでした")


def state_bounds(sys: AugmentedSystem, radius: IntervalVector) -> StateBounds:
    """拡大系の解のうち状態部分（先頭 2B 成分）の上下限"""
    n_state = sys.n_state
    center = radius.center[:n_state]
    u = radius.radius[:n_state]
    return StateBounds(
        lower=center - u,
        upper=center + u,
        center=center.copy(),
        iterations=radius.iterations,
        converged=radius.converged,
    )


def estimate_bounds(
    model: MeasurementModel,
    w: np.ndarray,
    spec: UncertaintySpec,
    y: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> StateBounds:
    """拡大系の構築から上下限の計算までを通して行う"""
    sys = build_augmented(model, w, spec, y)
    radius = iterate_radius(sys, spec.delta_y, tol=tol, max_iter=max_iter)
    return state_bounds(sys, radius)
