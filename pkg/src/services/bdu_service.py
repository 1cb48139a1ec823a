"""
有界データ不確かさ（BDU）推定サービス
min_x ‖Px − y‖ + χ_P‖x‖ + χ_y の解を正則化最小二乗
x̂(θ) = (PᵀP + θI)⁻¹Pᵀy と永年方程式 g(θ) = θ‖x̂‖ − χ_P‖Px̂ − y‖ = 0 で求める。
"""

import time
from typing import Tuple

import numpy as np
import scipy.linalg as sla

from errors import ConvergenceError, DimensionGuardError, RankDeficientError
from models.estimate import BduConfig, BduSolution
from utils.linalg import column_rank, ensure_finite, norm2_vec
from utils.logger import get_logger

# 上側ブラケットの拡大回数の上限
MAX_BRACKET_DOUBLINGS = 200


def bdu_objective(p: np.ndarray, y: np.ndarray, x: np.ndarray, config: BduConfig) -> float:
    """‖Px − y‖ + χ_P‖x‖ + χ_y"""
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if p.shape[1] != x.shape[0] or p.shape[0] != y.shape[0]:
        raise DimensionGuardError(f"次元が一致しません: P {p.shape}, x {x.shape}, y {y.shape}")
    return norm2_vec(p @ x - y) + config.chi_p * norm2_vec(x) + config.chi_y


class _RegularizedSolver:
    """θ ごとに (PᵀP + θI) をコレスキー分解して x̂(θ) を求める"""

    def __init__(self, p: np.ndarray, y: np.ndarray):
        self.p = p
        self.y = y
        self.gram = p.T @ p
        self.pty = p.T @ y
        self.evaluations = 0

    def solve(self, theta: float) -> np.ndarray:
        self.evaluations += 1
        a = self.gram + theta * np.eye(self.gram.shape[0])
        return sla.cho_solve(sla.cho_factor(a, check_finite=False), self.pty, check_finite=False)

    def secular(self, theta: float, chi_p: float) -> Tuple[float, np.ndarray, float]:
        """(g(θ), x̂(θ), 残差ノルム)"""
        x = self.solve(theta)
        residual = float(np.linalg.norm(self.p @ x - self.y))
        return theta * float(np.linalg.norm(x)) - chi_p * residual, x, residual


def _finish(p, y, x, theta, residual, secular, iterations, config, started) -> BduSolution:
    return BduSolution(
        x_hat=x,
        theta=theta,
        residual_norm=residual,
        secular_residual=abs(secular),
        root_iterations=iterations,
        objective=bdu_objective(p, y, x, config),
        runtime_seconds=time.perf_counter() - started,
    )


def solve_bdu(p: np.ndarray, y: np.ndarray, config: BduConfig) -> BduSolution:
    """
    BDU推定を解く。

    χ_P = 0 または g(0) ≥ 0 なら通常の最小二乗解（θ = 0）。
    χ_P‖y‖ ≥ ‖Pᵀy‖ なら x̂ = 0 が最適で θ = inf とする。
    それ以外は下側ブラケット θ0 = χ_P‖Px̂(0) − y‖/‖x̂(0)‖（g(θ0) ≤ 0 が保証される）から
    上側を倍々に広げ、二分法で |g| ≤ theta_tol·(1 + 残差) まで絞り込む。

    χ_y は最小化点に影響せず、目的関数値にだけ加算される。

    Raises:
        RankDeficientError: P が列フルランクでない場合
        ConvergenceError: max_root_iter 回以内に根が求まらない場合
    """
    started = time.perf_counter()
    logger = get_logger("bdu_service")

    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    ensure_finite(p, y, name="BDU推定の入力")
    if not (np.isfinite(config.chi_p) and np.isfinite(config.chi_y)) or config.chi_p < 0 or config.chi_y < 0:
        raise ValueError(f"χ_P, χ_y は有限の非負値である必要があります: {config.chi_p}, {config.chi_y}")
    if p.shape[0] != y.shape[0]:
        raise DimensionGuardError(f"次元が一致しません: P {p.shape}, y {y.shape}")

    n_state = p.shape[1]
    rank = column_rank(p)
    if rank < n_state:
        raise RankDeficientError(f"観測行列が列フルランクではありません（rank {rank} < {n_state}）")

    if not np.any(y):
        x = np.zeros(n_state)
        return _finish(p, y, x, 0.0, 0.0, 0.0, 0, config, started)

    solver = _RegularizedSolver(p, y)
    g0, x0, r0 = solver.secular(0.0, config.chi_p)
    if config.chi_p == 0.0 or g0 >= 0.0:
        return _finish(p, y, x0, 0.0, r0, g0, solver.evaluations, config, started)

    y_norm = float(np.linalg.norm(y))
    if config.chi_p * y_norm >= float(np.linalg.norm(solver.pty)):
        # 原点で劣勾配条件 ‖Pᵀy‖/‖y‖ ≤ χ_P が成り立つ
        logger.info("BDU推定の解は原点です", {"chi_p": config.chi_p})
        x = np.zeros(n_state)
        return _finish(p, y, x, float("inf"), y_norm, 0.0, solver.evaluations, config, started)

    lo = config.chi_p * r0 / float(np.linalg.norm(x0))
    g_lo, x_lo, res_lo = solver.secular(lo, config.chi_p)
    if g_lo >= 0.0:
        best = (lo, g_lo, x_lo, res_lo)
        return _finish(p, y, best[2], best[0], best[3], best[1], solver.evaluations, config, started)

    hi = 2.0 * lo
    for _ in range(MAX_BRACKET_DOUBLINGS):
        g_hi, x_hi, res_hi = solver.secular(hi, config.chi_p)
        if g_hi > 0.0:
            break
        lo, g_lo, x_lo, res_lo = hi, g_hi, x_hi, res_hi
        hi *= 2.0
    else:
        raise ConvergenceError("永年方程式の上側ブラケットが見つかりませんでした")

    while True:
        if solver.evaluations > config.max_root_iter:
            raise ConvergenceError(
                f"永年方程式の二分法が {config.max_root_iter} 回で収束しませんでした"
                f"（|g| = {min(abs(g_lo), abs(g_hi)):.3e}）"
            )
        if abs(g_lo) <= config.theta_tol * (1.0 + res_lo):
            theta, g, x, res = lo, g_lo, x_lo, res_lo
            break
        if abs(g_hi) <= config.theta_tol * (1.0 + res_hi):
            theta, g, x, res = hi, g_hi, x_hi, res_hi
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            # ブラケットが浮動小数点の分解能に達した
            theta, g, x, res = (lo, g_lo, x_lo, res_lo) if abs(g_lo) <= abs(g_hi) else (hi, g_hi, x_hi, res_hi)
            break
        g_mid, x_mid, res_mid = solver.secular(mid, config.chi_p)
        if g_mid > 0.0:
            hi, g_hi, x_hi, res_hi = mid, g_mid, x_mid, res_mid
        else:
            lo, g_lo, x_lo, res_lo = mid, g_mid, x_mid, res_mid

    solution = _finish(p, y, x, theta, res, g, solver.evaluations, config, started)
    logger.info("BDU推定が完了しました", {
        "theta": theta, "root_iterations": solution.root_iterations,
        "secular_residual": solution.secular_residual,
    })
    return solution
