"""
一般化線形分数計画（GLFP）推定サービス
符号ベクトル s ごとに z = D_s x ≥ 0 と置き換え、

    (l_i∘s − vζ)ᵀ z ≤  y_i + v
    (−l_i∘s − vζ)ᵀ z ≤ −y_i + v

の実行可能性を第1段階単体法で判定し、v の二分法で v_s を求める。
全符号ベクトルの最小値が ξ̂ となる。

分母 ζᵀD_s x + 1 は D_s x ≥ 0 かつ ζ ∈ {0, 1} なら常に 1 以上なので、正値制約は不要。
v ≥ max|y| では z = 0 が実行可能なので、v_s ≤ max|y| が常に成り立つ。
"""

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from errors import DimensionGuardError, InfeasibleProblemError
from models.estimate import GlfpProblem, GlfpSolution, SignedSubproblem
from utils.linalg import ensure_finite
from utils.logger import get_logger
from utils.simplex import check_feasibility

DEFAULT_TOL = 1e-8
DEFAULT_MAX_DIM = 24
# 上側ブラケットの初期値と上限
V_HI_START = 1.0
V_HI_CAP = 1e6


def make_problem(p: np.ndarray, y: np.ndarray, lambda_set: Optional[Iterable[int]] = None) -> GlfpProblem:
    """
    GLFP問題を作る。lambda_set を省略すると全ての列を不確かとみなす。
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    y = np.asarray(y, dtype=float)
    ensure_finite(p, y, name="GLFPの入力")
    if p.shape[0] != y.shape[0]:
        raise DimensionGuardError(f"次元が一致しません: P {p.shape}, y {y.shape}")
    dim = p.shape[1]
    columns = tuple(range(dim)) if lambda_set is None else tuple(sorted(set(int(c) for c in lambda_set)))
    if any(c < 0 or c >= dim for c in columns):
        raise DimensionGuardError(f"Λ の列番号が範囲外です: {columns}")
    zeta = np.zeros(dim)
    zeta[list(columns)] = 1.0
    return GlfpProblem(p=p, y=y, zeta=zeta, lambda_set=columns)


def sign_vector(index: int, dim: int) -> np.ndarray:
    """グレイコード順の index 番目の符号ベクトル（ビットが立つ成分が −1）"""
    gray = index ^ (index >> 1)
    bits = (gray >> np.arange(dim)) & 1
    return np.where(bits == 1, -1.0, 1.0)


def _constraints(problem: GlfpProblem, s: np.ndarray, v: float) -> Tuple[np.ndarray, np.ndarray]:
    ls = problem.p * s
    vz = v * problem.zeta
    a_ub = np.vstack([ls - vz, -ls - vz])
    b_ub = np.concatenate([problem.y + v, -problem.y + v])
    return a_ub, b_ub


class Incumbent:
    """
    暫定最良値。更新は排他制御し、値は単調に減少する。

    (v, グレイコード番号) の辞書式順で比較するので、並列実行でも結果は順序に依存しない。
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.value = float("inf")
        self.index = -1
        self.subproblem: Optional[SignedSubproblem] = None

    def offer(self, index: int, sub: SignedSubproblem) -> bool:
        with self._lock:
            if (sub.v_s, index) < (self.value, self.index if self.index >= 0 else float("inf")):
                self.value = sub.v_s
                self.index = index
                self.subproblem = sub
                return True
            return False


def solve_signed(
    problem: GlfpProblem,
    s: np.ndarray,
    v_lo: float = 0.0,
    v_hi: float = V_HI_START,
    tol: float = DEFAULT_TOL,
    v_cap: float = V_HI_CAP,
    incumbent: Optional[Incumbent] = None,
) -> SignedSubproblem:
    """
    符号ベクトル s の部分問題を v の二分法で解く。

    v_hi で実行不可能なら v_cap を超えるまで倍にする（超えたら v_s = inf）。
    incumbent があれば、まず暫定値で実行可能か確かめ、不可能なら枝刈りする。
    二分法の下端が暫定値を超えた時点でも打ち切る。
    証拠点 x_s は v_s + tol での実行可能解。
    """
    s = np.asarray(s, dtype=float)
    checks = 0

    def feasible(v: float):
        nonlocal checks
        checks += 1
        a_ub, b_ub = _constraints(problem, s, v)
        return check_feasibility(a_ub, b_ub)

    def pruned() -> SignedSubproblem:
        return SignedSubproblem(s=s, v_s=float("inf"), pruned=True, feasibility_checks=checks)

    lo = max(v_lo, 0.0)
    if feasible(lo).feasible:
        hi = lo
    else:
        hi = min(max(v_hi, lo), v_cap)
        if incumbent is not None and incumbent.value < float("inf"):
            bound = incumbent.value
            if bound <= lo or not feasible(bound).feasible:
                return pruned()
            hi = bound
        else:
            while not feasible(hi).feasible:
                if hi >= v_cap:
                    return SignedSubproblem(s=s, v_s=float("inf"), feasibility_checks=checks)
                lo = hi
                hi = min(2.0 * hi, v_cap)

        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if feasible(mid).feasible:
                hi = mid
            else:
                lo = mid
            if incumbent is not None and lo > incumbent.value:
                return pruned()

    result = feasible(hi + tol)
    if not result.feasible:
        result = feasible(hi + 2 * tol)
    x_s = s * result.witness if result.witness is not None else None
    return SignedSubproblem(s=s, v_s=hi, x_s=x_s, feasibility_checks=checks)


@dataclass
class _Progress:
    evaluated: int = 0
    pruned: int = 0


def solve_glfp(
    problem: GlfpProblem,
    tol: float = DEFAULT_TOL,
    max_dim: int = DEFAULT_MAX_DIM,
    jobs: int = 1,
) -> GlfpSolution:
    """
    全 2^dim 個の符号ベクトルをグレイコード順に列挙し、ξ̂ = min_s v_s を求める。

    jobs > 1 ではスレッドプールに分配し、暫定値を共有して枝刈りする。
    最良の符号ベクトルは暫定値なしで解き直すので、x_star は実行順に依存しない。

    Raises:
        DimensionGuardError: 状態次元が max_dim を超える場合
        InfeasibleProblemError: 全ての符号ベクトルが実行不可能な場合
    """
    started = time.perf_counter()
    logger = get_logger("glfp_service")

    dim = problem.dim
    if dim > max_dim:
        raise DimensionGuardError(
            f"GLFP の状態次元 {dim} が上限 {max_dim} を超えています（符号ベクトル 2^{dim} 個）"
        )

    incumbent = Incumbent()
    progress = _Progress()
    progress_lock = threading.Lock()
    total = 1 << dim

    def evaluate(index: int) -> None:
        s = sign_vector(index, dim)
        sub = solve_signed(problem, s, tol=tol, incumbent=incumbent)
        with progress_lock:
            progress.evaluated += 1
            if sub.pruned:
                progress.pruned += 1
        if np.isfinite(sub.v_s):
            incumbent.offer(index, sub)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            list(executor.map(evaluate, range(total)))
    else:
        for index in range(total):
            evaluate(index)

    if incumbent.subproblem is None:
        raise InfeasibleProblemError("全ての符号ベクトルで実行不可能でした")

    best = solve_signed(problem, sign_vector(incumbent.index, dim), tol=tol)
    solution = GlfpSolution(
        xi_hat=float(best.v_s),
        x_star=best.x_s,
        s_star=best.s,
        evaluated_signs=progress.evaluated,
        pruned_signs=progress.pruned,
        runtime_seconds=time.perf_counter() - started,
    )
    logger.info("GLFP推定が完了しました", {
        "xi_hat": solution.xi_hat, "evaluated_signs": solution.evaluated_signs,
        "pruned_signs": solution.pruned_signs, "runtime_seconds": solution.runtime_seconds,
    })
    return solution


def max_ratio(problem: GlfpProblem, x: Sequence[float]) -> float:
    """状態 x での目的関数 max_i |l_i x − y_i| / (ζᵀ|x| + 1)"""
    return problem.objective(np.asarray(x, dtype=float))
