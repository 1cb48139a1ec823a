"""
計測モデル定義
PMU配置、計測チャネル、線形計測モデル、不確かさ仕様、計測値ベクトルを定義する。

行の並び: 全チャネルの実部（0..m-1）の後に全チャネルの虚部（m..2m-1）。
状態の並び: 全母線電圧の実部（0..B-1）の後に虚部（B..2B-1）。
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp


class ChannelKind(Enum):
    """計測チャネル種別"""
    VOLTAGE = "voltage"
    CURRENT_FROM = "current_from"      # ブランチ送り端の電流
    CURRENT_TO = "current_to"          # ブランチ受け端の電流

    @property
    def is_current(self) -> bool:
        return self != ChannelKind.VOLTAGE


@dataclass(frozen=True)
class PmuPlacement:
    """PMUを設置する母線IDの並び（ファイル順）"""
    bus_ids: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bus_ids", tuple(int(b) for b in self.bus_ids))

    def __len__(self) -> int:
        return len(self.bus_ids)


@dataclass(frozen=True)
class Channel:
    """複素フェーザ1つ分の計測チャネル（実部行と虚部行の2行に対応）"""
    channel_id: int
    kind: ChannelKind
    bus: int                             # PMUの設置母線ID
    branch_index: Optional[int] = None   # case.branches 内の位置
    branch_from: Optional[int] = None
    branch_to: Optional[int] = None


@dataclass
class MeasurementModel:
    """線形計測モデル y = P x の公称計測行列とチャネル情報"""
    p0: np.ndarray                       # (2m × 2B)
    channels: List[Channel]
    bus_ids: List[int]

    @property
    def n_bus(self) -> int:
        return len(self.bus_ids)

    @property
    def n_state(self) -> int:
        return 2 * self.n_bus

    @property
    def n_channel(self) -> int:
        return len(self.channels)

    @property
    def n_meas(self) -> int:
        return 2 * self.n_channel


@dataclass(frozen=True)
class UncertainParameter:
    """
    不確かなブランチパラメータ1つ。

    component:
        "g" 直列アドミタンスの実部
        "b" 直列アドミタンスの虚部
        "h" 充電サセプタンスの半分（片端分）
    """
    branch_index: int
    component: str
    nominal: float


@dataclass
class SensitivityStack:
    """
    Δp_k P_k の非零列・非零行を全パラメータ分横に並べたもの（重み行列に依存しない部分）。

    top:    列 (k, i) = Δp_k P_k[:, i]   （i は P_k の非零列、top_cols に i、top_owner に k）
    bottom: 列 (k, j) = Δp_k P_k[j, :]ᵀ  （j は P_k の非零行、bottom_rows に j、bottom_owner に k）
    """
    top: sp.csc_matrix
    top_cols: np.ndarray
    top_owner: np.ndarray
    bottom: sp.csc_matrix
    bottom_rows: np.ndarray
    bottom_owner: np.ndarray

    @classmethod
    def build(cls, sensitivities: List[sp.spmatrix], delta_p: np.ndarray,
              shape: Tuple[int, int]) -> 'SensitivityStack':
        n_meas, n_state = shape
        tops, top_cols, top_owner = [], [], []
        bottoms, bottom_rows, bottom_owner = [], [], []
        for k, (dp, pk) in enumerate(zip(delta_p, sensitivities)):
            csc = sp.csc_matrix(pk, dtype=float, copy=True)
            csc.eliminate_zeros()
            if csc.nnz == 0:
                continue
            cols = np.flatnonzero(np.diff(csc.indptr))
            tops.append(csc[:, cols] * dp)
            top_cols.append(cols)
            top_owner.append(np.full(cols.size, k))

            csr = csc.tocsr()
            rows = np.flatnonzero(np.diff(csr.indptr))
            bottoms.append(csr[rows, :].T * dp)
            bottom_rows.append(rows)
            bottom_owner.append(np.full(rows.size, k))

        def stack(blocks, n_rows):
            if not blocks:
                return sp.csc_matrix((n_rows, 0))
            return sp.hstack(blocks, format="csc")

        def indices(parts):
            return np.concatenate(parts).astype(int) if parts else np.zeros(0, dtype=int)

        return cls(
            top=stack(tops, n_meas), top_cols=indices(top_cols), top_owner=indices(top_owner),
            bottom=stack(bottoms, n_state), bottom_rows=indices(bottom_rows),
            bottom_owner=indices(bottom_owner),
        )


@dataclass
class UncertaintySpec:
    """
    パラメータと計測値の有界な不確かさ。

    P(ε) = P0 + Σ_k Δp_k P_k ε_k（ε ∈ [-1, 1]）がアドミタンス空間で厳密に成り立つ。
    """
    parameters: List[UncertainParameter]
    delta_p: np.ndarray                            # Δp_k ≥ 0
    sensitivities: List[sp.csr_matrix]             # P_k（2m × 2B）
    delta_y: np.ndarray                            # 行ごとの Δy_i ≥ 0
    chi_p: float
    chi_y: float
    xi: float
    shape: Tuple[int, int] = (0, 0)               # P0 の形状
    chi_p_mode: str = "paper"
    deviation_mode: str = "worst_case"
    stack: Optional[SensitivityStack] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.stack = SensitivityStack.build(self.sensitivities, self.delta_p, self.shape)

    @property
    def n_param(self) -> int:
        return len(self.parameters)

    @property
    def n_p(self) -> int:
        """不確かなブランチの数"""
        return len({p.branch_index for p in self.parameters})

    def bound_matrix(self) -> np.ndarray:
        """要素ごとの上界 Σ_k Δp_k |P_k|（密行列）"""
        total = sp.csr_matrix(self.shape)
        for dp, pk in zip(self.delta_p, self.sensitivities):
            if dp != 0.0:
                total = total + dp * abs(pk)
        return total.toarray()

    def expand(self, p0: np.ndarray, eps: np.ndarray) -> np.ndarray:
        """P0 + Σ_k Δp_k P_k ε_k"""
        eps = np.asarray(eps, dtype=float)
        result = np.array(p0, dtype=float, copy=True)
        for dp, pk, e in zip(self.delta_p, self.sensitivities, eps):
            if dp != 0.0 and e != 0.0:
                result += (dp * e) * pk.toarray()
        return result


@dataclass
class MeasurementVector:
    """PMU計測値（実部行の後に虚部行）"""
    y: np.ndarray                         # 雑音付き（長さ 2m）
    true_y: np.ndarray                    # 雑音なし
    sigmas: np.ndarray                    # チャネルごとの軸別標準偏差（長さ m）
    true_phasors: np.ndarray              # チャネルごとの真の複素フェーザ
    true_state: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def row_sigmas(self) -> np.ndarray:
        """行ごとの標準偏差（実部行・虚部行で同じ値）"""
        return np.concatenate([self.sigmas, self.sigmas])
