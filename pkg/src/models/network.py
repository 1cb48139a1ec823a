"""
系統モデル定義
MATPOWER形式のケースから読み込んだ母線・発電機・ブランチを保持する。
"""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, List, Tuple

from errors import NetworkTopologyError


class BusKind(Enum):
    """母線種別（値はMATPOWERの種別コード）"""
    PQ = 1
    PV = 2
    SLACK = 3

    @classmethod
    def from_code(cls, code: float) -> 'BusKind':
        """種別コードから対応するEnumを取得（未対応コードはValueError）"""
        for item in cls:
            if item.value == code:
                return item
        raise ValueError(f"未対応の母線種別コード: {code}")


class BranchStatus(Enum):
    """ブランチの運用状態"""
    OUT_OF_SERVICE = 0
    IN_SERVICE = 1

    @classmethod
    def from_code(cls, code: float) -> 'BranchStatus':
        """0以外は運用中として扱う"""
        return cls.OUT_OF_SERVICE if code == 0 else cls.IN_SERVICE


class GenStatus(Enum):
    """発電機の運転状態"""
    OFF = 0
    ON = 1

    @classmethod
    def from_code(cls, code: float) -> 'GenStatus':
        """0以下は停止として扱う（MATPOWERの規約）"""
        return cls.OFF if code <= 0 else cls.ON


@dataclass(frozen=True)
class Bus:
    """母線"""
    id: int
    kind: BusKind
    p_demand: float          # MW
    q_demand: float          # MVAr
    g_shunt: float           # MW（1 p.u.電圧時）
    b_shunt: float           # MVAr（1 p.u.電圧時）
    v_mag_init: float        # p.u.
    v_ang_init: float        # 度
    base_kv: float           # kV

    # 読み込んだ行の全列（書き出し時に未使用列を保持する。比較対象外）
    columns: Tuple[float, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class Branch:
    """ブランチ（π形等価回路）"""
    from_bus: int
    to_bus: int
    r: float                 # p.u. 直列抵抗
    x: float                 # p.u. 直列リアクタンス
    b_total: float           # p.u. 全充電サセプタンス
    tap: float = 0.0         # 0は1.0として扱う
    shift: float = 0.0       # 度
    status: BranchStatus = BranchStatus.IN_SERVICE
    columns: Tuple[float, ...] = field(default=(), compare=False)

    @property
    def in_service(self) -> bool:
        return self.status == BranchStatus.IN_SERVICE

    @property
    def effective_tap(self) -> float:
        """タップ比（MATPOWERの規約で0は1.0）"""
        return 1.0 if self.tap == 0 else self.tap


@dataclass(frozen=True)
class Generator:
    """発電機"""
    bus: int
    p_gen: float             # MW
    q_gen: float             # MVAr
    v_setpoint: float        # p.u.
    status: GenStatus = GenStatus.ON
    columns: Tuple[float, ...] = field(default=(), compare=False)


@dataclass
class NetworkCase:
    """系統ケース"""
    base_mva: float
    buses: List[Bus]
    generators: List[Generator]
    branches: List[Branch]
    name: str = ""
    version: str = "2"

    @cached_property
    def bus_index(self) -> Dict[int, int]:
        """母線ID → ファイル順の密なインデックス"""
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def slack_index(self) -> int:
        """スラック母線のインデックス"""
        for i, bus in enumerate(self.buses):
            if bus.kind == BusKind.SLACK:
                return i
        raise NetworkTopologyError("スラック母線がありません")

    def in_service_branches(self) -> List[Tuple[int, Branch]]:
        """運用中ブランチを (ケース内の位置, ブランチ) で返す"""
        return [(k, br) for k, br in enumerate(self.branches) if br.in_service]

    def online_generators_at(self, bus_id: int) -> List[Generator]:
        return [g for g in self.generators if g.bus == bus_id and g.status == GenStatus.ON]

    def validate(self) -> Tuple[bool, List[str]]:
        """
        ケースの不変条件を検証する。

        Returns:
            (有効かどうか, エラーメッセージのリスト)
        """
        errors: List[str] = []

        if not self.base_mva > 0:
            errors.append(f"baseMVA は正の値が必要です: {self.base_mva}")

        seen = set()
        for bus in self.buses:
            if bus.id in seen:
                errors.append(f"母線IDが重複しています: {bus.id}")
            seen.add(bus.id)
            if not bus.v_mag_init > 0:
                errors.append(f"母線{bus.id}の初期電圧が正ではありません: {bus.v_mag_init}")

        slack_count = sum(1 for bus in self.buses if bus.kind == BusKind.SLACK)
        if slack_count != 1:
            errors.append(f"スラック母線は1つである必要があります（{slack_count}個）")

        for k, branch in enumerate(self.branches):
            if branch.from_bus not in seen or branch.to_bus not in seen:
                errors.append(f"ブランチ{k + 1}の端点が存在しません: {branch.from_bus}-{branch.to_bus}")
            if branch.from_bus == branch.to_bus:
                errors.append(f"ブランチ{k + 1}の両端が同じ母線です: {branch.from_bus}")
            if branch.in_service and branch.r ** 2 + branch.x ** 2 == 0:
                errors.append(f"ブランチ{k + 1}の直列インピーダンスが0です")

        for gen in self.generators:
            if gen.bus not in seen:
                errors.append(f"発電機の接続母線が存在しません: {gen.bus}")

        if not errors:
            try:
                ensure_connected(self)
            except NetworkTopologyError as e:
                errors.append(str(e))

        return len(errors) == 0, errors


def ensure_connected(case: NetworkCase) -> None:
    """
    運用中ブランチで全母線が連結していることを確認する（幅優先探索）。

    Raises:
        NetworkTopologyError: 非連結の場合
    """
    if case.n_bus == 0:
        raise NetworkTopologyError("母線がありません")
    if not case.in_service_branches():
        raise NetworkTopologyError("運用中のブランチがありません")

    index = case.bus_index
    adjacency: List[List[int]] = [[] for _ in range(case.n_bus)]
    for _, branch in case.in_service_branches():
        f, t = index[branch.from_bus], index[branch.to_bus]
        adjacency[f].append(t)
        adjacency[t].append(f)

    visited = {0}
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for neighbor in adjacency[node]:
            if neighbor not in visited:
                visited.add(neighbor)
                queue.append(neighbor)

    if len(visited) != case.n_bus:
        isolated = [case.buses[i].id for i in range(case.n_bus) if i not in visited]
        raise NetworkTopologyError(f"系統が連結していません（到達不能な母線: {isolated[:10]}）")
