"""
潮流計算サービス
π形等価回路によるアドミタンス行列の構築、極座標ニュートン法による交流潮流計算、
ブランチ電流と電力収支の計算を行う。
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from errors import ConvergenceError, NetworkTopologyError
from models.network import BusKind, GenStatus, NetworkCase, ensure_connected
from utils.linalg import lu_solve
from utils.logger import get_logger

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 30


@dataclass
class BranchTerms:
    """ブランチ1本の2端子アドミタンス I_f = yff V_f + yft V_t、I_t = ytf V_f + ytt V_t"""
    yff: complex
    yft: complex
    ytf: complex
    ytt: complex


@dataclass
class AdmittanceModel:
    """母線アドミタンス行列とブランチごとのπ形パラメータ"""
    ybus: np.ndarray                     # (B × B) 複素
    yff: np.ndarray                      # ブランチごと（停止中は0）
    yft: np.ndarray
    ytf: np.ndarray
    ytt: np.ndarray
    series: np.ndarray                   # y_s = 1/(r + jx)
    from_idx: np.ndarray
    to_idx: np.ndarray
    bus_shunt: np.ndarray                # (Gs + jBs)/baseMVA

    @property
    def n_bus(self) -> int:
        return self.ybus.shape[0]


@dataclass
class ComplexVoltageProfile:
    """潮流解の母線電圧（p.u.）"""
    voltages: np.ndarray
    iterations: int = 0
    mismatch: float = 0.0

    @property
    def state(self) -> np.ndarray:
        """実部・虚部を縦に並べた状態ベクトル（長さ 2B）"""
        return np.concatenate([self.voltages.real, self.voltages.imag])


def branch_terms(
    r: float,
    x: float,
    b_total: float,
    tap: float = 1.0,
    shift_deg: float = 0.0,
    series: Optional[complex] = None,
    half_charging: Optional[float] = None,
) -> BranchTerms:
    """
    π形等価回路（MATPOWERのタップ規約）の2端子アドミタンス。

    series / half_charging を与えた場合は r, x, b_total より優先する。
    """
    ys = series if series is not None else 1.0 / complex(r, x)
    h = half_charging if half_charging is not None else b_total / 2.0
    t = tap * np.exp(1j * np.deg2rad(shift_deg))
    return BranchTerms(
        yff=(ys + 1j * h) / (tap * tap),
        yft=-ys / np.conj(t),
        ytf=-ys / t,
        ytt=ys + 1j * h,
    )


def build_admittance(case: NetworkCase) -> AdmittanceModel:
    """
    母線アドミタンス行列を構築する。

    Raises:
        NetworkTopologyError: 運用中ブランチの直列インピーダンスが0の場合
    """
    n_bus = case.n_bus
    n_branch = len(case.branches)
    index = case.bus_index

    ybus = np.zeros((n_bus, n_bus), dtype=complex)
    yff = np.zeros(n_branch, dtype=complex)
    yft = np.zeros(n_branch, dtype=complex)
    ytf = np.zeros(n_branch, dtype=complex)
    ytt = np.zeros(n_branch, dtype=complex)
    series = np.zeros(n_branch, dtype=complex)
    from_idx = np.array([index[br.from_bus] for br in case.branches], dtype=int)
    to_idx = np.array([index[br.to_bus] for br in case.branches], dtype=int)

    for k, branch in case.in_service_branches():
        if branch.r == 0 and branch.x == 0:
            raise NetworkTopologyError(
                f"ブランチ {branch.from_bus}-{branch.to_bus} の直列インピーダンスが0です"
            )
        terms = branch_terms(branch.r, branch.x, branch.b_total, branch.effective_tap, branch.shift)
        series[k] = 1.0 / complex(branch.r, branch.x)
        yff[k], yft[k], ytf[k], ytt[k] = terms.yff, terms.yft, terms.ytf, terms.ytt

        f, t = from_idx[k], to_idx[k]
        ybus[f, f] += terms.yff
        ybus[f, t] += terms.yft
        ybus[t, f] += terms.ytf
        ybus[t, t] += terms.ytt

    bus_shunt = np.array(
        [complex(bus.g_shunt, bus.b_shunt) / case.base_mva for bus in case.buses], dtype=complex
    )
    ybus[np.diag_indices(n_bus)] += bus_shunt

    return AdmittanceModel(
        ybus=ybus, yff=yff, yft=yft, ytf=ytf, ytt=ytt, series=series,
        from_idx=from_idx, to_idx=to_idx, bus_shunt=bus_shunt,
    )


def _bus_types(case: NetworkCase) -> Tuple[np.ndarray, np.ndarray, int]:
    """(PV母線, PQ母線, スラック母線) のインデックス。運転中の発電機がないPV母線はPQ扱い"""
    pv, pq = [], []
    slack = case.slack_index
    for i, bus in enumerate(case.buses):
        if i == slack:
            continue
        if bus.kind == BusKind.PV and case.online_generators_at(bus.id):
            pv.append(i)
        else:
            pq.append(i)
    return np.array(pv, dtype=int), np.array(pq, dtype=int), slack


def _initial_voltages(case: NetworkCase, pv: np.ndarray, slack: int) -> np.ndarray:
    """ケースの初期電圧に発電機の電圧設定値を反映する"""
    vm = np.array([bus.v_mag_init for bus in case.buses], dtype=float)
    va = np.deg2rad([bus.v_ang_init for bus in case.buses])
    for i in list(pv) + [slack]:
        gens = case.online_generators_at(case.buses[i].id)
        if gens:
            vm[i] = gens[0].v_setpoint
    return vm * np.exp(1j * va)


def _scheduled_injection(case: NetworkCase) -> np.ndarray:
    """母線ごとの指定複素電力注入（p.u.）"""
    index = case.bus_index
    s = np.array([-complex(bus.p_demand, bus.q_demand) for bus in case.buses], dtype=complex)
    for gen in case.generators:
        if gen.status == GenStatus.ON:
            s[index[gen.bus]] += complex(gen.p_gen, gen.q_gen)
    return s / case.base_mva


def _power_jacobian(ybus: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """複素電力の電圧角・電圧大きさに対する偏微分 (dS/dVa, dS/dVm)"""
    ibus = ybus @ v
    diag_v = np.diag(v)
    diag_i = np.diag(ibus)
    diag_vnorm = np.diag(v / np.abs(v))
    ds_dvm = diag_v @ np.conj(ybus @ diag_vnorm) + np.conj(diag_i) @ diag_vnorm
    ds_dva = 1j * diag_v @ np.conj(diag_i - ybus @ diag_v)
    return ds_dva, ds_dvm


def solve_power_flow(
    case: NetworkCase,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    model: Optional[AdmittanceModel] = None,
) -> ComplexVoltageProfile:
    """
    極座標ニュートン法で交流潮流を解く（無効電力制限は考慮しない）。

    Args:
        case: 系統ケース（連結・スラック1つ）
        tol: PV/PQ母線の電力ミスマッチ許容値（∞ノルム、p.u.）
        max_iter: 最大反復回数
        model: 構築済みのアドミタンスモデル（省略時は構築する）

    Returns:
        ComplexVoltageProfile

    Raises:
        ConvergenceError: max_iter 回で収束しない場合
        SingularMatrixError: ヤコビ行列が特異な場合
    """
    logger = get_logger("powerflow_service")
    ensure_connected(case)
    if model is None:
        model = build_admittance(case)

    pv, pq, slack = _bus_types(case)
    pvpq = np.concatenate([pv, pq])
    n_pvpq = len(pvpq)

    v = _initial_voltages(case, pv, slack)
    vm = np.abs(v)
    va = np.angle(v)
    s_bus = _scheduled_injection(case)

    def mismatch_vector(v: np.ndarray) -> np.ndarray:
        mis = v * np.conj(model.ybus @ v) - s_bus
        return np.concatenate([mis[pvpq].real, mis[pq].imag])

    f = mismatch_vector(v)
    norm_f = float(np.max(np.abs(f))) if f.size else 0.0

    for iteration in range(max_iter + 1):
        if norm_f <= tol:
            logger.info("潮流計算が収束しました", {
                "case": case.name, "iterations": iteration, "mismatch": norm_f,
            })
            return ComplexVoltageProfile(voltages=v, iterations=iteration, mismatch=norm_f)
        if iteration == max_iter:
            break

        ds_dva, ds_dvm = _power_jacobian(model.ybus, v)
        jacobian = np.block([
            [ds_dva[np.ix_(pvpq, pvpq)].real, ds_dvm[np.ix_(pvpq, pq)].real],
            [ds_dva[np.ix_(pq, pvpq)].imag, ds_dvm[np.ix_(pq, pq)].imag],
        ])
        dx = -lu_solve(jacobian, f)

        va[pvpq] += dx[:n_pvpq]
        vm[pq] += dx[n_pvpq:]
        v = vm * np.exp(1j * va)

        f = mismatch_vector(v)
        norm_f = float(np.max(np.abs(f)))

    logger.warning("潮流計算が収束しませんでした", {"case": case.name, "mismatch": norm_f})
    raise ConvergenceError(
        f"潮流計算が {max_iter} 回で収束しませんでした（ミスマッチ {norm_f:.3e}）"
    )


def branch_currents(model: AdmittanceModel, profile: ComplexVoltageProfile) -> Tuple[np.ndarray, np.ndarray]:
    """
    ブランチごとの送り端・受け端電流（p.u.）。停止中ブランチは0。

    Returns:
        (I_from, I_to)
    """
    v = np.asarray(profile.voltages)
    vf = v[model.from_idx]
    vt = v[model.to_idx]
    i_from = model.yff * vf + model.yft * vt
    i_to = model.ytf * vf + model.ytt * vt
    return i_from, i_to


def power_balance(case: NetworkCase, model: AdmittanceModel, profile: ComplexVoltageProfile) -> Dict[str, complex]:
    """
    電力収支（p.u.）。generation = load + losses + shunt が成り立つ。

    losses はブランチ両端の流入電力の和（直列損失と充電分を含む）。
    """
    v = profile.voltages
    injection = v * np.conj(model.ybus @ v)
    load = np.array([complex(bus.p_demand, bus.q_demand) for bus in case.buses]) / case.base_mva
    i_from, i_to = branch_currents(model, profile)
    losses = np.sum(v[model.from_idx] * np.conj(i_from) + v[model.to_idx] * np.conj(i_to))
    shunt = np.sum(np.abs(v) ** 2 * np.conj(model.bus_shunt))
    generation = np.sum(injection + load)
    return {
        "generation": complex(generation),
        "load": complex(np.sum(load)),
        "losses": complex(losses),
        "shunt": complex(shunt),
        "imbalance": complex(generation - np.sum(load) - losses - shunt),
    }
