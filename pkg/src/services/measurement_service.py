"""
計測モデルサービス
PMU計測の線形モデル（実部・虚部を縦に並べた形式）の構築、線路パラメータの摂動、
有界雑音付き計測値の生成、パラメータ不確かさの感度行列、重み行列の計算を行う。
"""

from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from errors import PlacementError
from models.measurement import (
    Channel,
    ChannelKind,
    MeasurementModel,
    MeasurementVector,
    PmuPlacement,
    UncertainParameter,
    UncertaintySpec,
)
from models.network import NetworkCase
from services.powerflow_service import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    BranchTerms,
    branch_currents,
    branch_terms,
    build_admittance,
    solve_power_flow,
)
from utils.linalg import column_rank, norm2_mat, norm2_vec
from utils.logger import get_logger

DEFAULT_SIGMA_FLOOR = 1e-8
DEFAULT_SIGMA_FRACTION = 0.5
# 角と解析的な臨界点の検証に使う辺ごとの標本数
GUARD_SAMPLES = 100


def build_channels(case: NetworkCase, placement: PmuPlacement) -> List[Channel]:
    """
    PMUごとに母線電圧と、接続する運用中ブランチ全ての電流をチャネルにする。

    Raises:
        PlacementError: 存在しない母線にPMUがある場合
    """
    index = case.bus_index
    channels: List[Channel] = []
    for bus_id in placement.bus_ids:
        if bus_id not in index:
            raise PlacementError(f"PMUの設置母線が存在しません: {bus_id}")
        channels.append(Channel(len(channels), ChannelKind.VOLTAGE, bus_id))
        for k, branch in case.in_service_branches():
            if branch.from_bus == bus_id:
                kind = ChannelKind.CURRENT_FROM
            elif branch.to_bus == bus_id:
                kind = ChannelKind.CURRENT_TO
            else:
                continue
            channels.append(Channel(
                len(channels), kind, bus_id,
                branch_index=k, branch_from=branch.from_bus, branch_to=branch.to_bus,
            ))
    return channels


def _coefficients(channel: Channel, terms: BranchTerms) -> Tuple[complex, complex]:
    """電流チャネル I = α V_from + β V_to の (α, β)"""
    if channel.kind == ChannelKind.CURRENT_FROM:
        return terms.yff, terms.yft
    return terms.ytf, terms.ytt


def _current_entries(
    row: int, m: int, n_bus: int, f: int, t: int, alpha: complex, beta: complex
) -> Tuple[List[int], List[int], List[float]]:
    """電流チャネル1つ分の (行, 列, 値)。実部行は row、虚部行は m + row"""
    rows, cols, vals = [], [], []
    for idx, coef in ((f, alpha), (t, beta)):
        rows += [row, row, m + row, m + row]
        cols += [idx, n_bus + idx, idx, n_bus + idx]
        vals += [coef.real, -coef.imag, coef.imag, coef.real]
    return rows, cols, vals


def _assemble(case: NetworkCase, channels: Sequence[Channel], terms: Dict[int, BranchTerms]) -> np.ndarray:
    """
    チャネルとブランチ端子アドミタンスから計測行列を組み立てる。

    行は [全チャネルの実部; 全チャネルの虚部] の順、列は [全母線の実部; 全母線の虚部] の順。
    行 i と行 m + i がチャネル i の実部と虚部になる（チャネルごとに実部・虚部を交互に並べない）。
    """
    index = case.bus_index
    m = len(channels)
    n_bus = case.n_bus
    p = np.zeros((2 * m, 2 * n_bus))
    for ch in channels:
        if ch.kind == ChannelKind.VOLTAGE:
            i = index[ch.bus]
            p[ch.channel_id, i] = 1.0
            p[m + ch.channel_id, n_bus + i] = 1.0
            continue
        alpha, beta = _coefficients(ch, terms[ch.branch_index])
        rows, cols, vals = _current_entries(
            ch.channel_id, m, n_bus, index[ch.branch_from], index[ch.branch_to], alpha, beta
        )
        np.add.at(p, (rows, cols), vals)
    return p


def _nominal_terms(case: NetworkCase) -> Dict[int, BranchTerms]:
    return {
        k: branch_terms(br.r, br.x, br.b_total, br.effective_tap, br.shift)
        for k, br in case.in_service_branches()
    }


def build_measurement_matrix(case: NetworkCase, placement: PmuPlacement) -> MeasurementModel:
    """
    公称パラメータで計測行列 P0 を構築する。

    Raises:
        PlacementError: 存在しない母線、または P0 が列フルランクでない（不可観測）場合
    """
    channels = build_channels(case, placement)
    p0 = _assemble(case, channels, _nominal_terms(case))
    model = MeasurementModel(p0=p0, channels=channels, bus_ids=[bus.id for bus in case.buses])

    rank = column_rank(p0)
    if rank < model.n_state:
        raise PlacementError(
            f"PMU配置では系統が可観測になりません（rank {rank} < {model.n_state}）"
        )
    return model


def matrix_at_parameters(
    case: NetworkCase,
    placement: PmuPlacement,
    parameters: Sequence[UncertainParameter],
    values: Sequence[float],
) -> np.ndarray:
    """
    不確かなパラメータを values に置き換えたアドミタンスから計測行列を作り直す。

    Args:
        parameters: 置き換えるパラメータ（UncertaintySpec.parameters）
        values: 各パラメータの値
    """
    overrides: Dict[int, Dict[str, float]] = {}
    for param, value in zip(parameters, values):
        overrides.setdefault(param.branch_index, {})[param.component] = float(value)

    terms = {}
    for k, br in case.in_service_branches():
        series = 1.0 / complex(br.r, br.x)
        half = br.b_total / 2.0
        if k in overrides:
            o = overrides[k]
            series = complex(o.get("g", series.real), o.get("b", series.imag))
            half = o.get("h", half)
        terms[k] = branch_terms(
            br.r, br.x, br.b_total, br.effective_tap, br.shift, series=series, half_charging=half
        )
    return _assemble(case, build_channels(case, placement), terms)


def perturb_parameters(
    case: NetworkCase,
    max_rel_dev: float,
    seed: int,
    sigma_fraction: float = DEFAULT_SIGMA_FRACTION,
    perturb_charging: bool = False,
) -> NetworkCase:
    """
    各ブランチの r, x に (1 + d) を掛けた摂動ケースを返す。

    d = sigma_fraction·max_rel_dev·N(0, 1) を |d| ≤ max_rel_dev になるまで引き直す。
    r と x は独立に摂動する。perturb_charging が真なら b_total も同様に摂動する。
    """
    if not 0 <= max_rel_dev < 1:
        raise ValueError(f"max_rel_dev は 0 以上 1 未満である必要があります: {max_rel_dev}")

    rng = np.random.default_rng(seed)
    scale = sigma_fraction * max_rel_dev

    def draw() -> float:
        if max_rel_dev == 0:
            return 0.0
        while True:
            d = scale * rng.standard_normal()
            if abs(d) <= max_rel_dev:
                return float(d)

    branches = []
    for branch in case.branches:
        d_r = draw()
        d_x = draw()
        d_b = draw() if perturb_charging else 0.0
        branches.append(replace(
            branch,
            r=branch.r * (1.0 + d_r),
            x=branch.x * (1.0 + d_x),
            b_total=branch.b_total * (1.0 + d_b),
        ))

    return NetworkCase(
        base_mva=case.base_mva,
        buses=list(case.buses),
        generators=list(case.generators),
        branches=branches,
        name=case.name,
        version=case.version,
    )


def bounded_phasor_noise(
    rng: np.random.Generator, phasor: complex, tve_bound: float, size: int = 1
) -> np.ndarray:
    """
    TVE が tve_bound 以下の複素ガウス雑音を棄却法で生成する。

    軸ごとの標準偏差は tve_bound·|phasor|/3。
    """
    magnitude = abs(phasor)
    sigma = tve_bound * magnitude / 3.0
    if sigma == 0.0:
        return np.zeros(size, dtype=complex)

    limit = tve_bound * magnitude
    noise = sigma * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
    rejected = np.abs(noise) > limit
    while np.any(rejected):
        count = int(rejected.sum())
        noise[rejected] = sigma * (rng.standard_normal(count) + 1j * rng.standard_normal(count))
        rejected = np.abs(noise) > limit
    return noise


def true_phasors(case: NetworkCase, placement: PmuPlacement, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER) -> Tuple[List[Channel], np.ndarray, np.ndarray]:
    """潮流解からチャネルごとの真のフェーザを求める。(チャネル, フェーザ, 状態) を返す"""
    admittance = build_admittance(case)
    profile = solve_power_flow(case, tol=tol, max_iter=max_iter, model=admittance)
    i_from, i_to = branch_currents(admittance, profile)
    index = case.bus_index

    channels = build_channels(case, placement)
    phasors = np.zeros(len(channels), dtype=complex)
    for ch in channels:
        if ch.kind == ChannelKind.VOLTAGE:
            phasors[ch.channel_id] = profile.voltages[index[ch.bus]]
        elif ch.kind == ChannelKind.CURRENT_FROM:
            phasors[ch.channel_id] = i_from[ch.branch_index]
        else:
            phasors[ch.channel_id] = i_to[ch.branch_index]
    return channels, phasors, profile.state


def simulate_measurements(
    case_perturbed: NetworkCase,
    placement: PmuPlacement,
    tve_bound: float,
    seed: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> MeasurementVector:
    """
    摂動ケースの潮流解から、TVE上限付きの雑音を加えたPMU計測値を生成する。

    Raises:
        ConvergenceError: 潮流計算が収束しない場合
    """
    _, phasors, state = true_phasors(case_perturbed, placement, tol, max_iter)

    rng = np.random.default_rng(seed)
    noisy = phasors.copy()
    for c, phasor in enumerate(phasors):
        noisy[c] = phasor + bounded_phasor_noise(rng, phasor, tve_bound)[0]

    return MeasurementVector(
        y=np.concatenate([noisy.real, noisy.imag]),
        true_y=np.concatenate([phasors.real, phasors.imag]),
        sigmas=tve_bound * np.abs(phasors) / 3.0,
        true_phasors=phasors,
        true_state=state,
    )


def empirical_sigmas(vector: MeasurementVector, tve_bound: float, samples: int, seed: int) -> np.ndarray:
    """
    真値と雑音付き値の差の標準偏差を、チャネルごとに samples 個の雑音標本から推定する。
    """
    rng = np.random.default_rng(seed)
    sigmas = np.zeros(len(vector.true_phasors))
    for c, phasor in enumerate(vector.true_phasors):
        noise = bounded_phasor_noise(rng, phasor, tve_bound, samples)
        sigmas[c] = float(np.std(np.concatenate([noise.real, noise.imag])))
    return sigmas


def admittance_deviation(r: float, x: float, max_rel_dev: float,
                         samples: int = GUARD_SAMPLES) -> Tuple[float, float, bool]:
    """
    r, x がそれぞれ ±max_rel_dev 変化したときの直列アドミタンス実部・虚部の最大偏差。

    4つの角で評価し、各辺の標本点と解析的な臨界点で角が最大であることを確かめる。
    角を上回る点があれば偏差を広げる。

    Returns:
        (Δg, Δb, 広げたかどうか)
    """
    y0 = 1.0 / complex(r, x)
    r_lo, r_hi = sorted((r * (1 - max_rel_dev), r * (1 + max_rel_dev)))
    x_lo, x_hi = sorted((x * (1 - max_rel_dev), x * (1 + max_rel_dev)))

    corners = np.array([complex(rc, xc) for rc in (r_lo, r_hi) for xc in (x_lo, x_hi)])
    y_corner = 1.0 / corners
    dg = float(np.max(np.abs(y_corner.real - y0.real)))
    db = float(np.max(np.abs(y_corner.imag - y0.imag)))

    # 実部・虚部は調和関数なので極値は長方形の境界上にある
    t = np.linspace(0.0, 1.0, samples)
    r_line = r_lo + (r_hi - r_lo) * t
    x_line = x_lo + (x_hi - x_lo) * t
    # 辺上の臨界点: 横の辺では r = ±|x|, 0、縦の辺では x = ±|r|, 0
    critical = []
    for xe in (x_lo, x_hi):
        critical += [complex(v, xe) for v in (abs(xe), -abs(xe), 0.0) if r_lo <= v <= r_hi]
    for re_ in (r_lo, r_hi):
        critical += [complex(re_, v) for v in (abs(re_), -abs(re_), 0.0) if x_lo <= v <= x_hi]

    edge_points = np.concatenate([
        r_line + 1j * x_lo, r_line + 1j * x_hi,
        r_lo + 1j * x_line, r_hi + 1j * x_line,
        np.array(critical, dtype=complex),
    ])
    edge_points = edge_points[edge_points != 0]
    y_edge = 1.0 / edge_points
    guard_g = float(np.max(np.abs(y_edge.real - y0.real)))
    guard_b = float(np.max(np.abs(y_edge.imag - y0.imag)))

    rtol = 1e-9
    enlarged = guard_g > dg * (1 + rtol) + 1e-15 or guard_b > db * (1 + rtol) + 1e-15
    return max(dg, guard_g), max(db, guard_b), enlarged


def _sensitivity(
    case: NetworkCase, channels: Sequence[Channel], k: int, d_alpha_beta: Dict[ChannelKind, Tuple[complex, complex]],
    shape: Tuple[int, int],
) -> sp.csr_matrix:
    """ブランチ k のパラメータに関する ∂P/∂p_k（当該ブランチのチャネル行のみ非零）"""
    index = case.bus_index
    m = len(channels)
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    for ch in channels:
        if ch.branch_index != k:
            continue
        alpha, beta = d_alpha_beta[ch.kind]
        r, c, v = _current_entries(
            ch.channel_id, m, case.n_bus, index[ch.branch_from], index[ch.branch_to], alpha, beta
        )
        rows += r
        cols += c
        vals += v
    matrix = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    matrix.eliminate_zeros()
    return matrix


def max_change_chi_p(case_nominal: NetworkCase, case_perturbed: Optional[NetworkCase] = None,
                max_rel_dev: float = 0.0) -> float:
    """
    r, x の絶対変化量の最大値。

    摂動ケースがない場合は許容される最大変化量 max_rel_dev·max(|r|, |x|) を使う。
    """
    changes = [0.0]
    if case_perturbed is not None:
        for nominal, perturbed in zip(case_nominal.branches, case_perturbed.branches):
            if nominal.in_service:
                changes += [abs(perturbed.r - nominal.r), abs(perturbed.x - nominal.x)]
    else:
        for _, branch in case_nominal.in_service_branches():
            changes += [max_rel_dev * abs(branch.r), max_rel_dev * abs(branch.x)]
    return float(max(changes))


def build_uncertainty_spec(
    case_nominal: NetworkCase,
    placement: PmuPlacement,
    max_rel_dev: float,
    tve_bound: float,
    y_true: MeasurementVector,
    chi_p_mode: str = "paper",
    case_perturbed: Optional[NetworkCase] = None,
    perturb_charging: bool = False,
    deviation_mode: str = "worst_case",
) -> UncertaintySpec:
    """
    パラメータ（直列アドミタンスの実部・虚部、必要なら充電サセプタンスの半分）と
    計測値の不確かさを構築する。

    Args:
        case_nominal: 公称ケース
        placement: PMU配置
        max_rel_dev: r, x の最大相対偏差
        tve_bound: TVE上限
        y_true: 真のフェーザを含む計測値（Δy_i = tve_bound·|真のフェーザ|）
        chi_p_mode: "matrix"（上界行列の2ノルム）または "paper"（r, x の最大絶対変化量）
        case_perturbed: 摂動ケース（paper モードと realized モードで使う）
        perturb_charging: 充電サセプタンスも不確かとみなす
        deviation_mode: "worst_case"（r, x が ±max_rel_dev 変化したときの最大偏差）または
            "realized"（摂動ケースと公称値の差の絶対値。真のパラメータは ε = ±1 の位置にある）

    Returns:
        UncertaintySpec
    """
    if deviation_mode not in ("worst_case", "realized"):
        raise ValueError(f"未対応の偏差モード: {deviation_mode}")
    if deviation_mode == "realized" and case_perturbed is None:
        raise ValueError("realized モードには摂動ケースが必要です")

    logger = get_logger("measurement_service")
    channels = build_channels(case_nominal, placement)
    m = len(channels)
    shape = (2 * m, 2 * case_nominal.n_bus)
    touched = sorted({ch.branch_index for ch in channels if ch.kind.is_current})

    parameters: List[UncertainParameter] = []
    delta_p: List[float] = []
    sensitivities: List[sp.csr_matrix] = []

    for k in touched:
        branch = case_nominal.branches[k]
        tap = branch.effective_tap
        t = tap * np.exp(1j * np.deg2rad(branch.shift))
        ys = 1.0 / complex(branch.r, branch.x)

        # 直列アドミタンスに対する端子係数の微分
        d_series = {
            ChannelKind.CURRENT_FROM: (1.0 / (tap * tap), -1.0 / np.conj(t)),
            ChannelKind.CURRENT_TO: (-1.0 / t, 1.0 + 0j),
        }
        if deviation_mode == "realized":
            actual = case_perturbed.branches[k]
            ys_actual = 1.0 / complex(actual.r, actual.x)
            dg, db, enlarged = abs(ys_actual.real - ys.real), abs(ys_actual.imag - ys.imag), False
            dh = abs(actual.b_total - branch.b_total) / 2.0
        else:
            dg, db, enlarged = admittance_deviation(branch.r, branch.x, max_rel_dev)
            dh = max_rel_dev * abs(branch.b_total) / 2.0
        if enlarged:
            logger.warning("角以外でアドミタンス偏差が最大となったため Δp を広げました", {
                "branch": f"{branch.from_bus}-{branch.to_bus}",
            })

        for component, dp, factor in (("g", dg, 1.0), ("b", db, 1j)):
            d_ab = {kind: (a * factor, b * factor) for kind, (a, b) in d_series.items()}
            parameters.append(UncertainParameter(k, component, ys.real if component == "g" else ys.imag))
            delta_p.append(dp)
            sensitivities.append(_sensitivity(case_nominal, channels, k, d_ab, shape))

        if perturb_charging:
            d_charging = {
                ChannelKind.CURRENT_FROM: (1j / (tap * tap), 0j),
                ChannelKind.CURRENT_TO: (0j, 1j),
            }
            half = branch.b_total / 2.0
            parameters.append(UncertainParameter(k, "h", half))
            delta_p.append(dh)
            sensitivities.append(_sensitivity(case_nominal, channels, k, d_charging, shape))

    delta_y = np.tile(tve_bound * np.abs(y_true.true_phasors), 2)
    spec = UncertaintySpec(
        parameters=parameters,
        delta_p=np.array(delta_p, dtype=float),
        sensitivities=sensitivities,
        delta_y=delta_y,
        chi_p=0.0,
        chi_y=norm2_vec(delta_y),
        xi=0.0,
        shape=shape,
        chi_p_mode=chi_p_mode,
        deviation_mode=deviation_mode,
    )

    bound = spec.bound_matrix()
    spec.xi = float(bound.max()) if bound.size else 0.0
    if chi_p_mode == "paper":
        spec.chi_p = max_change_chi_p(case_nominal, case_perturbed, max_rel_dev)
    elif chi_p_mode == "matrix":
        spec.chi_p = norm2_mat(bound)
    else:
        raise ValueError(f"未対応の χ_P モード: {chi_p_mode}")

    logger.info("不確かさ仕様を構築しました", {
        "parameters": spec.n_param, "chi_p": spec.chi_p, "chi_y": spec.chi_y, "xi": spec.xi,
    })
    return spec


def build_weights(sigmas: np.ndarray, floor: float = DEFAULT_SIGMA_FLOOR) -> np.ndarray:
    """対角重み行列 W_ii = max(σ_i², floor)（推定では W⁻¹ で重み付けする）"""
    sigmas = np.asarray(sigmas, dtype=float)
    return np.diag(np.maximum(sigmas ** 2, floor))
