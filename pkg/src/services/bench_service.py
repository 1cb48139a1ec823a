"""
ベンチマークサービス
摂動 → 潮流計算 → 雑音付き計測 → 各手法で推定 → 評価 の実験手順を試行ごとに実行し、
手法ごとの実行時間・RMSE・包含率を集計する。

試行ごとの乱数シードは (seed, trial) から決まるので、並列実行でも結果は同じになる。
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from queue import Queue
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import psutil

from config import load_settings
from errors import DimensionGuardError, LseError
from models.estimate import BduConfig, StateBounds
from models.experiment import (
    ExperimentConfig,
    ExperimentReport,
    Method,
    MethodSummary,
    TrialRecord,
    WeightMode,
)
from models.measurement import MeasurementModel, PmuPlacement
from models.network import NetworkCase
from services.bdu_service import solve_bdu
from services.glfp_service import make_problem, solve_glfp
from services.interval_service import estimate_bounds
from services.measurement_service import (
    build_measurement_matrix,
    build_uncertainty_spec,
    build_weights,
    empirical_sigmas,
    perturb_parameters,
    simulate_measurements,
)
from utils.file_manager import resolve_case, resolve_placement
from utils.logger import get_logger


@dataclass(frozen=True)
class TrialSeeds:
    """1試行分の乱数シード"""
    perturb: int
    noise: int
    weights: int


def derive_trial_seeds(seed: int, trial: int) -> TrialSeeds:
    """
    seed ^ trial を SeedSequence で3系統（摂動・雑音・経験的重み）に分ける。
    """
    children = np.random.SeedSequence(seed ^ trial).spawn(3)
    perturb, noise, weights = (int(child.generate_state(1)[0]) for child in children)
    return TrialSeeds(perturb=perturb, noise=noise, weights=weights)


def rmse(x_hat: np.ndarray, x_true: np.ndarray) -> float:
    """
    sqrt((1/2B) Σ_j (x̂_j − x_j)²)

    Raises:
        DimensionGuardError: 長さが一致しない場合
    """
    x_hat = np.asarray(x_hat, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x_hat.shape != x_true.shape:
        raise DimensionGuardError(f"状態ベクトルの長さが一致しません: {x_hat.shape} != {x_true.shape}")
    if x_hat.size == 0:
        return 0.0
    return float(np.sqrt(np.mean((x_hat - x_true) ** 2)))


def containment(bounds: StateBounds, x_true: np.ndarray, atol: float = 1e-9) -> Tuple[float, np.ndarray]:
    """
    lower_j − atol ≤ x_true_j ≤ upper_j + atol を満たす成分の割合と、成分ごとの判定。

    atol は幅0の区間で丸め誤差を吸収するための許容値。
    """
    x_true = np.asarray(x_true, dtype=float)
    flags = (bounds.lower - atol <= x_true) & (x_true <= bounds.upper + atol)
    rate = float(np.mean(flags)) if flags.size else 1.0
    return rate, flags


def _worker_count(jobs: int) -> int:
    if jobs > 0:
        return jobs
    return psutil.cpu_count(logical=False) or 1


def _run_method(
    method: Method,
    model: MeasurementModel,
    w: np.ndarray,
    spec,
    y: np.ndarray,
    config: ExperimentConfig,
    settings: Dict[str, Any],
) -> Tuple[float, np.ndarray, Optional[StateBounds], Dict[str, Any]]:
    """推定器だけを計時して (実行時間, 推定値, 上下限, 診断情報) を返す"""
    if method == Method.INTERVAL:
        started = time.perf_counter()
        bounds = estimate_bounds(
            model, w, spec, y, tol=settings["interval_tol"], max_iter=settings["interval_max_iter"],
        )
        elapsed = time.perf_counter() - started
        return elapsed, bounds.center, bounds, {"iterations": bounds.iterations}

    if method == Method.CONVEX:
        bdu_config = BduConfig(
            chi_p=spec.chi_p, chi_y=spec.chi_y,
            theta_tol=settings["theta_tol"], max_root_iter=settings["max_root_iter"],
        )
        started = time.perf_counter()
        solution = solve_bdu(model.p0, y, bdu_config)
        elapsed = time.perf_counter() - started
        return elapsed, solution.x_hat, None, solution.diagnostics()

    problem = make_problem(model.p0, y)
    started = time.perf_counter()
    solution = solve_glfp(
        problem, tol=settings["glfp_tol"], max_dim=settings["glfp_max_dim"], jobs=_worker_count(config.glfp_jobs),
    )
    elapsed = time.perf_counter() - started
    diagnostics = {k: v for k, v in solution.to_dict().items() if k != "x_star"}
    return elapsed, solution.x_star, None, diagnostics


def run_trial(
    config: ExperimentConfig,
    case: NetworkCase,
    placement: PmuPlacement,
    model: MeasurementModel,
    trial: int,
    settings: Optional[Dict[str, Any]] = None,
    log_queue: Optional[Queue] = None,
) -> Tuple[List[TrialRecord], Optional[np.ndarray], str]:
    """
    1試行を実行する。

    公称モデル model は摂動前のパラメータで構築したものを渡す。
    データ生成の失敗は全手法の失敗として、推定の失敗は手法ごとに記録する。

    Returns:
        (手法ごとの記録, 真の状態, データ生成のエラー文字列)
    """
    logger = get_logger("bench_service", log_queue)
    settings = settings or load_settings()
    seeds = derive_trial_seeds(config.seed, trial)

    try:
        perturbed = perturb_parameters(
            case, config.max_rel_dev, seeds.perturb,
            sigma_fraction=settings["perturbation_sigma_fraction"],
            perturb_charging=config.perturb_charging,
        )
        vector = simulate_measurements(
            perturbed, placement, config.tve_bound, seeds.noise,
            tol=settings["pf_tol"], max_iter=settings["pf_max_iter"],
        )
        spec = build_uncertainty_spec(
            case, placement, config.max_rel_dev, config.tve_bound, vector,
            chi_p_mode=config.chi_p_mode.value, case_perturbed=perturbed,
            perturb_charging=config.perturb_charging, deviation_mode=config.deviation_mode.value,
        )
        if config.weight_mode == WeightMode.EMPIRICAL:
            sigmas = empirical_sigmas(vector, config.tve_bound, settings["empirical_weight_samples"], seeds.weights)
            row_sigmas = np.concatenate([sigmas, sigmas])
        else:
            row_sigmas = vector.row_sigmas
        w = build_weights(row_sigmas, floor=settings["sigma_floor"])
    except LseError as e:
        message = f"{type(e).__name__}: {e}"
        logger.warning("試行のデータ生成に失敗しました", {"trial": trial, "error": message})
        return [TrialRecord(trial=trial, method=method, error=message, exception=e) for method in config.methods], None, message

    x_true = vector.true_state
    records = []
    for method in config.methods:
        try:
            elapsed, estimate, bounds, diagnostics = _run_method(
                method, model, w, spec, vector.y, config, settings,
            )
        except LseError as e:
            message = f"{type(e).__name__}: {e}"
            logger.warning("推定に失敗しました", {"trial": trial, "method": method.value, "error": message})
            records.append(TrialRecord(trial=trial, method=method, error=message, exception=e))
            continue

        record = TrialRecord(
            trial=trial,
            method=method,
            runtime_s=elapsed,
            rmse_pu=rmse(estimate, x_true),
            estimate=estimate,
            diagnostics=diagnostics,
        )
        if bounds is not None:
            record.containment_rate, _ = containment(bounds, x_true)
            record.mean_bound_width = float(np.mean(bounds.width))
            record.lower = bounds.lower
            record.upper = bounds.upper
        records.append(record)

    logger.info("試行が完了しました", {
        "trial": trial,
        "failed_methods": sum(1 for r in records if r.failed),
    })
    return records, x_true, ""


def _median(values: List[float]) -> float:
    return float(np.median(values)) if values else float("nan")


def _mean(values: List[float]) -> float:
    return float(np.mean(values)) if values else float("nan")


def summarize(report: ExperimentReport) -> Dict[Method, MethodSummary]:
    """手法ごとに実行時間・RMSE の中央値、包含率・区間幅の平均を集計する"""
    summaries = {}
    for method in report.config.methods:
        done = [r for r in report.records_for(method) if not r.failed]
        summaries[method] = MethodSummary(
            method=method,
            runtime_s=_median([r.runtime_s for r in done]),
            rmse_pu=_median([r.rmse_pu for r in done]),
            containment_rate=_mean([r.containment_rate for r in done if r.containment_rate == r.containment_rate]),
            mean_bound_width=_mean([r.mean_bound_width for r in done if r.mean_bound_width == r.mean_bound_width]),
            completed_trials=len(done),
            failed_trials=len(report.records_for(method)) - len(done),
        )
    return summaries


def run_experiment(
    config: ExperimentConfig,
    log_queue: Optional[Queue] = None,
    settings: Optional[Dict[str, Any]] = None,
    case: Optional[NetworkCase] = None,
    placement: Optional[PmuPlacement] = None,
) -> ExperimentReport:
    """
    実験全体を実行する。

    case, placement を省略すると config.case_name, config.placement から読み込む。

    Raises:
        ValueError: 設定値が不正な場合
        DimensionGuardError: GLFP を指定したが状態次元が上限を超える場合
        PlacementError: 配置が不可観測な場合
    """
    logger = get_logger("bench_service", log_queue)
    settings = settings or load_settings()

    is_valid, errors = config.validate()
    if not is_valid:
        raise ValueError("; ".join(errors))

    if case is None:
        case = resolve_case(config.case_name)
    if placement is None:
        placement = resolve_placement(config.placement, case.name or config.case_name)

    if Method.GLFP in config.methods and 2 * case.n_bus > settings["glfp_max_dim"]:
        raise DimensionGuardError(
            f"GLFP の状態次元 {2 * case.n_bus} が上限 {settings['glfp_max_dim']} を超えています"
        )

    model = build_measurement_matrix(case, placement)
    report = ExperimentReport(config=config, bus_ids=list(model.bus_ids))

    logger.info("実験を開始します", {
        "case": config.case_name, "trials": config.trials,
        "methods": ",".join(m.value for m in config.methods), "seed": config.seed,
    })

    def execute(trial: int):
        return trial, run_trial(config, case, placement, model, trial, settings, log_queue)

    workers = _worker_count(config.jobs)
    if workers > 1 and config.trials > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(execute, range(config.trials)))
    else:
        results = [execute(trial) for trial in range(config.trials)]

    for trial, (records, x_true, error) in sorted(results, key=lambda item: item[0]):
        report.records.extend(records)
        if x_true is not None:
            report.x_true[trial] = x_true
        if error:
            report.trial_errors[trial] = error

    report.summaries = summarize(report)
    logger.info("実験が完了しました", {
        "case": config.case_name,
        "failed_trials": len(report.trial_errors),
    })
    return report


def figure_rows(report: ExperimentReport, trial: int) -> List[Dict[str, Any]]:
    """
    試行 trial の図用データ（状態成分ごとに1行）。

    列: component_index, part, bus_id, true, convex_estimate, glfp_estimate, lower, upper
    """
    if trial not in report.x_true:
        raise ValueError(f"試行 {trial} の真の状態がありません")
    x_true = report.x_true[trial]
    n_bus = len(report.bus_ids)

    def column(method: Method, attribute: str) -> np.ndarray:
        record = report.record(trial, method)
        values = getattr(record, attribute) if record is not None else None
        return values if values is not None else np.full(2 * n_bus, np.nan)

    convex = column(Method.CONVEX, "estimate")
    glfp = column(Method.GLFP, "estimate")
    lower = column(Method.INTERVAL, "lower")
    upper = column(Method.INTERVAL, "upper")

    rows = []
    for j in range(2 * n_bus):
        rows.append({
            "component_index": j,
            "part": "re" if j < n_bus else "im",
            "bus_id": report.bus_ids[j % n_bus],
            "true": float(x_true[j]),
            "convex_estimate": float(convex[j]),
            "glfp_estimate": float(glfp[j]),
            "lower": float(lower[j]),
            "upper": float(upper[j]),
        })
    return rows


def summary_table(report: ExperimentReport) -> Dict[str, Any]:
    """手法を列、指標を行とする要約（JSON出力用）"""
    config = report.config
    return {
        "case": config.case_name,
        "placement": config.placement,
        "seed": config.seed,
        "trials": config.trials,
        "max_rel_dev": config.max_rel_dev,
        "tve_bound": config.tve_bound,
        "chi_p_mode": config.chi_p_mode.value,
        "deviation_mode": config.deviation_mode.value,
        "weight_mode": config.weight_mode.value,
        "methods": {method.value: summary.to_dict() for method, summary in report.summaries.items()},
        "failed_trials": {str(trial): error for trial, error in sorted(report.trial_errors.items())},
    }
