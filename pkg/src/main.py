"""
コマンドラインインターフェース - メインモジュール
サブコマンド validate / generate / estimate / bench / plot を提供し、
ライブラリ呼び出しの結果をCSV・JSON・SVGに書き出す。

終了コード: 0 成功、1 使い方の誤り、2 データ・検証エラー、3 数値計算の失敗
"""

import argparse
import json
import sys
import threading
from pathlib import Path
from queue import Empty, Queue
from typing import Callable, Optional, Sequence

# srcディレクトリをパスに追加
sys.path.insert(0, str(Path(__file__).parent))

from config import ensure_directories, get_output_path, load_settings, validate_settings
from errors import LseError
from models.estimate import StateBounds
from models.experiment import ChiPMode, DeviationMode, ExperimentConfig, Method, WeightMode
from models.network import ensure_connected
from services.bench_service import (
    derive_trial_seeds,
    figure_rows,
    run_experiment,
    summary_table,
)
from services.measurement_service import (
    build_channels,
    build_measurement_matrix,
    perturb_parameters,
    simulate_measurements,
)
from utils.file_manager import (
    resolve_case,
    resolve_placement,
    write_bounds_csv,
    write_case_file,
    write_estimates_csv,
    write_figure_csv,
    write_json,
    write_measurements_csv,
    write_placement_file,
    write_report_csv,
)
from utils.linalg import column_rank
from utils.logger import cleanup_old_logs, get_logger, set_log_level
from utils.svg_plot import plot_bounds as render_bounds_svg

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    """コマンドライン引数の誤り"""
    exit_code = EXIT_USAGE


class CliArgumentParser(argparse.ArgumentParser):
    """引数エラーで SystemExit(2) ではなく UsageError を送出するパーサー"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


class ProgressThread(threading.Thread):
    """
    ログキューを読み出して進捗を標準エラーに表示するスレッド
    """

    def __init__(self, log_queue: Queue, stream=None):
        super().__init__(daemon=True)
        self.log_queue = log_queue
        self.stream = stream or sys.stderr
        self._stop_event = threading.Event()

    def run(self):
        while not self._stop_event.is_set() or not self.log_queue.empty():
            try:
                record = self.log_queue.get(timeout=0.1)
            except Empty:
                continue
            print(f"{record['level']} {record['message']}", file=self.stream)

    def stop(self) -> None:
        self._stop_event.set()
        self.join(timeout=5)


def report_error(error: BaseException, code: int) -> None:
    """1行の機械可読なエラーを標準エラーに出す"""
    message = " ".join(str(error).split())
    print(f"ERROR code={code} type={type(error).__name__} message={message}", file=sys.stderr)


def _add_common(parser: argparse.ArgumentParser, stochastic: bool = False) -> None:
    parser.add_argument("--case", required=True, help="ケースファイルのパスまたは同梱ケース名（例: case14）")
    parser.add_argument("--placement", default=None,
                        help="PMU配置ファイルのパスまたは同梱配置名（省略時はケース名に対応する同梱配置）")
    parser.add_argument("--format", choices=["csv", "json"], default="csv", help="標準出力の要約形式")
    if stochastic:
        parser.add_argument("--seed", type=int, required=True, help="乱数シード（必須）")
        parser.add_argument("--dev", type=float, default=0.3, help="r, x の最大相対偏差")
        parser.add_argument("--tve", type=float, default=0.01, help="TVE上限")
        parser.add_argument("--out", default=None, help="出力ディレクトリ（省略時は設定の output_dir）")


def _add_estimation(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--chi-p", choices=[m.value for m in ChiPMode], default=ChiPMode.PAPER.value,
                        help="χ_P の求め方（matrix: 上界行列の2ノルム、paper: r, x の最大絶対変化量）")
    parser.add_argument("--deviation", choices=[m.value for m in DeviationMode], default=DeviationMode.REALIZED.value,
                        help="Δp の決め方（realized: 実際の摂動量、worst_case: ±dev の最大偏差）")
    parser.add_argument("--weights", choices=[m.value for m in WeightMode], default=WeightMode.KNOWN.value,
                        help="重み行列の分散（known: 雑音生成時の値、empirical: 標本推定）")
    parser.add_argument("--perturb-charging", action="store_true", help="充電サセプタンスも摂動・不確かとみなす")
    parser.add_argument("--jobs", type=int, default=1, help="並列数（0 で物理コア数）")


def build_parser() -> CliArgumentParser:
    """サブコマンド付きのパーサーを作る"""
    parser = CliArgumentParser(prog="bounded-lse", description="有界不確かさ下のPMU線形状態推定")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliArgumentParser)

    validate = sub.add_parser("validate", help="ケースと配置を検証し、可観測性を表示する")
    _add_common(validate)

    generate = sub.add_parser("generate", help="摂動ケースと雑音付き計測値を生成する")
    _add_common(generate, stochastic=True)
    generate.add_argument("--perturb-charging", action="store_true", help="充電サセプタンスも摂動する")

    estimate = sub.add_parser("estimate", help="1手法で1回推定する")
    _add_common(estimate, stochastic=True)
    _add_estimation(estimate)
    estimate.add_argument("--method", choices=[m.value for m in Method], required=True, help="推定手法")

    bench = sub.add_parser("bench", help="複数試行のベンチマークを実行する")
    _add_common(bench, stochastic=True)
    _add_estimation(bench)
    bench.add_argument("--method", action="append", choices=[m.value for m in Method], default=None,
                       help="推定手法（複数指定可、省略時は interval と convex）")
    bench.add_argument("--trials", type=int, default=10, help="試行回数")
    bench.add_argument("--glfp-jobs", type=int, default=1, help="GLFP符号ベクトル列挙の並列数")
    bench.add_argument("--figure-trial", type=int, default=0, help="図用CSVに使う試行番号")

    plot = sub.add_parser("plot", help="図用CSVから上下限図（SVG）を描く")
    plot.add_argument("--figure-csv", required=True, help="bench が出力した figure.csv")
    plot.add_argument("--out", required=True, help="出力SVGのパス")
    return parser


def _output_dir(args) -> Path:
    out = Path(args.out) if args.out else get_output_path()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_summary(summary: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(summary, ensure_ascii=False, indent=2, default=str))
        return
    for key, value in summary.items():
        if isinstance(value, dict):
            value = json.dumps(value, ensure_ascii=False, default=str)
        print(f"{key},{value}")


def _experiment_config(args, methods, trials: int) -> ExperimentConfig:
    return ExperimentConfig(
        case_name=args.case,
        placement=args.placement or "",
        seed=args.seed,
        max_rel_dev=args.dev,
        tve_bound=args.tve,
        methods=tuple(methods),
        trials=trials,
        chi_p_mode=ChiPMode(args.chi_p),
        deviation_mode=DeviationMode(args.deviation),
        weight_mode=WeightMode(args.weights),
        perturb_charging=args.perturb_charging,
        jobs=args.jobs,
        glfp_jobs=getattr(args, "glfp_jobs", args.jobs),
    )


def cmd_validate(args, settings: dict) -> int:
    case = resolve_case(args.case)
    placement = resolve_placement(args.placement, case.name or args.case)
    is_valid, errors = case.validate()
    if not is_valid:
        raise ValueError("; ".join(errors))
    ensure_connected(case)

    model = build_measurement_matrix(case, placement)
    _print_summary({
        "case": case.name,
        "buses": case.n_bus,
        "branches": len(case.branches),
        "in_service_branches": len(case.in_service_branches()),
        "pmus": len(placement),
        "channels": model.n_channel,
        "rows": model.n_meas,
        "states": model.n_state,
        "rank": column_rank(model.p0),
        "observable": True,
    }, args.format)
    return EXIT_OK


def cmd_generate(args, settings: dict) -> int:
    case = resolve_case(args.case)
    placement = resolve_placement(args.placement, case.name or args.case)
    seeds = derive_trial_seeds(args.seed, 0)

    perturbed = perturb_parameters(
        case, args.dev, seeds.perturb,
        sigma_fraction=settings["perturbation_sigma_fraction"],
        perturb_charging=args.perturb_charging,
    )
    vector = simulate_measurements(
        perturbed, placement, args.tve, seeds.noise,
        tol=settings["pf_tol"], max_iter=settings["pf_max_iter"],
    )
    out = _output_dir(args)
    write_case_file(perturbed, out / "case_perturbed.m")
    write_measurements_csv(out / "measurements.csv", build_channels(case, placement), vector)
    write_placement_file(placement, out / "placement.txt", header=f"{case.name} で使用したPMU配置")
    _print_summary({
        "case": case.name,
        "channels": len(vector.sigmas),
        "out": str(out),
    }, args.format)
    return EXIT_OK


def cmd_estimate(args, settings: dict) -> int:
    method = Method(args.method)
    config = _experiment_config(args, [method], trials=1)
    report = run_experiment(config, settings=settings)

    record = report.record(0, method)
    if record.failed:
        raise record.exception if record.exception is not None else RuntimeError(record.error)

    out = _output_dir(args)
    x_true = report.x_true.get(0)
    write_estimates_csv(out / "estimates.csv", report.bus_ids, record.estimate, x_true)
    if record.lower is not None:
        bounds = StateBounds(
            lower=record.lower, upper=record.upper, center=record.estimate,
            iterations=int(record.diagnostics.get("iterations", 0)), converged=True,
        )
        write_bounds_csv(out / "bounds.csv", report.bus_ids, bounds, x_true)

    diagnostics = dict(record.diagnostics)
    if method == Method.GLFP:
        diagnostics["x_star"] = [float(v) for v in record.estimate]

    summary = {
        "method": method.value,
        "case": config.case_name,
        "seed": config.seed,
        "runtime_s": record.runtime_s,
        "rmse_pu": record.rmse_pu,
        "containment_rate": record.containment_rate,
        "mean_bound_width": record.mean_bound_width,
        "diagnostics": diagnostics,
    }
    write_json(out / "report.json", summary)
    _print_summary(summary, args.format)
    return EXIT_OK


def cmd_bench(args, settings: dict) -> int:
    methods = [Method(m) for m in (args.method or [Method.INTERVAL.value, Method.CONVEX.value])]
    methods = list(dict.fromkeys(methods))
    config = _experiment_config(args, methods, trials=args.trials)

    log_queue: Queue = Queue()
    progress = ProgressThread(log_queue)
    progress.start()
    try:
        report = run_experiment(config, log_queue=log_queue, settings=settings)
    finally:
        progress.stop()

    out = _output_dir(args)
    write_report_csv(out / "report.csv", [r.to_row() for r in report.records])
    summary = summary_table(report)
    write_json(out / "report.json", summary)

    trial = args.figure_trial
    if trial not in report.x_true and report.x_true:
        trial = min(report.x_true)
    if trial in report.x_true:
        write_figure_csv(out / "figure.csv", figure_rows(report, trial))
        render_bounds_svg(out / "figure.csv", out / "figure.svg")

    _print_summary(summary, args.format)
    return EXIT_OK


def plot_bounds(figure_csv: str, out_svg: str) -> int:
    """図用CSVからSVGを書き出し、終了コードを返す"""
    try:
        render_bounds_svg(figure_csv, out_svg)
    except LseError as e:
        report_error(e, e.exit_code)
        return e.exit_code
    except OSError as e:
        report_error(e, EXIT_DATA)
        return EXIT_DATA
    return EXIT_OK


def cmd_plot(args, settings: dict) -> int:
    return plot_bounds(args.figure_csv, args.out)


COMMANDS: dict[str, Callable] = {
    "validate": cmd_validate,
    "generate": cmd_generate,
    "estimate": cmd_estimate,
    "bench": cmd_bench,
    "plot": cmd_plot,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    CLIのエントリーポイント

    Args:
        argv: 引数リスト（None なら sys.argv[1:]）

    Returns:
        終了コード
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except UsageError as e:
        report_error(e, EXIT_USAGE)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    settings = load_settings()
    is_valid, errors = validate_settings(settings)
    if not is_valid:
        report_error(ValueError("; ".join(errors)), EXIT_DATA)
        return EXIT_DATA

    ensure_directories()
    set_log_level(settings["log_level"])
    cleanup_old_logs(settings["log_retention_days"])
    logger = get_logger("main")

    try:
        code = COMMANDS[args.command](args, settings)
    except LseError as e:
        logger.error("コマンドが失敗しました", {"command": args.command, "error": str(e)})
        report_error(e, e.exit_code)
        return e.exit_code
    except (ValueError, OSError) as e:
        logger.error("コマンドが失敗しました", {"command": args.command, "error": str(e)})
        report_error(e, EXIT_DATA)
        return EXIT_DATA

    logger.info("コマンドが完了しました", {"command": args.command, "exit_code": code})
    return code


if __name__ == "__main__":
    sys.exit(main())
