"""
ファイル入出力モジュール
ケース・PMU配置の解決と、推定結果・ベンチマーク結果のCSV/JSON出力を行う。
"""

import importlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from config import get_cases_path, get_placements_path
from errors import CaseFormatError, DimensionGuardError, PlacementError
from models.estimate import StateBounds
from models.measurement import Channel, MeasurementVector, PmuPlacement
from models.network import NetworkCase
from utils.case_parser import case_from_ppc, parse_case, parse_placement, write_case, write_placement

PathLike = Union[str, Path]

FIGURE_COLUMNS = [
    "component_index", "part", "bus_id", "true",
    "convex_estimate", "glfp_estimate", "lower", "upper",
]
REPORT_COLUMNS = [
    "trial", "method", "runtime_s", "rmse_pu", "containment_rate", "mean_bound_width", "error",
]
# 再実行で同じバイト列になるよう有効桁を固定する
FLOAT_FORMAT = "%.17g"


def _case_stem(name: str) -> str:
    return Path(name).stem if name.endswith(".m") else name


def read_case_file(path: PathLike) -> NetworkCase:
    """ケースファイルを読み込む（ケース名が空ならファイル名を使う）"""
    path = Path(path)
    case = parse_case(path.read_bytes())
    if not case.name:
        case.name = path.stem
    return case


def resolve_case(name_or_path: str) -> NetworkCase:
    """
    ケースを解決する。

    優先順: 既存のパス → data/cases/<名前>.m → PYPOWER の同名ケース（インストール時のみ）

    Raises:
        CaseFormatError: どこにも見つからない場合
    """
    path = Path(name_or_path)
    if path.is_file():
        return read_case_file(path)

    stem = _case_stem(path.name)
    bundled = get_cases_path() / f"{stem}.m"
    if bundled.is_file():
        return read_case_file(bundled)

    try:
        module = importlib.import_module(f"pypower.{stem}")
    except ImportError:
        module = None
    if module is not None and hasattr(module, stem):
        return case_from_ppc(getattr(module, stem)(), name=stem)

    raise CaseFormatError(f"ケースが見つかりません: {name_or_path}")


def resolve_placement(name_or_path: Optional[str], case_name: str = "") -> PmuPlacement:
    """
    PMU配置を解決する。

    優先順: 既存のパス → data/placements/<名前>（.txt は省略可）。
    name_or_path が空ならケース名に対応する同梱配置を使う。

    Raises:
        PlacementError: 見つからない場合
    """
    candidates: List[Path] = []
    if name_or_path:
        path = Path(name_or_path)
        if path.is_file():
            return parse_placement(path.read_bytes())
        candidates += [get_placements_path() / path.name, get_placements_path() / f"{path.name}.txt"]
    elif case_name:
        candidates.append(get_placements_path() / f"{_case_stem(Path(case_name).name)}.txt")

    for candidate in candidates:
        if candidate.is_file():
            return parse_placement(candidate.read_bytes())
    raise PlacementError(f"PMU配置が見つかりません: {name_or_path or case_name}")


def write_case_file(case: NetworkCase, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(write_case(case), encoding="utf-8")
    return path


def write_placement_file(placement: PmuPlacement, path: PathLike, header: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(write_placement(placement, header), encoding="utf-8")
    return path


def _state_frame(bus_ids: Sequence[int]) -> pd.DataFrame:
    n_bus = len(bus_ids)
    return pd.DataFrame({
        "component_index": np.arange(2 * n_bus),
        "part": ["re"] * n_bus + ["im"] * n_bus,
        "bus_id": list(bus_ids) * 2,
    })


def _write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_estimates_csv(
    path: PathLike,
    bus_ids: Sequence[int],
    estimate: np.ndarray,
    x_true: Optional[np.ndarray] = None,
) -> Path:
    """状態推定値を成分ごとに1行で書き出す"""
    frame = _state_frame(bus_ids)
    frame["estimate"] = np.asarray(estimate, dtype=float)
    if x_true is not None:
        frame["true"] = np.asarray(x_true, dtype=float)
    return _write_frame(frame, path)


def write_bounds_csv(
    path: PathLike,
    bus_ids: Sequence[int],
    bounds: StateBounds,
    x_true: Optional[np.ndarray] = None,
) -> Path:
    """区間推定の上下限を成分ごとに1行で書き出す"""
    frame = _state_frame(bus_ids)
    frame["lower"] = bounds.lower
    frame["center"] = bounds.center
    frame["upper"] = bounds.upper
    if x_true is not None:
        frame["true"] = np.asarray(x_true, dtype=float)
    return _write_frame(frame, path)


def write_measurements_csv(path: PathLike, channels: Sequence[Channel], vector: MeasurementVector) -> Path:
    """
    計測値を計測行ごと（全チャネルの実部行の後に虚部行）に書き出す。

    列: channel_id, part, kind, bus, branch_from, branch_to, value, true_value, sigma
    """
    rows = []
    m = len(channels)
    for imag in (False, True):
        for ch in channels:
            row = ch.channel_id + (m if imag else 0)
            rows.append({
                "channel_id": ch.channel_id,
                "part": "im" if imag else "re",
                "kind": ch.kind.value,
                "bus": ch.bus,
                "branch_from": ch.branch_from if ch.kind.is_current else "",
                "branch_to": ch.branch_to if ch.kind.is_current else "",
                "value": float(vector.y[row]),
                "true_value": float(vector.true_y[row]),
                "sigma": float(vector.sigmas[ch.channel_id]),
            })
    return _write_frame(pd.DataFrame(rows), path)


def write_report_csv(path: PathLike, rows: List[Dict[str, Any]]) -> Path:
    """試行・手法ごとのレポートを書き出す"""
    return _write_frame(pd.DataFrame(rows, columns=REPORT_COLUMNS), path)


def write_figure_csv(path: PathLike, rows: List[Dict[str, Any]]) -> Path:
    return _write_frame(pd.DataFrame(rows, columns=FIGURE_COLUMNS), path)


def read_figure_csv(path: PathLike) -> pd.DataFrame:
    """
    図用CSVを読み込んで検証する。

    Raises:
        CaseFormatError: 空のファイル、列の不足、数値として読めない値
        DimensionGuardError: 実部と虚部の行数が一致しない場合
    """
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise CaseFormatError(f"図用CSVが空です: {path}")
    except pd.errors.ParserError as e:
        raise CaseFormatError(f"図用CSVを解析できません: {e}")

    required = {"component_index", "part", "bus_id", "true", "lower", "upper"}
    missing = required - set(frame.columns)
    if missing:
        raise CaseFormatError(f"図用CSVの列が不足しています: {sorted(missing)}")
    if frame.empty:
        raise CaseFormatError(f"図用CSVにデータ行がありません: {path}")

    for column in ("component_index", "bus_id", "true"):
        converted = pd.to_numeric(frame[column], errors="coerce")
        if converted.isna().any():
            raise CaseFormatError(f"図用CSVの列 {column} に数値でない値があります")
        frame[column] = converted
    # 手法が失敗した試行では空欄になる
    for column in ("lower", "upper", "convex_estimate", "glfp_estimate"):
        if column in frame.columns:
            frame[column] = pd.to_numeric(frame[column], errors="coerce")

    parts = set(frame["part"].astype(str))
    if not parts <= {"re", "im"}:
        raise CaseFormatError(f"図用CSVの part 列が不正です: {sorted(parts)}")
    n_re = int((frame["part"] == "re").sum())
    n_im = int((frame["part"] == "im").sum())
    if n_re != n_im:
        raise DimensionGuardError(f"図用CSVの実部 {n_re} 行と虚部 {n_im} 行が一致しません")
    return frame


def write_json(path: PathLike, data: Dict[str, Any]) -> Path:
    """辞書をJSONで書き出す（NaN・inf は null にする）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_clean(data), f, ensure_ascii=False, indent=2)
        f.write("\n")
    return path


def _clean(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value
