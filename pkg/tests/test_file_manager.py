"""
file_manager モジュールのユニットテスト
"""

import json

import numpy as np
import pandas as pd
import pytest

from errors import CaseFormatError, DimensionGuardError, PlacementError
from models.estimate import StateBounds
from models.measurement import PmuPlacement
from services.measurement_service import build_measurement_matrix, simulate_measurements
from utils.file_manager import (
    FIGURE_COLUMNS,
    read_case_file,
    read_figure_csv,
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


def _figure_rows(n_bus: int = 2):
    rows = []
    for j in range(2 * n_bus):
        rows.append({
            "component_index": j,
            "part": "re" if j < n_bus else "im",
            "bus_id": j % n_bus + 1,
            "true": 1.0,
            "convex_estimate": 1.01,
            "glfp_estimate": float("nan"),
            "lower": 0.9,
            "upper": 1.1,
        })
    return rows


class TestResolveCase:
    """resolve_case関数のテスト"""

    def test_bundled_name(self):
        """同梱ケースを名前で解決"""
        case = resolve_case("case14")

        assert case.name == "case14"
        assert case.n_bus == 14

    def test_bundled_name_with_extension(self):
        """拡張子付きの名前"""
        assert resolve_case("case5.m").n_bus == 5

    def test_path(self, fixtures_path):
        """ファイルパスで指定"""
        case = resolve_case(str(fixtures_path / "three_bus.m"))

        assert case.n_bus == 3

    def test_unknown(self):
        """見つからないケース"""
        with pytest.raises(CaseFormatError):
            resolve_case("no_such_case_xyz")

    def test_name_from_file_stem(self, tmp_path, fixtures_path):
        """ケース名が空ならファイル名"""
        case = read_case_file(fixtures_path / "three_bus.m")
        case.name = ""
        path = write_case_file(case, tmp_path / "renamed.m")

        assert read_case_file(path).name == "renamed"


class TestResolvePlacement:
    """resolve_placement関数のテスト"""

    def test_default_for_case(self):
        """配置名が空ならケース名の同梱配置"""
        placement = resolve_placement("", "case14")

        assert placement.bus_ids == (2, 6, 7, 9)

    def test_bundled_name(self):
        """同梱配置を名前で解決（.txt は省略可）"""
        assert resolve_placement("case5") == resolve_placement("case5.txt")

    def test_path(self, fixtures_path):
        """ファイルパスで指定"""
        assert resolve_placement(str(fixtures_path / "three_bus.txt")).bus_ids == (1, 3)

    def test_missing(self):
        """見つからない配置"""
        with pytest.raises(PlacementError):
            resolve_placement("no_such_placement")

    def test_no_name(self):
        """配置名もケース名もない"""
        with pytest.raises(PlacementError):
            resolve_placement("", "")

    def test_write_round_trip(self, tmp_path):
        """書き出した配置を読み戻す"""
        path = write_placement_file(PmuPlacement((4, 2)), tmp_path / "sub" / "p.txt", header="test")

        assert resolve_placement(str(path)).bus_ids == (4, 2)


class TestStateCsv:
    """状態ベクトルのCSV出力のテスト"""

    def test_estimates(self, tmp_path):
        """成分ごとに1行、実部の後に虚部"""
        path = write_estimates_csv(tmp_path / "est.csv", [1, 3], np.array([1.0, 0.9, 0.0, -0.1]), np.zeros(4))

        frame = pd.read_csv(path)

        assert list(frame.columns) == ["component_index", "part", "bus_id", "estimate", "true"]
        assert list(frame["part"]) == ["re", "re", "im", "im"]
        assert list(frame["bus_id"]) == [1, 3, 1, 3]
        assert frame["estimate"].iloc[3] == -0.1

    def test_bounds(self, tmp_path):
        """上下限と中心"""
        bounds = StateBounds(
            lower=np.array([0.9, -0.1]), upper=np.array([1.1, 0.1]),
            center=np.array([1.0, 0.0]), iterations=3, converged=True,
        )

        frame = pd.read_csv(write_bounds_csv(tmp_path / "bounds.csv", [7], bounds))

        assert list(frame.columns) == ["component_index", "part", "bus_id", "lower", "center", "upper"]
        assert list(frame["lower"]) == [0.9, -0.1]

    def test_float_precision(self, tmp_path):
        """浮動小数点数は丸めずに書き出す"""
        value = 0.1 + 0.2

        frame = pd.read_csv(
            write_estimates_csv(tmp_path / "est.csv", [1], np.array([value, 1 / 3])), float_precision="round_trip",
        )

        assert frame["estimate"].iloc[0] == value
        assert frame["estimate"].iloc[1] == 1 / 3

    def test_deterministic_bytes(self, tmp_path):
        """同じ入力なら同じバイト列"""
        x = np.array([1.0, 0.5, 0.25, 1e-17])

        a = write_estimates_csv(tmp_path / "a.csv", [1, 2], x).read_bytes()
        b = write_estimates_csv(tmp_path / "b.csv", [1, 2], x).read_bytes()

        assert a == b
        assert b"\r\n" not in a


class TestMeasurementsCsv:
    """write_measurements_csv関数のテスト"""

    def test_rows_and_columns(self, tmp_path, fixtures_path):
        """全チャネルの実部行の後に虚部行"""
        case = read_case_file(fixtures_path / "three_bus.m")
        placement = PmuPlacement((1, 3))
        model = build_measurement_matrix(case, placement)
        vector = simulate_measurements(case, placement, 0.01, seed=5)

        frame = pd.read_csv(write_measurements_csv(tmp_path / "meas.csv", model.channels, vector))

        m = len(model.channels)
        assert len(frame) == 2 * m
        assert list(frame.columns) == [
            "channel_id", "part", "kind", "bus", "branch_from", "branch_to", "value", "true_value", "sigma",
        ]
        assert list(frame["part"]) == ["re"] * m + ["im"] * m
        np.testing.assert_allclose(frame["value"], vector.y)
        voltage = frame[frame["kind"] == "voltage"]
        assert voltage["branch_from"].isna().all()


class TestReportCsv:
    """write_report_csv関数のテスト"""

    def test_columns_fixed(self, tmp_path):
        """列順は固定"""
        rows = [{"method": "convex", "trial": 0, "runtime_s": 0.1, "rmse_pu": 0.01,
                 "containment_rate": float("nan"), "mean_bound_width": float("nan"), "error": ""}]

        frame = pd.read_csv(write_report_csv(tmp_path / "report.csv", rows))

        assert list(frame.columns) == [
            "trial", "method", "runtime_s", "rmse_pu", "containment_rate", "mean_bound_width", "error",
        ]
        assert pd.isna(frame["containment_rate"].iloc[0])


class TestFigureCsv:
    """write_figure_csv / read_figure_csv関数のテスト"""

    def test_round_trip(self, tmp_path):
        """書き出した図用CSVを読み戻す"""
        path = write_figure_csv(tmp_path / "figure.csv", _figure_rows())

        frame = read_figure_csv(path)

        assert list(frame.columns) == FIGURE_COLUMNS
        assert len(frame) == 4
        assert frame["glfp_estimate"].isna().all()

    def test_round_trip_float_precision(self, tmp_path):
        """読み戻した値は書き出した値とビット単位で一致する"""
        rows = _figure_rows()
        rows[0]["true"] = 0.1 + 0.2
        rows[0]["lower"] = 1 / 3
        path = write_figure_csv(tmp_path / "figure.csv", rows)

        frame = read_figure_csv(path)

        assert frame["true"].iloc[0] == 0.1 + 0.2
        assert frame["lower"].iloc[0] == 1 / 3

    def test_blank_bounds_allowed(self, tmp_path):
        """区間推定が失敗した試行の空欄"""
        rows = _figure_rows()
        for row in rows:
            row["lower"] = row["upper"] = float("nan")
        path = write_figure_csv(tmp_path / "figure.csv", rows)

        frame = read_figure_csv(path)

        assert frame["lower"].isna().all()

    def test_empty_file(self, tmp_path):
        """空のファイル"""
        path = tmp_path / "empty.csv"
        path.write_text("")

        with pytest.raises(CaseFormatError):
            read_figure_csv(path)

    def test_header_only(self, tmp_path):
        """データ行がない"""
        path = tmp_path / "header.csv"
        path.write_text(",".join(FIGURE_COLUMNS) + "\n")

        with pytest.raises(CaseFormatError):
            read_figure_csv(path)

    def test_missing_columns(self, tmp_path):
        """必須列の不足"""
        path = tmp_path / "figure.csv"
        pd.DataFrame(_figure_rows()).drop(columns=["upper"]).to_csv(path, index=False)

        with pytest.raises(CaseFormatError):
            read_figure_csv(path)

    def test_non_numeric(self, tmp_path):
        """真値が数値でない"""
        rows = _figure_rows()
        rows[0]["true"] = "abc"
        path = tmp_path / "figure.csv"
        pd.DataFrame(rows).to_csv(path, index=False)

        with pytest.raises(CaseFormatError):
            read_figure_csv(path)

    def test_bad_part(self, tmp_path):
        """part 列の値が不正"""
        rows = _figure_rows()
        rows[1]["part"] = "mag"
        path = tmp_path / "figure.csv"
        pd.DataFrame(rows).to_csv(path, index=False)

        with pytest.raises(CaseFormatError):
            read_figure_csv(path)

    def test_part_count_mismatch(self, tmp_path):
        """実部と虚部の行数の不一致"""
        rows = _figure_rows()[:-1]
        path = write_figure_csv(tmp_path / "figure.csv", rows)

        with pytest.raises(DimensionGuardError):
            read_figure_csv(path)


class TestWriteJson:
    """write_json関数のテスト"""

    def test_non_finite_to_null(self, tmp_path):
        """NaN・inf は null、numpy の値は組み込み型"""
        data = {
            "nan": float("nan"),
            "inf": np.inf,
            "array": np.array([1.0, np.nan]),
            "int": np.int64(3),
            "flag": np.bool_(True),
            "nested": {1: (0.5,)},
        }

        path = write_json(tmp_path / "out" / "summary.json", data)
        loaded = json.loads(path.read_text(encoding="utf-8"))

        assert loaded == {
            "nan": None,
            "inf": None,
            "array": [1.0, None],
            "int": 3,
            "flag": True,
            "nested": {"1": [0.5]},
        }
