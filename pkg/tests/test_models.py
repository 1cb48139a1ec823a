"""
models モジュールのユニットテスト
"""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from errors import (
    CaseFormatError,
    ConvergenceError,
    DimensionGuardError,
    LseError,
    NetworkTopologyError,
    NumericalError,
    RankDeficientError,
    SingularMatrixError,
)
from models.estimate import AugmentedSystem, BduSolution, GlfpProblem, IntervalVector
from models.experiment import ExperimentConfig, Method, MethodSummary, TrialRecord
from models.measurement import (
    Channel,
    ChannelKind,
    MeasurementModel,
    PmuPlacement,
    UncertainParameter,
    UncertaintySpec,
)
from models.network import Branch, BranchStatus, Bus, BusKind, GenStatus, NetworkCase, ensure_connected


def _bus(bus_id: int, kind: BusKind = BusKind.PQ) -> Bus:
    return Bus(bus_id, kind, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)


def _line_case(n: int, extra=()) -> NetworkCase:
    buses = [_bus(1, BusKind.SLACK)] + [_bus(i) for i in range(2, n + 1)]
    branches = [Branch(i, i + 1, 0.01, 0.1, 0.0) for i in range(1, n)] + list(extra)
    return NetworkCase(base_mva=100.0, buses=buses, generators=[], branches=branches)


class TestErrors:
    """例外階層と終了コードのテスト"""

    def test_data_errors_exit_2(self):
        """データ・検証エラーは終了コード2"""
        assert LseError.exit_code == 2
        assert CaseFormatError("x").exit_code == 2
        assert DimensionGuardError.exit_code == 2

    def test_numerical_errors_exit_3(self):
        """数値計算の失敗は終了コード3"""
        for cls in (NumericalError, SingularMatrixError, RankDeficientError, ConvergenceError):
            assert cls.exit_code == 3
            assert issubclass(cls, LseError)

    def test_case_format_location(self):
        """行・列番号がメッセージに含まれる"""
        error = CaseFormatError("不正です", line=12, column=5)

        assert error.line == 12
        assert error.column == 5
        assert "12行5列" in str(error)


class TestBusKind:
    """BusKind Enumのテスト"""

    def test_from_code_valid(self):
        """有効なコードからの変換"""
        assert BusKind.from_code(1) == BusKind.PQ
        assert BusKind.from_code(2.0) == BusKind.PV
        assert BusKind.from_code(3) == BusKind.SLACK

    def test_from_code_invalid(self):
        """未対応のコードはValueError"""
        with pytest.raises(ValueError):
            BusKind.from_code(4)

    def test_status_codes(self):
        """運用状態のコード解釈"""
        assert BranchStatus.from_code(0) == BranchStatus.OUT_OF_SERVICE
        assert BranchStatus.from_code(2) == BranchStatus.IN_SERVICE
        assert GenStatus.from_code(-1) == GenStatus.OFF
        assert GenStatus.from_code(1) == GenStatus.ON


class TestNetworkCase:
    """NetworkCaseのテスト"""

    def test_effective_tap(self):
        """タップ0は1.0として扱う"""
        assert Branch(1, 2, 0.0, 0.1, 0.0).effective_tap == 1.0
        assert Branch(1, 2, 0.0, 0.1, 0.0, tap=0.95).effective_tap == 0.95

    def test_bus_index_follows_file_order(self):
        """母線インデックスはファイル順"""
        case = NetworkCase(100.0, [_bus(7, BusKind.SLACK), _bus(3), _bus(5)], [], [
            Branch(7, 3, 0.0, 0.1, 0.0), Branch(3, 5, 0.0, 0.1, 0.0),
        ])

        assert case.bus_index == {7: 0, 3: 1, 5: 2}
        assert case.slack_index == 0

    def test_validate_valid(self):
        """有効なケース"""
        is_valid, errors = _line_case(3).validate()

        assert is_valid is True
        assert errors == []

    def test_validate_two_slacks(self):
        """スラック母線が2つ"""
        case = _line_case(3)
        case.buses[2] = _bus(3, BusKind.SLACK)

        is_valid, errors = case.validate()

        assert is_valid is False
        assert any("スラック" in e for e in errors)

    def test_validate_zero_impedance(self):
        """運用中ブランチの直列インピーダンスが0"""
        case = _line_case(2, extra=[Branch(1, 2, 0.0, 0.0, 0.0)])

        is_valid, errors = case.validate()

        assert is_valid is False

    def test_zero_impedance_out_of_service_allowed(self):
        """停止中ブランチならインピーダンス0でもよい"""
        case = _line_case(2, extra=[Branch(1, 2, 0.0, 0.0, 0.0, status=BranchStatus.OUT_OF_SERVICE)])

        assert case.validate()[0] is True

    def test_disconnected(self):
        """停止中ブランチでしかつながらない母線は非連結"""
        case = _line_case(2)
        case.buses.append(_bus(3))
        case.branches.append(Branch(2, 3, 0.0, 0.1, 0.0, status=BranchStatus.OUT_OF_SERVICE))

        with pytest.raises(NetworkTopologyError):
            ensure_connected(case)
        assert case.validate()[0] is False


class TestPmuPlacement:
    """PmuPlacementのテスト"""

    def test_bus_ids_normalized(self):
        """母線IDは整数のタプルになる"""
        placement = PmuPlacement([1, 4.0, 7])

        assert placement.bus_ids == (1, 4, 7)
        assert len(placement) == 3


class TestMeasurementModel:
    """MeasurementModel / UncertaintySpecのテスト"""

    def test_dimensions(self):
        """行数は実部と虚部でチャネル数の2倍"""
        channels = [
            Channel(0, ChannelKind.VOLTAGE, 1),
            Channel(1, ChannelKind.CURRENT_FROM, 1, branch_index=0, branch_from=1, branch_to=2),
        ]
        model = MeasurementModel(p0=np.zeros((4, 4)), channels=channels, bus_ids=[1, 2])

        assert model.n_meas == 4
        assert model.n_state == 4
        assert model.n_channel == 2

    def test_current_kind(self):
        """電流チャネルの判定"""
        assert ChannelKind.CURRENT_TO.is_current
        assert not ChannelKind.VOLTAGE.is_current

    def test_bound_and_expand(self):
        """上界行列と P(ε) の展開"""
        p1 = sp.csr_matrix(np.array([[1.0, -2.0], [0.0, 0.0]]))
        p2 = sp.csr_matrix(np.array([[0.0, 0.0], [3.0, 0.0]]))
        spec = UncertaintySpec(
            parameters=[UncertainParameter(0, "g", 1.0), UncertainParameter(0, "b", -5.0)],
            delta_p=np.array([0.1, 0.2]),
            sensitivities=[p1, p2],
            delta_y=np.zeros(2),
            chi_p=0.0, chi_y=0.0, xi=0.0,
            shape=(2, 2),
        )
        p0 = np.eye(2)

        np.testing.assert_allclose(spec.bound_matrix(), [[0.1, 0.2], [0.6, 0.0]])
        np.testing.assert_allclose(spec.expand(p0, [1.0, -1.0]), [[1.1, -0.2], [-0.6, 1.0]])
        assert spec.n_param == 2
        assert spec.n_p == 1


class TestEstimateModels:
    """推定結果モデルのテスト"""

    def test_interval_vector(self):
        """中心・半径から上下限"""
        iv = IntervalVector(center=np.array([1.0, -1.0]), radius=np.array([0.5, 0.0]))

        np.testing.assert_allclose(iv.lower, [0.5, -1.0])
        np.testing.assert_allclose(iv.upper, [1.5, -1.0])

    def test_c_matrix_from_stack(self):
        """横に並べた非零列から C_k を復元"""
        sys = AugmentedSystem(
            a0=np.eye(3), a0_inv=np.eye(3), b_z=np.zeros(3), f0=np.zeros(3), n_state=1, n_meas=2,
            c_stack=np.array([[1.0], [2.0], [3.0]]), c_cols=np.array([2]), c_owner=np.array([0]), n_param=1,
        )

        np.testing.assert_allclose(sys.c_matrix(0), [[0, 0, 1], [0, 0, 2], [0, 0, 3]])

    def test_glfp_objective(self):
        """max|l_i x − y_i| / (ζᵀ|x| + 1)"""
        problem = GlfpProblem(
            p=np.array([[1.0], [1.0]]), y=np.array([1.0, 3.0]), zeta=np.array([1.0]), lambda_set=(0,),
        )

        assert problem.objective(np.array([2.0])) == pytest.approx(1.0 / 3.0)
        assert problem.objective(np.array([0.0])) == pytest.approx(3.0)

    def test_bdu_diagnostics_infinite_theta(self):
        """θ = inf は None として出力"""
        solution = BduSolution(x_hat=np.zeros(2), theta=math.inf, residual_norm=1.0,
                               secular_residual=0.0, root_iterations=1)

        assert solution.diagnostics()["theta"] is None


class TestExperimentModels:
    """実験モデルのテスト"""

    def test_method_from_string(self):
        """文字列から手法"""
        assert Method.from_string("glfp") == Method.GLFP
        with pytest.raises(ValueError):
            Method.from_string("kalman")

    def test_config_validate(self):
        """設定値の範囲検証"""
        assert ExperimentConfig("case5", "", 1).validate()[0] is True

        is_valid, errors = ExperimentConfig("case5", "", 1, max_rel_dev=1.0, trials=0, methods=()).validate()

        assert is_valid is False
        assert len(errors) == 3

    def test_record_row(self):
        """レポートCSVの1行"""
        record = TrialRecord(trial=2, method=Method.CONVEX, runtime_s=0.5, rmse_pu=0.01)
        row = record.to_row()

        assert row["method"] == "convex"
        assert row["trial"] == 2
        assert record.failed is False
        assert TrialRecord(trial=0, method=Method.GLFP, error="x").failed is True

    def test_summary_nan_to_none(self):
        """NaN の集計値は None"""
        summary = MethodSummary(Method.CONVEX, 0.1, 0.01, float("nan"), float("nan"), 3, 0)

        data = summary.to_dict()

        assert data["containment_rate"] is None
        assert data["rmse_pu"] == 0.01
