"""
simplex モジュールのユニットテスト
"""

import numpy as np
import pytest
from scipy.optimize import linprog

from errors import NonFiniteInputError
from utils.simplex import check_feasibility


class TestCheckFeasibility:
    """check_feasibility関数のテスト"""

    def test_origin_feasible(self):
        """b ≥ 0 なら原点で実行可能"""
        result = check_feasibility(np.array([[1.0, 1.0]]), np.array([2.0]))

        assert result.feasible is True
        assert result.pivots == 0
        np.testing.assert_array_equal(result.witness, [0.0, 0.0])

    def test_feasible_with_negative_rhs(self):
        """z1 + z2 ≤ 1、z1 ≥ 0.5"""
        a = np.array([[1.0, 1.0], [-1.0, 0.0]])
        b = np.array([1.0, -0.5])

        result = check_feasibility(a, b)

        assert result.feasible is True
        assert np.all(result.witness >= 0)
        assert np.all(a @ result.witness <= b + 1e-9)

    def test_infeasible(self):
        """z ≥ 0 かつ z ≤ −1"""
        result = check_feasibility(np.array([[1.0]]), np.array([-1.0]))

        assert result.feasible is False
        assert result.witness is None
        assert result.infeasibility > 0

    def test_conflicting_rows(self):
        """z ≥ 2 かつ z ≤ 1"""
        result = check_feasibility(np.array([[-1.0], [1.0]]), np.array([-2.0, 1.0]))

        assert result.feasible is False

    def test_degenerate_ties(self):
        """比率の同点が多い退化した系でも停止する"""
        a = np.array([
            [-1.0, -1.0, 0.0],
            [-1.0, 0.0, -1.0],
            [0.0, -1.0, -1.0],
            [1.0, 1.0, 1.0],
        ])
        b = np.array([-1.0, -1.0, -1.0, 1.5])

        result = check_feasibility(a, b)

        assert result.feasible is True
        assert np.all(a @ result.witness <= b + 1e-9)

    def test_agrees_with_linprog(self):
        """乱数で作った系で scipy の判定と一致する"""
        rng = np.random.default_rng(12)
        for _ in range(40):
            a = rng.standard_normal((6, 4))
            b = rng.standard_normal(6)

            result = check_feasibility(a, b)
            reference = linprog(np.zeros(4), A_ub=a, b_ub=b, bounds=[(0, None)] * 4, method="highs")

            assert result.feasible == (reference.status == 0)
            if result.feasible:
                assert np.all(a @ result.witness <= b + 1e-8)

    def test_non_finite(self):
        """Inf を含む係数"""
        with pytest.raises(NonFiniteInputError):
            check_feasibility(np.array([[np.inf]]), np.array([1.0]))
