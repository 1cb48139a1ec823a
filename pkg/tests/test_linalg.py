"""
linalg モジュールのユニットテスト
"""

import numpy as np
import pytest
import scipy.sparse as sp

from errors import ConvergenceError, NonFiniteInputError, SingularMatrixError
from utils.linalg import column_rank, inverse, lu_solve, norm2_mat, norm2_vec


class TestLuSolve:
    """lu_solve / inverse関数のテスト"""

    def test_solve_vector(self):
        """ベクトル右辺"""
        a = np.array([[4.0, 1.0], [2.0, 3.0]])
        b = np.array([1.0, 2.0])

        x = lu_solve(a, b)

        np.testing.assert_allclose(a @ x, b, atol=1e-14)

    def test_solve_matrix(self):
        """行列右辺"""
        rng = np.random.default_rng(3)
        a = rng.standard_normal((5, 5)) + 5 * np.eye(5)
        b = rng.standard_normal((5, 3))

        np.testing.assert_allclose(a @ lu_solve(a, b), b, atol=1e-12)

    def test_inverse(self):
        """逆行列"""
        a = np.array([[2.0, 0.0], [1.0, 1.0]])

        np.testing.assert_allclose(inverse(a) @ a, np.eye(2), atol=1e-15)

    def test_singular(self):
        """特異行列"""
        with pytest.raises(SingularMatrixError):
            lu_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))

    def test_zero_matrix(self):
        """零行列は特異"""
        with pytest.raises(SingularMatrixError):
            inverse(np.zeros((3, 3)))

    def test_non_finite(self):
        """NaN を含む入力"""
        with pytest.raises(NonFiniteInputError):
            lu_solve(np.array([[1.0, np.nan], [0.0, 1.0]]), np.ones(2))
        with pytest.raises(NonFiniteInputError):
            lu_solve(np.eye(2), np.array([1.0, np.inf]))

    def test_not_square(self):
        """正方でない行列"""
        with pytest.raises(ValueError):
            lu_solve(np.ones((2, 3)), np.ones(2))


class TestNorms:
    """ノルム関数のテスト"""

    def test_norm2_vec(self):
        """ユークリッドノルム"""
        assert norm2_vec(np.array([3.0, 4.0])) == pytest.approx(5.0)

    def test_norm2_mat_matches_svd(self):
        """最大特異値はSVDと一致"""
        rng = np.random.default_rng(7)
        a = rng.standard_normal((8, 5))

        assert norm2_mat(a) == pytest.approx(np.linalg.svd(a, compute_uv=False)[0], rel=1e-6)

    def test_norm2_mat_sparse(self):
        """疎行列も扱える"""
        a = sp.csr_matrix(np.diag([1.0, -3.0, 2.0]))

        assert norm2_mat(a) == pytest.approx(3.0, rel=1e-6)

    def test_norm2_mat_zero_and_empty(self):
        """零行列・空行列は0"""
        assert norm2_mat(np.zeros((3, 2))) == 0.0
        assert norm2_mat(np.zeros((0, 4))) == 0.0

    def test_norm2_mat_deterministic(self):
        """同じ入力なら同じ値"""
        a = np.arange(12.0).reshape(3, 4)

        assert norm2_mat(a) == norm2_mat(a)

    def test_norm2_mat_not_converged(self):
        """反復回数が足りない場合"""
        a = np.diag([1.0, 0.999999])

        with pytest.raises(ConvergenceError):
            norm2_mat(a, tol=1e-16, max_iter=2)


class TestColumnRank:
    """column_rank関数のテスト"""

    def test_full_rank(self):
        """列フルランク"""
        assert column_rank(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])) == 2

    def test_rank_deficient(self):
        """列が従属"""
        assert column_rank(np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])) == 1

    def test_zero(self):
        """零行列"""
        assert column_rank(np.zeros((2, 2))) == 0
