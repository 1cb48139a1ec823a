"""
powerflow_service モジュールのユニットテスト
"""

import math

import numpy as np
import pytest

from errors import ConvergenceError, NetworkTopologyError
from models.network import Branch, BranchStatus
from services.powerflow_service import (
    branch_currents,
    branch_terms,
    build_admittance,
    power_balance,
    solve_power_flow,
)
from utils.case_parser import parse_case
from utils.file_manager import resolve_case


@pytest.fixture
def two_bus(fixtures_path):
    return parse_case((fixtures_path / "two_bus.m").read_bytes())


@pytest.fixture
def three_bus(fixtures_path):
    return parse_case((fixtures_path / "three_bus.m").read_bytes())


class TestBranchTerms:
    """branch_terms関数のテスト"""

    def test_plain_line(self):
        """タップなしの線路は対称"""
        terms = branch_terms(0.0, 0.1, 0.2)

        assert terms.yff == pytest.approx(-10j + 0.1j)
        assert terms.yft == pytest.approx(10j)
        assert terms.ytf == terms.yft
        assert terms.ytt == terms.yff

    def test_phase_shifter(self):
        """移相器では yft ≠ ytf"""
        terms = branch_terms(0.0, 0.1, 0.0, tap=0.95, shift_deg=10.0)
        t = 0.95 * np.exp(1j * math.radians(10.0))

        assert terms.yff == pytest.approx(-10j / 0.95 ** 2)
        assert terms.yft == pytest.approx(10j / np.conj(t))
        assert terms.ytf == pytest.approx(10j / t)
        assert terms.ytt == pytest.approx(-10j)

    def test_overrides(self):
        """直列アドミタンスと充電分の上書き"""
        terms = branch_terms(1.0, 1.0, 0.0, series=2 - 3j, half_charging=0.5)

        assert terms.ytt == pytest.approx(2 - 2.5j)


class TestBuildAdmittance:
    """build_admittance関数のテスト"""

    def test_ybus_symmetric_without_shift(self, two_bus):
        """移相器がなければ対称"""
        model = build_admittance(two_bus)

        np.testing.assert_allclose(model.ybus, model.ybus.T)
        assert model.ybus[0, 1] == pytest.approx(10j)

    def test_out_of_service_ignored(self, three_bus):
        """停止中ブランチはアドミタンスに寄与しない"""
        model = build_admittance(three_bus)

        assert model.yff[3] == 0
        assert model.series[3] == 0
        assert model.ybus[0, 2] == pytest.approx(-1.0 / complex(0.015, 0.1))

    def test_bus_shunt(self, three_bus):
        """母線シャントは baseMVA で p.u. 化"""
        model = build_admittance(three_bus)

        assert model.bus_shunt[2] == pytest.approx(0.05j)

    def test_zero_impedance(self, two_bus):
        """運用中ブランチのインピーダンス0"""
        two_bus.branches.append(Branch(1, 2, 0.0, 0.0, 0.0, status=BranchStatus.IN_SERVICE))

        with pytest.raises(NetworkTopologyError):
            build_admittance(two_bus)


class TestSolvePowerFlow:
    """solve_power_flow関数のテスト"""

    def test_two_bus_closed_form(self, two_bus):
        """無損失2母線系統の解析解 |V2|² = (0.9 + √0.76)/2"""
        profile = solve_power_flow(two_bus, tol=1e-12)

        expected = (0.9 + math.sqrt(0.76)) / 2.0
        assert abs(profile.voltages[1]) ** 2 == pytest.approx(expected, rel=1e-9)
        assert profile.voltages[0] == pytest.approx(1.0)
        assert profile.mismatch <= 1e-12

    def test_three_bus_injections(self, three_bus):
        """PV母線の電圧設定値とPQ母線の負荷が満たされる"""
        profile = solve_power_flow(three_bus)
        model = build_admittance(three_bus)
        s = profile.voltages * np.conj(model.ybus @ profile.voltages)

        assert abs(profile.voltages[1]) == pytest.approx(1.01)
        assert s[1].real == pytest.approx(0.2, abs=1e-7)
        assert s[2] == pytest.approx(-0.6 - 0.25j, abs=1e-7)

    def test_case14_converges(self):
        """IEEE 14母線が数回で収束する"""
        profile = solve_power_flow(resolve_case("case14"))

        assert profile.iterations <= 10
        assert abs(profile.voltages[0]) == pytest.approx(1.06)
        assert np.all(np.abs(profile.voltages) > 0.9)

    def test_state_layout(self, two_bus):
        """状態は実部の後に虚部"""
        profile = solve_power_flow(two_bus)

        np.testing.assert_allclose(profile.state[:2], profile.voltages.real)
        np.testing.assert_allclose(profile.state[2:], profile.voltages.imag)

    def test_not_converged(self, two_bus):
        """反復回数の上限"""
        with pytest.raises(ConvergenceError):
            solve_power_flow(two_bus, tol=1e-14, max_iter=1)


class TestBalance:
    """ブランチ電流と電力収支のテスト"""

    def test_currents_match_injection(self, three_bus):
        """母線注入電流はブランチ電流とシャントの和"""
        profile = solve_power_flow(three_bus)
        model = build_admittance(three_bus)
        i_from, i_to = branch_currents(model, profile)

        injection = model.ybus @ profile.voltages
        summed = model.bus_shunt * profile.voltages
        np.add.at(summed, model.from_idx, i_from)
        np.add.at(summed, model.to_idx, i_to)

        np.testing.assert_allclose(summed, injection, atol=1e-12)
        assert i_from[3] == 0

    def test_power_balance_case14(self):
        """発電 = 負荷 + 損失 + シャント"""
        case = resolve_case("case14")
        model = build_admittance(case)
        balance = power_balance(case, model, solve_power_flow(case, model=model))

        assert abs(balance["imbalance"]) < 1e-9
        assert balance["load"].real == pytest.approx(2.59)
        assert balance["losses"].real > 0
