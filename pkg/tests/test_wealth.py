"""Forward wealth evolution: decompositions, sign constraints, verifiability."""

import dataclasses
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xfund.contracts import CollateralSpec, Contract, MarginAccounts, MarginConvention
from xfund.errors import InvalidInputError
from xfund.market import AssetModel, TimeGrid, build_account, make_scenarios
from xfund.wealth import (
    Basic,
    CommonUnsecured,
    Offsetting,
    PartialNetting,
    SplitCashRates,
    buy_and_hold,
    evolve_wealth,
    gain_identity_gap,
    netted_wealth,
    self_financing_residual,
    solve_U,
    zero_strategy,
)


def _market(grid, rate=0.03, drift=0.05, n_paths=16, seed=2):
    cash = build_account(rate, grid, label="cash")
    asset = AssetModel(index=0, spot=100.0, sigma=0.25, drift=drift, funding=cash)
    return cash, make_scenarios([asset], grid, n_paths, seed)


def test_zero_strategy_rolls_endowment(grid20):
    cash, scen = _market(grid20)
    path = evolve_wealth(Basic(cash), zero_strategy(), Contract(), 2.5, scen)
    assert np.max(np.abs(path.wealth - 2.5 * cash.values[None, :])) < 1e-12


def test_decomposition_identity(grid20):
    cash, scen = _market(grid20)
    strat = buy_and_hold(0.7)
    c = Contract.of(flows=[(0.5, -1.2), (1.0, 3.0)])
    path = evolve_wealth(Basic(cash), strat, c, 1.0, scen)
    assert path.decomposition_gap() < 1e-10


def test_self_financing_residual_small(grid20):
    cash, scen = _market(grid20)
    path = evolve_wealth(Basic(cash), buy_and_hold(1.5), Contract(), 0.0, scen)
    assert self_financing_residual(path).residual < 1e-10


def test_self_financing_detects_corruption(grid20):
    cash, scen = _market(grid20)
    path = evolve_wealth(Basic(cash), buy_and_hold(1.5), Contract(), 0.0, scen)
    bad_positions = {k: v.copy() for k, v in path.positions.items()}
    bad_positions["cash"][0, 3] += 0.5
    tampered = dataclasses.replace(path, positions=bad_positions)
    assert self_financing_residual(tampered).residual > 1e-4


def test_flows_enter_wealth_once(grid20):
    cash, scen = _market(grid20, rate=0.0)
    c = Contract.of(flows=[(0.5, 4.0)])
    path = evolve_wealth(Basic(cash), zero_strategy(), c, 0.0, scen)
    k = grid20.index_at(0.5)
    assert np.all(path.wealth[:, :k] == 0.0)
    assert np.max(np.abs(path.wealth[:, k:] - 4.0)) < 1e-12


class TestSplitRateCash:
    def test_positive_cash_lends_negative_borrows(self, grid20):
        lend = build_account(0.02, grid20, label="l")
        borrow = build_account(0.05, grid20, label="b")
        _, scen = _market(grid20)
        conv = PartialNetting(lend, borrow, (lend,))
        for x, acct in ((3.0, lend), (-3.0, borrow)):
            path = evolve_wealth(conv, zero_strategy(), Contract(), x, scen)
            assert np.max(np.abs(path.wealth - x * acct.values[None, :])) < 1e-12

    def test_cash_legs_never_overlap(self, grid20):
        lend = build_account(0.02, grid20, label="l")
        borrow = build_account(0.05, grid20, label="b")
        _, scen = _market(grid20, n_paths=32)

        def churn(k, prices):
            return np.where(prices > 100.0, -2.0, 2.0)

        conv = PartialNetting(lend, borrow, (lend,))
        path = evolve_wealth(conv, churn, Contract(), 0.5, scen)
        pl = path.positions["cash_lend"]
        pb = path.positions["cash_borrow"]
        assert np.all(pl >= 0)
        assert np.all(pb <= 0)
        assert np.max(np.abs(pl * pb)) == 0.0

    def test_inverted_rates_warn_not_raise(self, grid20):
        hi = build_account(0.05, grid20, label="hi")
        lo = build_account(0.01, grid20, label="lo")
        with pytest.warns(UserWarning, match="lend rate exceeds"):
            SplitCashRates(hi, lo, (hi,))

    def test_short_proceeds_netted_into_cash(self, grid20):
        # short one unit with zero endowment: netted cash = +S while the
        # equal-rate world makes partial netting collapse to the basic model
        r = 0.03
        cash = build_account(r, grid20, label="c")
        _, scen = _market(grid20, rate=r, n_paths=8)
        conv = PartialNetting(cash, cash, (cash,))
        base = Basic(cash)
        strat = buy_and_hold(-1.0)
        p1 = evolve_wealth(conv, strat, Contract(), 0.0, scen)
        p2 = evolve_wealth(base, strat, Contract(), 0.0, scen)
        assert np.max(np.abs(p1.wealth - p2.wealth)) < 1e-10


def test_common_unsecured_funds_first_assets_from_cash(grid20):
    cash = build_account(0.03, grid20, label="c")
    repo = build_account(0.01, grid20, label="repo")
    a0 = AssetModel(index=0, spot=100.0, sigma=0.2, funding=cash)
    a1 = AssetModel(index=1, spot=50.0, sigma=0.3, funding=repo)
    scen = make_scenarios([a0, a1], grid20, 8, seed=4)
    conv = CommonUnsecured(cash, 1, (cash, repo))
    path = evolve_wealth(conv, buy_and_hold([1.0, 2.0]), Contract(), 0.0, scen)
    assert self_financing_residual(path).residual < 1e-10
    assert "fund_1" in path.positions
    assert "fund_0" not in path.positions


def test_offsetting_separates_long_and_short_money(grid20):
    lend = build_account(0.02, grid20, label="l")
    borrow = build_account(0.05, grid20, label="b")
    al = build_account(0.015, grid20, label="al")
    ab = build_account(0.04, grid20, label="ab")
    _, scen = _market(grid20, n_paths=16)
    conv = Offsetting(lend, borrow, (al,), (ab,))

    def flip(k, prices):
        return np.where(prices > 100.0, -1.0, 1.0)

    path = evolve_wealth(conv, flip, Contract(), 0.0, scen)
    assert self_financing_residual(path).residual < 1e-10


def test_netted_wealth_carries_remaining_flows(grid20):
    # deterministic world: netting the contract against the benchmark value
    # of its remaining flows must leave exactly the rolled-up endowment
    r = 0.03
    cash = build_account(r, grid20, label="c")
    scen_assetless = make_scenarios(
        [AssetModel(index=0, spot=1.0, sigma=1e-8, funding=cash)], grid20, 1, seed=1)
    c = Contract.of(flows=[(0.5, -1.0), (1.0, 2.0)])
    path = evolve_wealth(Basic(cash), zero_strategy(), c, 1.0, scen_assetless)
    vnet = netted_wealth(path, cash, cash, c)
    assert np.max(np.abs(vnet - cash.values[None, :])) < 1e-9


def test_solve_U_is_piecewise_account_rollup(grid20):
    lend = build_account(0.02, grid20, label="l")
    borrow = build_account(0.05, grid20, label="b")
    c = Contract.of(flows=[(1.0, -1.0)])
    u = solve_U(c, lend, borrow)
    # owing 1 at T discounts backward at the borrow rate
    assert u[-1] == pytest.approx(-1.0)
    assert u[0] == pytest.approx(-math.exp(-0.05), rel=1e-12)


def test_gain_identity_gap_vanishes(grid20):
    cash, scen = _market(grid20, n_paths=8)
    path = evolve_wealth(Basic(cash), buy_and_hold(2.0), Contract(), 1.0, scen)
    assert gain_identity_gap(path) < 1e-10


class TestCollateralModes:
    def _margin(self, grid):
        return MarginAccounts(
            posted_interest=build_account(0.01, grid),
            received_interest=build_account(0.01, grid),
            posting_funding=build_account(0.03, grid),
            reinvestment=build_account(0.02, grid),
        )

    @pytest.mark.parametrize("mode", [
        MarginConvention.CASH_REHYPOTHECATED,
        MarginConvention.CASH_SEGREGATED,
    ])
    def test_exogenous_cash_modes_self_finance(self, grid20, mode):
        cash, scen = _market(grid20)
        spec = CollateralSpec.exogenous(
            lambda t: 0.4 * (1.0 - t), mode, self._margin(grid20))
        path = evolve_wealth(Basic(cash), buy_and_hold(0.5), Contract(), 1.0,
                             scen, collateral=spec)
        assert path.collateral is not None
        assert self_financing_residual(path).residual < 1e-10
        assert path.decomposition_gap() < 1e-10

    def test_haircut_collateral_tracks_benchmark_gap(self, grid20):
        cash, scen = _market(grid20)
        spec = CollateralSpec.with_haircut(
            0.1, 0.05, MarginConvention.CASH_REHYPOTHECATED, self._margin(grid20))
        bench = 1.0 * cash.values
        path = evolve_wealth(Basic(cash), buy_and_hold(0.5), Contract(), 1.0,
                             scen, collateral=spec, benchmark=bench)
        assert path.collateral is not None
        assert np.all(path.collateral[:, -1] == 0.0)
        assert self_financing_residual(path).residual < 1e-10

    def test_haircut_needs_benchmark(self, grid20):
        cash, scen = _market(grid20)
        spec = CollateralSpec.with_haircut(
            0.1, 0.05, MarginConvention.CASH_REHYPOTHECATED, self._margin(grid20))
        with pytest.raises(InvalidInputError, match="benchmark"):
            evolve_wealth(Basic(cash), zero_strategy(), Contract(), 1.0, scen,
                          collateral=spec)


@given(st.floats(-4, 4), st.floats(-2, 2), st.integers(0, 2**31 - 1))
def test_decomposition_and_residual_for_random_holdings(x, units, seed):
    grid = TimeGrid(0.0, 1.0, 8)
    cash = build_account(0.03, grid, label="c")
    asset = AssetModel(index=0, spot=100.0, sigma=0.25, drift=0.02, funding=cash)
    scen = make_scenarios([asset], grid, 4, seed=seed)
    path = evolve_wealth(Basic(cash), buy_and_hold(units), Contract(), x, scen)
    scale = 1.0 + float(np.max(np.abs(path.wealth)))
    assert path.decomposition_gap() <= 1e-10 * scale
    assert self_financing_residual(path).residual <= 1e-10 * scale
