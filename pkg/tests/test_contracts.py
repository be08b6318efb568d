"""Cash-flow streams, collateral paths, and margin-interest mechanics."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xfund.contracts import (
    CollateralSpec,
    Contract,
    MarginAccounts,
    MarginConvention,
    cumulative_process,
    flow_increments,
    flows_on_grid,
    haircut_collateral,
    margin_interest,
    margin_step_increment,
    split_collateral,
)
from xfund.errors import InvalidInputError
from xfund.market import TimeGrid, build_account


def test_flows_merge_on_shared_nodes(grid20):
    c = Contract.of(flows=[(0.5, 1.0), (0.5, 2.0), (1.0, -1.0)])
    out = flows_on_grid(c, grid20)
    assert out == [(10, 3.0), (20, -1.0)]


def test_flow_at_grid_start_rejected(grid20):
    c = Contract.of(flows=[(0.0, 1.0)])
    with pytest.raises(InvalidInputError, match="belong in p"):
        flows_on_grid(c, grid20)


def test_flow_beyond_grid_rejected():
    g = TimeGrid(0.0, 1.0, 4)
    c = Contract.of(flows=[(1.4, 1.0)])
    with pytest.raises(InvalidInputError):
        flows_on_grid(c, g)


def test_cumulative_process_is_right_continuous_step(grid20):
    c = Contract.of(p=0.5, flows=[(0.5, 2.0), (1.0, -1.0)])
    a = cumulative_process(c, grid20)
    assert a[0] == 0.5
    assert np.all(a[:10] == 0.5)
    assert np.all(a[10:20] == 2.5)
    assert a[20] == 1.5


def test_cumulative_process_needs_deterministic_flows(grid20):
    c = Contract.claim_at(1.0, lambda s: s)
    assert not c.is_deterministic()
    with pytest.raises(InvalidInputError):
        cumulative_process(c, grid20)


def test_flow_increments_localize_amounts(grid20):
    c = Contract.of(p=1.0, flows=[(0.5, 2.0)])
    inc = flow_increments(c, grid20)
    assert inc[0] == 1.0
    assert inc[10] == 2.0
    assert np.sum(inc != 0.0) == 2


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30))
def test_split_collateral_recombines_exactly(values):
    c = np.array(values)
    cp, cm = split_collateral(c)
    assert np.all(cp >= 0) and np.all(cm >= 0)
    assert np.all(cp * cm == 0.0)
    assert np.array_equal(cp - cm, c)


def test_haircut_collateral_two_sided():
    bench = np.array([1.0, 1.0, 1.0])
    wealth = np.array([0.0, 1.0, 3.0])
    c = haircut_collateral(bench, wealth, 0.1, 0.25)
    assert c[0] == pytest.approx(1.1)
    assert c[1] == 0.0
    assert c[2] == pytest.approx(-2.5)
    with pytest.raises(InvalidInputError):
        haircut_collateral(bench, wealth, -0.1, 0.0)


def test_exogenous_collateral_terminal_value_enforced(grid20):
    ma_grid = grid20
    ma = MarginAccounts(
        posted_interest=build_account(0.01, ma_grid),
        received_interest=build_account(0.01, ma_grid),
        posting_funding=build_account(0.02, ma_grid),
    )
    good = CollateralSpec.exogenous(
        lambda t: 1.0 - t, MarginConvention.CASH_REHYPOTHECATED, ma)
    path = good.sample_path(grid20)
    assert path[-1] == 0.0

    bad = CollateralSpec.exogenous(
        lambda t: 1.0, MarginConvention.CASH_REHYPOTHECATED, ma)
    with pytest.raises(InvalidInputError, match="maturity"):
        bad.sample_path(grid20)


def test_collateral_path_shape_checked(grid20):
    ma = MarginAccounts(build_account(0.01, grid20), build_account(0.01, grid20),
                        posting_funding=build_account(0.02, grid20))
    spec = CollateralSpec.exogenous(np.zeros(5), MarginConvention.CASH_REHYPOTHECATED, ma)
    with pytest.raises(InvalidInputError, match="shape"):
        spec.sample_path(grid20)


def _rehypo_spec(grid, rc=0.01, rpost=None):
    ma = MarginAccounts(
        posted_interest=build_account(rc, grid),
        received_interest=build_account(rc, grid),
        posting_funding=build_account(rc if rpost is None else rpost, grid),
    )
    return CollateralSpec.exogenous(np.zeros(grid.n_steps + 1),
                                    MarginConvention.CASH_REHYPOTHECATED, ma)


class TestMarginInterest:
    def test_symmetric_rehypo_matches_single_integral(self, grid20, flat_cash):
        # posted = received = posting rate r_c and rehypothecated received
        # cash collapse the four legs to sum_k C_k (f_cash - f_c) per step
        rc = 0.012
        spec = _rehypo_spec(grid20, rc=rc)
        c = np.sin(np.linspace(0.0, 3.0, grid20.n_steps + 1))
        c[-1] = 0.0
        mi = margin_interest(c, spec, flat_cash)
        coll_acct = build_account(rc, grid20)
        single = np.cumsum(c[:-1] * (flat_cash.factors - coll_acct.factors))
        assert np.max(np.abs(mi.total[1:] - single)) < 1e-12

    def test_additive_for_disjoint_supports(self, grid20, flat_cash):
        spec = _rehypo_spec(grid20, rc=0.01, rpost=0.04)
        c1 = np.zeros(grid20.n_steps + 1)
        c2 = np.zeros(grid20.n_steps + 1)
        c1[2:8] = 1.5
        c2[10:16] = -2.0
        both = margin_interest(c1 + c2, spec, flat_cash).total
        parts = (margin_interest(c1, spec, flat_cash).total
                 + margin_interest(c2, spec, flat_cash).total)
        assert np.max(np.abs(both - parts)) < 1e-14

    def test_zero_collateral_zero_carry(self, grid20, flat_cash):
        spec = CollateralSpec.none()
        mi = margin_interest(np.zeros(grid20.n_steps + 1), spec, flat_cash)
        assert np.all(mi.total == 0.0)
        assert np.all(mi.posted_received == 0.0)

    def test_step_increment_matches_cumulative(self, grid20, flat_cash):
        spec = _rehypo_spec(grid20, rc=0.015, rpost=0.05)
        c = np.cos(np.linspace(0.0, 2.0, grid20.n_steps + 1))
        c[-1] = 0.0
        mi = margin_interest(c, spec, flat_cash)
        for k in range(grid20.n_steps):
            inc = margin_step_increment(spec, c[k], k, flat_cash)
            assert float(inc) == pytest.approx(mi.total_increments[k], abs=1e-16)

    def test_missing_accounts_rejected(self, grid20, flat_cash):
        spec = CollateralSpec(convention=MarginConvention.CASH_REHYPOTHECATED,
                              path=np.zeros(grid20.n_steps + 1))
        with pytest.raises(InvalidInputError):
            margin_interest(np.zeros(grid20.n_steps + 1), spec, flat_cash)

    def test_risky_convention_needs_reinvestment(self, grid20, flat_cash):
        ma = MarginAccounts(build_account(0.01, grid20), build_account(0.01, grid20))
        spec = CollateralSpec.exogenous(np.zeros(grid20.n_steps + 1),
                                        MarginConvention.RISKY_COLLATERAL, ma)
        with pytest.raises(InvalidInputError, match="reinvestment"):
            margin_interest(np.zeros(grid20.n_steps + 1), spec, flat_cash)
