import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xfund.errors import CalibrationError, InvalidInputError
from xfund.market import (
    AssetModel,
    TimeGrid,
    build_account,
    calibrate_lattice,
    cum_dividend_price,
    discounted_price_check,
    lattice_scenarios,
    make_scenarios,
    martingale_residual,
    price_gain_check,
    sample_lattice_paths,
)


class TestTimeGrid:
    def test_endpoints_and_dt(self):
        g = TimeGrid(0.25, 1.75, 6)
        assert g.times[0] == 0.25
        assert g.times[-1] == 1.75
        assert g.dt == pytest.approx(0.25)
        assert len(g.times) == 7

    def test_rejects_degenerate_interval(self):
        with pytest.raises(InvalidInputError):
            TimeGrid(1.0, 1.0, 10)
        with pytest.raises(InvalidInputError):
            TimeGrid(0.0, 1.0, 0)

    def test_index_at_snaps_nearby_dates(self, grid20):
        assert grid20.index_at(0.5) == 10
        assert grid20.index_at(0.51) == 10

    def test_index_at_rejects_far_dates(self, grid20):
        # more than dt/2 off-node would silently move a cash flow
        with pytest.raises(InvalidInputError):
            grid20.index_at(1.5)

    @given(st.floats(-5, 5), st.floats(0.01, 10), st.integers(1, 400))
    def test_times_strictly_increase(self, t0, span, n):
        g = TimeGrid(t0, t0 + span, n)
        assert np.all(np.diff(g.times) > 0)


class TestAccount:
    def test_unit_start_and_positivity(self, grid20):
        b = build_account(0.05, grid20)
        assert b.values[0] == 1.0
        assert np.all(b.values > 0)

    def test_exact_exponential_accrual(self, grid20):
        b = build_account(0.05, grid20)
        ratios = b.values[1:] / b.values[:-1]
        assert np.max(np.abs(ratios - math.exp(0.05 * grid20.dt))) < 1e-15

    def test_negative_rates_allowed(self, grid20):
        b = build_account(-0.01, grid20)
        assert np.all(b.values > 0)
        assert b.values[-1] < 1.0

    def test_stepwise_rates(self, grid20):
        rates = np.linspace(0.0, 0.05, grid20.n_steps)
        b = build_account(rates, grid20)
        expected = math.exp(float(np.sum(rates)) * grid20.dt)
        assert b.values[-1] == pytest.approx(expected, rel=1e-14)

    def test_rate_vector_shape_checked(self, grid20):
        with pytest.raises(InvalidInputError):
            build_account(np.zeros(grid20.n_steps + 5), grid20)

    def test_nonfinite_rate_rejected(self, grid20):
        with pytest.raises(InvalidInputError):
            build_account(float("nan"), grid20)

    @given(st.lists(st.floats(-0.2, 0.2), min_size=5, max_size=5))
    def test_accrual_identity_for_any_rates(self, rates):
        g = TimeGrid(0.0, 1.0, 5)
        b = build_account(np.array(rates), g)
        for k in range(5):
            assert b.values[k + 1] / b.values[k] == pytest.approx(
                math.exp(rates[k] * g.dt), rel=1e-14
            )


class TestLattice:
    def test_node_counts_single_asset(self, single_lattice):
        for k in range(single_lattice.n_steps + 1):
            assert single_lattice.level_prices(k).shape == (k + 1,)

    def test_node_counts_two_assets(self, grid20, flat_cash):
        a0 = AssetModel(index=0, spot=100.0, sigma=0.2, funding=flat_cash)
        a1 = AssetModel(index=1, spot=80.0, sigma=0.3, funding=flat_cash)
        lat = calibrate_lattice([a0, a1], grid20)
        levels = lat.level_grid(3)
        # broadcastable per-asset axes; the joint level is their product
        assert np.broadcast_shapes(levels[0].shape, levels[1].shape) == (4, 4)

    def test_branch_probabilities_interior(self, single_lattice):
        assert np.all(single_lattice.q > 0)
        assert np.all(single_lattice.q < 1)

    def test_martingale_identity_nodewise(self, single_lattice):
        assert martingale_residual(discounted_price_check(single_lattice)) < 1e-12
        assert martingale_residual(price_gain_check(single_lattice)) < 1e-12

    def test_martingale_identity_with_dividends(self, grid20, flat_cash):
        a = AssetModel(index=0, spot=100.0, sigma=0.2, funding=flat_cash,
                       dividend_yield=0.04)
        lat = calibrate_lattice([a], grid20)
        assert martingale_residual(discounted_price_check(lat)) < 1e-12

    def test_infeasible_calibration_reports_step(self, grid20):
        # rate so large the up-branch cannot carry the growth
        steep = build_account(9.0, grid20, label="steep")
        a = AssetModel(index=0, spot=100.0, sigma=0.05, funding=steep)
        with pytest.raises(CalibrationError, match="step"):
            calibrate_lattice([a], grid20)

    def test_european_claim_converges_to_lognormal(self, flat_cash):
        s0, k, r, sigma, T = 100.0, 100.0, 0.03, 0.2, 1.0
        d1 = (math.log(s0 / k) + (r + 0.5 * sigma**2) * T) / (sigma * math.sqrt(T))
        d2 = d1 - sigma * math.sqrt(T)
        phi = lambda z: 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
        exact = s0 * phi(d1) - k * math.exp(-r * T) * phi(d2)

        errs = []
        for n in (50, 100, 200):
            g = TimeGrid(0.0, T, n)
            b = build_account(r, g)
            lat = calibrate_lattice(
                [AssetModel(index=0, spot=s0, sigma=sigma, funding=b)], g)
            payoff = lat.terminal_tensor(lambda s: np.maximum(s - k, 0.0))
            val = payoff / b.values[-1]
            for step in range(n, 0, -1):
                val = lat.expect(val, step - 1)
            errs.append(abs(float(val[0]) - exact))
        # first-order convergence: error roughly halves per doubling
        assert errs[2] < errs[0]
        assert errs[0] / errs[2] > 2.5

    def test_measure_for_other_account(self, grid20, flat_cash, single_lattice):
        other = build_account(0.01, grid20, label="other")
        q = single_lattice.measure_for(other)
        assert q.shape == single_lattice.q.shape
        assert np.all((q > 0) & (q < 1))
        assert martingale_residual(
            discounted_price_check(single_lattice, account=other)) < 1e-12


class TestScenarios:
    def test_same_seed_bit_identical(self, grid20, flat_cash):
        a = AssetModel(index=0, spot=100.0, sigma=0.2, drift=0.05, funding=flat_cash)
        s1 = make_scenarios([a], grid20, 16, seed=5)
        s2 = make_scenarios([a], grid20, 16, seed=5)
        assert np.array_equal(s1.prices, s2.prices)
        assert np.array_equal(s1.dividends, s2.dividends)

    def test_different_seed_differs(self, grid20, flat_cash):
        a = AssetModel(index=0, spot=100.0, sigma=0.2, drift=0.05, funding=flat_cash)
        s1 = make_scenarios([a], grid20, 16, seed=5)
        s2 = make_scenarios([a], grid20, 16, seed=6)
        assert not np.array_equal(s1.prices, s2.prices)

    def test_paths_positive_and_start_at_spot(self, grid20, flat_cash):
        a = AssetModel(index=0, spot=100.0, sigma=0.6, drift=-0.3, funding=flat_cash)
        s = make_scenarios([a], grid20, 64, seed=1)
        assert np.all(s.prices > 0)
        assert np.all(s.prices[:, 0, 0] == 100.0)

    def test_correlation_validation(self, grid20, flat_cash):
        a0 = AssetModel(index=0, spot=100.0, sigma=0.2, funding=flat_cash)
        a1 = AssetModel(index=1, spot=90.0, sigma=0.3, funding=flat_cash)
        bad = np.array([[1.0, 1.2], [1.2, 1.0]])
        with pytest.raises(InvalidInputError):
            make_scenarios([a0, a1], grid20, 8, seed=1, correlation=bad)

    def test_exhaustive_weights_reproduce_backward_induction(self, grid20, flat_cash):
        g = TimeGrid(0.0, 1.0, 8)
        b = build_account(0.03, g)
        lat = calibrate_lattice(
            [AssetModel(index=0, spot=100.0, sigma=0.2, funding=b)], g)
        scen = lattice_scenarios(lat)
        assert scen.is_exhaustive
        assert float(np.sum(scen.weights)) == pytest.approx(1.0, abs=1e-14)
        # E[S_T / B_T] = S_0 under the calibration measure
        disc = np.sum(scen.weights * scen.prices[:, -1, 0]) / b.values[-1]
        assert disc == pytest.approx(100.0, abs=1e-10)

    def test_sampled_paths_live_on_nodes(self, single_lattice):
        scen = sample_lattice_paths(single_lattice, 32, seed=3)
        assert not scen.is_exhaustive
        for k in (5, 13, 20):
            nodes = single_lattice.level_prices(k)
            seen = scen.prices[:, k, 0]
            gaps = np.min(np.abs(seen[:, None] - nodes[None, :]), axis=1)
            assert np.max(gaps) < 1e-9 * np.max(nodes)

    def test_cum_dividend_price(self, grid20, flat_cash):
        a = AssetModel(index=0, spot=100.0, sigma=0.2, funding=flat_cash,
                       dividend_yield=0.05)
        scen = make_scenarios([a], grid20, 4, seed=2)
        cum = cum_dividend_price(scen.prices[:, :, 0], scen.dividends[:, :, 0],
                                 flat_cash)
        # rolling dividends forward at the cash rate dominates the raw price
        assert np.all(cum[:, -1] >= scen.prices[:, -1, 0])
