"""Self-financing wealth evolution under differential funding rates.

Five funding conventions decide which accounts carry the cash leg and the
asset-purchase legs of a dynamic portfolio.  Every convention exposes the
same one-step map, written in a grouped multiplicative form

    V_{k+1} = (accrued carry of V and the funding legs) + trading gains + flows

where each leg accrues by its account's exact per-step growth factor.  The
grouped form keeps deterministic identities (bond carry, funding of a fixed
loan) exact to rounding instead of O(dt).

Wealth paths record positions per account role, so self-financing can be
re-verified from raw market data: the composition identity at each node and
the one-step evolution identity across each interval.
"""
from __future__ import annotations

import dataclasses
import warnings
from typing import Callable, Sequence

import numpy as np

from .contracts import (
    CollateralSpec,
    Contract,
    MarginConvention,
    flows_on_grid,
    haircut_collateral,
    margin_interest,
    margin_step_increment,
    rehypo_base_interest,
    split_collateral,
)
from .errors import InvalidInputError
from .market import Account, ScenarioSet, TimeGrid

Strategy = Callable[[int, np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# funding conventions


@dataclasses.dataclass(frozen=True)
class StepTerms:
    carry: np.ndarray
    funding: np.ndarray
    positions: dict[str, np.ndarray]


def _check_accounts_grid(accounts: Sequence[Account]) -> None:
    grids = {id(a.grid) for a in accounts}
    if len(grids) > 1:
        ref = accounts[0].grid
        for a in accounts[1:]:
            if not ref.same_as(a.grid):
                raise InvalidInputError("all convention accounts must share one grid")


def _warn_rate_order(lend: Account, borrow: Account) -> None:
    # lending above the borrowing rate is economically odd but not a
    # structural error; certificates that assume the ordering check it again
    if np.any(lend.rates > borrow.rates):
        warnings.warn(
            f"lend rate exceeds borrow rate somewhere on the grid "
            f"({lend.label!r} vs {borrow.label!r})",
            stacklevel=3,
        )


class FundingConvention:
    """Base for the five cash/asset funding layouts."""

    label: str = "convention"

    def n_assets_or_none(self) -> int | None:
        return None

    def accounts(self, n_assets: int) -> dict[str, Account]:
        raise NotImplementedError

    def step(self, v: np.ndarray, xis: np.ndarray, k: int) -> StepTerms:
        """One-interval carry of wealth v and the funding of positions xis.

        xis has shape (n_paths, d) and holds the money positions xi^i S^i
        held over [t_k, t_{k+1}).
        """
        raise NotImplementedError

    def cash_reference(self) -> Account:
        """Account used for margin cash-drag legs and benchmarks."""
        raise NotImplementedError


def _asset_positions(xis: np.ndarray, funding: Sequence[Account], k: int) -> dict[str, np.ndarray]:
    return {f"fund_{i}": -xis[:, i] / funding[i].values[k] for i in range(xis.shape[1])}


@dataclasses.dataclass(frozen=True)
class Basic(FundingConvention):
    """One cash account; every asset leg funded from its own account.

    With ``asset_funding`` omitted all legs run through ``cash``.
    """

    cash: Account
    asset_funding: tuple[Account, ...] | None = None
    label: str = "basic"

    def __post_init__(self) -> None:
        if self.asset_funding:
            _check_accounts_grid([self.cash, *self.asset_funding])

    def _funding(self, d: int) -> tuple[Account, ...]:
        if self.asset_funding is None:
            return (self.cash,) * d
        if len(self.asset_funding) != d:
            raise InvalidInputError(
                f"{len(self.asset_funding)} funding accounts for {d} assets"
            )
        return self.asset_funding

    def n_assets_or_none(self) -> int | None:
        return None if self.asset_funding is None else len(self.asset_funding)

    def accounts(self, n_assets: int) -> dict[str, Account]:
        fund = self._funding(n_assets)
        out: dict[str, Account] = {"cash": self.cash}
        out.update({f"fund_{i}": fund[i] for i in range(n_assets)})
        return out

    def cash_reference(self) -> Account:
        return self.cash

    def step(self, v: np.ndarray, xis: np.ndarray, k: int) -> StepTerms:
        fund = self._funding(xis.shape[1])
        f = self.cash.factors[k]
        carry = v * f
        funding = v * (f - 1.0)
        for i, acct in enumerate(fund):
            fi = acct.factors[k] - 1.0
            carry = carry - xis[:, i] * fi
            funding = funding - xis[:, i] * fi
        positions = {"cash": v / self.cash.values[k]}
        positions.update(_asset_positions(xis, fund, k))
        return StepTerms(carry, funding, positions)


@dataclasses.dataclass(frozen=True)
class CommonUnsecured(FundingConvention):
    """First ``unsecured`` assets are funded straight from the cash account.

    The remaining assets keep their own funding accounts, so the cash leg is
    psi^0 = (V - sum_{i<unsecured} xi^i S^i) / B.
    """

    cash: Account
    unsecured: int
    asset_funding: tuple[Account, ...]
    label: str = "common_unsecured"

    def __post_init__(self) -> None:
        if self.unsecured < 0 or self.unsecured > len(self.asset_funding):
            raise InvalidInputError("unsecured count outside [0, n_assets]")
        _check_accounts_grid([self.cash, *self.asset_funding])

    def n_assets_or_none(self) -> int | None:
        return len(self.asset_funding)

    def accounts(self, n_assets: int) -> dict[str, Account]:
        self._check_d(n_assets)
        out: dict[str, Account] = {"cash": self.cash}
        out.update({f"fund_{i}": self.asset_funding[i]
                    for i in range(self.unsecured, n_assets)})
        return out

    def cash_reference(self) -> Account:
        return self.cash

    def _check_d(self, d: int) -> None:
        if d != len(self.asset_funding):
            raise InvalidInputError(
                f"{len(self.asset_funding)} funding accounts for {d} assets"
            )

    def step(self, v: np.ndarray, xis: np.ndarray, k: int) -> StepTerms:
        self._check_d(xis.shape[1])
        f = self.cash.factors[k]
        pooled = xis[:, : self.unsecured].sum(axis=1)
        carry = v * f - pooled * (f - 1.0)
        funding = (v - pooled) * (f - 1.0)
        for i in range(self.unsecured, xis.shape[1]):
            fi = self.asset_funding[i].factors[k] - 1.0
            carry = carry - xis[:, i] * fi
            funding = funding - xis[:, i] * fi
        positions = {"cash": (v - pooled) / self.cash.values[k]}
        positions.update({
            f"fund_{i}": -xis[:, i] / self.asset_funding[i].values[k]
            for i in range(self.unsecured, xis.shape[1])
        })
        return StepTerms(carry, funding, positions)


def _split_cash_step(
    w: np.ndarray, lend: Account, borrow: Account, k: int
) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
    wp, wm = split_collateral(w)
    fl, fb = lend.factors[k], borrow.factors[k]
    carry = wp * fl - wm * fb
    funding = wp * (fl - 1.0) - wm * (fb - 1.0)
    positions = {
        "cash_lend": wp / lend.values[k],
        "cash_borrow": -wm / borrow.values[k],
    }
    return carry, funding, positions


@dataclasses.dataclass(frozen=True)
class SplitCashRates(FundingConvention):
    """Positive cash lent, negative cash borrowed, at different rates."""

    lend: Account
    borrow: Account
    asset_funding: tuple[Account, ...]
    label: str = "split_cash"

    def __post_init__(self) -> None:
        _check_accounts_grid([self.lend, self.borrow, *self.asset_funding])
        _warn_rate_order(self.lend, self.borrow)

    def n_assets_or_none(self) -> int | None:
        return len(self.asset_funding)

    def accounts(self, n_assets: int) -> dict[str, Account]:
        self._check_d(n_assets)
        out = {"cash_lend": self.lend, "cash_borrow": self.borrow}
        out.update({f"fund_{i}": self.asset_funding[i] for i in range(n_assets)})
        return out

    def cash_reference(self) -> Account:
        return self.lend

    def _check_d(self, d: int) -> None:
        if d != len(self.asset_funding):
            raise InvalidInputError(
                f"{len(self.asset_funding)} funding accounts for {d} assets"
            )

    def step(self, v: np.ndarray, xis: np.ndarray, k: int) -> StepTerms:
        self._check_d(xis.shape[1])
        carry, funding, positions = _split_cash_step(v, self.lend, self.borrow, k)
        for i, acct in enumerate(self.asset_funding):
            fi = acct.factors[k] - 1.0
            carry = carry - xis[:, i] * fi
            funding = funding - xis[:, i] * fi
        positions.update(_asset_positions(xis, self.asset_funding, k))
        return StepTerms(carry, funding, positions)


@dataclasses.dataclass(frozen=True)
class Offsetting(FundingConvention):
    """Per-asset long/short money positions carried on separate accounts.

    Long positions (xi S)^+ are financed at the asset's borrow account,
    short-sale proceeds (xi S)^- earn the asset's lend account, and the
    residual cash splits across the lend/borrow pair.
    """

    lend: Account
    borrow: Account
    asset_lend: tuple[Account, ...]
    asset_borrow: tuple[Account, ...]
    label: str = "offsetting"

    def __post_init__(self) -> None:
        if len(self.asset_lend) != len(self.asset_borrow):
            raise InvalidInputError("asset_lend and asset_borrow lengths differ")
        _check_accounts_grid([self.lend, self.borrow, *self.asset_lend, *self.asset_borrow])
        _warn_rate_order(self.lend, self.borrow)

    def n_assets_or_none(self) -> int | None:
        return len(self.asset_lend)

    def accounts(self, n_assets: int) -> dict[str, Account]:
        self._check_d(n_assets)
        out = {"cash_lend": self.lend, "cash_borrow": self.borrow}
        for i in range(n_assets):
            out[f"repo_lend_{i}"] = self.asset_lend[i]
            out[f"repo_borrow_{i}"] = self.asset_borrow[i]
        return out

    def cash_reference(self) -> Account:
        return self.lend

    def _check_d(self, d: int) -> None:
        if d != len(self.asset_lend):
            raise InvalidInputError(
                f"{len(self.asset_lend)} funding account pairs for {d} assets"
            )

    def step(self, v: np.ndarray, xis: np.ndarray, k: int) -> StepTerms:
        self._check_d(xis.shape[1])
        carry, funding, positions = _split_cash_step(v, self.lend, self.borrow, k)
        pos, neg = split_collateral(xis)
        for i in range(xis.shape[1]):
            fl = self.asset_lend[i].factors[k] - 1.0
            fb = self.asset_borrow[i].factors[k] - 1.0
            leg = neg[:, i] * fl - pos[:, i] * fb
            carry = carry + leg
            funding = funding + leg
            positions[f"repo_lend_{i}"] = neg[:, i] / self.asset_lend[i].values[k]
            positions[f"repo_borrow_{i}"] = -pos[:, i] / self.asset_borrow[i].values[k]
        return StepTerms(carry, funding, positions)


@dataclasses.dataclass(frozen=True)
class PartialNetting(FundingConvention):
    """Long positions funded per asset; short proceeds netted into cash.

    The netted cash W = V + sum (xi S)^- splits across the lend/borrow pair
    while each (xi S)^+ is financed at its asset's borrow account.
    """

    lend: Account
    borrow: Account
    asset_borrow: tuple[Account, ...]
    label: str = "partial_netting"

    def __post_init__(self) -> None:
        _check_accounts_grid([self.lend, self.borrow, *self.asset_borrow])
        _warn_rate_order(self.lend, self.borrow)

    def n_assets_or_none(self) -> int | None:
        return len(self.asset_borrow)

    def accounts(self, n_assets: int) -> dict[str, Account]:
        self._check_d(n_assets)
        out = {"cash_lend": self.lend, "cash_borrow": self.borrow}
        out.update({f"repo_borrow_{i}": self.asset_borrow[i] for i in range(n_assets)})
        return out

    def cash_reference(self) -> Account:
        return self.lend

    def _check_d(self, d: int) -> None:
        if d != len(self.asset_borrow):
            raise InvalidInputError(
                f"{len(self.asset_borrow)} funding accounts for {d} assets"
            )

    def step(self, v: np.ndarray, xis: np.ndarray, k: int) -> StepTerms:
        self._check_d(xis.shape[1])
        pos, neg = split_collateral(xis)
        short_proceeds = neg.sum(axis=1)
        w = v + short_proceeds
        carry, funding, positions = _split_cash_step(w, self.lend, self.borrow, k)
        carry = carry - short_proceeds
        for i in range(xis.shape[1]):
            fb = self.asset_borrow[i].factors[k] - 1.0
            carry = carry - pos[:, i] * fb
            funding = funding - pos[:, i] * fb
            positions[f"repo_borrow_{i}"] = -pos[:, i] / self.asset_borrow[i].values[k]
        return StepTerms(carry, funding, positions)


# ---------------------------------------------------------------------------
# strategies


def zero_strategy() -> Strategy:
    def xi(k: int, prices: np.ndarray) -> np.ndarray:
        return np.zeros_like(prices)

    return xi


def buy_and_hold(units: float | Sequence[float]) -> Strategy:
    u = np.atleast_1d(np.asarray(units, dtype=float))

    def xi(k: int, prices: np.ndarray) -> np.ndarray:
        return np.broadcast_to(u, prices.shape)

    return xi


def table_strategy(table: np.ndarray) -> Strategy:
    """Positions given per step: shape (n, d) or (n_paths, n, d)."""
    tb = np.asarray(table, dtype=float)

    def xi(k: int, prices: np.ndarray) -> np.ndarray:
        row = tb[k] if tb.ndim == 2 else tb[:, k, :]
        return np.broadcast_to(row, prices.shape)

    return xi


def strategy_from_function(fn: Callable[[int, np.ndarray], np.ndarray]) -> Strategy:
    return fn


# ---------------------------------------------------------------------------
# wealth paths


@dataclasses.dataclass
class WealthPath:
    """Simulated wealth with its decomposition and position records.

    ``wealth[:, k]`` is V at node k.  Cumulative arrays share that layout:
    gains G, funding F, margin carry M and flows A satisfy
    V = x + G + F + M + A at every node up to rounding.  ``positions[role]``
    holds the account position over [t_k, t_{k+1}) in column k, and
    ``carry_increments`` collects per-step wealth changes that are not
    explained by the recorded positions (margin carry, collateral-asset
    hedge gains).
    """

    grid: TimeGrid
    convention_label: str
    x: float
    wealth: np.ndarray
    gains: np.ndarray
    funding: np.ndarray
    flows: np.ndarray
    margin_carry: np.ndarray
    xi: np.ndarray
    positions: dict[str, np.ndarray]
    position_accounts: dict[str, Account]
    scenarios: ScenarioSet
    carry_increments: np.ndarray
    composition_offset: np.ndarray
    wealth_pre: np.ndarray | None = None
    collateral: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.wealth.shape[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.wealth[:, -1]

    def decomposition_gap(self) -> float:
        stack = self.x + self.gains + self.funding + self.margin_carry + self.flows
        return float(np.max(np.abs(self.wealth - stack)))


def _normalize_xi(raw: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    arr = np.asarray(raw, dtype=float)
    return np.broadcast_to(arr, shape)


def _flow_values(contract: Contract, scenarios: ScenarioSet) -> dict[int, float | np.ndarray]:
    out: dict[int, float | np.ndarray] = {0: contract.p}
    d = scenarios.prices.shape[2]
    for k, amount in flows_on_grid(contract, scenarios.grid):
        if callable(amount):
            args = [scenarios.prices[:, k, i] for i in range(d)]
            val: float | np.ndarray = np.asarray(amount(*args), dtype=float)
        else:
            val = amount
        prev = out.get(k, 0.0)
        out[k] = prev + val
    return out


@dataclasses.dataclass(frozen=True)
class _MarginLegs:
    """Per-step wealth effects of a collateral agreement (direct form)."""

    carry: np.ndarray            # (n_paths, n) margin interest totals
    hedge_gains: np.ndarray      # (n_paths, n) risky collateral asset leg
    collateral: np.ndarray       # (n_paths, n+1)


def _direct_margin_legs(
    spec: CollateralSpec,
    collateral: np.ndarray,
    scenarios: ScenarioSet,
    cash: Account,
    n_paths: int,
) -> _MarginLegs:
    n = scenarios.grid.n_steps
    c2 = np.broadcast_to(collateral, (n_paths, n + 1))
    mi = margin_interest(c2, spec, cash)
    hedge = np.zeros((n_paths, n))
    if spec.convention is MarginConvention.RISKY_COLLATERAL:
        j = spec.collateral_asset
        if j is None:
            raise InvalidInputError("risky collateral needs collateral_asset")
        s = scenarios.prices[:, :, j]
        _, cm = split_collateral(c2)
        units = cm[:, :-1] / s[:, :-1]
        hedge = units * (s[:, 1:] - s[:, :-1] + scenarios.dividends[:, :, j])
    return _MarginLegs(carry=mi.total_increments, hedge_gains=hedge, collateral=c2.copy())


def evolve_wealth(
    convention: FundingConvention,
    strategy: Strategy,
    contract: Contract,
    x: float,
    scenarios: ScenarioSet,
    collateral: CollateralSpec | None = None,
    benchmark: np.ndarray | float | None = None,
    bookkeeping: str = "auto",
) -> WealthPath:
    """Run the self-financing portfolio forward along scenario paths.

    With a collateral spec the evolution adds margin mechanics, in one of
    two bookkeeping forms:

    * ``"netting"``: state is the pre-collateral wealth V + C driven by the
      combined flow stream (contract flows + collateral transfers + margin
      balance interest); only rehypothecated cash supports it.
    * ``"direct"``: state is V itself; collateral transfers are asset swaps
      and only the convention's margin carry (plus, for risky collateral,
      the collateral-asset hedge leg) moves wealth.

    ``"auto"`` picks netting exactly when it is supported.  Endogenous
    (haircut) collateral uses the direct form with the supplied benchmark
    wealth path.
    """
    spec = collateral if collateral is not None else CollateralSpec.none()
    grid = scenarios.grid
    n, n_paths, d = grid.n_steps, scenarios.n_paths, scenarios.prices.shape[2]
    expected = convention.n_assets_or_none()
    if expected is not None and expected != d:
        raise InvalidInputError(f"convention is wired for {expected} assets, scenarios carry {d}")

    flows_at = _flow_values(contract, scenarios)
    accounts = convention.accounts(d)

    mode = bookkeeping
    if mode not in ("auto", "netting", "direct"):
        raise InvalidInputError(f"unknown bookkeeping {bookkeeping!r}")
    netting_ok = (
        spec.is_collateralized
        and spec.convention is MarginConvention.CASH_REHYPOTHECATED
        and spec.haircut is None
    )
    if mode == "netting" and spec.is_collateralized and not netting_ok:
        raise InvalidInputError(
            "netting bookkeeping needs rehypothecated cash collateral on an exogenous path"
        )
    use_netting = netting_ok if mode == "auto" else (mode == "netting" and netting_ok)

    c_path: np.ndarray | None = None
    legs: _MarginLegs | None = None
    bench: np.ndarray | None = None
    if spec.is_collateralized:
        if spec.haircut is None:
            c_path = np.broadcast_to(spec.sample_path(grid), (n_paths, n + 1)).copy()
        else:
            if benchmark is None:
                raise InvalidInputError("haircut collateral needs a benchmark wealth path")
            bench = np.broadcast_to(np.asarray(benchmark, dtype=float), (n_paths, n + 1))
            c_path = np.zeros((n_paths, n + 1))
        if not use_netting:
            if spec.accounts is None:
                raise InvalidInputError("collateralized spec needs margin accounts")
            if spec.haircut is None:
                legs = _direct_margin_legs(
                    spec, c_path, scenarios, convention.cash_reference(), n_paths
                )

    v = np.full(n_paths, float(x))
    flows_cum = np.zeros((n_paths, n + 1))
    a0 = np.asarray(flows_at.get(0, 0.0), dtype=float)
    flows_cum[:, 0] = a0
    v = v + flows_cum[:, 0]

    state = v.copy()
    if use_netting:
        assert c_path is not None
        state = v + c_path[:, 0]
        fc_inc = rehypo_base_interest(
            c_path, spec.accounts.posted_interest, spec.accounts.received_interest
        )

    wealth = np.zeros((n_paths, n + 1))
    pre = np.zeros((n_paths, n + 1)) if use_netting else None
    gains_cum = np.zeros((n_paths, n + 1))
    fund_cum = np.zeros((n_paths, n + 1))
    margin_cum = np.zeros((n_paths, n + 1))
    carry_inc = np.zeros((n_paths, n))
    xi_rec = np.zeros((n_paths, n, d))
    pos_rec: dict[str, np.ndarray] = {role: np.zeros((n_paths, n)) for role in accounts}
    wealth[:, 0] = v
    if pre is not None:
        pre[:, 0] = state

    prices = scenarios.prices
    for k in range(n):
        if spec.haircut is not None:
            assert bench is not None and c_path is not None
            d1, d2 = spec.haircut
            c_path[:, k] = haircut_collateral(bench[:, k], wealth[:, k], d1, d2)

        xi_k = _normalize_xi(strategy(k, prices[:, k, :]), (n_paths, d))
        xi_rec[:, k, :] = xi_k
        xis = xi_k * prices[:, k, :]
        gains_k = np.einsum(
            "pi,pi->p", xi_k, prices[:, k + 1, :] - prices[:, k, :] + scenarios.dividends[:, k, :]
        )

        terms = convention.step(state, xis, k)
        for role, val in terms.positions.items():
            pos_rec[role][:, k] = val

        da = np.asarray(flows_at.get(k + 1, 0.0), dtype=float)
        extra = np.zeros(n_paths)
        if use_netting:
            assert c_path is not None
            # collateral transfer plus balance interest joins the flow stream
            extra = (c_path[:, k + 1] - c_path[:, k]) + fc_inc[:, k]
        elif legs is not None:
            extra = legs.carry[:, k] + legs.hedge_gains[:, k]
        elif spec.haircut is not None:
            assert c_path is not None
            extra = margin_step_increment(
                spec, c_path[:, k], k, convention.cash_reference()
            )
            if spec.convention is MarginConvention.RISKY_COLLATERAL:
                j = spec.collateral_asset
                if j is None:
                    raise InvalidInputError("risky collateral needs collateral_asset")
                s = prices[:, :, j]
                _, cm = split_collateral(c_path[:, k])
                extra = extra + (cm / s[:, k]) * (
                    s[:, k + 1] - s[:, k] + scenarios.dividends[:, k, j]
                )

        state = terms.carry + gains_k + da + extra

        gains_cum[:, k + 1] = gains_cum[:, k] + gains_k
        fund_cum[:, k + 1] = fund_cum[:, k] + terms.funding
        flows_cum[:, k + 1] = flows_cum[:, k] + da
        if use_netting:
            assert c_path is not None
            margin_cum[:, k + 1] = margin_cum[:, k] + fc_inc[:, k]
            pre[:, k + 1] = state
            wealth[:, k + 1] = state - c_path[:, k + 1]
            carry_inc[:, k] = (c_path[:, k + 1] - c_path[:, k]) + fc_inc[:, k]
        else:
            margin_cum[:, k + 1] = margin_cum[:, k] + extra
            carry_inc[:, k] = extra
            wealth[:, k + 1] = state

    if spec.haircut is not None and c_path is not None:
        c_path[:, n] = 0.0

    offset = np.zeros((n_paths, n + 1))
    if use_netting and c_path is not None:
        offset = c_path.copy()

    return WealthPath(
        grid=grid,
        convention_label=convention.label,
        x=float(x),
        wealth=wealth,
        gains=gains_cum,
        funding=fund_cum,
        flows=flows_cum,
        margin_carry=margin_cum,
        xi=xi_rec,
        positions=pos_rec,
        position_accounts=accounts,
        scenarios=scenarios,
        carry_increments=carry_inc,
        composition_offset=offset,
        wealth_pre=pre,
        collateral=c_path if spec.is_collateralized else None,
    )


@dataclasses.dataclass(frozen=True)
class SelfFinancingReport:
    """Worst-case violations of the two self-financing identities."""

    composition: float
    evolution: float

    @property
    def residual(self) -> float:
        return max(self.composition, self.evolution)


def self_financing_residual(path: WealthPath) -> SelfFinancingReport:
    """Re-verify a wealth path against raw market data.

    Composition: at each node the recorded positions revalue to the wealth
    state.  Evolution: positions held over an interval, revalued at its right
    endpoint plus trading flows and recorded carry, reproduce the next state.
    Both are computed from stored positions, so corrupting any single
    position breaks at least one identity.
    """
    scen = path.scenarios
    n = path.grid.n_steps
    state = path.wealth_pre if path.wealth_pre is not None else path.wealth

    value_now = np.zeros((path.n_paths, n))
    value_next = np.zeros((path.n_paths, n))
    for role, pos in path.positions.items():
        vals = path.position_accounts[role].values
        value_now += pos * vals[:-1]
        value_next += pos * vals[1:]
    stock_now = np.einsum("pki,pki->pk", path.xi, scen.prices[:, :-1, :])
    stock_next = np.einsum(
        "pki,pki->pk", path.xi, scen.prices[:, 1:, :] + scen.dividends
    )

    comp = np.max(np.abs(state[:, :-1] - value_now - stock_now))
    flow_inc = path.flows[:, 1:] - path.flows[:, :-1]
    evol = np.max(
        np.abs(state[:, 1:] - value_next - stock_next - flow_inc - path.carry_increments)
    )
    return SelfFinancingReport(composition=float(comp), evolution=float(evol))


# ---------------------------------------------------------------------------
# flow carry and netted wealth


def solve_U(contract: Contract, lend: Account, borrow: Account) -> np.ndarray:
    """Forward-carried mirror of the contract flows.

    U absorbs -dA and accrues positive balances at the lend account,
    negative at the borrow account, one exact growth factor per step.
    Adding U to a hedger's wealth removes the financed contract flows.
    """
    grid = lend.grid
    if not grid.same_as(borrow.grid):
        raise InvalidInputError("lend and borrow accounts must share one grid")
    if not contract.is_deterministic():
        raise InvalidInputError("flow carry needs a deterministic contract")
    inc = np.zeros(grid.n_steps + 1)
    inc[0] = contract.p
    for k, amount in flows_on_grid(contract, grid):
        inc[k] += float(amount)
    u = np.zeros(grid.n_steps + 1)
    u[0] = -inc[0]
    for k in range(grid.n_steps):
        up, um = max(u[k], 0.0), max(-u[k], 0.0)
        u[k + 1] = up * lend.factors[k] - um * borrow.factors[k] - inc[k + 1]
    return u


def netted_wealth(path: WealthPath, lend: Account, borrow: Account, contract: Contract) -> np.ndarray:
    """Wealth with its contract flows financed out: V + U."""
    return path.wealth + solve_U(contract, lend, borrow)[None, :]


def netted_wealth_single_rate(path: WealthPath, account: Account, contract: Contract) -> np.ndarray:
    """Equal-rates form of the netted wealth: V_t - B_t sum_{s<=t} dA_s / B_s."""
    inc = np.zeros(path.grid.n_steps + 1)
    inc[0] = contract.p
    for k, amount in flows_on_grid(contract, path.grid):
        if callable(amount):
            raise InvalidInputError("flow carry needs a deterministic contract")
        inc[k] += float(amount)
    carried = account.values * np.cumsum(inc / account.values)
    return path.wealth - carried[None, :]


# ---------------------------------------------------------------------------
# price-and-gain bookkeeping along paths


def gain_identity_gap(
    scenarios: ScenarioSet, funding: Sequence[Account], asset: int | None = None
) -> float:
    """Max gap between the two discrete forms of the financed price gain.

    Additive form: dK = dS + dDiv - S_k dB / B_k with the exact per-step
    account increment.  Multiplicative form: B_{k+1} d(S/B + cumulative
    discounted dividends).  The two are algebraically identical; the gap
    reports floating-point agreement.
    """
    idx = range(scenarios.prices.shape[2]) if asset is None else [asset]
    worst = 0.0
    for i in idx:
        acct = funding[i]
        s = scenarios.prices[:, :, i]
        div = scenarios.dividends[:, :, i]
        additive = s[:, 1:] - s[:, :-1] + div - s[:, :-1] * (acct.factors - 1.0)
        hat = s / acct.values
        hat_inc = hat[:, 1:] - hat[:, :-1] + div / acct.values[1:]
        multiplicative = acct.values[1:] * hat_inc
        worst = max(worst, float(np.max(np.abs(additive - multiplicative))))
    return worst
