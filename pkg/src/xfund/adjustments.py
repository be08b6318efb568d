"""Funding-cost comparisons between hedging strategies.

Two wealth evolutions of the same claim can differ in value purely because
their positions are financed differently.  This module isolates that effect:
each comparison subtracts the cumulative funding legs of two
:class:`~xfund.wealth.WealthPath` records node by node, tagged by what is
being compared (total, same-contract, cross-contract).

It also builds the canonical demonstration that funding costs are visible
even when a position is worthless: a three-asset market with one redundant
asset supports a strategy whose wealth is identically zero yet whose trading
gains and funding legs both grow like the rate integral, with opposite
signs.  Augmenting any hedge by that strategy changes its funding account by
exactly ``int r du`` while leaving wealth untouched.
"""

from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

from .contracts import Contract
from .errors import InvalidInputError
from .market import Account, AssetModel, RateLike, ScenarioSet, TimeGrid, build_account
from .wealth import Basic, Strategy, WealthPath, evolve_wealth

__all__ = [
    "AdjustmentReport",
    "RedundancyExample",
    "contract_funding_adjustment",
    "partial_funding_adjustment",
    "redundancy_example",
    "total_funding_adjustment",
]


# ---------------------------------------------------------------------------
# funding adjustments


@dataclasses.dataclass(frozen=True)
class AdjustmentReport:
    """Pathwise difference of two cumulative funding legs.

    ``values[:, k]`` is ``F^(1) - F^(2)`` at node k, so a positive terminal
    value means the first evolution paid less for its financing (funding
    legs are signed as wealth contributions).  ``kind`` records which
    comparison produced the report: ``"TFA"`` for an unrestricted pair,
    ``"PFA"`` when both paths trade the same flow stream, ``"CFA"`` across
    contracts.

    ``decomposition_caveat`` stays True as a warning that these reports do
    not split additively: routing a total comparison through an intermediate
    mixed strategy fails in general because the intermediate is not
    self-financing.

    When both paths finance every position from one shared account, the
    funding difference must equal the net cash balances rolled against the
    account increments, ``sum_k (psi_1 - psi_2)(B_{k+1} - B_k)``;
    ``cash_position_gap`` is the worst deviation from that identity, or None
    when the paths do not share a single account.
    """

    kind: str
    grid: TimeGrid
    values: np.ndarray
    inputs: tuple[WealthPath, WealthPath]
    decomposition_caveat: bool = True
    cash_position_gap: float | None = None

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]


def _single_account_values(path: WealthPath) -> np.ndarray | None:
    accounts = list(path.position_accounts.values())
    if not accounts:
        return None
    base = accounts[0].values
    for acct in accounts[1:]:
        if not np.array_equal(acct.values, base):
            return None
    return base


def _net_cash_positions(path: WealthPath) -> np.ndarray:
    # position rows book the wealth state and the financed asset legs
    # separately; on a single account their sum is the net cash holding.
    total = np.zeros((path.n_paths, path.grid.n_steps))
    for pos in path.positions.values():
        total = total + pos
    return total


def _cash_position_gap(
    path1: WealthPath, path2: WealthPath, values: np.ndarray
) -> float | None:
    if path1.collateral is not None or path2.collateral is not None:
        return None
    b1 = _single_account_values(path1)
    b2 = _single_account_values(path2)
    if b1 is None or b2 is None or not np.array_equal(b1, b2):
        return None
    psi = _net_cash_positions(path1) - _net_cash_positions(path2)
    rolled = np.cumsum(psi * (b1[1:] - b1[:-1]), axis=1)
    ladder = np.concatenate([np.zeros((psi.shape[0], 1)), rolled], axis=1)
    return float(np.max(np.abs(values - ladder)))


def total_funding_adjustment(path1: WealthPath, path2: WealthPath) -> AdjustmentReport:
    """Cumulative funding difference ``F^(1) - F^(2)`` of two evolutions.

    Both paths must live on one grid and one scenario batch; nothing else is
    assumed, so the report compares financing across contracts, strategies
    and funding conventions alike.
    """
    if not path1.grid.same_as(path2.grid):
        raise InvalidInputError("funding comparison needs one shared time grid")
    if path1.funding.shape != path2.funding.shape:
        raise InvalidInputError(
            f"path counts differ: {path1.funding.shape[0]} vs {path2.funding.shape[0]}"
        )
    values = path1.funding - path2.funding
    gap = _cash_position_gap(path1, path2, values)
    return AdjustmentReport(
        kind="TFA", grid=path1.grid, values=values, inputs=(path1, path2),
        cash_position_gap=gap,
    )


def partial_funding_adjustment(path1: WealthPath, path2: WealthPath) -> AdjustmentReport:
    """Funding difference of two hedges of the *same* flow stream.

    Requires the recorded contract flows to agree pathwise; comparing a
    contract against a different one is a cross-contract comparison and
    belongs in :func:`contract_funding_adjustment`.  For identical inputs
    the report is identically zero.
    """
    report = total_funding_adjustment(path1, path2)
    scale = 1.0 + float(np.max(np.abs(path1.flows)))
    if float(np.max(np.abs(path1.flows - path2.flows))) > 1e-9 * scale:
        raise InvalidInputError(
            "flow streams differ; a pure funding comparison needs one contract "
            "(use contract_funding_adjustment across contracts)"
        )
    return dataclasses.replace(report, kind="PFA")


def contract_funding_adjustment(path1: WealthPath, path2: WealthPath) -> AdjustmentReport:
    """Funding difference across two contracts.

    Same computation as :func:`total_funding_adjustment` with the comparison
    understood across flow streams (for example a claim against its
    redundancy-augmented twin).  Only the funding legs enter the values; the
    flow difference itself stays visible on the input paths.
    """
    report = total_funding_adjustment(path1, path2)
    return dataclasses.replace(report, kind="CFA")


# ---------------------------------------------------------------------------
# the redundant-asset example


@dataclasses.dataclass(frozen=True)
class RedundancyExample:
    """A zero-wealth strategy with nonzero gains and funding legs.

    ``path`` evolves holdings ``(1/S1, 1/S2, -1/S3)`` from zero endowment in
    a market where the third asset's per-step return is built from the first
    two, so the position is worth nothing at every node.  Its trading gains
    nevertheless accumulate to ``rate_integral`` and its funding leg to the
    negative of it.  Adding ``strategy`` to any hedge on ``scenarios``
    shifts the hedge's funding leg by ``-rate_integral`` without moving its
    wealth.
    """

    cash: Account
    scenarios: ScenarioSet
    strategy: Strategy
    path: WealthPath
    rate_integral: np.ndarray

    @property
    def gains_target(self) -> np.ndarray:
        return self.rate_integral

    @property
    def funding_target(self) -> np.ndarray:
        return -self.rate_integral


def _binomial_paths(
    rng: np.random.Generator,
    spot: float,
    sigma: float,
    drift: float,
    grid: TimeGrid,
    n_paths: int,
) -> tuple[np.ndarray, np.ndarray]:
    dt = grid.dt
    if sigma <= 0:
        raise InvalidInputError("example assets need positive volatility")
    u = float(np.exp(sigma * np.sqrt(dt)))
    d = 1.0 / u
    p_up = (np.exp(drift * dt) - d) / (u - d)
    if not 0.0 < p_up < 1.0:
        raise InvalidInputError(
            f"drift {drift} is outside the binomial band for sigma={sigma}; refine the grid"
        )
    up = rng.random((n_paths, grid.n_steps)) < p_up
    factors = np.where(up, u, d)
    prices = np.empty((n_paths, grid.n_steps + 1))
    prices[:, 0] = spot
    np.cumprod(factors, axis=1, out=prices[:, 1:])
    prices[:, 1:] *= spot
    return prices, factors


def redundancy_example(
    rate: RateLike,
    grid: TimeGrid,
    *,
    drifts: Sequence[float | None] = (0.08, 0.05, None),
    sigmas: Sequence[float] = (1.0, 1.0),
    spots: Sequence[float] = (1.0, 1.0, 1.0),
    n_paths: int = 64,
    seed: int = 7,
) -> RedundancyExample:
    """Build the three-asset redundancy demonstration.

    The first two assets follow independent binomial dynamics with the given
    drifts and volatilities.  The third asset's per-step growth factor is
    defined as ``R1 + R2 - F_B`` (F_B the cash factor), which makes the
    noise in the holdings ``(1/S1, 1/S2, -1/S3)`` cancel step by step: the
    position is worth ``1 + 1 - 1 = 1`` unit of nothing, costs nothing, and
    earns exactly the cash rate on one unit of notional per step.

    ``drifts[2]`` may be None (derived) or explicit, in which case it must
    equal ``drifts[0] + drifts[1] - rate``; any other value makes the third
    asset mispriced against its replica and the market admits arbitrage.

    The cash account accrues simply, ``B_{k+1} = B_k (1 + r_k dt)``, so the
    reported legs match the rate integral without a compounding remainder.
    """
    if len(drifts) != 3 or len(sigmas) != 2 or len(spots) != 3:
        raise InvalidInputError("example needs 3 drifts, 2 sigmas, 3 spots")
    if n_paths <= 0:
        raise InvalidInputError("n_paths must be positive")

    base = build_account(rate, grid, label="B")
    r_steps = base.rates
    dt = grid.dt
    if np.any(1.0 + r_steps * dt <= 0.0):
        raise InvalidInputError("rate too negative: simple accrual factor must stay positive")
    cash = Account("B", grid, np.log1p(r_steps * dt) / dt)

    m1, m2 = float(drifts[0]), float(drifts[1])
    implied = m1 + m2 - r_steps
    if drifts[2] is not None:
        m3 = float(drifts[2])
        if float(np.max(np.abs(m3 - implied))) > 1e-12:
            raise InvalidInputError(
                "drift condition fails: the third asset duplicates a portfolio of the "
                "first two, so its drift must be mu1 + mu2 - r"
            )
    rng = np.random.default_rng(seed)
    prices1, fac1 = _binomial_paths(rng, float(spots[0]), float(sigmas[0]), m1, grid, n_paths)
    prices2, fac2 = _binomial_paths(rng, float(spots[1]), float(sigmas[1]), m2, grid, n_paths)

    fac3 = fac1 + fac2 - cash.factors[None, :]
    if np.any(fac3 <= 0.0):
        raise InvalidInputError("third-asset factors hit zero; refine the grid or lower sigma")
    prices3 = np.empty((n_paths, grid.n_steps + 1))
    prices3[:, 0] = float(spots[2])
    np.cumprod(fac3, axis=1, out=prices3[:, 1:])
    prices3[:, 1:] *= float(spots[2])

    assets = (
        AssetModel(0, float(spots[0]), float(sigmas[0]), cash, drift=m1, label="S1"),
        AssetModel(1, float(spots[1]), float(sigmas[1]), cash, drift=m2, label="S2"),
        AssetModel(
            2, float(spots[2]), float(np.hypot(sigmas[0], sigmas[1])), cash,
            drift=float(np.mean(implied)), label="S3",
        ),
    )
    scenarios = ScenarioSet.from_paths(
        grid, assets, np.stack([prices1, prices2, prices3], axis=2)
    )

    def null_position(k: int, prices_k: np.ndarray) -> np.ndarray:
        return np.stack(
            [1.0 / prices_k[:, 0], 1.0 / prices_k[:, 1], -1.0 / prices_k[:, 2]],
            axis=1,
        )

    path = evolve_wealth(Basic(cash), null_position, Contract(label="null"), 0.0, scenarios)
    rate_integral = np.concatenate([[0.0], np.cumsum(r_steps * dt)])
    return RedundancyExample(
        cash=cash, scenarios=scenarios, strategy=null_position, path=path,
        rate_integral=rate_integral,
    )
