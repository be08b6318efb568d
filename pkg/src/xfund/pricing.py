"""Lattice valuation when the wealth dynamics are linear in the positions.

With one cash rate for lending and borrowing, hedged wealth is affine in the
strategy and prices reduce to conditional expectations: the value of a
contract is minus the expected remaining flow stream, discounted, under the
branching measure that grows each asset at its own funding rate.  This module
implements that backward induction, the fully collateralized variant (same
measure, discounting at the collateral rate), and a discounting-change
transform that revalues the same claim against an arbitrary auxiliary account
with a compensating carry term.

Flows are signed as received by the hedger, so a terminal liability prices
positively: the hedger charges for taking it on.
"""
from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np

from .contracts import (
    CollateralSpec,
    Contract,
    FlowAmount,
    MarginConvention,
    flows_on_grid,
    margin_interest,
    split_collateral,
)
from .errors import EngineInvariantError, InvalidInputError
from .market import Account, Lattice, LatticeProcessCheck
from .wealth import Basic, WealthPath


@dataclasses.dataclass(frozen=True)
class PricePath:
    """Ex-dividend contract values on lattice nodes.

    ``levels[k]`` is the node tensor of the price at level k; the terminal
    level is identically zero because the last flow has just been paid.
    ``xi_levels[k]`` (single-asset lattices only) holds the replicating
    position carried over ``[t_k, t_{k+1})`` per node.  ``stream_levels``
    keeps the per-node flow amounts the valuation consumed, keyed by the node
    index they are paid at; entry ``n_steps`` is the terminal claim.

    Nonlinear valuations attach ``diagnostics`` (named residuals from
    independent recomputations of the same value) and, when the valuation
    determines a margin balance, ``collateral_levels``.
    """

    lattice: Lattice
    discount: Account
    levels: list[np.ndarray]
    xi_levels: list[np.ndarray] | None
    stream_levels: dict[int, np.ndarray | float]
    method: str = "linear"
    diagnostics: dict[str, float] = dataclasses.field(default_factory=dict)
    collateral_levels: list[np.ndarray | float] | None = None

    def __post_init__(self) -> None:
        term = np.asarray(self.levels[-1], dtype=float)
        if term.size and float(np.max(np.abs(term))) != 0.0:
            raise EngineInvariantError("terminal ex-dividend price must be zero")

    @property
    def initial(self) -> float:
        return float(np.ravel(self.levels[0])[0])

    def value(self, k: int) -> np.ndarray:
        return self.levels[k]

    def terminal_claim(self) -> np.ndarray | float:
        return self.stream_levels.get(self.lattice.n_steps, 0.0)


def _require_funding_calibration(lattice: Lattice, where: str) -> None:
    if lattice.discount is not None:
        raise InvalidInputError(
            f"{where}: lattice was calibrated against {lattice.discount.label!r}; "
            "pricing expects each asset to grow at its own funding rate "
            "(calibrate with discount=None)"
        )


def flow_level_tensors(contract: Contract, lattice: Lattice) -> dict[int, np.ndarray | float]:
    """Flow amounts per node index.  The initial flow p is excluded: it is
    settled at inception and ex-dividend prices only see what remains."""
    out: dict[int, np.ndarray | float] = {}
    d = lattice.n_assets
    for k, amount in flows_on_grid(contract, lattice.grid):
        if callable(amount):
            val: np.ndarray | float = np.broadcast_to(
                np.asarray(amount(*lattice.level_grid(k)), dtype=float), (k + 1,) * d
            ).astype(float)
        else:
            val = float(amount)
        out[k] = out.get(k, 0.0) + val
    return out


def _assemble_stream(
    contract: Contract,
    lattice: Lattice,
    cash: Account,
    collateral: CollateralSpec | None,
) -> dict[int, np.ndarray | float]:
    stream = flow_level_tensors(contract, lattice)
    spec = collateral if collateral is not None else CollateralSpec.none()
    if not spec.is_collateralized:
        return stream
    if spec.haircut is not None:
        raise InvalidInputError(
            "haircut collateral depends on the hedger's own value process; "
            "use the nonlinear solver"
        )
    c = spec.sample_path(lattice.grid)
    inc = margin_interest(c, spec, cash).total_increments
    if spec.convention is MarginConvention.RISKY_COLLATERAL:
        # the posted-collateral asset leg carries the gap between the
        # collateral asset's funding rate and the cash rate charged for it
        j = spec.collateral_asset
        if j is None or not 0 <= j < lattice.n_assets:
            raise InvalidInputError("risky collateral needs a lattice collateral_asset")
        _, cm = split_collateral(c)
        fj = lattice.calibration_account(j).factors
        inc = inc + cm[:-1] * (fj - cash.factors)
    for k in range(lattice.n_steps):
        if inc[k] != 0.0:
            stream[k + 1] = stream.get(k + 1, 0.0) + float(inc[k])
    return stream


def _backward_levels(
    lattice: Lattice,
    discount: Account,
    stream: dict[int, np.ndarray | float],
    extract_xi: bool,
) -> tuple[list[np.ndarray], list[np.ndarray] | None]:
    n, d = lattice.n_steps, lattice.n_assets
    bv = discount.values
    want_xi = extract_xi and d == 1

    s = np.zeros((n + 1,) * d)
    levels: list[np.ndarray] = [np.zeros((n + 1,) * d)]
    xi_rev: list[np.ndarray] = []
    for k in range(n - 1, -1, -1):
        da = np.asarray(stream.get(k + 1, 0.0), dtype=float)
        child = s + da / bv[k + 1]
        if want_xi:
            # the hedge covers the branch spread of the cum-flow value
            g = -bv[k + 1] * s - np.broadcast_to(da, (k + 2,))
            s1 = lattice.level_prices(k + 1, 0)
            xi_rev.append((g[1:] - g[:-1]) / (s1[1:] - s1[:-1]))
        s = lattice.expect(child, k)
        levels.append(-bv[k] * s)
    levels.reverse()
    xi_rev.reverse()
    return levels, (xi_rev if want_xi else None)


def price_linear(
    contract: Contract,
    lattice: Lattice,
    cash: Account,
    collateral: CollateralSpec | None = None,
    extract_xi: bool = True,
) -> PricePath:
    """Value a contract by backward induction on the funding-rate measure.

    The flow stream is the contract's dated flows plus the margin carry of an
    exogenous collateral agreement; each amount paid at node k+1 is divided
    by the cash account value there, summed, and the conditional expectation
    rolled back one level at a time:

        s_k = E_q[ s_{k+1} + dA_{k+1} / B_{k+1} ],   S_k = -B_k s_k.

    On single-asset lattices the replicating position is read off the branch
    spread of the cum-flow continuation value.  Requires the lattice to be
    calibrated per-asset (``discount=None``): those branching probabilities
    are the pricing measure.
    """
    _require_funding_calibration(lattice, "price_linear")
    if not cash.grid.same_as(lattice.grid):
        raise InvalidInputError("cash account grid differs from lattice grid")
    stream = _assemble_stream(contract, lattice, cash, collateral)
    levels, xi = _backward_levels(lattice, cash, stream, extract_xi)
    return PricePath(lattice, cash, levels, xi, stream, method="linear")


def price_fully_collateralized(
    claim: FlowAmount,
    lattice: Lattice,
    collateral_account: Account,
    extract_xi: bool = True,
) -> PricePath:
    """Value a terminal claim whose margin account tracks its full value.

    Every funding flow of the hedge then nets against the margin balance and
    wealth accrues at the collateral rate, so the claim is discounted by the
    collateral account while the branching measure stays the per-asset
    funding measure.  The collateral account need not be traded.
    """
    _require_funding_calibration(lattice, "price_fully_collateralized")
    if not collateral_account.grid.same_as(lattice.grid):
        raise InvalidInputError("collateral account grid differs from lattice grid")
    n = lattice.n_steps
    x: np.ndarray | float = lattice.terminal_tensor(claim) if callable(claim) else float(claim)
    stream: dict[int, np.ndarray | float] = {n: x}
    levels, xi = _backward_levels(lattice, collateral_account, stream, extract_xi)
    return PricePath(lattice, collateral_account, levels, xi, stream,
                     method="fully_collateralized")


def linear_convention(lattice: Lattice, cash: Account) -> Basic:
    """Wealth-engine convention matching the linear pricer: one cash account,
    every asset funded from its calibration account."""
    fund = tuple(lattice.calibration_account(i) for i in range(lattice.n_assets))
    return Basic(cash=cash, asset_funding=fund, label="linear")


# --- discounting change -----------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class GammaPath:
    """A wealth path revalued against an auxiliary discounting account.

    ``values`` is the original wealth plus the accrued carry adjustment;
    ``adjustment`` is the running carry integral itself (in units of the
    auxiliary account).
    """

    gamma: Account
    values: np.ndarray
    adjustment: np.ndarray


def _single_cash_account(path: WealthPath) -> Account:
    accounts = list(path.position_accounts.values())
    cash = path.position_accounts.get("cash")
    if cash is None or not accounts:
        raise InvalidInputError(
            "discounting change needs a wealth path with a single cash account"
        )
    for acc in accounts:
        if not np.array_equal(acc.rates, cash.rates):
            raise InvalidInputError(
                "discounting change needs equal funding rates on every position; "
                f"account {acc.label!r} differs from {cash.label!r}"
            )
    return cash


def gamma_transform(path: WealthPath, gamma: Account, rule: str = "exact") -> GammaPath:
    """Attach the carry adjustment that makes wealth a martingale after
    discounting by ``gamma``.

    The cash balance psi0 B = V - sum_i xi^i S^i earns the wealth account's
    rate but is discounted by ``gamma``; the adjustment accrues the gap.
    ``rule="left"`` uses the left-point rate quadrature (gamma_k - r_k) dt;
    ``rule="exact"`` uses the grown-factor gap, which telescopes so that a
    pure cash position revalues to the auxiliary account exactly.
    """
    cash = _single_cash_account(path)
    grid = path.grid
    if not gamma.grid.same_as(grid):
        raise InvalidInputError("auxiliary account grid differs from the path grid")
    if rule not in ("exact", "left"):
        raise InvalidInputError(f"unknown quadrature rule {rule!r}")
    n = grid.n_steps
    held = np.einsum("pki,pki->pk", path.xi, path.scenarios.prices[:, :-1, :])
    psi0b = path.wealth[:, :-1] - held
    if rule == "exact":
        weight = (gamma.factors - cash.factors) / gamma.values[1:]
    else:
        weight = (gamma.rates - cash.rates) * np.diff(grid.times) / gamma.values[:-1]
    adj = np.concatenate(
        [np.zeros((psi0b.shape[0], 1)), np.cumsum(psi0b * weight, axis=1)], axis=1
    )
    return GammaPath(gamma=gamma, values=path.wealth + gamma.values * adj, adjustment=adj)


def _gamma_ingredients(
    base: PricePath, gamma: Account, cash: Account
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Claim-value levels (terminal level is the pre-flow wealth -X) and the
    per-level carry compensators of the discounted value process."""
    lattice = base.lattice
    n = lattice.n_steps
    if lattice.n_assets != 1:
        raise InvalidInputError("discounting change extracts psi0 from a single-asset hedge")
    if base.xi_levels is None:
        raise InvalidInputError("price path carries no replicating positions")
    if not np.array_equal(lattice.calibration_account(0).rates, cash.rates):
        raise InvalidInputError(
            "discounting change needs the asset funded at the cash rate"
        )
    claim = np.broadcast_to(np.asarray(base.terminal_claim(), dtype=float), (n + 1,))
    values = [base.levels[k] for k in range(n)] + [-claim]
    comp = []
    for k in range(n):
        psi0b = base.levels[k] - base.xi_levels[k] * lattice.level_prices(k, 0)
        comp.append(psi0b * (gamma.factors[k] - cash.factors[k]) / gamma.values[k + 1])
    return values, comp


def gamma_measure_price(
    claim: FlowAmount,
    gamma: Account,
    lattice: Lattice,
    cash: Account,
    base: PricePath | None = None,
) -> PricePath:
    """Revalue a terminal claim under the measure that grows assets at the
    auxiliary account's rate.

    The auxiliary account is not traded, so the plain discounted expectation
    is off by the funding gap on the hedge's cash balance; adding that carry
    back per step reproduces the direct price node for node:

        h_k = E_q_gamma[ h_{k+1} ] + psi0_k B_k (f_gamma_k - f_k) / B_gamma_{k+1}

    with h at maturity the claim value over the auxiliary account.  The cash
    balance comes from the direct valuation's replicating positions (``base``,
    recomputed when not supplied).  Infeasible branching probabilities for
    the auxiliary measure raise a calibration error naming the step.
    """
    _require_funding_calibration(lattice, "gamma_measure_price")
    if not gamma.grid.same_as(lattice.grid):
        raise InvalidInputError("auxiliary account grid differs from lattice grid")
    if base is None:
        base = price_linear(
            Contract.claim_at(lattice.grid.T, claim, label="claim"), lattice, cash
        )
    q_gamma = lattice.measure_for(gamma)
    values, comp = _gamma_ingredients(base, gamma, cash)
    n = lattice.n_steps
    h = values[n] / gamma.values[n]
    levels = [np.zeros(n + 1)]
    for k in range(n - 1, -1, -1):
        h = lattice.expect(h, k, q=q_gamma) + comp[k]
        levels.append(gamma.values[k] * h)
    levels.reverse()
    return PricePath(lattice, gamma, levels, base.xi_levels, base.stream_levels,
                     method="gamma")


def gamma_value_check(
    base: PricePath, gamma: Account, cash: Account
) -> LatticeProcessCheck:
    """Drift check of the replication value, discounted by the auxiliary
    account, under the auxiliary measure.

    The per-step carry compensator offsets the funding gap on the hedge's
    cash balance; residuals are zero up to rounding when the price path
    replicates.
    """
    lattice = base.lattice
    q_gamma = lattice.measure_for(gamma)
    values, comp = _gamma_ingredients(base, gamma, cash)
    levels = [values[k] / gamma.values[k] for k in range(lattice.n_steps + 1)]
    return LatticeProcessCheck(
        lattice, levels, q=q_gamma, compensator=comp, name="Vbar_gamma"
    )
