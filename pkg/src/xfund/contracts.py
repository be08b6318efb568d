"""Bilateral contracts, collateral specifications, and margin interest.

A contract is an initial flow ``p`` (dated at the grid start) plus dated
flows strictly inside ``(t0, T]``.  Flow signs follow the hedger: positive
amounts are received.  The cumulative process ``A`` is the right-continuous
step function of those flows.

Collateral ``C`` is the hedger's margin balance, split as ``C = C^+ - C^-``
(received minus posted), with ``C_T = 0`` always: margin is returned at
maturity.  Margin interest is accrued with the left-point rule against exact
per-step account growth, so deterministic carry identities hold to rounding.
"""
from __future__ import annotations

import dataclasses
import enum
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError
from .market import Account, TimeGrid

FlowAmount = float | Callable[..., np.ndarray]


class MarginConvention(enum.Enum):
    """How posted/received collateral is held and reinvested."""

    RISKY_COLLATERAL = "risky_collateral"
    CASH_SEGREGATED = "cash_segregated"
    CASH_REHYPOTHECATED = "cash_rehypothecated"


@dataclasses.dataclass(frozen=True)
class Flow:
    time: float
    amount: FlowAmount

    def is_deterministic(self) -> bool:
        return not callable(self.amount)


@dataclasses.dataclass(frozen=True)
class Contract:
    """Initial flow ``p`` plus dated flows in ``(t0, T]``.

    Callable flow amounts are evaluated on the asset values at the flow date
    (one positional array per asset) and let terminal claims depend on the
    state; deterministic amounts are plain floats.
    """

    p: float = 0.0
    flows: tuple[Flow, ...] = ()
    label: str = "contract"

    @staticmethod
    def of(p: float = 0.0, flows: Sequence[tuple[float, FlowAmount]] = (), label: str = "contract") -> "Contract":
        return Contract(p=p, flows=tuple(Flow(t, a) for t, a in flows), label=label)

    @staticmethod
    def claim_at(T: float, amount: FlowAmount, p: float = 0.0, label: str = "claim") -> "Contract":
        return Contract(p=p, flows=(Flow(T, amount),), label=label)

    def is_deterministic(self) -> bool:
        return all(f.is_deterministic() for f in self.flows)


def flows_on_grid(contract: Contract, grid: TimeGrid) -> list[tuple[int, FlowAmount]]:
    """Snap each dated flow to its grid node.

    Flows must land strictly inside ``(t0, T]``: an amount at the grid start
    belongs in ``p``.  Deterministic flows sharing a node are merged.
    """
    det: dict[int, float] = {}
    rest: list[tuple[int, FlowAmount]] = []
    for f in contract.flows:
        k = grid.index_at(f.time)
        if k == 0:
            raise InvalidInputError(
                f"flow dated {f.time} lands on the grid start; initial amounts belong in p"
            )
        if f.is_deterministic():
            det[k] = det.get(k, 0.0) + float(f.amount)
        else:
            rest.append((k, f.amount))
    out: list[tuple[int, FlowAmount]] = [(k, det[k]) for k in sorted(det)]
    out.extend(rest)
    out.sort(key=lambda pair: pair[0])
    return out


def cumulative_process(contract: Contract, grid: TimeGrid) -> np.ndarray:
    """Right-continuous cumulative flow path A on the grid nodes.

    ``A[0] = p``; a flow dated t_k enters at index k and stays.  Only
    deterministic contracts have a path; callable flows raise.
    """
    if not contract.is_deterministic():
        raise InvalidInputError(
            f"contract {contract.label!r} has state-dependent flows; "
            "its cumulative process is not a deterministic path"
        )
    a = np.full(grid.n_steps + 1, contract.p)
    for k, amount in flows_on_grid(contract, grid):
        a[k:] += amount
    return a


def flow_increments(contract: Contract, grid: TimeGrid) -> np.ndarray:
    """Per-node flow amounts: index 0 holds p, index k the flow dated t_k."""
    if not contract.is_deterministic():
        raise InvalidInputError("flow_increments needs a deterministic contract")
    inc = np.zeros(grid.n_steps + 1)
    inc[0] = contract.p
    for k, amount in flows_on_grid(contract, grid):
        inc[k] += amount
    return inc


def split_collateral(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact decomposition C = C^+ - C^- with zero mapping to (0, 0)."""
    c = np.asarray(c, dtype=float)
    return np.maximum(c, 0.0), np.maximum(-c, 0.0)


def haircut_collateral(
    benchmark: np.ndarray, wealth: np.ndarray, delta1: float, delta2: float
) -> np.ndarray:
    """Collateral from the two-sided haircut rule.

    The shortfall of the hedger's wealth below the benchmark is covered at
    haircut ``delta1``; an excess is returned at ``delta2``:
    ``C = (1+delta1)(V0-V)^+ - (1+delta2)(V0-V)^-``.
    """
    if delta1 < 0 or delta2 < 0:
        raise InvalidInputError("haircuts must be nonnegative")
    gap = np.asarray(benchmark, dtype=float) - np.asarray(wealth, dtype=float)
    return (1.0 + delta1) * np.maximum(gap, 0.0) - (1.0 + delta2) * np.maximum(-gap, 0.0)


@dataclasses.dataclass(frozen=True)
class MarginAccounts:
    """Accounts the margin mechanics reference.

    posted_interest:    interest the hedger earns on posted collateral
    received_interest:  interest the hedger pays on received collateral
    posting_funding:    account funding the posted amount (segregated and
                        rehypothecated cash, and risky collateral purchases)
    reinvestment:       account where received collateral is reinvested
                        (segregated or risky conventions)
    """

    posted_interest: Account
    received_interest: Account
    posting_funding: Account | None = None
    reinvestment: Account | None = None


@dataclasses.dataclass(frozen=True)
class CollateralSpec:
    """Collateral process plus the convention it is held under.

    Exactly one of ``path`` (exogenous, array over nodes or callable of t)
    and ``haircut`` (endogenous two-sided rule) is set.  ``collateral_asset``
    names the scenario/lattice asset used as risky collateral when the
    convention requires one.
    """

    convention: MarginConvention | None = None
    path: np.ndarray | Callable[[float], float] | None = None
    haircut: tuple[float, float] | None = None
    accounts: MarginAccounts | None = None
    collateral_asset: int | None = None

    @staticmethod
    def none() -> "CollateralSpec":
        return CollateralSpec()

    @staticmethod
    def exogenous(
        path: np.ndarray | Callable[[float], float],
        convention: MarginConvention,
        accounts: MarginAccounts,
        collateral_asset: int | None = None,
    ) -> "CollateralSpec":
        return CollateralSpec(convention=convention, path=path, accounts=accounts,
                              collateral_asset=collateral_asset)

    @staticmethod
    def with_haircut(
        delta1: float,
        delta2: float,
        convention: MarginConvention,
        accounts: MarginAccounts,
    ) -> "CollateralSpec":
        if delta1 < 0 or delta2 < 0:
            raise InvalidInputError("haircuts must be nonnegative")
        return CollateralSpec(convention=convention, haircut=(delta1, delta2), accounts=accounts)

    @property
    def is_collateralized(self) -> bool:
        return self.convention is not None

    def sample_path(self, grid: TimeGrid) -> np.ndarray:
        """Node samples of an exogenous collateral path, C_T = 0 enforced."""
        if self.path is None:
            if not self.is_collateralized:
                return np.zeros(grid.n_steps + 1)
            raise InvalidInputError("collateral has no exogenous path (haircut rule is endogenous)")
        if callable(self.path):
            c = np.array([float(self.path(t)) for t in grid.times], dtype=float)
        else:
            c = np.asarray(self.path, dtype=float).copy()
            if c.shape != (grid.n_steps + 1,):
                raise InvalidInputError(
                    f"collateral path must have shape ({grid.n_steps + 1},), got {c.shape}"
                )
        scale = max(1.0, float(np.max(np.abs(c))))
        if abs(float(c[-1])) > 1e-12 * scale:
            raise InvalidInputError(
                f"collateral must be returned at maturity: C_T = {c[-1]}, expected 0"
            )
        c[-1] = 0.0
        return c


@dataclasses.dataclass(frozen=True)
class MarginInterest:
    """Cumulative margin carry and its per-step increments.

    ``posted_received`` is the two-way interest on the margin balance alone;
    ``total`` adds the convention's funding and reinvestment legs and is the
    carry that enters valuation.  ``intermediate`` is the risky convention's
    reinvestment-only subtotal (None otherwise).
    """

    posted_received: np.ndarray
    total: np.ndarray
    posted_received_increments: np.ndarray
    total_increments: np.ndarray
    intermediate: np.ndarray | None = None


def _accrue(values: np.ndarray, account: Account) -> np.ndarray:
    # left-point balance against exact per-step account growth
    return values[..., :-1] * (account.factors - 1.0)


def margin_interest(
    collateral: np.ndarray,
    spec: CollateralSpec,
    cash: Account,
) -> MarginInterest:
    """Margin carry for a collateral path under a margin convention.

    The base leg is ``F^c = int C^- r_posted - int C^+ r_received``.  On top
    of it:

    * risky collateral: received margin is reinvested in the collateral
      asset's repo (``+ int C^+ r_reinvest``) and, in the full variant used
      for valuation, the posted leg's cash drag ``- int C^- r_cash`` is
      charged;
    * segregated cash: ``+ int C^+ r_reinvest - int C^- r_posting``;
    * rehypothecated cash: received margin is usable cash
      (``+ int C^+ r_cash``) while posting is funded at
      ``- int C^- r_posting``.

    All integrals are left-point sums against exact account growth factors.
    """
    c = np.asarray(collateral, dtype=float)
    if c.shape[-1] != cash.grid.n_steps + 1:
        raise InvalidInputError("collateral path does not match the grid")
    if not spec.is_collateralized:
        z = np.zeros_like(c)
        return MarginInterest(z, z, z[..., 1:], z[..., 1:])
    acc = spec.accounts
    if acc is None:
        raise InvalidInputError("collateralized spec needs margin accounts")
    cp, cm = split_collateral(c)

    base_inc = _accrue(cm, acc.posted_interest) - _accrue(cp, acc.received_interest)
    conv = spec.convention
    inter = None
    if conv is MarginConvention.RISKY_COLLATERAL:
        if acc.reinvestment is None:
            raise InvalidInputError("risky collateral needs a reinvestment account")
        inter_inc = base_inc + _accrue(cp, acc.reinvestment)
        total_inc = inter_inc - _accrue(cm, cash)
        inter = np.concatenate([np.zeros_like(c[..., :1]), np.cumsum(inter_inc, axis=-1)], axis=-1)
    elif conv is MarginConvention.CASH_SEGREGATED:
        if acc.reinvestment is None or acc.posting_funding is None:
            raise InvalidInputError("segregated cash needs reinvestment and posting accounts")
        total_inc = base_inc + _accrue(cp, acc.reinvestment) - _accrue(cm, acc.posting_funding)
    elif conv is MarginConvention.CASH_REHYPOTHECATED:
        if acc.posting_funding is None:
            raise InvalidInputError("rehypothecated cash needs a posting account")
        total_inc = base_inc + _accrue(cp, cash) - _accrue(cm, acc.posting_funding)
    else:  # pragma: no cover
        raise InvalidInputError(f"unknown margin convention {conv}")

    zeros = np.zeros_like(c[..., :1])
    base = np.concatenate([zeros, np.cumsum(base_inc, axis=-1)], axis=-1)
    total = np.concatenate([zeros, np.cumsum(total_inc, axis=-1)], axis=-1)
    return MarginInterest(base, total, base_inc, total_inc, intermediate=inter)


def margin_step_increment(
    spec: CollateralSpec, c_left: np.ndarray, k: int, cash: Account
) -> np.ndarray:
    """One-step margin carry from the left-point collateral balance.

    Same formulas as margin_interest, evaluated for a single interval; used
    when the collateral balance is only known as the path evolves.
    """
    acc = spec.accounts
    if acc is None:
        raise InvalidInputError("collateralized spec needs margin accounts")
    cp, cm = split_collateral(np.asarray(c_left, dtype=float))
    base = cm * (acc.posted_interest.factors[k] - 1.0)
    base -= cp * (acc.received_interest.factors[k] - 1.0)
    conv = spec.convention
    if conv is MarginConvention.RISKY_COLLATERAL:
        if acc.reinvestment is None:
            raise InvalidInputError("risky collateral needs a reinvestment account")
        return base + cp * (acc.reinvestment.factors[k] - 1.0) - cm * (cash.factors[k] - 1.0)
    if conv is MarginConvention.CASH_SEGREGATED:
        if acc.reinvestment is None or acc.posting_funding is None:
            raise InvalidInputError("segregated cash needs reinvestment and posting accounts")
        return base + cp * (acc.reinvestment.factors[k] - 1.0) - cm * (acc.posting_funding.factors[k] - 1.0)
    if conv is MarginConvention.CASH_REHYPOTHECATED:
        if acc.posting_funding is None:
            raise InvalidInputError("rehypothecated cash needs a posting account")
        return base + cp * (cash.factors[k] - 1.0) - cm * (acc.posting_funding.factors[k] - 1.0)
    raise InvalidInputError(f"unknown margin convention {conv}")


def rehypo_base_interest(
    collateral: np.ndarray, posted: Account, received: Account
) -> np.ndarray:
    """Per-step increments of the margin-balance interest alone.

    This is the carry that joins the contract flows and the collateral
    transfers in the netting-style cash-flow stream ``A + C + F^c`` used by
    the nonlinear solver.
    """
    cp, cm = split_collateral(np.asarray(collateral, dtype=float))
    return _accrue(cm, posted) - _accrue(cp, received)
