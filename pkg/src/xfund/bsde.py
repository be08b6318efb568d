"""Backward lattice solves for wealth dynamics that are nonlinear in the hedge.

Two one-step maps drive everything here.  Under split lending/borrowing cash
rates with per-asset financing of long positions and short proceeds netted
into cash, the carry of a portfolio is piecewise linear in its cash balance.
Under a single cash rate with a margin balance that tracks the portfolio's
own mark-to-market through two-sided haircuts, the carry is piecewise linear
in the value itself.  Both maps are inverted exactly per step, so a forward
rerun of the wealth engine with the extracted hedge closes to rounding, not
to first order in the step size.

State travels discounted: Y = V / B_ref, where B_ref is the account the
conditional expectations are taken against (the lending or borrowing account
for the split-rate map, the cash account for the haircut map).  Hedges Z are
asset unit counts.  Flows follow the package convention: amounts are signed
as received by the hedger and keyed by the node they land on, and the
terminal state handed to the solver is the post-flow wealth.
"""
from __future__ import annotations

import dataclasses
import itertools
from typing import Callable, Sequence

import numpy as np

from . import _backend
from .contracts import (
    CollateralSpec,
    Contract,
    MarginAccounts,
    MarginConvention,
    haircut_collateral,
    rehypo_base_interest,
)
from .errors import ConvergenceError, InvalidInputError, NumericsError
from .market import (
    Account,
    Lattice,
    LatticeProcessCheck,
    ScenarioSet,
    lattice_scenarios,
    sample_lattice_paths,
)
from .pricing import PricePath, _require_funding_calibration, flow_level_tensors
from .wealth import Basic, FundingConvention, PartialNetting, Strategy, evolve_wealth

__all__ = [
    "BSDESolution",
    "CustomDriver",
    "Driver",
    "EndogenousCollateral",
    "PartialNettingBorrow",
    "PartialNettingLend",
    "RegressionSolution",
    "eval_driver_fb",
    "eval_driver_fl",
    "netting_stream",
    "node_strategy",
    "price_endogenous_collateral",
    "price_partial_netting",
    "solve_bsde",
    "solve_bsde_mc",
    "verify_replication",
]

# ---------------------------------------------------------------------------
# pointwise drivers


def _rate_at(rate: float | Account, t: float) -> float:
    """Instantaneous rate at time t; accounts use their step's rate."""
    if isinstance(rate, Account):
        g = rate.grid
        k = int(np.floor((t - g.t0) / g.dt + 1e-12))
        return float(rate.rates[min(max(k, 0), g.n_steps - 1)])
    return float(rate)


def _rate_vector(rates, t: float, d: int) -> np.ndarray:
    if isinstance(rates, (Account, float, int)):
        return np.full(d, _rate_at(rates, t))
    seq = list(rates)
    if len(seq) != d:
        raise InvalidInputError(f"{len(seq)} asset financing rates for {d} assets")
    return np.array([_rate_at(r, t) for r in seq])


def _split_rate_drift(t, wealth, hedge_values, lend, borrow, asset_borrow, r_total):
    x = np.asarray(wealth, dtype=float)
    sv = np.asarray(hedge_values, dtype=float)
    if sv.ndim == 0:
        sv = sv[None]
    rl = _rate_at(lend, t)
    rb = _rate_at(borrow, t)
    rib = _rate_vector(asset_borrow, t, sv.shape[-1])
    pos = np.maximum(sv, 0.0)
    neg = np.maximum(-sv, 0.0)
    w = x + neg.sum(axis=-1)
    out = (
        r_total * sv.sum(axis=-1)
        - (rib * pos).sum(axis=-1)
        + rl * np.maximum(w, 0.0)
        - rb * np.maximum(-w, 0.0)
    )
    return float(out) if out.ndim == 0 else out

def eval_driver_fl(t, wealth, hedge_values, lend, borrow, asset_borrow):
    """Wealth drift under split cash rates, written against the lending rate.

    ``wealth`` is the portfolio value, ``hedge_values`` the money positions
    held in each asset (last axis indexes assets; both may carry leading
    batch axes).  Short proceeds are netted into cash before the balance is
    split between lending at ``lend`` and borrowing at ``borrow``; long
    positions are financed at their ``asset_borrow`` rate.  Rates may be
    floats or accounts (read at their step containing t).  With every rate
    equal to r this collapses to r * wealth.
    """
    rl = _rate_at(lend, t)
    return _split_rate_drift(t, wealth, hedge_values, lend, borrow, asset_borrow, rl)


def eval_driver_fb(t, wealth, hedge_values, lend, borrow, asset_borrow):
    """Same drift as :func:`eval_driver_fl` rearranged against the borrowing
    rate: the hedge carry term accrues at ``borrow`` instead of ``lend``.
    Both forms price the same dynamics; they differ only in which account
    the comparison wealth grows at."""
    rb = _rate_at(borrow, t)
    return _split_rate_drift(t, wealth, hedge_values, lend, borrow, asset_borrow, rb)


# ---------------------------------------------------------------------------
# driver variants


def _check_same_grid(anchor: Account, others: Sequence[Account], who: str) -> None:
    for acct in others:
        if not acct.grid.same_as(anchor.grid):
            raise InvalidInputError(f"{who}: accounts live on different grids")


@dataclasses.dataclass(frozen=True)
class PartialNettingLend:
    """Split-rate wealth dynamics solved against the lending account.

    The node equation prices the borrow/lend spread on the netted cash
    balance and the financing spread on long positions with exact per-step
    compounding; with all rates equal every correction vanishes and the
    solve reduces to plain discounted expectation.
    """

    lend: Account
    borrow: Account
    asset_borrow: tuple[Account, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "asset_borrow", tuple(self.asset_borrow))
        if not self.asset_borrow:
            raise InvalidInputError("at least one asset financing account is required")
        _check_same_grid(self.lend, [self.borrow, *self.asset_borrow], "driver")

    @property
    def reference(self) -> Account:
        return self.lend

    def convention(self) -> PartialNetting:
        return PartialNetting(self.lend, self.borrow, self.asset_borrow)


@dataclasses.dataclass(frozen=True)
class PartialNettingBorrow:
    """Split-rate wealth dynamics solved against the borrowing account.

    Same fixed point as :class:`PartialNettingLend`; the cost terms are
    rearranged so expectations and discounting run at the borrowing rate.
    Useful as an independent recomputation and as the natural form when the
    benchmark endowment is negative.
    """

    lend: Account
    borrow: Account
    asset_borrow: tuple[Account, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "asset_borrow", tuple(self.asset_borrow))
        if not self.asset_borrow:
            raise InvalidInputError("at least one asset financing account is required")
        _check_same_grid(self.lend, [self.borrow, *self.asset_borrow], "driver")

    @property
    def reference(self) -> Account:
        return self.borrow

    def convention(self) -> PartialNetting:
        return PartialNetting(self.lend, self.borrow, self.asset_borrow)


@dataclasses.dataclass(frozen=True)
class EndogenousCollateral:
    """Single cash rate with margin tracking the solution's own value.

    The posted balance is (1 + delta1) times the negative part of the value
    minus (1 + delta2) times the positive part, and it accrues at the
    collateral rate while cash accrues at the cash rate.  The state solved
    for is the zero-endowment portfolio value, which is the quoted price
    itself; endowments drop out of the quote (checked by the
    ``x_independence_gap`` diagnostic of the pricer).
    """

    delta1: float
    delta2: float
    cash: Account
    collateral_rate: Account

    def __post_init__(self) -> None:
        if self.delta1 < 0.0 or self.delta2 < 0.0:
            raise InvalidInputError("haircuts must be nonnegative")
        _check_same_grid(self.cash, [self.collateral_rate], "driver")

    @property
    def reference(self) -> Account:
        return self.cash


@dataclasses.dataclass(frozen=True)
class CustomDriver:
    """User-supplied drift of the discounted state.

    ``fn(t, y, z, s)`` receives the node time, discounted values, hedge unit
    counts and asset prices (per-node arrays on the lattice route) and
    returns the drift per year.  The solver applies it by an explicit Euler
    rule inside the fixed-point iteration, so unlike the canonical variants
    the step error is first order in dt and forward replication only closes
    to O(dt).  ``fn`` returning zeros reproduces linear pricing under
    ``reference``.
    """

    fn: Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    reference: Account


Driver = PartialNettingLend | PartialNettingBorrow | EndogenousCollateral | CustomDriver


# ---------------------------------------------------------------------------
# solution containers


@dataclasses.dataclass(frozen=True)
class BSDESolution:
    """Discounted state and hedge per lattice node.

    ``y_levels[k]`` has length k + 1 (up-move order); the terminal entry is
    the array the solver was handed, unchanged.  ``z_levels[k]`` holds the
    asset units carried over [t_k, t_{k+1}).  ``picard_iterations[k]`` counts
    the node-equation iterations spent at level k and ``residual`` is the
    largest final update across levels.
    """

    lattice: Lattice
    reference: Account
    driver: object
    y_levels: list[np.ndarray]
    z_levels: list[np.ndarray]
    terminal: np.ndarray
    picard_iterations: np.ndarray
    residual: float

    @property
    def initial(self) -> float:
        """Undiscounted initial wealth."""
        return float(self.y_levels[0][0] * self.reference.values[0])

    def wealth(self, k: int) -> np.ndarray:
        """Undiscounted values at level k."""
        return self.y_levels[k] * self.reference.values[k]


@dataclasses.dataclass(frozen=True)
class RegressionSolution:
    """Pathwise regression estimate of the discounted state and hedge.

    Produced by :func:`solve_bsde_mc`.  Values carry regression and sampling
    bias; treat them as estimates, not certified numbers.  No acceptance
    tolerance applies to this route.
    """

    reference: Account
    scenarios: ScenarioSet
    y_paths: np.ndarray
    z_paths: np.ndarray
    basis_degree: int

    @property
    def initial(self) -> float:
        return float(self.y_paths[:, 0].mean() * self.reference.values[0])


# ---------------------------------------------------------------------------
# streams and packing


def netting_stream(
    contract: Contract,
    lattice: Lattice,
    collateral: CollateralSpec | None = None,
) -> dict[int, np.ndarray | float]:
    """Per-level amounts the hedger's cash position receives.

    Contract flows are materialized on lattice nodes (the initial flow p is
    excluded; it settles at inception).  A rehypothecated-cash margin spec on
    an exogenous path joins the stream as collateral transfers plus interest
    on the posted balance, dated at the end of the step they accrue over.
    Haircut (value-tracking) margin cannot be reduced to a stream; price it
    with :func:`price_endogenous_collateral`.
    """
    stream: dict[int, np.ndarray | float] = dict(flow_level_tensors(contract, lattice))
    if collateral is None or not collateral.is_collateralized:
        return stream
    _check_netting_margin(collateral)
    c = collateral.sample_path(lattice.grid)
    fc = rehypo_base_interest(c, collateral.accounts.posted_interest,
                              collateral.accounts.received_interest)
    for k in range(1, lattice.grid.n_steps + 1):
        inc = float((c[k] - c[k - 1]) + fc[k - 1])
        if inc != 0.0:
            stream[k] = stream.get(k, 0.0) + inc
    return stream


def _check_netting_margin(spec: CollateralSpec) -> None:
    if spec.haircut is not None:
        raise InvalidInputError(
            "margin tracking the portfolio value is not an exogenous stream; "
            "use price_endogenous_collateral"
        )
    if spec.convention is not MarginConvention.CASH_REHYPOTHECATED:
        raise InvalidInputError(
            "netted valuation supports rehypothecated cash margin only"
        )
    if spec.accounts is None:
        raise InvalidInputError("collateralized spec needs margin accounts")


def _check_stream(stream, n: int) -> dict[int, np.ndarray | float]:
    out: dict[int, np.ndarray | float] = {}
    for key, amount in (stream or {}).items():
        k = int(key)
        if k != key or not 1 <= k <= n:
            raise InvalidInputError(
                f"stream key {key!r}: flows land on integer levels 1..{n}"
            )
        arr = np.asarray(amount, dtype=float)
        if arr.ndim == 0:
            out[k] = float(arr)
        elif arr.shape == (k + 1,):
            out[k] = arr.astype(float, copy=True)
        else:
            raise InvalidInputError(
                f"stream level {k}: expected a scalar or shape ({k + 1},), got {arr.shape}"
            )
    return out


def _terminal_level(terminal, lattice: Lattice) -> np.ndarray:
    n = lattice.grid.n_steps
    if callable(terminal):
        vals = np.asarray(terminal(*lattice.level_grid(n)), dtype=float)
        return np.ascontiguousarray(np.broadcast_to(vals, (n + 1,)), dtype=float).copy()
    arr = np.asarray(terminal, dtype=float)
    if arr.ndim == 0:
        return np.full(n + 1, float(arr))
    if arr.shape != (n + 1,):
        raise InvalidInputError(
            f"terminal level must have shape ({n + 1},), got {arr.shape}"
        )
    return arr.astype(float, copy=True)


def _packed_prices(lattice: Lattice) -> np.ndarray:
    n = lattice.grid.n_steps
    out = np.empty(_backend.level_offset(n + 1))
    for k in range(n + 1):
        o = _backend.level_offset(k)
        out[o:o + k + 1] = lattice.level_prices(k, 0)
    return out


def _packed_stream(stream: dict[int, np.ndarray | float], n: int) -> np.ndarray:
    out = np.zeros(_backend.level_offset(n + 1))
    for k, amount in stream.items():
        o = _backend.level_offset(k)
        out[o:o + k + 1] = amount
    return out


# ---------------------------------------------------------------------------
# node equations


def _split_rate_cost(y, sv, neg_total, bk, fl, fb, fib_vec, lend_side):
    """Exact one-step compounding cost of the split-rate carry.

    ``sv`` holds per-asset money positions (last axis), ``neg_total`` their
    summed negative parts.  The fixed point in y is a contraction whenever
    the rate spread times dt is below one.
    """
    pos = np.maximum(sv, 0.0)
    w = bk * y + neg_total
    if lend_side:
        fixed = (pos * (fl - fib_vec)).sum(axis=-1)
        return fixed + np.maximum(-w, 0.0) * (fl - fb)
    fixed = (pos * (fb - fib_vec)).sum(axis=-1)
    return fixed + np.maximum(w, 0.0) * (fl - fb)


def _picard(e_pre, update, tol, max_iterations, k):
    scale = max(1.0, float(np.max(np.abs(e_pre))) if e_pre.size else 1.0)
    thr = tol * scale
    y = e_pre
    for it in range(1, max_iterations + 1):
        y_new = update(y)
        res = float(np.max(np.abs(y_new - y))) if y.size else 0.0
        y = y_new
        if res <= thr:
            return y, it, res
    raise ConvergenceError(
        f"level {k}: fixed-point update {res:.3e} still above {thr:.3e} after "
        f"{max_iterations} iterations; shrink the time step",
        step=k,
        residual=res,
    )


def _solve_level(driver, k, e_pre, z, lattice, ref, tol, max_iterations):
    if isinstance(driver, (PartialNettingLend, PartialNettingBorrow)):
        lend_side = isinstance(driver, PartialNettingLend)
        fl = float(driver.lend.factors[k])
        fb = float(driver.borrow.factors[k])
        fib = np.array([float(driver.asset_borrow[0].factors[k])])
        bk = float(ref.values[k])
        bk1 = float(ref.values[k + 1])
        sv = (z * lattice.level_prices(k, 0))[:, None]
        neg_total = np.maximum(-sv[:, 0], 0.0)

        def update(y):
            cost = _split_rate_cost(y, sv, neg_total, bk, fl, fb, fib, lend_side)
            return e_pre - cost / bk1

        return _picard(e_pre, update, tol, max_iterations, k)

    if isinstance(driver, EndogenousCollateral):
        f = float(driver.cash.factors[k])
        fc = float(driver.collateral_rate.factors[k])
        g_pos = f - (1.0 + driver.delta2) * (f - fc)
        g_neg = f - (1.0 + driver.delta1) * (f - fc)
        y = np.where(e_pre > 0.0, e_pre * (f / g_pos), e_pre * (f / g_neg))
        return y, 1, 0.0

    if isinstance(driver, CustomDriver):
        t_k = float(lattice.grid.times[k])
        dt = lattice.grid.dt
        s_k = lattice.level_prices(k, 0)

        def update(y):
            return e_pre - np.asarray(driver.fn(t_k, y, z, s_k), dtype=float) * dt

        return _picard(e_pre, update, tol, max_iterations, k)

    raise InvalidInputError(f"unknown driver {type(driver).__name__}")


def _driver_reference(driver) -> Account:
    if isinstance(driver, (PartialNettingLend, PartialNettingBorrow, EndogenousCollateral)):
        return driver.reference
    if isinstance(driver, CustomDriver):
        return driver.reference
    raise InvalidInputError(f"unknown driver {type(driver).__name__}")


def _check_step_growth(driver: EndogenousCollateral) -> None:
    f = driver.cash.factors
    fc = driver.collateral_rate.factors
    g_pos = f - (1.0 + driver.delta2) * (f - fc)
    g_neg = f - (1.0 + driver.delta1) * (f - fc)
    if np.min(g_pos) <= 0.0 or np.min(g_neg) <= 0.0:
        raise InvalidInputError(
            "haircut times the cash/collateral spread wipes out a whole step; "
            "refine the time grid"
        )


def solve_bsde(
    driver,
    terminal,
    stream,
    lattice: Lattice,
    *,
    tol: float = 1e-12,
    max_iterations: int = 50,
) -> BSDESolution:
    """Backward induction for nonlinear carry on a single-asset lattice.

    At each node the pre-flow continuation value is formed under the
    reference-account measure, the hedge is read off the branch spread, and
    the node value solves

        Y_k = E_q[Y_{k+1} - dA_{k+1} / B_{k+1}] - cost_k(Y_k, Z_k)

    by fixed-point iteration started at the expectation.  For the canonical
    drivers the cost uses exact per-step compounding factors, so the solve
    agrees with inverting the wealth map itself; a :class:`CustomDriver` is
    applied as an explicit Euler term instead.  Iteration stops once the
    sup-norm update falls below ``tol`` times max(1, |Y|).

    ``terminal`` is the post-flow discounted state at the last level (float,
    array of length n + 1, or a callable of the terminal prices); ``stream``
    maps level k to the amount received there (the terminal claim belongs in
    the stream, not in ``terminal``).  Multi-asset problems have no exact
    lattice inversion here; see :func:`solve_bsde_mc`.
    """
    if lattice.n_assets != 1:
        raise InvalidInputError(
            "the lattice route solves single-asset problems; "
            "use solve_bsde_mc for baskets"
        )
    _require_funding_calibration(lattice, "solve_bsde")
    ref = _driver_reference(driver)
    if not ref.grid.same_as(lattice.grid):
        raise InvalidInputError("driver accounts and lattice live on different grids")
    if isinstance(driver, (PartialNettingLend, PartialNettingBorrow)):
        if len(driver.asset_borrow) != 1:
            raise InvalidInputError("driver carries financing accounts for more than one asset")
    if isinstance(driver, EndogenousCollateral):
        _check_step_growth(driver)

    n = lattice.grid.n_steps
    q = lattice.measure_for(ref)
    bv = ref.values
    amounts = _check_stream(stream, n)
    y_term = _terminal_level(terminal, lattice)

    y_rev: list[np.ndarray] = [y_term]
    z_rev: list[np.ndarray] = []
    iters = np.zeros(n, dtype=np.int64)
    worst = 0.0
    y = y_term
    for k in range(n - 1, -1, -1):
        da = amounts.get(k + 1)
        c_pre = y if da is None else y - np.asarray(da) / bv[k + 1]
        s_next = lattice.level_prices(k + 1, 0)
        z = (c_pre[1:] - c_pre[:-1]) * bv[k + 1] / (s_next[1:] - s_next[:-1])
        e_pre = lattice.expect(c_pre, k, q=q)
        y, it, res = _solve_level(driver, k, e_pre, z, lattice, ref, tol, max_iterations)
        if not np.all(np.isfinite(y)):
            raise NumericsError(f"non-finite state at level {k}", step=k)
        iters[k] = it
        worst = max(worst, res)
        y_rev.append(y)
        z_rev.append(z)
    y_rev.reverse()
    z_rev.reverse()
    return BSDESolution(
        lattice=lattice,
        reference=ref,
        driver=driver,
        y_levels=y_rev,
        z_levels=z_rev,
        terminal=y_term,
        picard_iterations=iters,
        residual=worst,
    )


# ---------------------------------------------------------------------------
# split-rate valuation


def price_partial_netting(
    contract: Contract,
    convention: PartialNetting,
    x: float,
    lattice: Lattice,
    collateral: CollateralSpec | None = None,
    *,
    tol: float = 1e-12,
    max_iterations: int = 50,
) -> PricePath:
    """Value a contract under split cash rates with netted short proceeds.

    The quote at a node is what the hedger with endowment x can charge so
    that delivering every remaining flow still leaves terminal wealth equal
    to the endowment rolled up at its own rate (lending for x >= 0,
    borrowing otherwise).  The backward sweep inverts the one-step wealth
    map exactly; the same value is recomputed through the conditional
    expectation form of the dynamics and through a forward rerun, and the
    gaps land in ``diagnostics``:

    * ``representation_gap``: worst node gap between the wealth-map
      inversion and the expectation-form solve;
    * ``forward_gap`` / ``branch_mismatch``: forward rerun against the
      backward values and the recombination mismatch of that rerun;
    * ``picard_iterations_max``: iteration depth of the expectation solve.

    Rehypothecated cash margin on an exogenous path is folded into the flow
    stream; value-tracking margin belongs to
    :func:`price_endogenous_collateral`.  ``levels`` hold the quoted price
    (wealth minus rolled-up endowment minus margin balance); ``xi_levels``
    the replicating unit counts.
    """
    _require_funding_calibration(lattice, "price_partial_netting")
    if lattice.n_assets != 1:
        raise InvalidInputError("split-rate valuation runs on the single-asset lattice")
    if len(convention.asset_borrow) != 1:
        raise InvalidInputError("convention carries financing accounts for more than one asset")
    if not convention.lend.grid.same_as(lattice.grid):
        raise InvalidInputError("convention accounts and lattice live on different grids")

    x = float(x)
    n = lattice.grid.n_steps
    if x >= 0.0:
        driver = PartialNettingLend(convention.lend, convention.borrow, convention.asset_borrow)
    else:
        driver = PartialNettingBorrow(convention.lend, convention.borrow, convention.asset_borrow)
    ref = driver.reference
    bv = ref.values

    stream = _check_stream(netting_stream(contract, lattice, collateral), n)
    c_path = np.zeros(n + 1)
    collateralized = collateral is not None and collateral.is_collateralized
    if collateralized:
        c_path = collateral.sample_path(lattice.grid)

    prices = _packed_prices(lattice)
    flows = _packed_stream(stream, n)
    v_term = np.full(n + 1, x * bv[n])
    v_flat, z_flat = _backend.pn_backward_1d(
        v_term,
        prices,
        flows,
        convention.lend.factors,
        convention.borrow.factors,
        convention.asset_borrow[0].factors,
        lattice.adiv[0],
    )
    if not np.all(np.isfinite(v_flat)):
        raise NumericsError("non-finite wealth in the backward sweep")

    levels: list[np.ndarray] = []
    xi_levels: list[np.ndarray] = []
    for k in range(n):
        o = _backend.level_offset(k)
        levels.append(v_flat[o:o + k + 1] - x * bv[k] - c_path[k])
        xi_levels.append(z_flat[o:o + k + 1])
    levels.append(np.zeros(n + 1))

    sol = solve_bsde(driver, x, stream, lattice, tol=tol, max_iterations=max_iterations)
    rep = 0.0
    for k in range(n + 1):
        o = _backend.level_offset(k)
        gap = np.max(np.abs(v_flat[o:o + k + 1] - sol.y_levels[k] * bv[k]))
        rep = max(rep, float(gap))
    v_fwd, mismatch = _backend.pn_forward_1d(
        float(v_flat[0]),
        z_flat,
        prices,
        flows,
        convention.lend.factors,
        convention.borrow.factors,
        convention.asset_borrow[0].factors,
        lattice.adiv[0],
    )
    diagnostics = {
        "representation_gap": rep,
        "forward_gap": float(np.max(np.abs(v_fwd - v_flat))),
        "branch_mismatch": float(mismatch),
        "picard_iterations_max": float(sol.picard_iterations.max() if n else 0),
    }
    return PricePath(
        lattice=lattice,
        discount=ref,
        levels=levels,
        xi_levels=xi_levels,
        stream_levels=stream,
        method="partial_netting",
        diagnostics=diagnostics,
        collateral_levels=[float(c) for c in c_path] if collateralized else None,
    )


# ---------------------------------------------------------------------------
# value-tracking margin valuation


def price_endogenous_collateral(
    claim,
    delta1: float,
    delta2: float,
    collateral_rate: Account,
    x: float,
    lattice: Lattice,
) -> PricePath:
    """Value a terminal claim when margin tracks the quote itself.

    ``claim`` is the flow the hedger receives at the last node (scalar,
    per-node array, or callable of the terminal prices).  The margin balance
    posted against the position is (1 + delta1) times the negative part of
    the hedger's mark minus (1 + delta2) times the positive part, accruing
    at ``collateral_rate`` while cash accrues at the funding account of the
    lattice's asset.  Each backward step divides the expected continuation
    by the exact one-step growth factor of the matching sign branch.

    The quote does not depend on the endowment x, which enters diagnostics
    only:

    * ``x_independence_gap``: worst node gap between full wealth solves run
      at x and at a shifted endowment;
    * ``endowment_route_gap``: wealth-route values against the direct sweep;
    * ``representation_gap``: residual of the discounted value plus its
      margin carry compensator under the pricing measure;
    * ``forward_gap`` / ``branch_mismatch``: forward rerun consistency.

    With delta1 = delta2 = 0 the result matches discounting the claim with
    the collateral account.
    """
    _require_funding_calibration(lattice, "price_endogenous_collateral")
    if lattice.n_assets != 1:
        raise InvalidInputError("value-tracking margin runs on the single-asset lattice")
    if delta1 < 0.0 or delta2 < 0.0:
        raise InvalidInputError("haircuts must be nonnegative")
    cash = lattice.assets[0].funding
    if not collateral_rate.grid.same_as(lattice.grid):
        raise InvalidInputError("collateral account and lattice live on different grids")
    driver = EndogenousCollateral(delta1, delta2, cash, collateral_rate)
    _check_step_growth(driver)

    n = lattice.grid.n_steps
    bv = cash.values
    if callable(claim):
        claim_arr = np.ascontiguousarray(
            np.broadcast_to(np.asarray(claim(*lattice.level_grid(n)), dtype=float), (n + 1,))
        ).copy()
        claim_rec: np.ndarray | float = claim_arr
    else:
        arr = np.asarray(claim, dtype=float)
        if arr.ndim == 0:
            claim_arr = np.full(n + 1, float(arr))
            claim_rec = float(arr)
        elif arr.shape == (n + 1,):
            claim_arr = arr.astype(float, copy=True)
            claim_rec = claim_arr
        else:
            raise InvalidInputError(f"claim must broadcast to ({n + 1},), got {arr.shape}")

    f = cash.factors
    fc = collateral_rate.factors
    g_pos = f - (1.0 + delta2) * (f - fc)
    g_neg = f - (1.0 + delta1) * (f - fc)

    prices = _packed_prices(lattice)
    q1 = np.ascontiguousarray(lattice.q[0])
    y_term = np.ascontiguousarray(-claim_arr)
    y_flat, z_flat = _backend.endo_backward_1d(y_term, prices, q1, 1.0 / g_pos, 1.0 / g_neg)
    if not np.all(np.isfinite(y_flat)):
        raise NumericsError("non-finite value in the backward sweep")

    levels: list[np.ndarray] = []
    xi_levels: list[np.ndarray] = []
    for k in range(n):
        o = _backend.level_offset(k)
        levels.append(y_flat[o:o + k + 1].copy())
        xi_levels.append(z_flat[o:o + k + 1])
    levels.append(np.zeros(n + 1))
    collateral_levels: list[np.ndarray | float] = [
        haircut_collateral(0.0, lev, delta1, delta2) for lev in levels[:n]
    ]
    collateral_levels.append(0.0)

    x = float(x)
    x_alt = 7.0 if x == 0.0 else 0.0
    route_a = _endowment_route_levels(x, claim_arr, lattice, cash, g_pos, g_neg)
    route_b = _endowment_route_levels(x_alt, claim_arr, lattice, cash, g_pos, g_neg)
    x_gap = 0.0
    route_gap = 0.0
    for k in range(n):
        x_gap = max(x_gap, float(np.max(np.abs(route_a[k] - route_b[k]))))
        route_gap = max(route_gap, float(np.max(np.abs(route_a[k] - levels[k]))))

    y_slices = [y_flat[_backend.level_offset(k):_backend.level_offset(k) + k + 1]
                for k in range(n + 1)]
    check_levels = [y_slices[k] / bv[k] for k in range(n + 1)]
    comp = []
    for k in range(n):
        e = lattice.expect(y_slices[k + 1], k)
        w = np.where(e > 0.0, 1.0 - g_pos[k] / f[k], 1.0 - g_neg[k] / f[k])
        comp.append(check_levels[k] * w)
    check = LatticeProcessCheck(
        lattice, check_levels, compensator=comp, name="margin_carry"
    )
    rep = max(
        (float(np.max(np.abs(check.residual(k)))) for k in range(n)), default=0.0
    )

    growth = cash.factors - lattice.adiv[0]
    y_fwd, mismatch = _backend.endo_forward_1d(
        float(y_flat[0]), z_flat, prices, growth, 1.0 / g_pos, 1.0 / g_neg
    )
    diagnostics = {
        "x_independence_gap": x_gap,
        "endowment_route_gap": route_gap,
        "representation_gap": rep,
        "forward_gap": float(np.max(np.abs(y_fwd - y_flat))),
        "branch_mismatch": float(mismatch),
    }
    return PricePath(
        lattice=lattice,
        discount=cash,
        levels=levels,
        xi_levels=xi_levels,
        stream_levels={n: claim_rec},
        method="endogenous_collateral",
        diagnostics=diagnostics,
        collateral_levels=collateral_levels,
    )


def _endowment_route_levels(x, claim_arr, lattice, cash, g_pos, g_neg):
    """Quote extracted from the full wealth of an endowed hedger.

    The endowment rolls up at the cash account exactly, so the extracted
    quote matches the direct sweep up to rounding for every x; comparing two
    endowments measures that rounding.
    """
    n = lattice.grid.n_steps
    bv = cash.values
    y = x * bv[n] - claim_arr
    out: list[np.ndarray] = [np.empty(0)] * n
    for k in range(n - 1, -1, -1):
        e = lattice.expect(y, k)
        s_exp = e - x * bv[k + 1]
        s_k = np.where(s_exp > 0.0, s_exp / g_pos[k], s_exp / g_neg[k])
        out[k] = s_k
        y = x * bv[k] + s_k
    return out


# ---------------------------------------------------------------------------
# replication


def node_strategy(lattice: Lattice, unit_levels: Sequence[np.ndarray]) -> Strategy:
    """Strategy reading per-node unit counts off lattice levels.

    ``unit_levels[k]`` holds positions at level k in up-move order.  The
    scenario prices must sit on lattice nodes (sets built by
    :func:`lattice_scenarios` or :func:`sample_lattice_paths`).
    """
    if lattice.n_assets != 1:
        raise InvalidInputError("node lookup is wired for single-asset lattices")
    spot = float(lattice.assets[0].spot)
    log_u = float(np.log(lattice.u[0]))

    def strategy(k: int, prices: np.ndarray) -> np.ndarray:
        p = prices[:, 0]
        j = np.rint((np.log(p / spot) / log_u + k) / 2.0).astype(np.int64)
        j = np.clip(j, 0, k)
        return np.asarray(unit_levels[k])[j][:, None]

    return strategy


def verify_replication(
    solution: BSDESolution,
    contract: Contract,
    x: float,
    collateral: CollateralSpec | None = None,
    *,
    convention: FundingConvention | None = None,
    scenarios: ScenarioSet | None = None,
    n_paths: int = 512,
    seed: int = 20260815,
    exhaustive_limit: int = 4096,
) -> float:
    """Terminal wealth miss of the solution's hedge, run through the engine.

    The hedger starts with endowment x plus the solved initial quote, trades
    the solution's unit counts via node lookup, receives the contract flows,
    and settles margin as the solution's driver prescribes.  Returns the
    worst |V_T - x B_ref(T)| across scenario paths.  Exhaustive path
    enumeration is used when the lattice is small enough, sampled paths
    otherwise; pass ``scenarios`` to control this.  The contract, margin
    spec and x must be the ones the solution was built from.
    """
    lattice = solution.lattice
    driver = solution.driver
    if isinstance(driver, CustomDriver):
        raise InvalidInputError(
            "a custom driver has no funding-convention counterpart to replay"
        )
    if scenarios is None:
        total = (1 << lattice.n_assets) ** lattice.grid.n_steps
        if total <= exhaustive_limit:
            scenarios = lattice_scenarios(lattice)
        else:
            scenarios = sample_lattice_paths(lattice, n_paths, seed)
    elif not scenarios.grid.same_as(lattice.grid):
        raise InvalidInputError("scenarios and lattice live on different grids")

    strategy = node_strategy(lattice, solution.z_levels)
    ref = solution.reference
    x = float(x)
    v0 = float(solution.y_levels[0][0]) * float(ref.values[0])

    if isinstance(driver, (PartialNettingLend, PartialNettingBorrow)):
        conv: FundingConvention = convention if convention is not None else driver.convention()
        c0 = 0.0
        if collateral is not None and collateral.is_collateralized:
            _check_netting_margin(collateral)
            c0 = float(collateral.sample_path(lattice.grid)[0])
        path = evolve_wealth(
            conv, strategy, contract, v0 - c0 - contract.p, scenarios,
            collateral=collateral,
        )
    else:
        cash = driver.cash
        conv = convention if convention is not None else Basic(cash)
        spec = collateral
        if spec is None:
            spec = CollateralSpec.with_haircut(
                driver.delta1,
                driver.delta2,
                MarginConvention.CASH_REHYPOTHECATED,
                MarginAccounts(
                    posted_interest=driver.collateral_rate,
                    received_interest=driver.collateral_rate,
                    posting_funding=cash,
                ),
            )
        elif spec.haircut is None:
            raise InvalidInputError(
                "value-tracking solutions replay against haircut margin"
            )
        path = evolve_wealth(
            conv, strategy, contract, x + v0 - contract.p, scenarios,
            collateral=spec, benchmark=x * cash.values,
        )

    target = x * float(ref.values[-1])
    return float(np.max(np.abs(path.wealth[:, -1] - target)))


# ---------------------------------------------------------------------------
# regression Monte Carlo


def _poly_features(u: np.ndarray, degree: int):
    """Monomial features of total degree <= degree and their gradients.

    ``u`` has shape (m, d).  Returns (Phi, grads) with Phi of shape
    (m, n_terms) and grads[i] the derivative of Phi along u_i.
    """
    m, d = u.shape
    expos = [e for e in itertools.product(range(degree + 1), repeat=d) if sum(e) <= degree]
    phi = np.empty((m, len(expos)))
    grads = [np.zeros((m, len(expos))) for _ in range(d)]
    for j, e in enumerate(expos):
        col = np.ones(m)
        for i, p in enumerate(e):
            if p:
                col = col * u[:, i] ** p
        phi[:, j] = col
        for i, p in enumerate(e):
            if not p:
                continue
            dcol = p * np.ones(m) * u[:, i] ** (p - 1)
            for ii, pp in enumerate(e):
                if ii != i and pp:
                    dcol = dcol * u[:, ii] ** pp
            grads[i][:, j] = dcol
    return phi, grads


def solve_bsde_mc(
    driver,
    terminal,
    lattice: Lattice,
    stream=None,
    *,
    n_paths: int = 4096,
    basis_degree: int = 2,
    seed: int = 11,
    tol: float = 1e-12,
    max_iterations: int = 50,
) -> RegressionSolution:
    """Regression estimate of the backward solve on sampled paths.

    For baskets the lattice has more branches per step than hedge
    instruments, so no exact nodewise inversion exists; this route projects
    the continuation value on polynomials in the asset prices (least
    squares per step), differentiates the fit for the hedge, and applies
    the driver through the same fixed-point update as the lattice solve.
    It works for any number of assets and is a heuristic: accuracy is
    limited by the basis and the sample, and no engine-replication bound
    applies.

    ``terminal`` may be a float or a callable of the terminal asset prices
    (one array per asset); ``stream`` maps level k to a float or a callable
    of the prices at that level.  Amounts are received by the hedger.
    """
    _require_funding_calibration(lattice, "solve_bsde_mc")
    ref = _driver_reference(driver)
    if not ref.grid.same_as(lattice.grid):
        raise InvalidInputError("driver accounts and lattice live on different grids")
    if isinstance(driver, EndogenousCollateral):
        _check_step_growth(driver)
    if basis_degree < 1:
        raise InvalidInputError("basis_degree must be at least 1")

    scen = sample_lattice_paths(lattice, n_paths, seed, account=ref)
    prices = scen.prices
    m, _, d = prices.shape
    if isinstance(driver, (PartialNettingLend, PartialNettingBorrow)):
        if len(driver.asset_borrow) != d:
            raise InvalidInputError(
                f"driver carries {len(driver.asset_borrow)} financing accounts for {d} assets"
            )
    n = lattice.grid.n_steps
    bv = ref.values
    spots = np.array([a.spot for a in lattice.assets])

    def flow_at(level: int) -> np.ndarray | float | None:
        if not stream or level not in stream:
            return None
        amount = stream[level]
        if callable(amount):
            return np.asarray(amount(*[prices[:, level, i] for i in range(d)]), dtype=float)
        return float(amount)

    if callable(terminal):
        y = np.broadcast_to(
            np.asarray(terminal(*[prices[:, n, i] for i in range(d)]), dtype=float), (m,)
        ).astype(float)
    else:
        y = np.full(m, float(terminal))

    y_paths = np.empty((m, n + 1))
    z_paths = np.zeros((m, n, d))
    y_paths[:, n] = y
    for k in range(n - 1, -1, -1):
        da = flow_at(k + 1)
        c_pre = y if da is None else y - np.asarray(da) / bv[k + 1]
        u = prices[:, k, :] / spots
        phi, grads = _poly_features(u, basis_degree)
        coef, *_ = np.linalg.lstsq(phi, c_pre, rcond=None)
        e_pre = phi @ coef
        z = np.stack(
            [(grads[i] @ coef) * bv[k + 1] / spots[i] for i in range(d)], axis=1
        )
        y = _mc_node_solve(driver, k, e_pre, z, prices[:, k, :], lattice, ref,
                           tol, max_iterations)
        if not np.all(np.isfinite(y)):
            raise NumericsError(f"non-finite state at level {k}", step=k)
        y_paths[:, k] = y
        z_paths[:, k, :] = z
    return RegressionSolution(
        reference=ref,
        scenarios=scen,
        y_paths=y_paths,
        z_paths=z_paths,
        basis_degree=basis_degree,
    )


def _mc_node_solve(driver, k, e_pre, z, s_k, lattice, ref, tol, max_iterations):
    if isinstance(driver, (PartialNettingLend, PartialNettingBorrow)):
        lend_side = isinstance(driver, PartialNettingLend)
        fl = float(driver.lend.factors[k])
        fb = float(driver.borrow.factors[k])
        fib = np.array([float(a.factors[k]) for a in driver.asset_borrow])
        bk = float(ref.values[k])
        bk1 = float(ref.values[k + 1])
        sv = z * s_k
        neg_total = np.maximum(-sv, 0.0).sum(axis=-1)

        def update(y):
            cost = _split_rate_cost(y, sv, neg_total, bk, fl, fb, fib, lend_side)
            return e_pre - cost / bk1

        y, _, _ = _picard(e_pre, update, tol, max_iterations, k)
        return y

    if isinstance(driver, EndogenousCollateral):
        f = float(driver.cash.factors[k])
        fc = float(driver.collateral_rate.factors[k])
        g_pos = f - (1.0 + driver.delta2) * (f - fc)
        g_neg = f - (1.0 + driver.delta1) * (f - fc)
        return np.where(e_pre > 0.0, e_pre * (f / g_pos), e_pre * (f / g_neg))

    if isinstance(driver, CustomDriver):
        t_k = float(lattice.grid.times[k])
        dt = lattice.grid.dt

        def update(y):
            return e_pre - np.asarray(driver.fn(t_k, y, z, s_k), dtype=float) * dt

        y, _, _ = _picard(e_pre, update, tol, max_iterations, k)
        return y

    raise InvalidInputError(f"unknown driver {type(driver).__name__}")
