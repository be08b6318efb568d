"""Hedger-arbitrage detection and the netted-wealth drift certificate.

An arbitrage for the hedger is a strategy whose netted terminal wealth
dominates the benchmark V0_T(x) = x^+ B^l_T - x^- B^b_T on every path and
beats it on some path.  The detector enumerates a path set and a strategy
family; because strategies form an infinite family, the vocabulary is
"witnessed / not witnessed / inconclusive" rather than a model-wide claim.

The certificate side is unconditional: under the partial-netting convention
with r^l <= r^b and r^l <= r^{i,b}, the discounted netted wealth increment is
dominated pathwise by the hedge gains on the funding-adjusted prices,

    delta(Vnet/B^l)_k <= sum_i xi^i_k (S^i_{k+1} - S^i_k f^l_k + div_k) / B^l_{k+1},

an exact per-transition inequality, so positive drift beyond rounding proves
an engine (or rate-input) defect.
"""
from __future__ import annotations

import dataclasses
import enum
from typing import Callable, Sequence

import numpy as np

from .contracts import Contract
from .errors import (
    CertificateNotApplicableError,
    InadmissibleStrategyError,
    InvalidInputError,
)
from .market import Account, ScenarioSet, TimeGrid
from .wealth import (
    Basic,
    CommonUnsecured,
    FundingConvention,
    PartialNetting,
    Strategy,
    WealthPath,
    evolve_wealth,
    netted_wealth,
    solve_U,
)

# Cushion for paths whose excess should be exactly zero.  Kept fixed (not the
# user tolerance) so that enlarging tol can only demote a verdict: the
# no-losing-path condition does not loosen with tol.
ROUNDING_CUSHION = 1e-12


class Verdict(enum.Enum):
    ARBITRAGE_FOUND = "arbitrage_found"
    NO_ARBITRAGE_WITNESSED = "no_arbitrage_witnessed"
    INCONCLUSIVE = "inconclusive"


@dataclasses.dataclass(frozen=True)
class ArbitrageReport:
    """Outcome of a strategy-family scan.

    ``gap_min``/``gap_max`` are over all strategies and paths of the
    discounted terminal excess (Vnet_T - V0_T)/B_T.  ``witness`` names the
    (strategy, path) pair realising the best positive excess of a strategy
    that never loses; it is only a proof of arbitrage when the path set was
    exhaustive, otherwise the verdict stays inconclusive.
    """

    outcome: Verdict
    gap_min: float
    gap_max: float
    tol: float
    exhaustive: bool
    strategies_checked: int
    witness: dict | None = None

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "gap_min": self.gap_min,
            "gap_max": self.gap_max,
            "tol": self.tol,
            "exhaustive": self.exhaustive,
            "strategies_checked": self.strategies_checked,
            "witness": self.witness,
        }


def benchmark_wealth(x: float, lend: Account, borrow: Account) -> np.ndarray:
    """Wealth of doing nothing: x^+ B^l_t - x^- B^b_t on the grid nodes."""
    if not lend.grid.same_as(borrow.grid):
        raise InvalidInputError("lend and borrow accounts must share one grid")
    if x >= 0:
        return x * lend.values
    return x * borrow.values


def _cash_pair(convention: FundingConvention) -> tuple[Account, Account]:
    if isinstance(convention, (Basic, CommonUnsecured)):
        return convention.cash, convention.cash
    lend = getattr(convention, "lend", None)
    borrow = getattr(convention, "borrow", None)
    if lend is None or borrow is None:
        raise InvalidInputError(
            f"convention {convention.label!r} does not expose its cash accounts"
        )
    return lend, borrow


def detect_arbitrage(
    convention: FundingConvention,
    strategies: Strategy | Sequence[Strategy],
    contract: Contract,
    x: float,
    scenarios: ScenarioSet,
    tol: float | None = None,
    admissibility_floor: float = -1e6,
    on_inadmissible: str = "raise",
) -> ArbitrageReport:
    """Scan a strategy family for a hedger-arbitrage witness.

    A strategy is a witness when its discounted terminal excess
    (Vnet_T - V0_T)/B_T is nonnegative (up to a fixed rounding cushion) on
    every path and exceeds ``tol`` on some path.  With an exhaustive path set
    (``scenarios.weights`` present) a witness yields ARBITRAGE_FOUND; on
    sampled paths the verdict is capped at INCONCLUSIVE since unvisited paths
    could lose.  No witness at all gives NO_ARBITRAGE_WITNESSED.

    ``admissibility_floor`` bounds the discounted netted wealth from below at
    every node; a strategy that breaches it is rejected (``on_inadmissible=
    "raise"``) or skipped and counted (``"skip"``).
    """
    if callable(strategies):
        strategies = [strategies]
    if on_inadmissible not in ("raise", "skip"):
        raise InvalidInputError(f"unknown on_inadmissible mode {on_inadmissible!r}")
    lend, borrow = _cash_pair(convention)
    discount = lend if x >= 0 else borrow
    bench_T = benchmark_wealth(x, lend, borrow)[-1]
    if tol is None:
        tol = 1e-9 * (1.0 + abs(bench_T))
    cushion = min(ROUNDING_CUSHION * (1.0 + abs(bench_T)), tol)

    u = solve_U(contract, lend, borrow)
    gap_min, gap_max = np.inf, -np.inf
    witness: dict | None = None
    checked = 0
    for idx, strat in enumerate(strategies):
        path = evolve_wealth(convention, strat, contract, x, scenarios)
        vnet = path.wealth + u[None, :]
        disc = vnet / discount.values[None, :]
        floor_hit = disc < admissibility_floor
        if floor_hit.any():
            p, k = np.argwhere(floor_hit)[0]
            if on_inadmissible == "raise":
                raise InadmissibleStrategyError(
                    f"strategy {idx}: discounted netted wealth {disc[p, k]:.6g} "
                    f"breaches the floor {admissibility_floor:g} at step {k}",
                    step=int(k),
                    node=int(p),
                    value=float(disc[p, k]),
                )
            continue
        checked += 1
        excess = (vnet[:, -1] - bench_T) / discount.values[-1]
        e_min, e_max = float(excess.min()), float(excess.max())
        gap_min, gap_max = min(gap_min, e_min), max(gap_max, e_max)
        if e_min >= -cushion and e_max > tol and witness is None:
            best = int(np.argmax(excess))
            witness = {"strategy": idx, "path": best, "excess": float(excess[best])}

    exhaustive = scenarios.is_exhaustive
    if witness is not None:
        outcome = Verdict.ARBITRAGE_FOUND if exhaustive else Verdict.INCONCLUSIVE
    else:
        outcome = Verdict.NO_ARBITRAGE_WITNESSED
    return ArbitrageReport(
        outcome=outcome,
        gap_min=float(gap_min) if checked else 0.0,
        gap_max=float(gap_max) if checked else 0.0,
        tol=float(tol),
        exhaustive=exhaustive,
        strategies_checked=checked,
        witness=witness,
    )


# ---------------------------------------------------------------------------
# partial-netting drift certificate


@dataclasses.dataclass(frozen=True)
class CertificateReport:
    """Worst pathwise drift violation over a strategy family.

    ``max_violation`` should sit at rounding scale when the rate hypothesis
    holds; ``worst`` names the transition attaining it.
    """

    max_violation: float
    strategies_checked: int
    transitions_checked: int
    worst: dict | None = None


def _check_rate_hypothesis(convention: PartialNetting) -> None:
    rl, rb = convention.lend.rates, convention.borrow.rates
    if np.any(rl > rb):
        k = int(np.argmax(rl > rb))
        raise CertificateNotApplicableError(
            f"certificate needs r_lend <= r_borrow; violated at step {k} "
            f"({rl[k]:g} > {rb[k]:g})"
        )
    for i, acct in enumerate(convention.asset_borrow):
        if np.any(rl > acct.rates):
            k = int(np.argmax(rl > acct.rates))
            raise CertificateNotApplicableError(
                f"certificate needs r_lend <= asset {i} borrow rate; violated "
                f"at step {k} ({rl[k]:g} > {acct.rates[k]:g})"
            )


def drift_violations(
    convention: PartialNetting,
    strategies: Strategy | Sequence[Strategy],
    contract: Contract,
    x: float,
    scenarios: ScenarioSet,
) -> CertificateReport:
    """Raw transition scan of the netted-wealth drift inequality.

    No applicability check: callers probing a broken rate configuration see
    the positive violations directly.  Each transition (path p, step k)
    contributes lhs - rhs where lhs is the increment of Vnet/B^l and rhs the
    funding-adjusted hedge gain; the certificate requires lhs <= rhs.
    """
    if callable(strategies):
        strategies = [strategies]
    lend = convention.lend
    bl = lend.values
    fl = lend.factors
    u = solve_U(contract, lend, convention.borrow)
    prices, divs = scenarios.prices, scenarios.dividends

    worst_v = -np.inf
    worst: dict | None = None
    transitions = 0
    for idx, strat in enumerate(strategies):
        path = evolve_wealth(convention, strat, contract, x, scenarios)
        disc = (path.wealth + u[None, :]) / bl[None, :]
        lhs = disc[:, 1:] - disc[:, :-1]
        gains = np.einsum(
            "pki,pki->pk",
            path.xi,
            prices[:, 1:, :] - prices[:, :-1, :] * fl[None, :, None] + divs,
        )
        rhs = gains / bl[None, 1:]
        viol = lhs - rhs
        transitions += viol.size
        vmax = float(viol.max())
        if vmax > worst_v:
            worst_v = vmax
            p, k = np.unravel_index(int(np.argmax(viol)), viol.shape)
            worst = {"strategy": idx, "path": int(p), "step": int(k), "violation": vmax}
    return CertificateReport(
        max_violation=worst_v,
        strategies_checked=len(strategies),
        transitions_checked=transitions,
        worst=worst,
    )


def supermartingale_certificate(
    convention: PartialNetting,
    strategies: Strategy | Sequence[Strategy],
    contract: Contract,
    x: float,
    scenarios: ScenarioSet,
) -> CertificateReport:
    """Certify the pathwise drift inequality for a partial-netting family.

    Requires r_lend <= r_borrow and r_lend <= every asset borrow rate on each
    step; outside that regime the inequality has no reason to hold and
    :class:`CertificateNotApplicableError` is raised (use
    :func:`drift_violations` to inspect such configurations anyway).
    """
    _check_rate_hypothesis(convention)
    return drift_violations(convention, strategies, contract, x, scenarios)


# ---------------------------------------------------------------------------
# strategy families


def random_strategy_family(
    grid: TimeGrid,
    n_assets: int,
    count: int,
    seed: int,
    scale: float = 1.0,
    spots: Sequence[float] | None = None,
) -> list[Strategy]:
    """Bounded randomized strategies for certificate and arbitrage scans.

    Each strategy holds xi^i_k = a_{ik} + b_{ik} tanh(S^i_k / spot_i - 1):
    a deterministic rebalancing schedule plus a state-dependent tilt, bounded
    by |a| + |b|, so admissibility floors are respected on any bounded
    scenario set.  Coefficients are N(0, scale) draws, reproducible by seed.
    """
    if count < 1:
        raise InvalidInputError("count must be positive")
    rng = np.random.default_rng(np.random.PCG64(seed))
    a = rng.normal(0.0, scale, size=(count, grid.n_steps, n_assets))
    b = rng.normal(0.0, scale, size=(count, grid.n_steps, n_assets))
    ref = np.ones(n_assets) if spots is None else np.asarray(spots, dtype=float)
    if ref.shape != (n_assets,) or np.any(ref <= 0):
        raise InvalidInputError(f"spots must be {n_assets} positive reference levels")

    def make(m: int) -> Strategy:
        am, bm = a[m], b[m]

        def xi(k: int, prices: np.ndarray) -> np.ndarray:
            return am[k] + bm[k] * np.tanh(prices / ref - 1.0)

        return xi

    return [make(m) for m in range(count)]
