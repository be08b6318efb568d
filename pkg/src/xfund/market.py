"""Market primitives: time grids, funding accounts, asset models, calibrated
binomial lattices and seeded scenario generation.

Conventions that the rest of the package relies on:

* Rates are piecewise constant on grid intervals, so every integral of the
  form ``dB = r B dt`` has the exact per-step solution ``B_{k+1} = B_k e^{r dt}``.
  All accrual in this package uses those exact growth factors.
* Lattice dividend increments are predictable: the dividend paid over
  ``(t_k, t_{k+1}]`` is ``adiv_k * S_k`` with ``adiv_k = e^{r dt} - e^{(r - kappa) dt}``
  (equal to ``kappa S_k dt`` to first order). This choice makes the discounted
  cum-dividend price an exact node-wise martingale, which the validation
  suite checks at the 1e-12 level.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import CalibrationError, InvalidInputError

logger = logging.getLogger(__name__)

RateLike = float | int | Sequence[float] | np.ndarray | Callable[[float], float]

MAX_LATTICE_ASSETS = 3


@dataclasses.dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [t0, T] into n_steps intervals."""

    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if not (self.T > self.t0):
            raise InvalidInputError(f"need T > t0, got t0={self.t0}, T={self.T}")
        if self.n_steps < 1 or int(self.n_steps) != self.n_steps:
            raise InvalidInputError(f"n_steps must be a positive integer, got {self.n_steps}")

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.T, self.n_steps + 1)

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.n_steps

    def index_at(self, t: float) -> int:
        """Snap a date to the nearest grid node.

        Dates farther than dt/2 from every node are rejected: silently moving
        a cash flow by more than half a step would change the contract.
        """
        pos = (t - self.t0) / self.dt
        k = int(round(pos))
        if k < 0 or k > self.n_steps:
            raise InvalidInputError(f"date {t} outside grid [{self.t0}, {self.T}]")
        if abs(t - self.times[k]) > 0.5 * self.dt * (1.0 + 1e-9):
            raise InvalidInputError(
                f"date {t} is more than dt/2 away from the nearest grid node {self.times[k]}"
            )
        return k

    def same_as(self, other: "TimeGrid") -> bool:
        return (
            self.n_steps == other.n_steps
            and math.isclose(self.t0, other.t0, rel_tol=0, abs_tol=1e-12)
            and math.isclose(self.T, other.T, rel_tol=0, abs_tol=1e-12)
        )


def _rates_on_grid(rate: RateLike, grid: TimeGrid) -> np.ndarray:
    # piecewise-constant rates are sampled at the left endpoint of each interval
    if callable(rate):
        r = np.array([float(rate(t)) for t in grid.times[:-1]], dtype=float)
    elif np.isscalar(rate):
        r = np.full(grid.n_steps, float(rate))
    else:
        r = np.asarray(rate, dtype=float)
        if r.shape != (grid.n_steps,):
            raise InvalidInputError(
                f"rate array must have shape ({grid.n_steps},), got {r.shape}"
            )
        r = r.copy()
    if not np.all(np.isfinite(r)):
        raise InvalidInputError("rates must be finite")
    return r


@dataclasses.dataclass(frozen=True)
class Account:
    """A funding account B with piecewise-constant short rate.

    ``values[k]`` is B at grid node k with ``values[0] = 1`` and
    ``values[k+1] = values[k] * exp(rates[k] * dt)`` exactly.
    """

    label: str
    grid: TimeGrid
    rates: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float)
        if r.shape != (self.grid.n_steps,):
            raise InvalidInputError("rates shape does not match grid")
        object.__setattr__(self, "rates", r)

    @cached_property
    def factors(self) -> np.ndarray:
        """Per-step growth factors exp(r_k dt)."""
        return np.exp(self.rates * self.grid.dt)

    @cached_property
    def values(self) -> np.ndarray:
        v = np.empty(self.grid.n_steps + 1)
        v[0] = 1.0
        np.cumprod(self.factors, out=v[1:])
        return v

    def rate_at(self, k: int) -> float:
        return float(self.rates[k])

    def __repr__(self):
        lo, hi = self.rates.min(), self.rates.max()
        span = f"{lo:g}" if lo == hi else f"{lo:g}..{hi:g}"
        return f"Account({self.label!r}, r={span})"


def build_account(rate: RateLike, grid: TimeGrid, label: str = "B") -> Account:
    """Build a funding account from a rate specification.

    Parameters
    ----------
    rate:
        Scalar, per-step array of length ``grid.n_steps``, or a callable
        evaluated at the left endpoint of each interval.  Rates must be
        piecewise constant on grid intervals; a callable that varies inside
        an interval is silently sampled at the left endpoint.
    grid:
        The time grid the account lives on.
    label:
        Name used in reports and error messages.
    """
    return Account(label=label, grid=grid, rates=_rates_on_grid(rate, grid))


@dataclasses.dataclass(frozen=True)
class AssetModel:
    """A risky asset: spot, lognormal dynamics, proportional dividend yield,
    and the account that funds positions in it."""

    index: int
    spot: float
    sigma: float
    funding: Account
    drift: float = 0.0
    dividend_yield: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.spot <= 0:
            raise InvalidInputError(f"asset {self.index}: spot must be positive")
        if self.sigma < 0:
            raise InvalidInputError(f"asset {self.index}: sigma must be nonnegative")
        if not self.label:
            object.__setattr__(self, "label", f"S{self.index}")


class Lattice:
    """Recombining product binomial lattice for up to three assets.

    Each asset moves by its own independent binomial factor ``u_i = e^{sigma_i
    sqrt(dt)}``, ``d_i = 1/u_i``.  Node coordinates at level k are up-move
    counts ``j_i`` in 0..k, so asset i at node j is ``spot_i u_i^j d_i^(k-j)``.

    The lattice stores one *state space* (nodes plus predictable dividend
    increments) and derives a martingale branching measure for any discount
    account on demand via :meth:`measure_for`.  The measure used at
    construction (each asset discounted by ``discount`` or by its own funding
    account) is cached as :attr:`q`.
    """

    def __init__(self, grid: TimeGrid, assets: Sequence[AssetModel], discount: Account | None = None):
        if not assets:
            raise InvalidInputError("lattice needs at least one asset")
        if len(assets) > MAX_LATTICE_ASSETS:
            raise InvalidInputError(
                f"lattices support at most {MAX_LATTICE_ASSETS} assets, got {len(assets)}; "
                "use make_scenarios for higher-dimensional models"
            )
        self.grid = grid
        self.assets = tuple(assets)
        for a in self.assets:
            if not a.funding.grid.same_as(grid):
                raise InvalidInputError(f"asset {a.label}: funding account grid differs from lattice grid")
            if a.sigma <= 0:
                raise CalibrationError(
                    f"asset {a.label}: sigma must be strictly positive on a lattice "
                    "(deterministic assets belong in a ScenarioSet)"
                )
        if discount is not None and not discount.grid.same_as(grid):
            raise InvalidInputError("discount account grid differs from lattice grid")
        self.discount = discount

        dt = grid.dt
        sq = math.sqrt(dt)
        self.u = np.array([math.exp(a.sigma * sq) for a in self.assets])
        self.d = 1.0 / self.u

        n, d_assets = grid.n_steps, len(self.assets)
        self.adiv = np.empty((d_assets, n))
        self.q = np.empty((d_assets, n))
        for i, a in enumerate(self.assets):
            ref = discount if discount is not None else a.funding
            f = ref.factors
            g = np.exp((ref.rates - a.dividend_yield) * dt)
            # predictable dividend coefficient; kappa S dt to first order,
            # chosen so the discounted cum-dividend price is exactly a martingale
            self.adiv[i] = f - g
            self.q[i] = self._feasible_q(g, self.u[i], self.d[i], a.label, ref.label)
        self._price_cache: dict[tuple[int, int], np.ndarray] = {}

    @staticmethod
    def _feasible_q(growth: np.ndarray, u: float, d: float, asset: str, account: str) -> np.ndarray:
        q = (growth - d) / (u - d)
        bad = np.nonzero((q <= 0.0) | (q >= 1.0))[0]
        if bad.size:
            k = int(bad[0])
            raise CalibrationError(
                f"asset {asset} vs account {account}: branching probability q={q[k]:.6g} "
                f"outside (0,1) at step {k}; shrink dt or check rates/volatility",
                step=k,
                q=float(q[k]),
            )
        return q

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    def calibration_account(self, i: int) -> Account:
        return self.discount if self.discount is not None else self.assets[i].funding

    def level_prices(self, k: int, i: int = 0) -> np.ndarray:
        """Asset i prices at level k, indexed by up-move count (length k+1)."""
        key = (k, i)
        cached = self._price_cache.get(key)
        if cached is not None:
            return cached
        j = np.arange(k + 1)
        logu = math.log(self.u[i])
        vals = self.assets[i].spot * np.exp((2 * j - k) * logu)
        self._price_cache[key] = vals
        return vals

    def level_grid(self, k: int) -> tuple[np.ndarray, ...]:
        """Per-asset price arrays broadcastable to the level-k node tensor."""
        d = self.n_assets
        out = []
        for i in range(d):
            shape = [1] * d
            shape[i] = k + 1
            out.append(self.level_prices(k, i).reshape(shape))
        return tuple(out)

    def measure_for(self, account: Account) -> np.ndarray:
        """Branching probabilities making each discounted cum-dividend price a
        martingale when discounting by ``account``.

        The dividend increments are part of the state space and do not change;
        only the per-step probabilities do.
        """
        if not account.grid.same_as(self.grid):
            raise InvalidInputError("account grid differs from lattice grid")
        q = np.empty_like(self.q)
        for i, a in enumerate(self.assets):
            growth = account.factors - self.adiv[i]
            q[i] = self._feasible_q(growth, self.u[i], self.d[i], a.label, account.label)
        return q

    def expect(self, values: np.ndarray, k: int, q: np.ndarray | None = None) -> np.ndarray:
        """One-step conditional expectation: level k+1 node tensor -> level k.

        ``values`` has shape (k+2,) * n_assets; axis i is asset i's up-count.
        """
        if q is None:
            q = self.q
        out = np.asarray(values, dtype=float)
        for i in range(self.n_assets):
            qi = q[i, k]
            up = np.take(out, np.arange(1, k + 2), axis=i)
            dn = np.take(out, np.arange(0, k + 1), axis=i)
            out = qi * up + (1.0 - qi) * dn
        return out

    def terminal_tensor(self, fn: Callable[..., np.ndarray]) -> np.ndarray:
        """Evaluate ``fn(S1, ..., Sd)`` on the terminal level as a node tensor."""
        grids = self.level_grid(self.n_steps)
        return np.broadcast_to(np.asarray(fn(*grids), dtype=float), (self.n_steps + 1,) * self.n_assets).copy()


def calibrate_lattice(
    assets: AssetModel | Sequence[AssetModel],
    grid: TimeGrid,
    discount: Account | None = None,
) -> Lattice:
    """Calibrate a recombining binomial lattice to one or more assets.

    Parameters
    ----------
    assets:
        One asset or a sequence of up to three.  Each asset gets an
        independent binomial factor.
    grid:
        Time grid shared by all accounts involved.
    discount:
        Reference account for calibration.  ``None`` calibrates each asset
        against its own funding account (the basic martingale measure); pass a
        common cash account to calibrate against it instead (lending-rate or
        borrowing-rate measures for the nonlinear solver, or an auxiliary
        discount rate for measure-change checks).

    Returns
    -------
    Lattice
        With per-step branching probabilities ``q = (g - d)/(u - d)`` where g
        is the per-step growth factor implied by the reference account net of
        dividends.  Infeasible q raises :class:`CalibrationError` naming the
        offending step.
    """
    if isinstance(assets, AssetModel):
        assets = [assets]
    return Lattice(grid, assets, discount=discount)


def cum_dividend_price(
    prices: np.ndarray,
    dividends: np.ndarray,
    account: Account,
) -> np.ndarray:
    """Discounted cum-dividend price along a path (or batch of paths).

    ``prices`` holds node values (..., n_steps+1); ``dividends`` holds the
    increment paid over each interval (..., n_steps), i.e. the dividend dated
    t_{k+1} sits at index k.  Returns S/B plus the running sum of dividends
    discounted at their payment dates.
    """
    prices = np.asarray(prices, dtype=float)
    dividends = np.asarray(dividends, dtype=float)
    n = account.grid.n_steps
    if prices.shape[-1] != n + 1 or dividends.shape[-1] != n:
        raise InvalidInputError("path shapes do not match the account grid")
    out = prices / account.values
    out[..., 1:] += np.cumsum(dividends / account.values[1:], axis=-1)
    return out


# --- node-wise martingale checks -------------------------------------------------

@dataclasses.dataclass
class LatticeProcessCheck:
    """One-step conditional-drift check for a process on a lattice.

    ``levels[k]`` is the node tensor of the process at level k.  Optional
    ``parent_increments[k]`` is a predictable increment paid at k+1 (a node
    tensor at level k, e.g. a dividend), and ``compensator[k]`` a predictable
    drift correction, both added to the conditional expectation.  The residual
    at level k is ``E_q[X_{k+1}] + incr_k + comp_k - X_k``.
    """

    lattice: Lattice
    levels: list[np.ndarray]
    q: np.ndarray | None = None
    parent_increments: list[np.ndarray] | None = None
    compensator: list[np.ndarray] | None = None
    name: str = "process"

    def residual(self, k: int) -> np.ndarray:
        exp = self.lattice.expect(self.levels[k + 1], k, q=self.q)
        r = exp - self.levels[k]
        if self.parent_increments is not None:
            r = r + self.parent_increments[k]
        if self.compensator is not None:
            r = r + self.compensator[k]
        return r


def martingale_residual(check: LatticeProcessCheck) -> float:
    """Largest absolute one-step conditional drift over all nodes and steps."""
    worst = 0.0
    for k in range(check.lattice.n_steps):
        worst = max(worst, float(np.max(np.abs(check.residual(k)))))
    return worst


def discounted_price_check(lattice: Lattice, i: int = 0, account: Account | None = None) -> LatticeProcessCheck:
    """Check object for the discounted cum-dividend price of asset i.

    The cumulative dividend sum is path dependent, so the check is stated in
    increment form: levels hold the ex-dividend part S/B and each step adds
    the dividend paid at k+1 discounted at its payment date.
    """
    ref = account if account is not None else lattice.calibration_account(i)
    q = None if account is None else lattice.measure_for(ref)
    if lattice.n_assets != 1:
        # per-asset checks ride on that asset's own axis; other factors drop
        # out of the conditional expectation by independence
        raise InvalidInputError("discounted_price_check expects a single-asset lattice; "
                                "check assets one at a time")
    levels = [lattice.level_prices(k, i) / ref.values[k] for k in range(lattice.n_steps + 1)]
    incr = [
        lattice.adiv[i, k] * lattice.level_prices(k, i) / ref.values[k + 1]
        for k in range(lattice.n_steps)
    ]
    return LatticeProcessCheck(
        lattice, levels, q=q, parent_increments=incr, name=f"Shat({lattice.assets[i].label})"
    )


def price_gain_check(lattice: Lattice, i: int = 0, account: Account | None = None) -> LatticeProcessCheck:
    """Check object for the price-gain-net-of-funding process of asset i.

    Its increment over a step is the price change plus the dividend minus the
    funding cost of the position, written against the reference account.  The
    process itself is path dependent; only increments matter for the drift
    check, so the levels are zero and the increment is folded into the
    expectation of the child values.
    """
    if lattice.n_assets != 1:
        raise InvalidInputError("price_gain_check expects a single-asset lattice")
    ref = account if account is not None else lattice.calibration_account(i)
    q = None if account is None else lattice.measure_for(ref)
    # the drift of the increment S_{k+1} - S_k f + adiv S_k must vanish;
    # fold the predictable part into parent_increments so the generic
    # residual E[X_{k+1}] + incr - X_k evaluates exactly that drift
    levels = [lattice.level_prices(k, i) for k in range(lattice.n_steps + 1)]
    incr = []
    for k in range(lattice.n_steps):
        s = lattice.level_prices(k, i)
        incr.append(s * (1.0 - ref.factors[k] + lattice.adiv[i, k]))
    return LatticeProcessCheck(lattice, levels, q=q, parent_increments=incr,
                               name=f"K({lattice.assets[i].label})")


# --- scenario generation ----------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class ScenarioSet:
    """A batch of simulated (or user-supplied) asset paths on a grid.

    ``prices`` has shape (n_paths, n_steps+1, n_assets); ``dividends`` holds
    per-interval increments, shape (n_paths, n_steps, n_assets).  ``weights``
    are path probabilities and are only present when the set exhausts a
    discrete state space; sampled sets leave them None.
    """

    grid: TimeGrid
    assets: tuple[AssetModel, ...]
    prices: np.ndarray
    dividends: np.ndarray
    seed: int | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        n = self.grid.n_steps
        p = np.asarray(self.prices, dtype=float)
        d = np.asarray(self.dividends, dtype=float)
        if p.ndim != 3 or p.shape[1] != n + 1 or p.shape[2] != len(self.assets):
            raise InvalidInputError(f"prices must have shape (n_paths, {n + 1}, {len(self.assets)})")
        if d.shape != (p.shape[0], n, p.shape[2]):
            raise InvalidInputError(f"dividends must have shape ({p.shape[0]}, {n}, {p.shape[2]})")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(d))):
            raise InvalidInputError("scenario paths must be finite")
        object.__setattr__(self, "prices", p)
        object.__setattr__(self, "dividends", d)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (p.shape[0],):
                raise InvalidInputError(f"weights must have shape ({p.shape[0]},)")
            if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
                raise InvalidInputError("weights must be nonnegative and sum to 1")
            object.__setattr__(self, "weights", w)

    @property
    def n_paths(self) -> int:
        return self.prices.shape[0]

    @property
    def is_exhaustive(self) -> bool:
        return self.weights is not None

    @classmethod
    def from_paths(
        cls,
        grid: TimeGrid,
        assets: Sequence[AssetModel],
        prices: np.ndarray,
        dividends: np.ndarray | None = None,
        weights: np.ndarray | Sequence[float] | None = None,
    ) -> "ScenarioSet":
        """Wrap user-supplied paths (deterministic bonds, negative-price
        assets, hand-built examples).  Dividends default to zero.  Pass
        ``weights`` when the paths exhaust the model's state space (a single
        path of a deterministic market has ``weights=[1.0]``)."""
        p = np.asarray(prices, dtype=float)
        if p.ndim == 2:
            p = p[:, :, None]
        if dividends is None:
            dividends = np.zeros((p.shape[0], grid.n_steps, p.shape[2]))
        w = None if weights is None else np.asarray(weights, dtype=float)
        return cls(grid=grid, assets=tuple(assets), prices=p,
                   dividends=np.asarray(dividends, dtype=float), weights=w)


def make_scenarios(
    assets: AssetModel | Sequence[AssetModel],
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    correlation: np.ndarray | None = None,
) -> ScenarioSet:
    """Simulate exact lognormal paths at the grid dates.

    Sampling uses the exponential solution per step (no Euler bias in the
    marginals) and a PCG64 generator, so paths are bit-identical for a fixed
    seed.  Dividend increments use the left-point rule ``kappa S_k dt``.

    Parameters
    ----------
    correlation:
        Optional d x d instantaneous correlation matrix for the driving
        noises; must be symmetric positive definite with unit diagonal.
    """
    if isinstance(assets, AssetModel):
        assets = [assets]
    assets = tuple(assets)
    d = len(assets)
    if n_paths < 1:
        raise InvalidInputError("n_paths must be positive")
    if correlation is None:
        chol = np.eye(d)
    else:
        c = np.asarray(correlation, dtype=float)
        if c.shape != (d, d) or not np.allclose(c, c.T, atol=1e-12):
            raise InvalidInputError("correlation must be a symmetric d x d matrix")
        if not np.allclose(np.diag(c), 1.0, atol=1e-12):
            raise InvalidInputError("correlation must have unit diagonal")
        try:
            chol = np.linalg.cholesky(c)
        except np.linalg.LinAlgError as exc:
            raise InvalidInputError(f"correlation matrix is not positive definite: {exc}") from None

    n = grid.n_steps
    dt = grid.dt
    rng = np.random.default_rng(np.random.PCG64(seed))
    z = rng.standard_normal((n_paths, n, d))
    if d > 1 or correlation is not None:
        z = z @ chol.T

    prices = np.empty((n_paths, n + 1, d))
    for i, a in enumerate(assets):
        growth = (a.drift - 0.5 * a.sigma**2) * dt + a.sigma * math.sqrt(dt) * z[:, :, i]
        logpath = np.concatenate(
            [np.zeros((n_paths, 1)), np.cumsum(growth, axis=1)], axis=1
        )
        prices[:, :, i] = a.spot * np.exp(logpath)
    dividends = np.empty((n_paths, n, d))
    for i, a in enumerate(assets):
        dividends[:, :, i] = a.dividend_yield * prices[:, :-1, i] * dt
    return ScenarioSet(grid=grid, assets=assets, prices=prices, dividends=dividends, seed=seed)


def _paths_from_moves(lattice: Lattice, moves: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Price and dividend paths from per-step up/down indicators.

    ``moves`` has shape (n_paths, n_steps, d) with 1 for an up move.  Prices
    land exactly on lattice nodes; the dividend over (t_k, t_{k+1}] is the
    lattice's predictable increment adiv_k * S_k.
    """
    n_paths, n, d = moves.shape
    factors = np.where(moves.astype(bool), lattice.u, lattice.d)
    prices = np.empty((n_paths, n + 1, d))
    prices[:, 0, :] = [a.spot for a in lattice.assets]
    np.multiply(prices[:, :1, :], np.cumprod(factors, axis=1), out=prices[:, 1:, :])
    dividends = lattice.adiv.T[None, :, :] * prices[:, :-1, :]
    return prices, dividends


def lattice_scenarios(
    lattice: Lattice,
    account: Account | None = None,
    max_paths: int = 1 << 18,
) -> ScenarioSet:
    """Exhaustively enumerate every path through a lattice, with probabilities.

    The result carries ``weights``: the product of branching probabilities
    under the lattice's calibration measure (or under ``measure_for(account)``
    when one is given), so path-space expectations reproduce node-space
    backward induction exactly.  Path m encodes its moves base-2^d with step 0
    in the most significant digit, so paths sharing a prefix are contiguous.

    Only viable for small lattices: (2^d)^n_steps paths.  Anything above
    ``max_paths`` raises; use :func:`sample_lattice_paths` instead.
    """
    n, d = lattice.n_steps, lattice.n_assets
    total = (1 << d) ** n
    if total > max_paths:
        raise InvalidInputError(
            f"exhaustive enumeration needs {total} paths (> {max_paths}); "
            "use sample_lattice_paths for a lattice this deep"
        )
    q = lattice.q if account is None else lattice.measure_for(account)

    m = np.arange(total, dtype=np.int64)
    digits = (m[:, None] >> (d * np.arange(n - 1, -1, -1, dtype=np.int64))[None, :]) & ((1 << d) - 1)
    moves = (digits[:, :, None] >> np.arange(d, dtype=np.int64)[None, None, :]) & 1

    prices, dividends = _paths_from_moves(lattice, moves)
    probs = np.where(moves.astype(bool), q.T[None, :, :], 1.0 - q.T[None, :, :])
    weights = probs.reshape(total, n * d).prod(axis=1)
    weights = weights / weights.sum()
    return ScenarioSet(
        grid=lattice.grid, assets=lattice.assets, prices=prices,
        dividends=dividends, weights=weights,
    )


def sample_lattice_paths(
    lattice: Lattice,
    n_paths: int,
    seed: int,
    account: Account | None = None,
) -> ScenarioSet:
    """Sample paths through a lattice under its branching measure.

    Prices land exactly on lattice nodes, so pathwise identities that hold
    node-wise (drift certificates, replication checks) can be probed on deep
    lattices where exhaustive enumeration is impossible.  No weights are
    attached: a sampled set cannot certify a property over all paths.
    """
    if n_paths < 1:
        raise InvalidInputError("n_paths must be positive")
    n, d = lattice.n_steps, lattice.n_assets
    q = lattice.q if account is None else lattice.measure_for(account)
    rng = np.random.default_rng(np.random.PCG64(seed))
    moves = (rng.random((n_paths, n, d)) < q.T[None, :, :]).astype(np.int64)
    prices, dividends = _paths_from_moves(lattice, moves)
    return ScenarioSet(
        grid=lattice.grid, assets=lattice.assets, prices=prices,
        dividends=dividends, seed=seed,
    )
