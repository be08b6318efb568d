"""Scenario-file schema and object builders.

A scenario file is one TOML document describing a market (accounts and
assets), a time grid, a contract, optional margin terms, a funding
convention, a trading strategy, solver settings and output settings.  The
schema is strict: unknown keys are rejected, and every violation is reported
with the dotted path of the offending field.

``load_config`` parses and validates; the ``build_*`` helpers turn the
validated document into engine objects.  A full example lives in the
repository's ``configs/`` directory.
"""

from __future__ import annotations

from typing import Literal

import numpy as np
import pydantic
import tomli

from .contracts import CollateralSpec, Contract, MarginAccounts, MarginConvention
from .errors import SchemaError
from .market import Account, AssetModel, Lattice, TimeGrid, build_account, calibrate_lattice
from .wealth import Basic, FundingConvention, PartialNetting, Strategy

__all__ = [
    "ScenarioConfig",
    "build_accounts",
    "build_assets",
    "build_collateral",
    "build_contract",
    "build_convention",
    "build_grid",
    "build_lattice",
    "build_strategy",
    "load_config",
    "parse_config",
]


class _Base(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")


class RateSegment(_Base):
    until: float
    rate: float


class AccountConfig(_Base):
    label: str
    rate: float | None = None
    segments: list[RateSegment] | None = None

    @pydantic.model_validator(mode="after")
    def _one_rate_form(self) -> "AccountConfig":
        if (self.rate is None) == (self.segments is None):
            raise ValueError("give exactly one of 'rate' and 'segments'")
        return self


class AssetConfig(_Base):
    index: int = pydantic.Field(ge=0)
    S0: float = pydantic.Field(gt=0)
    sigma: float = pydantic.Field(gt=0)
    mu: float = 0.0
    kappa: float = pydantic.Field(default=0.0, ge=0)
    funding_account: str
    label: str = ""


class MarketConfig(_Base):
    accounts: list[AccountConfig] = pydantic.Field(min_length=1)
    assets: list[AssetConfig] = []


class GridConfig(_Base):
    t0: float = 0.0
    T: float
    n_steps: int = pydantic.Field(ge=1)

    @pydantic.model_validator(mode="after")
    def _ordered(self) -> "GridConfig":
        if not self.T > self.t0:
            raise ValueError(f"need T > t0, got t0={self.t0}, T={self.T}")
        return self


class FlowConfig(_Base):
    t: float
    amount: float


class ContractConfig(_Base):
    kind: Literal["custom", "call", "put", "forward"] = "custom"
    position: Literal["liability", "asset"] = "liability"
    strike: float | None = None
    maturity: float | None = None
    asset: int = 0
    p: float = 0.0
    flows: list[FlowConfig] = []

    @pydantic.model_validator(mode="after")
    def _claim_fields(self) -> "ContractConfig":
        if self.kind != "custom" and self.strike is None:
            raise ValueError(f"{self.kind} contract needs a strike")
        return self


class CollateralConfig(_Base):
    mode: Literal["rehypothecated_cash", "haircut"]
    posted_interest: str
    received_interest: str
    posting_funding: str | None = None
    delta1: float = 0.0
    delta2: float = 0.0
    path: list[float] | None = None

    @pydantic.model_validator(mode="after")
    def _mode_fields(self) -> "CollateralConfig":
        if self.mode == "rehypothecated_cash" and self.path is None:
            raise ValueError("rehypothecated_cash needs an explicit node path")
        if self.mode == "haircut" and self.path is not None:
            raise ValueError("haircut collateral is endogenous; drop 'path'")
        return self


class ConventionConfig(_Base):
    kind: Literal["basic", "partial_netting"] = "basic"
    cash: str | None = None
    lend: str | None = None
    borrow: str | None = None
    asset_borrow: list[str] = []

    @pydantic.model_validator(mode="after")
    def _kind_fields(self) -> "ConventionConfig":
        if self.kind == "partial_netting" and (self.lend is None or self.borrow is None):
            raise ValueError("partial_netting needs 'lend' and 'borrow'")
        return self


class StrategyConfig(_Base):
    kind: Literal["zero", "hold", "random"] = "zero"
    units: list[float] = []
    count: int = pydantic.Field(default=20, ge=1)
    scale: float = pydantic.Field(default=1.0, gt=0)
    seed: int = 7


class SolverConfig(_Base):
    method: Literal["linear", "fully_collateralized", "bsde", "endogenous"] = "linear"
    x: float = 0.0
    tol: float = pydantic.Field(default=1e-12, gt=0)
    max_iterations: int = pydantic.Field(default=50, ge=1)
    seed: int = 11
    n_paths: int = pydantic.Field(default=512, ge=1)
    collateral_account: str | None = None


class OutputConfig(_Base):
    format: Literal["json", "csv", "both"] = "both"
    out_dir: str = "out"


class ScenarioConfig(_Base):
    market: MarketConfig
    grid: GridConfig
    contract: ContractConfig = ContractConfig()
    collateral: CollateralConfig | None = None
    convention: ConventionConfig = ConventionConfig()
    strategy: StrategyConfig = StrategyConfig()
    solver: SolverConfig = SolverConfig()
    output: OutputConfig = OutputConfig()


def _loc_path(loc: tuple) -> str:
    parts: list[str] = []
    for item in loc:
        if isinstance(item, int):
            parts[-1] = f"{parts[-1]}[{item}]" if parts else f"[{item}]"
        else:
            parts.append(str(item))
    return ".".join(parts)


def parse_config(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except pydantic.ValidationError as exc:
        first = exc.errors()[0]
        path = _loc_path(tuple(first["loc"]))
        raise SchemaError(f"{path}: {first['msg']}", path=path) from exc


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise SchemaError(f"{path}: not valid TOML: {exc}", path=path) from exc
    return parse_config(data)


# ---------------------------------------------------------------------------
# builders


def build_grid(cfg: ScenarioConfig) -> TimeGrid:
    return TimeGrid(cfg.grid.t0, cfg.grid.T, cfg.grid.n_steps)


def _segment_rates(segments: list[RateSegment], grid: TimeGrid) -> np.ndarray:
    prev = grid.t0
    rates = np.empty(grid.n_steps)
    filled = 0
    for seg in segments:
        if seg.until <= prev:
            raise SchemaError(
                f"segment boundaries must increase, got until={seg.until}",
                path="market.accounts.segments",
            )
        while filled < grid.n_steps and grid.times[filled] < seg.until - 1e-12:
            rates[filled] = seg.rate
            filled += 1
        prev = seg.until
    if filled < grid.n_steps:
        raise SchemaError(
            f"rate segments end at {prev}, grid runs to {grid.T}",
            path="market.accounts.segments",
        )
    return rates


def build_accounts(cfg: ScenarioConfig, grid: TimeGrid) -> dict[str, Account]:
    out: dict[str, Account] = {}
    for acc in cfg.market.accounts:
        if acc.label in out:
            raise SchemaError(f"duplicate account label {acc.label!r}",
                              path="market.accounts")
        if acc.rate is not None:
            out[acc.label] = build_account(acc.rate, grid, label=acc.label)
        else:
            out[acc.label] = Account(acc.label, grid, _segment_rates(acc.segments, grid))
    return out


def _account(accounts: dict[str, Account], label: str, where: str) -> Account:
    if label not in accounts:
        raise SchemaError(f"unknown account {label!r}", path=where)
    return accounts[label]


def build_assets(cfg: ScenarioConfig, accounts: dict[str, Account]) -> list[AssetModel]:
    out = []
    for i, a in enumerate(cfg.market.assets):
        fund = _account(accounts, a.funding_account, f"market.assets[{i}].funding_account")
        out.append(AssetModel(index=a.index, spot=a.S0, sigma=a.sigma, funding=fund,
                              drift=a.mu, dividend_yield=a.kappa, label=a.label))
    return out


def build_lattice(cfg: ScenarioConfig, grid: TimeGrid,
                  accounts: dict[str, Account]) -> Lattice:
    return calibrate_lattice(build_assets(cfg, accounts), grid)


def _claim_payoff(cfg: ContractConfig):
    sign = -1.0 if cfg.position == "liability" else 1.0
    k, a = cfg.strike, cfg.asset
    if cfg.kind == "call":
        return lambda *s: sign * np.maximum(s[a] - k, 0.0)
    if cfg.kind == "put":
        return lambda *s: sign * np.maximum(k - s[a], 0.0)
    return lambda *s: sign * (s[a] - k)


def build_contract(cfg: ScenarioConfig) -> Contract:
    c = cfg.contract
    flows: list[tuple[float, object]] = [(f.t, f.amount) for f in c.flows]
    if c.kind != "custom":
        t = c.maturity if c.maturity is not None else cfg.grid.T
        flows.append((t, _claim_payoff(c)))
    return Contract.of(p=c.p, flows=flows, label=c.kind)


def build_convention(cfg: ScenarioConfig, accounts: dict[str, Account],
                     n_assets: int) -> FundingConvention:
    conv = cfg.convention
    if conv.kind == "basic":
        label = conv.cash if conv.cash is not None else cfg.market.accounts[0].label
        return Basic(cash=_account(accounts, label, "convention.cash"))
    lend = _account(accounts, conv.lend, "convention.lend")
    borrow = _account(accounts, conv.borrow, "convention.borrow")
    if conv.asset_borrow:
        fins = tuple(_account(accounts, lbl, "convention.asset_borrow")
                     for lbl in conv.asset_borrow)
    else:
        fins = tuple(lend for _ in range(n_assets))
    return PartialNetting(lend, borrow, fins)


def build_collateral(cfg: ScenarioConfig, accounts: dict[str, Account],
                     grid: TimeGrid) -> CollateralSpec | None:
    col = cfg.collateral
    if col is None:
        return None
    ma = MarginAccounts(
        posted_interest=_account(accounts, col.posted_interest,
                                 "collateral.posted_interest"),
        received_interest=_account(accounts, col.received_interest,
                                   "collateral.received_interest"),
        posting_funding=(None if col.posting_funding is None else
                         _account(accounts, col.posting_funding,
                                  "collateral.posting_funding")),
    )
    if col.mode == "haircut":
        return CollateralSpec.with_haircut(col.delta1, col.delta2,
                                           MarginConvention.CASH_REHYPOTHECATED, ma)
    path = np.asarray(col.path, dtype=float)
    if path.shape != (grid.n_steps + 1,):
        raise SchemaError(
            f"collateral.path needs {grid.n_steps + 1} node values, got {path.size}",
            path="collateral.path",
        )
    return CollateralSpec.exogenous(path, MarginConvention.CASH_REHYPOTHECATED, ma)


def build_strategy(cfg: ScenarioConfig, n_assets: int) -> Strategy:
    s = cfg.strategy
    if s.kind == "zero":
        return lambda k, prices: np.zeros((prices.shape[0], n_assets))
    if s.kind == "hold":
        units = np.asarray(s.units, dtype=float)
        if units.shape != (n_assets,):
            raise SchemaError(f"strategy.units needs {n_assets} entries",
                              path="strategy.units")
        return lambda k, prices: np.broadcast_to(units, (prices.shape[0], n_assets))
    from .arbitrage import random_strategy_family

    spots = [a.S0 for a in cfg.market.assets]
    fam = random_strategy_family(
        TimeGrid(cfg.grid.t0, cfg.grid.T, cfg.grid.n_steps), n_assets, 1,
        seed=s.seed, scale=s.scale, spots=spots or None)
    return fam[0]
