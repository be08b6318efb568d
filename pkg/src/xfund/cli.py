"""Command-line interface.

Five subcommands: ``price`` (value the configured contract), ``simulate``
(run the wealth engine forward), ``check-arbitrage`` (scan a strategy family
for a witness), ``adjustments`` (funding-cost comparison demo), and
``validate-paper`` (the full validation suite).

Exit codes: 0 success, 1 validation-suite failure, 2 schema violation
(reported with the offending field path), 3 numeric failure (reported with
step context when available).  For a fixed config and seed every artifact is
byte-identical across runs; timing information goes to the console only.
"""

from __future__ import annotations

import csv
import functools
import json
import math
import os
import sys
import time

import click
import numpy as np

from .adjustments import (
    contract_funding_adjustment,
    partial_funding_adjustment,
    redundancy_example,
    total_funding_adjustment,
)
from .arbitrage import detect_arbitrage, random_strategy_family
from .bsde import price_endogenous_collateral, price_partial_netting
from .config import (
    ScenarioConfig,
    build_accounts,
    build_assets,
    build_collateral,
    build_contract,
    build_convention,
    build_grid,
    build_lattice,
    build_strategy,
    load_config,
)
from .contracts import Contract
from .errors import InvalidInputError, SchemaError, XfundError
from .market import TimeGrid, lattice_scenarios, make_scenarios, sample_lattice_paths
from .pricing import price_fully_collateralized, price_linear
from .reports import emit_report, summary
from .validation import CHECKS, run_suite
from .wealth import Basic, PartialNetting, evolve_wealth, self_financing_residual


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SchemaError as exc:
            click.echo(f"schema error: {exc}", err=True)
            sys.exit(2)
        except XfundError as exc:
            ctx = ""
            step = getattr(exc, "step", None)
            if step is not None:
                ctx = f" (step {step})"
            click.echo(f"{type(exc).__name__}: {exc}{ctx}", err=True)
            sys.exit(3)

    return wrapper


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _emit(out_dir: str, stem: str, fmt: str, payload: dict,
          header: list[str] | None = None, rows=None) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        p = os.path.join(out_dir, f"{stem}.json")
        _write_json(p, payload)
        written.append(p)
    if fmt in ("csv", "both") and header is not None:
        p = os.path.join(out_dir, f"{stem}.csv")
        _write_csv(p, header, rows or [])
        written.append(p)
    for p in written:
        click.echo(f"wrote {p}")
    return written


def _common_overrides(cfg: ScenarioConfig, seed, steps, tol, out, fmt) -> None:
    if seed is not None:
        cfg.solver.seed = seed
    if steps is not None:
        cfg.grid.n_steps = steps
    if tol is not None:
        cfg.solver.tol = tol
    if out is not None:
        cfg.output.out_dir = out
    if fmt is not None:
        cfg.output.format = fmt


def _config_options(fn):
    for opt in reversed([
        click.option("--config", "config_path", required=True,
                     type=click.Path(exists=True, dir_okay=False),
                     help="Scenario file (TOML)."),
        click.option("--seed", type=int, default=None, help="Override solver seed."),
        click.option("--steps", type=int, default=None, help="Override grid steps."),
        click.option("--tol", type=float, default=None, help="Override solver tolerance."),
        click.option("--out", type=click.Path(file_okay=False), default=None,
                     help="Output directory."),
        click.option("--format", "fmt", type=click.Choice(["json", "csv", "both"]),
                     default=None, help="Artifact format."),
    ]):
        fn = opt(fn)
    return fn


@click.group()
def main() -> None:
    """Valuation and hedging under funding costs and collateralization."""


# ---------------------------------------------------------------------------
# price


def _claim_from_contract(contract: Contract):
    terminal = [f for f in contract.flows if callable(f.amount)]
    if len(terminal) != 1 or len(contract.flows) != 1 or contract.p != 0.0:
        raise InvalidInputError(
            "this method prices a single terminal claim; give a call/put/forward "
            "contract with no extra flows"
        )
    return terminal[0].amount


@main.command()
@_config_options
@click.option("--method", type=click.Choice(
    ["linear", "fully_collateralized", "bsde", "endogenous"]), default=None,
    help="Override solver method.")
@_handle_errors
def price(config_path, seed, steps, tol, out, fmt, method) -> None:
    """Value the configured contract and dump the node values."""
    cfg = load_config(config_path)
    _common_overrides(cfg, seed, steps, tol, out, fmt)
    if method is not None:
        cfg.solver.method = method

    t0 = time.perf_counter()
    grid = build_grid(cfg)
    accounts = build_accounts(cfg, grid)
    lattice = build_lattice(cfg, grid, accounts)
    contract = build_contract(cfg)
    spec = build_collateral(cfg, accounts, grid)
    m = cfg.solver.method

    if m == "linear":
        conv = build_convention(cfg, accounts, lattice.n_assets)
        cash = conv.cash if isinstance(conv, Basic) else conv.lend
        result = price_linear(contract, lattice, cash, collateral=spec)
    elif m == "fully_collateralized":
        if cfg.solver.collateral_account is None:
            raise SchemaError("fully_collateralized needs solver.collateral_account",
                              path="solver.collateral_account")
        coll = accounts.get(cfg.solver.collateral_account)
        if coll is None:
            raise SchemaError(f"unknown account {cfg.solver.collateral_account!r}",
                              path="solver.collateral_account")
        result = price_fully_collateralized(_claim_from_contract(contract), lattice, coll)
    elif m == "bsde":
        conv = build_convention(cfg, accounts, lattice.n_assets)
        if not isinstance(conv, PartialNetting):
            raise SchemaError("bsde pricing needs convention.kind = 'partial_netting'",
                              path="convention.kind")
        result = price_partial_netting(
            contract, conv, cfg.solver.x, lattice, collateral=spec,
            tol=cfg.solver.tol, max_iterations=cfg.solver.max_iterations)
    else:
        if cfg.collateral is None or cfg.collateral.mode != "haircut":
            raise SchemaError("endogenous pricing needs collateral.mode = 'haircut'",
                              path="collateral.mode")
        rate_acct = accounts[cfg.collateral.posted_interest]
        result = price_endogenous_collateral(
            _claim_from_contract(contract), cfg.collateral.delta1,
            cfg.collateral.delta2, rate_acct, cfg.solver.x, lattice)
    runtime = time.perf_counter() - t0

    payload = {
        "method": result.method,
        "price": result.initial,
        "n_steps": grid.n_steps,
        "contract": contract.label,
        "diagnostics": {k: v for k, v in sorted(result.diagnostics.items())},
    }
    rows = []
    for k in range(grid.n_steps + 1):
        level = np.atleast_1d(np.asarray(result.levels[k], dtype=float))
        hedge = None
        if result.xi_levels is not None and k < len(result.xi_levels):
            hedge = np.atleast_1d(np.asarray(result.xi_levels[k], dtype=float))
        for j in range(level.shape[0]):
            h = float(hedge[j]) if hedge is not None and j < hedge.shape[0] else math.nan
            rows.append((k, float(grid.times[k]), j, float(level[j]), h))
    _emit(cfg.output.out_dir, "price", cfg.output.format, payload,
          ["step", "t", "node", "value", "hedge"], rows)
    click.echo(f"price = {result.initial!r}  ({runtime:.2f}s)")


# ---------------------------------------------------------------------------
# simulate


@main.command()
@_config_options
@click.option("--paths", "n_paths", type=int, default=None,
              help="Override scenario path count.")
@_handle_errors
def simulate(config_path, seed, steps, tol, out, fmt, n_paths) -> None:
    """Evolve the configured strategy forward and dump the decomposition."""
    cfg = load_config(config_path)
    _common_overrides(cfg, seed, steps, tol, out, fmt)
    if n_paths is not None:
        cfg.solver.n_paths = n_paths

    t0 = time.perf_counter()
    grid = build_grid(cfg)
    accounts = build_accounts(cfg, grid)
    assets = build_assets(cfg, accounts)
    scen = make_scenarios(assets, grid, cfg.solver.n_paths, cfg.solver.seed)
    conv = build_convention(cfg, accounts, len(assets))
    contract = build_contract(cfg)
    spec = build_collateral(cfg, accounts, grid)
    strategy = build_strategy(cfg, len(assets))
    path = evolve_wealth(conv, strategy, contract, cfg.solver.x, scen,
                         collateral=spec)
    res = self_financing_residual(path)
    runtime = time.perf_counter() - t0

    payload = {
        "convention": path.convention_label,
        "x": cfg.solver.x,
        "n_paths": path.n_paths,
        "n_steps": grid.n_steps,
        "terminal_mean": float(np.mean(path.terminal)),
        "terminal_std": float(np.std(path.terminal)),
        "decomposition_gap": path.decomposition_gap(),
        "self_financing_residual": res.residual,
    }
    rows = []
    for p in range(path.n_paths):
        for k in range(grid.n_steps + 1):
            rows.append((
                p, k, float(grid.times[k]), float(path.wealth[p, k]),
                float(path.gains[p, k]), float(path.funding[p, k]),
                float(path.margin_carry[p, k]), float(path.flows[p, k]),
            ))
    _emit(cfg.output.out_dir, "simulate", cfg.output.format, payload,
          ["path", "step", "t", "V", "G", "F", "M", "A"], rows)
    click.echo(f"terminal mean = {payload['terminal_mean']!r}  ({runtime:.2f}s)")


# ---------------------------------------------------------------------------
# check-arbitrage


@main.command(name="check-arbitrage")
@_config_options
@click.option("--count", type=int, default=None, help="Override strategy count.")
@_handle_errors
def check_arbitrage(config_path, seed, steps, tol, out, fmt, count) -> None:
    """Scan a randomized strategy family for an arbitrage witness."""
    cfg = load_config(config_path)
    _common_overrides(cfg, seed, steps, tol, out, fmt)
    if count is not None:
        cfg.strategy.count = count

    t0 = time.perf_counter()
    grid = build_grid(cfg)
    accounts = build_accounts(cfg, grid)
    lattice = build_lattice(cfg, grid, accounts)
    conv = build_convention(cfg, accounts, lattice.n_assets)
    contract = build_contract(cfg)
    total = (1 << lattice.n_assets) ** grid.n_steps
    if total <= 4096:
        scen = lattice_scenarios(lattice)
    else:
        scen = sample_lattice_paths(lattice, cfg.solver.n_paths, cfg.solver.seed)
    fam = random_strategy_family(
        grid, lattice.n_assets, cfg.strategy.count, seed=cfg.strategy.seed,
        scale=cfg.strategy.scale, spots=[a.spot for a in lattice.assets])
    report = detect_arbitrage(conv, fam, contract, cfg.solver.x, scen)
    runtime = time.perf_counter() - t0

    payload = report.to_dict()
    payload["n_paths"] = scen.n_paths
    _emit(cfg.output.out_dir, "arbitrage", cfg.output.format, payload,
          ["key", "value"], sorted((k, repr(v)) for k, v in payload.items()))
    click.echo(f"outcome: {payload['outcome']}  ({runtime:.2f}s)")


# ---------------------------------------------------------------------------
# adjustments


@main.command()
@click.option("--rate", type=float, default=0.03, show_default=True,
              help="Cash rate of the generated market.")
@click.option("--horizon", type=float, default=1.0, show_default=True)
@click.option("--steps", type=int, default=250, show_default=True)
@click.option("--paths", "n_paths", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default="out",
              show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "both"]),
              default="both", show_default=True)
@_handle_errors
def adjustments(rate, horizon, steps, n_paths, seed, out, fmt) -> None:
    """Funding-cost comparison on the generated redundant-asset market.

    Emits per-date funding adjustments: total and pure (a hold strategy
    against its zero-wealth augmentation, same contract) and cross-contract
    (the same hedge financing an extra dated payment).
    """
    t0 = time.perf_counter()
    grid = TimeGrid(0.0, horizon, steps)
    ex = redundancy_example(rate, grid, n_paths=n_paths, seed=seed)

    def hold(k, p):
        units = np.zeros((p.shape[0], 3))
        units[:, 0] = 1.0
        return units

    def augmented(k, p):
        return hold(k, p) + ex.strategy(k, p)

    null = Contract(label="null")
    dated = Contract.of(flows=[(horizon / 2.0, -1.0)], label="dated_payment")
    x0 = float(ex.scenarios.prices[0, 0, 0])
    p_hold = evolve_wealth(Basic(ex.cash), hold, null, x0, ex.scenarios)
    p_aug = evolve_wealth(Basic(ex.cash), augmented, null, x0, ex.scenarios)
    p_dated = evolve_wealth(Basic(ex.cash), hold, dated, x0, ex.scenarios)

    # tfa = cfa - pfa: the augmented-vs-dated gap splits into the pure
    # strategy piece (same contract) and the pure contract piece (same
    # strategy); the identity is checked in the JSON payload.
    tfa = total_funding_adjustment(p_aug, p_dated)
    pfa = partial_funding_adjustment(p_hold, p_aug)
    cfa = contract_funding_adjustment(p_hold, p_dated)
    split_gap = float(np.max(np.abs(tfa.values + pfa.values - cfa.values)))
    runtime = time.perf_counter() - t0

    payload = {
        "rate": rate,
        "n_steps": steps,
        "n_paths": n_paths,
        "pfa_terminal_mean": float(np.mean(pfa.terminal)),
        "pfa_target": float(ex.rate_integral[-1]),
        "cfa_terminal_mean": float(np.mean(cfa.terminal)),
        "tfa_terminal_mean": float(np.mean(tfa.terminal)),
        "split_gap": split_gap,
        "cash_position_gap": pfa.cash_position_gap,
        "decomposition_caveat": pfa.decomposition_caveat,
    }
    rows = [
        (k, float(grid.times[k]), float(np.mean(tfa.values[:, k])),
         float(np.mean(pfa.values[:, k])), float(np.mean(cfa.values[:, k])))
        for k in range(steps + 1)
    ]
    _emit(out, "adjustments", fmt, payload,
          ["step", "t", "tfa", "pfa", "cfa"], rows)
    click.echo(f"PFA_T = {payload['pfa_terminal_mean']!r} "
               f"(target {payload['pfa_target']!r})  ({runtime:.2f}s)")


# ---------------------------------------------------------------------------
# validate-paper


@main.command(name="validate-paper")
@click.option("--suite", default="all", show_default=True,
              help="'all' or a comma-separated subset of check names.")
@click.option("--out", type=click.Path(file_okay=False), default="out",
              show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "both"]),
              default="both", show_default=True)
@click.option("--list", "list_names", is_flag=True, help="List check names and exit.")
@_handle_errors
def validate_paper(suite, out, fmt, list_names) -> None:
    """Run the validation suite and emit a machine-readable report."""
    if list_names:
        for name, _ in CHECKS:
            click.echo(name)
        return
    names = None if suite.strip() == "all" else [
        s.strip() for s in suite.split(",") if s.strip()
    ]
    t0 = time.perf_counter()
    reports = run_suite(names)
    runtime = time.perf_counter() - t0

    formats = ("json", "csv") if fmt == "both" else (fmt,)
    for p in emit_report(reports, out, stem="validation", formats=formats):
        click.echo(f"wrote {p}")
    for r in reports:
        mark = "PASS" if r.passed else "FAIL"
        click.echo(f"{mark}  {r.name}  computed={r.computed!r} tol={r.tolerance:g}")
    s = summary(reports)
    click.echo(f"{s['passed']} passed, {s['failed']} failed  ({runtime:.2f}s)")
    if s["failed"]:
        click.echo("failing checks: " +
                   ", ".join(f["name"] for f in s["failures"]), err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
