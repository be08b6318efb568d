"""xfund: valuation and hedging under funding costs and collateralization.

The package is organised around eight concerns:

* :mod:`xfund.market` - grids, funding accounts, calibrated lattices, scenarios
* :mod:`xfund.contracts` - cash-flow streams, collateral, margin interest
* :mod:`xfund.wealth` - self-financing wealth evolution under trading conventions
* :mod:`xfund.arbitrage` - netted-wealth arbitrage checks and certificates
* :mod:`xfund.pricing` - linear martingale pricing and discount-shift transforms
* :mod:`xfund.bsde` - nonlinear backward solvers and funding-aware prices
* :mod:`xfund.adjustments` - funding-adjustment decompositions
* :mod:`xfund.cli` - scenario configs, reports, and the validation suite
"""
from .market import (
    Account,
    AssetModel,
    Lattice,
    ScenarioSet,
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
from .contracts import (
    CollateralSpec,
    Contract,
    Flow,
    MarginAccounts,
    MarginConvention,
)
from .wealth import (
    Basic,
    CommonUnsecured,
    PartialNetting,
    WealthPath,
    evolve_wealth,
    netted_wealth,
    self_financing_residual,
)
from .arbitrage import (
    detect_arbitrage,
    drift_violations,
    random_strategy_family,
    supermartingale_certificate,
)
from .pricing import (
    PricePath,
    gamma_measure_price,
    gamma_value_check,
    price_fully_collateralized,
    price_linear,
)
from .bsde import (
    BSDESolution,
    EndogenousCollateral,
    netting_stream,
    price_endogenous_collateral,
    price_partial_netting,
    solve_bsde,
    verify_replication,
)
from .adjustments import (
    AdjustmentReport,
    contract_funding_adjustment,
    partial_funding_adjustment,
    redundancy_example,
    total_funding_adjustment,
)
from .config import ScenarioConfig, load_config, parse_config
from .reports import Report, emit_report, summary
from .validation import run_suite
from . import errors

__version__ = "0.1.0"

__all__ = [
    "Account",
    "AdjustmentReport",
    "AssetModel",
    "BSDESolution",
    "Basic",
    "CollateralSpec",
    "CommonUnsecured",
    "Contract",
    "EndogenousCollateral",
    "Flow",
    "Lattice",
    "MarginAccounts",
    "MarginConvention",
    "PartialNetting",
    "PricePath",
    "Report",
    "ScenarioConfig",
    "ScenarioSet",
    "TimeGrid",
    "WealthPath",
    "build_account",
    "calibrate_lattice",
    "contract_funding_adjustment",
    "cum_dividend_price",
    "detect_arbitrage",
    "discounted_price_check",
    "drift_violations",
    "emit_report",
    "evolve_wealth",
    "gamma_measure_price",
    "gamma_value_check",
    "lattice_scenarios",
    "load_config",
    "make_scenarios",
    "martingale_residual",
    "netted_wealth",
    "netting_stream",
    "parse_config",
    "partial_funding_adjustment",
    "price_endogenous_collateral",
    "price_fully_collateralized",
    "price_gain_check",
    "price_linear",
    "price_partial_netting",
    "random_strategy_family",
    "redundancy_example",
    "run_suite",
    "sample_lattice_paths",
    "self_financing_residual",
    "solve_bsde",
    "summary",
    "supermartingale_certificate",
    "total_funding_adjustment",
    "verify_replication",
]
