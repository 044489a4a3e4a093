"""Ready-made scenarios shared by the test suite and the scripts."""
from __future__ import annotations

from .agents import PRESETS, Liquidator, PassiveSupplier, TargetLTVBorrower, strategy_preset
from .engine import BLOCKS_PER_YEAR, MarketParams
from .fixed import ZERO, Fixed, fx
from .prices import PriceProcess
from .rates import LinearRateModel
from .runner import MarketSetup, Scenario


def steady_state_scenario(
    alpha: str = "0.02", beta: str = "0.2", reserve_factor: str = "0.1", target: str = "0.5",
    horizon_blocks: int = BLOCKS_PER_YEAR,
) -> Scenario:
    """Constant prices and balances: one saver, one borrower rebalancing every step.

    Utilization stays at ``target * collateral / supply`` = 0.5 by default.
    """
    model = LinearRateModel(fx(alpha), fx(beta), fx(reserve_factor))
    usdc = MarketParams("USDC", model, fx("0.8"))
    eth = MarketParams("ETH", LinearRateModel(fx("0.02"), fx("0.1"), fx("0.1")), fx("0.75"))
    return Scenario(
        markets=[MarketSetup(eth), MarketSetup(usdc)],
        agents=[
            PassiveSupplier("saver", "USDC", amount=fx(1_000_000), hold_constant=True),
            TargetLTVBorrower("borrower", "ETH", "USDC", fx(target), rebalance_band=ZERO, collateral_amount=fx(1000)),
        ],
        prices=PriceProcess.constant({"ETH": fx(1000), "USDC": fx(1)}),
        horizon_blocks=horizon_blocks,
    )


def preset_scenario(
    final_eth_price: str = "2000", initial_usd: str = "1000", rates_zero: bool = True, steps: int = 10
) -> Scenario:
    """All four strategy presets side by side; ETH moves from 2000 to ``final_eth_price`` after step 0."""
    alpha, beta = ("0", "0") if rates_zero else ("0.02", "0.2")
    model = LinearRateModel(fx(alpha), fx(beta), fx("0.1"))
    eth = MarketParams("ETH", model, fx("0.75"))
    usdc = MarketParams("USDC", model, fx("0.8"))
    agents = []
    for name in PRESETS:
        agents += strategy_preset(name, fx(initial_usd))
    day = BLOCKS_PER_YEAR // 365
    return Scenario(
        markets=[MarketSetup(eth, seed_supply=fx(100)), MarketSetup(usdc, seed_supply=fx(1_000_000))],
        agents=agents,
        prices=PriceProcess.path({"ETH": [fx(2000), fx(final_eth_price)], "USDC": [fx(1), fx(1)]}),
        horizon_blocks=steps * day,
        blocks_per_step=day,
    )


def dust_scenario(
    n_small: int = 200, n_large: int = 20, gas_cost_usd: str = "5", drop: str = "0.9", days: int = 20
) -> Scenario:
    """Many tiny borrowers near the collateral limit, a few large ones, then a price drop.

    Large positions become unhealthy and are worth liquidating; tiny ones are
    not, because the liquidation bonus is below the gas cost.
    """
    model = LinearRateModel(fx("0.02"), fx("0.2"), fx("0.1"))
    eth = MarketParams("ETH", model, fx("0.75"))
    usdc = MarketParams("USDC", model, fx("0.8"))
    agents = [PassiveSupplier("saver", "USDC", amount=fx(100_000_000))]
    for i in range(n_large):
        agents.append(TargetLTVBorrower(f"large{i:03d}", "ETH", "USDC", fx("0.7"), collateral_usd=fx(2_500_000)))
    for i in range(n_small):
        # Collateral between 5 and 204 USD.
        agents.append(TargetLTVBorrower(f"small{i:04d}", "ETH", "USDC", fx("0.74"), collateral_usd=fx(5 + i % 200)))
    agents.append(Liquidator("keeper", gas_cost_usd=fx(gas_cost_usd)))
    drop_day = 3
    path = [fx(2000)] * drop_day + [fx(2000) * fx(drop)]
    day = BLOCKS_PER_YEAR // 365
    return Scenario(
        markets=[MarketSetup(eth), MarketSetup(usdc)],
        agents=agents,
        prices=PriceProcess.path({"ETH": path, "USDC": [Fixed.from_int(1)] * len(path)}),
        horizon_blocks=days * day,
        blocks_per_step=day,
    )
