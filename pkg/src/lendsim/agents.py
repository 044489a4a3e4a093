"""Agent policies: passive suppliers, target-LTV borrowers and liquidators.

Policies are plain data. The runner owns each agent's wallet and calls into
the engine; :func:`liquidator_step` is a pure planner over a protocol view.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .engine import PriceTable, Protocol
from .fixed import ONE, ZERO, Fixed, fdiv, fmin, fmul

PRESETS = ("passive_collateral", "passive_stable", "collateral_borrower", "levered_collateral")


@dataclass(frozen=True)
class PassiveSupplier:
    agent_id: str
    market: str
    amount: Fixed | None = None
    amount_usd: Fixed | None = None
    # Redeem anything above ``amount`` each step so the supplied balance stays flat.
    hold_constant: bool = False

    def __post_init__(self) -> None:
        if (self.amount is None) == (self.amount_usd is None):
            raise ValueError(f"{self.agent_id}: give exactly one of amount, amount_usd")
        if (self.amount or self.amount_usd) <= ZERO:
            raise ValueError(f"{self.agent_id}: supply amount must be positive")


@dataclass(frozen=True)
class TargetLTVBorrower:
    agent_id: str
    collateral_market: str
    borrow_market: str
    target_ratio: Fixed
    rebalance_band: Fixed | None = None
    collateral_amount: Fixed | None = None
    collateral_usd: Fixed | None = None
    # Swap borrowed proceeds into the collateral asset and supply them (lump sum at t0).
    resupply: bool = False

    def __post_init__(self) -> None:
        if (self.collateral_amount is None) == (self.collateral_usd is None):
            raise ValueError(f"{self.agent_id}: give exactly one of collateral_amount, collateral_usd")
        if (self.collateral_amount or self.collateral_usd) <= ZERO:
            raise ValueError(f"{self.agent_id}: collateral must be positive")
        if not ZERO <= self.target_ratio < ONE:
            raise ValueError(f"{self.agent_id}: target ratio must lie in [0, 1)")
        if self.rebalance_band is not None and self.rebalance_band < ZERO:
            raise ValueError(f"{self.agent_id}: rebalance band must be non-negative")
        if self.resupply and self.rebalance_band is not None:
            raise ValueError(f"{self.agent_id}: resupplying borrowers do not rebalance")


@dataclass(frozen=True)
class Liquidator:
    agent_id: str
    gas_cost_usd: Fixed = ZERO
    min_profit_usd: Fixed = ZERO

    def __post_init__(self) -> None:
        if self.gas_cost_usd < ZERO:
            raise ValueError(f"{self.agent_id}: gas cost must be non-negative")


AgentPolicy = Union[PassiveSupplier, TargetLTVBorrower, Liquidator]

# Execution order within a step: suppliers, borrowers, liquidators.
CLASS_ORDER = {PassiveSupplier: 0, TargetLTVBorrower: 1, Liquidator: 2}


def execution_order(agents: list[AgentPolicy]) -> list[AgentPolicy]:
    return sorted(agents, key=lambda a: (CLASS_ORDER[type(a)], a.agent_id))


@dataclass(frozen=True)
class LiquidationAction:
    borrower: str
    repay_asset: str
    collateral_asset: str
    repay_amount: Fixed
    repay_usd: Fixed
    expected_profit_usd: Fixed


def _seize_tokens(protocol: Protocol, repay_asset: str, collateral_asset: str, repay: Fixed, prices: PriceTable) -> Fixed:
    # Mirrors Protocol.liquidate's rounding.
    incentive = protocol.params[collateral_asset].liquidation_incentive
    seize_usd = fmul(fmul(repay, prices[repay_asset]), ONE + incentive)
    return fdiv(seize_usd, fmul(prices[collateral_asset], protocol.exchange_rate(collateral_asset)))


def max_repay(protocol: Protocol, borrower: str, repay_asset: str, collateral_asset: str, prices: PriceTable) -> Fixed:
    """Largest repay allowed by the close factor and by the seizable collateral."""
    params = protocol.params[repay_asset]
    repay = fmul(params.close_factor, protocol.borrow_balance(borrower, repay_asset))
    held = protocol.accounts[borrower].pool_tokens.get(collateral_asset, ZERO)
    incentive = protocol.params[collateral_asset].liquidation_incentive
    held_usd = fmul(fmul(held, protocol.exchange_rate(collateral_asset)), prices[collateral_asset])
    by_collateral = fdiv(fdiv(held_usd, ONE + incentive), prices[repay_asset])
    repay = fmin(repay, by_collateral)
    for _ in range(8):
        if repay <= ZERO or _seize_tokens(protocol, repay_asset, collateral_asset, repay, prices) <= held:
            break
        repay = repay - Fixed(repay.value // 10**9 + 1)
    return repay if repay > ZERO else ZERO


def liquidator_step(policy: Liquidator, protocol: Protocol, prices: PriceTable) -> list[LiquidationAction]:
    """Plan liquidations of every account with health < 1 worth the gas.

    Each account gets at most one action: its largest borrow (in USD) repaid
    up to the close factor against its largest collateral. Actions come back
    sorted by descending expected profit.
    """
    actions = []
    for address in sorted(protocol.accounts):
        if address == policy.agent_id:
            continue
        weighted, owed = protocol.account_liquidity(address, prices)
        if owed == ZERO or weighted >= owed:
            continue
        acct = protocol.accounts[address]
        debts = [(fmul(protocol.borrow_balance(address, a), prices[a]), a) for a in sorted(acct.borrows)]
        colls = [
            (fmul(protocol.supply_balance(address, a), prices[a]), a)
            for a, t in sorted(acct.pool_tokens.items())
            if t > ZERO
        ]
        if not colls:
            continue
        # Largest value first; ties go to the alphabetically first asset.
        _, repay_asset = min(debts, key=lambda d: (-d[0].value, d[1]))
        _, coll_asset = min(colls, key=lambda c: (-c[0].value, c[1]))
        repay = max_repay(protocol, address, repay_asset, coll_asset, prices)
        if repay == ZERO:
            continue
        repay_usd = fmul(repay, prices[repay_asset])
        incentive = protocol.params[coll_asset].liquidation_incentive
        profit = fmul(repay_usd, incentive) - policy.gas_cost_usd
        if profit >= policy.min_profit_usd:
            actions.append(LiquidationAction(address, repay_asset, coll_asset, repay, repay_usd, profit))
    actions.sort(key=lambda a: (-a.expected_profit_usd.value, a.borrower))
    return actions


def strategy_preset(
    name: str,
    initial_usd: Fixed,
    volatile: str = "ETH",
    stable: str = "USDC",
    agent_id: str | None = None,
) -> list[AgentPolicy]:
    """Policies for one investor following a named strategy, all lump-sum at t0."""
    aid = agent_id or name
    half = Fixed.parse("0.5")
    if name == "passive_collateral":
        return [PassiveSupplier(aid, volatile, amount_usd=initial_usd)]
    if name == "passive_stable":
        return [PassiveSupplier(aid, stable, amount_usd=initial_usd)]
    if name == "collateral_borrower":
        return [TargetLTVBorrower(aid, volatile, volatile, half, collateral_usd=initial_usd)]
    if name == "levered_collateral":
        return [TargetLTVBorrower(aid, volatile, stable, half, collateral_usd=initial_usd, resupply=True)]
    raise ValueError(f"unknown strategy preset {name!r}; expected one of {PRESETS}")
