"""CAMELS-style indicators and ex-post intermediation margins.

Everything here reads a :class:`Book`, a protocol-agnostic view of one block:
market aggregates, prices, and per-account underlying balances. A ``Book`` can
come from a live :class:`~lendsim.engine.Protocol` or from a fixture file, and
the report computed from either is identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Mapping, Sequence

import numpy as np

from .fixed import INFINITY, ONE, ZERO, Fixed, fdiv, fmul
from .engine import PriceTable, Protocol

# (inclusive upper bound on health, risk weight); the last bucket is open.
DEFAULT_BUCKETS: tuple[tuple[Fixed | None, Fixed], ...] = (
    (Fixed.parse("1"), Fixed.parse("1.5")),
    (Fixed.parse("1.33"), Fixed.parse("1")),
    (Fixed.parse("2"), Fixed.parse("0.5")),
    (Fixed.parse("10"), Fixed.parse("0.2")),
    (None, ZERO),
)


@dataclass(frozen=True)
class MarketSummary:
    total_supply: Fixed
    total_borrows: Fixed
    reserves: Fixed
    collateral_factor: Fixed
    cash: Fixed | None = None


@dataclass(frozen=True)
class AccountPosition:
    address: str
    supply: Mapping[str, Fixed] = field(default_factory=dict)
    borrow: Mapping[str, Fixed] = field(default_factory=dict)
    supply_interest: Mapping[str, Fixed] = field(default_factory=dict)
    borrow_interest: Mapping[str, Fixed] = field(default_factory=dict)


@dataclass(frozen=True)
class Book:
    block: int
    markets: Mapping[str, MarketSummary]
    prices: PriceTable
    accounts: Sequence[AccountPosition]


@dataclass(frozen=True)
class PeriodAccounting:
    interest_revenue_usd: Fixed
    interest_expense_usd: Fixed
    avg_loans_usd: Fixed
    avg_deposits_usd: Fixed
    years: Fixed = ONE

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < ZERO:
                raise ValueError(f"{f.name} must be non-negative")


def book_from_protocol(protocol: Protocol, prices: PriceTable) -> Book:
    markets = {
        asset: MarketSummary(
            total_supply=s.total_supply,
            total_borrows=s.total_borrows,
            reserves=s.reserves,
            collateral_factor=protocol.params[asset].collateral_factor,
            cash=s.cash,
        )
        for asset, s in sorted(protocol.states.items())
    }
    accounts = []
    for address in sorted(protocol.accounts):
        acct = protocol.accounts[address]
        supply = {a: protocol.supply_balance(address, a) for a in sorted(acct.pool_tokens)}
        borrow = {a: protocol.borrow_balance(address, a) for a in sorted(acct.borrows)}
        supply = {a: v for a, v in supply.items() if v}
        borrow = {a: v for a, v in borrow.items() if v}
        if supply or borrow:
            accounts.append(AccountPosition(address, supply, borrow))
    return Book(protocol.block, markets, prices, accounts)


# -- account-level valuation ------------------------------------------

def borrow_usd(pos: AccountPosition, prices: PriceTable) -> Fixed:
    total = ZERO
    for asset, amount in sorted(pos.borrow.items()):
        total += fmul(amount, prices[asset])
    return total


def supply_usd(pos: AccountPosition, prices: PriceTable) -> Fixed:
    total = ZERO
    for asset, amount in sorted(pos.supply.items()):
        total += fmul(amount, prices[asset])
    return total


def account_health(pos: AccountPosition, markets: Mapping[str, MarketSummary], prices: PriceTable) -> Fixed:
    owed = borrow_usd(pos, prices)
    if owed == ZERO:
        return INFINITY
    weighted = ZERO
    for asset, amount in sorted(pos.supply.items()):
        weighted += fmul(fmul(amount, prices[asset]), markets[asset].collateral_factor)
    return fdiv(weighted, owed)


def risk_weight(h: Fixed, buckets=DEFAULT_BUCKETS) -> Fixed:
    for upper, weight in buckets:
        if upper is None or h <= upper:
            return weight
    raise ValueError("bucket table has no open upper bucket")


# -- capital and asset quality ----------------------------------------

def risk_weighted_assets(
    accounts: Sequence[AccountPosition],
    markets: Mapping[str, MarketSummary],
    prices: PriceTable,
    buckets=DEFAULT_BUCKETS,
) -> Fixed:
    total = ZERO
    for pos in accounts:
        owed = borrow_usd(pos, prices)
        if owed:
            total += fmul(owed, risk_weight(account_health(pos, markets, prices), buckets))
    return total


def solvency_ratio(reserves_usd: Fixed, rwa_usd: Fixed) -> Fixed | None:
    if rwa_usd <= ZERO:
        return None
    return fdiv(reserves_usd, rwa_usd)


@dataclass(frozen=True)
class UCBMetrics:
    ucb_usd: Fixed
    ucb_over_borrows: Fixed | None
    ucb_over_reserves: Fixed | None
    account_share: Fixed | None


def ucb_metrics(
    accounts: Sequence[AccountPosition],
    markets: Mapping[str, MarketSummary],
    prices: PriceTable,
    reserves_usd: Fixed,
) -> UCBMetrics:
    """Undercollateralized borrows: outstanding debt of accounts with health < 1."""
    ucb = total = ZERO
    n_ucb = n_borrowers = 0
    for pos in accounts:
        owed = borrow_usd(pos, prices)
        if owed == ZERO:
            continue
        n_borrowers += 1
        total += owed
        if account_health(pos, markets, prices) < ONE:
            n_ucb += 1
            ucb += owed
    return UCBMetrics(
        ucb_usd=ucb,
        ucb_over_borrows=fdiv(ucb, total) if total else None,
        ucb_over_reserves=fdiv(ucb, reserves_usd) if reserves_usd else None,
        account_share=Fixed.from_int(n_ucb) / n_borrowers if n_borrowers else None,
    )


# -- earnings ----------------------------------------------------------

def expost_rates(acct: PeriodAccounting) -> tuple[Fixed | None, Fixed | None, Fixed | None]:
    """Annualized realized rates ``(active, passive, margin)``."""
    if acct.years <= ZERO:
        return None, None, None
    active = fdiv(fdiv(acct.interest_revenue_usd, acct.avg_loans_usd), acct.years) if acct.avg_loans_usd else None
    passive = (
        fdiv(fdiv(acct.interest_expense_usd, acct.avg_deposits_usd), acct.years) if acct.avg_deposits_usd else None
    )
    margin = active - passive if active is not None and passive is not None else None
    return active, passive, margin


def earnings(
    acct: PeriodAccounting,
    equity_usd: Fixed | None,
    avg_borrows_usd: Fixed | None,
    reserves_usd: Fixed,
) -> tuple[Fixed, Fixed | None, Fixed | None, Fixed | None]:
    """``(operating_margin, roa, roe, reserves_over_equity)``; ratios are not annualized."""
    op = acct.interest_revenue_usd - acct.interest_expense_usd
    roa = fdiv(op, avg_borrows_usd) if avg_borrows_usd else None
    roe = fdiv(op, equity_usd) if equity_usd else None
    r_e = fdiv(reserves_usd, equity_usd) if equity_usd else None
    return op, roa, roe, r_e


def combine_periods(periods: Sequence[PeriodAccounting]) -> PeriodAccounting:
    """Protocol-wide accounting from per-market USD figures sharing one period."""
    if not periods:
        raise ValueError("no periods to combine")
    years = periods[0].years
    if any(p.years != years for p in periods):
        raise ValueError("periods cover different lengths of time")
    return PeriodAccounting(
        interest_revenue_usd=sum((p.interest_revenue_usd for p in periods), ZERO),
        interest_expense_usd=sum((p.interest_expense_usd for p in periods), ZERO),
        avg_loans_usd=sum((p.avg_loans_usd for p in periods), ZERO),
        avg_deposits_usd=sum((p.avg_deposits_usd for p in periods), ZERO),
        years=years,
    )


def end_of_period_accounting(book: Book, years: Fixed = ONE) -> dict[str, PeriodAccounting]:
    """Per-market accounting from account-level accrued interest at one block.

    Loans and deposits are the stocks at the block (end-of-quarter convention).
    """
    out = {}
    for asset in sorted(book.markets):
        price = book.prices[asset]
        rev = exp = loans = deps = ZERO
        for pos in book.accounts:
            rev += fmul(pos.borrow_interest.get(asset, ZERO), price)
            exp += fmul(pos.supply_interest.get(asset, ZERO), price)
            loans += fmul(pos.borrow.get(asset, ZERO), price)
            deps += fmul(pos.supply.get(asset, ZERO), price)
        out[asset] = PeriodAccounting(rev, exp, loans, deps, years)
    return out


# -- market risk -------------------------------------------------------

def horizon_returns(prices: Sequence[float], horizon_days: int) -> np.ndarray:
    p = np.asarray(prices, dtype=float)
    return p[horizon_days:] / p[:-horizon_days] - 1.0


def collateral_expected_shortfall(
    price_series: Sequence[float],
    horizon_days: int = 1,
    tail: float = 0.01,
    collateral_usd: float = 1.0,
) -> tuple[float, float]:
    """Historical ES of overlapping ``horizon_days`` returns.

    Returns ``(es_fraction, es_usd)``, where ``es_fraction`` is the negated
    mean of the worst ``ceil(tail * N)`` returns.
    """
    if len(price_series) < 250:
        raise ValueError(f"need at least 250 daily prices, got {len(price_series)}")
    if not 0 < tail < 0.5:
        raise ValueError(f"tail must lie in (0, 0.5), got {tail}")
    if horizon_days < 1:
        raise ValueError("horizon must be at least one day")
    r = horizon_returns(price_series, horizon_days)
    k = math.ceil(tail * len(r))
    worst = np.sort(r)[:k]
    es = -math.fsum(worst.tolist()) / k
    es = es + 0.0  # normalize -0.0
    return es, es * float(collateral_usd)


# -- report ------------------------------------------------------------

@dataclass(frozen=True)
class RiskReport:
    block: int
    borrows_usd: Fixed
    rwa_usd: Fixed
    solvency_ratio: Fixed | None
    ucb_usd: Fixed
    ucb_over_borrows: Fixed | None
    ucb_over_reserves: Fixed | None
    ucb_account_share: Fixed | None
    reserves_usd: Fixed
    equity_usd: Fixed | None
    collateral_usd: Fixed
    interest_revenue_usd: Fixed | None
    interest_expense_usd: Fixed | None
    active_rate: Fixed | None
    passive_rate: Fixed | None
    expost_margin: Fixed | None
    operating_margin_usd: Fixed | None
    roa: Fixed | None
    roe: Fixed | None
    reserves_over_equity: Fixed | None
    collateral_es_1d: Fixed | None
    collateral_es_5d: Fixed | None
    collateral_es_1d_fraction: Fixed | None
    collateral_es_5d_fraction: Fixed | None


UNITS = {
    "block": "block",
    "borrows_usd": "USD",
    "rwa_usd": "USD",
    "ucb_usd": "USD",
    "reserves_usd": "USD",
    "equity_usd": "USD",
    "collateral_usd": "USD",
    "interest_revenue_usd": "USD",
    "interest_expense_usd": "USD",
    "operating_margin_usd": "USD",
    "collateral_es_1d": "USD",
    "collateral_es_5d": "USD",
    "active_rate": "fraction per year",
    "passive_rate": "fraction per year",
    "expost_margin": "fraction per year",
}


def reserves_usd(book: Book) -> Fixed:
    return sum((fmul(m.reserves, book.prices[a]) for a, m in sorted(book.markets.items())), ZERO)


def risk_report(
    book: Book,
    period: PeriodAccounting | None = None,
    equity_usd: Fixed | None = None,
    price_series: Sequence[float] | None = None,
    tail: float = 0.01,
    buckets=DEFAULT_BUCKETS,
) -> RiskReport:
    """Compute every indicator for one block.

    ``period`` supplies interest revenue/expense; without it the earnings
    fields are absent. ``price_series`` is the daily USD history of the
    collateral asset; ES fields are absent when it is missing or too short.
    """
    markets, prices, accounts = book.markets, book.prices, book.accounts
    res = reserves_usd(book)
    rwa = risk_weighted_assets(accounts, markets, prices, buckets)
    ucb = ucb_metrics(accounts, markets, prices, res)
    borrows = sum((borrow_usd(p, prices) for p in accounts), ZERO)
    collateral = sum((supply_usd(p, prices) for p in accounts), ZERO)

    active = passive = margin = op = roa = roe = None
    revenue = expense = None
    if period is not None:
        active, passive, margin = expost_rates(period)
        op, roa, roe, _ = earnings(period, equity_usd, borrows, res)
        revenue, expense = period.interest_revenue_usd, period.interest_expense_usd
    r_e = fdiv(res, equity_usd) if equity_usd else None

    es = {1: (None, None), 5: (None, None)}
    if price_series is not None and len(price_series) >= 250:
        for h in (1, 5):
            frac, _ = collateral_expected_shortfall(price_series, h, tail)
            es[h] = (Fixed.from_float(frac), fmul(Fixed.from_float(frac), collateral))

    return RiskReport(
        block=book.block,
        borrows_usd=borrows,
        rwa_usd=rwa,
        solvency_ratio=solvency_ratio(res, rwa),
        ucb_usd=ucb.ucb_usd,
        ucb_over_borrows=ucb.ucb_over_borrows,
        ucb_over_reserves=ucb.ucb_over_reserves,
        ucb_account_share=ucb.account_share,
        reserves_usd=res,
        equity_usd=equity_usd,
        collateral_usd=collateral,
        interest_revenue_usd=revenue,
        interest_expense_usd=expense,
        active_rate=active,
        passive_rate=passive,
        expost_margin=margin,
        operating_margin_usd=op,
        roa=roa,
        roe=roe,
        reserves_over_equity=r_e,
        collateral_es_1d=es[1][1],
        collateral_es_5d=es[5][1],
        collateral_es_1d_fraction=es[1][0],
        collateral_es_5d_fraction=es[5][0],
    )


def report_to_dict(report: RiskReport) -> dict:
    """JSON-ready mapping of field name to ``{"value", "unit"}``; ratios are fractions."""
    out = {}
    for f in fields(report):
        v = getattr(report, f.name)
        out[f.name] = {
            "value": None if v is None else (v if isinstance(v, int) else str(v)),
            "unit": UNITS.get(f.name, "fraction"),
        }
    return out
