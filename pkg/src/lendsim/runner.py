"""Scenario definition and the step loop that drives agents against the engine."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

from .agents import (
    AgentPolicy,
    Liquidator,
    PassiveSupplier,
    TargetLTVBorrower,
    execution_order,
    liquidator_step,
)
from .analytics import PeriodAccounting, RiskReport, book_from_protocol, risk_report
from .engine import LendingError, MarketParams, PriceTable, Protocol
from .fixed import ZERO, Fixed, fdiv, fmul
from .prices import PriceProcess

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MarketSetup:
    params: MarketParams
    # Minted at block 0 by a reserved seed account before any agent acts.
    seed_supply: Fixed = ZERO


@dataclass(frozen=True)
class ParamChange:
    block: int
    params: MarketParams


@dataclass
class Scenario:
    markets: list[MarketSetup]
    agents: list[AgentPolicy]
    prices: PriceProcess
    horizon_blocks: int
    blocks_per_step: int | None = None
    seed: int = 0
    events: list[ParamChange] = field(default_factory=list)
    equity_usd: Fixed | None = None
    # Collateral asset whose price history feeds expected shortfall.
    es_asset: str | None = None
    tail: float = 0.01

    def __post_init__(self) -> None:
        if self.blocks_per_step is None and self.markets:
            self.blocks_per_step = self.markets[0].params.blocks_per_year // 365
        self.validate()

    def validate(self) -> None:
        if self.horizon_blocks <= 0:
            raise ValueError("horizon_blocks must be positive")
        if not self.blocks_per_step or self.blocks_per_step <= 0:
            raise ValueError("blocks_per_step must be positive")
        names = [m.params.asset_id for m in self.markets]
        if len(set(names)) != len(names):
            raise ValueError("duplicate market")
        params = {m.params.asset_id: m.params for m in self.markets}
        priced = set(self.prices.assets)
        for asset in names:
            if asset not in priced:
                raise ValueError(f"market {asset} has no price in the price process")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate agent id")
        for a in self.agents:
            for ref in _referenced_markets(a):
                if ref not in params:
                    raise ValueError(f"agent {a.agent_id} references undefined market {ref!r}")
            if isinstance(a, TargetLTVBorrower):
                cf = params[a.collateral_market].collateral_factor
                if not a.target_ratio < cf:
                    raise ValueError(
                        f"agent {a.agent_id}: target ratio {a.target_ratio} must be below collateral factor {cf}"
                    )
        for ev in self.events:
            if ev.params.asset_id not in params:
                raise ValueError(f"parameter change references undefined market {ev.params.asset_id!r}")
            if not 0 <= ev.block <= self.horizon_blocks:
                raise ValueError(f"parameter change at block {ev.block} outside the horizon")
        if self.es_asset is not None and self.es_asset not in params:
            raise ValueError(f"es_asset {self.es_asset!r} is not a market")

    @property
    def n_steps(self) -> int:
        return math.ceil(self.horizon_blocks / self.blocks_per_step) + 1

    def step_block(self, k: int) -> int:
        return min(k * self.blocks_per_step, self.horizon_blocks)


def _referenced_markets(a: AgentPolicy) -> list[str]:
    if isinstance(a, PassiveSupplier):
        return [a.market]
    if isinstance(a, TargetLTVBorrower):
        return [a.collateral_market, a.borrow_market]
    return []


@dataclass
class AgentBook:
    """Off-protocol state of one agent: wallet and cumulative flows."""

    wallet: dict[str, Fixed] = field(default_factory=dict)
    # Underlying put into (positive) or taken out of supply, per market.
    net_supplied: dict[str, Fixed] = field(default_factory=dict)
    net_borrowed: dict[str, Fixed] = field(default_factory=dict)
    # Interest already taken out (redeemed) or settled (repaid), in USD at the time.
    earned_realized_usd: Fixed = ZERO
    paid_realized_usd: Fixed = ZERO
    gas_usd: Fixed = ZERO
    initial_usd: Fixed = ZERO
    started: bool = False

    def add(self, ledger: dict[str, Fixed], asset: str, amount: Fixed) -> None:
        ledger[asset] = ledger.get(asset, ZERO) + amount


@dataclass
class StepRecord:
    step: int
    block: int
    prices: PriceTable
    protocol: Protocol
    books: dict[str, AgentBook]


@dataclass(frozen=True)
class Event:
    block: int
    agent_id: str
    action: str
    detail: str


@dataclass(frozen=True)
class LedgerRow:
    block: int
    agent_id: str
    net_value_usd: Fixed
    interest_earned_usd: Fixed
    interest_paid_usd: Fixed


@dataclass
class RunResult:
    records: list[StepRecord]
    ledger: list[LedgerRow]
    reports: list[RiskReport]
    events: list[Event]
    scenario: Scenario

    @property
    def final(self) -> StepRecord:
        return self.records[-1]


SEED_ACCOUNT = "seed:{}"


class Runner:
    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.protocol = Protocol([m.params for m in scenario.markets])
        self.books = {a.agent_id: AgentBook() for a in scenario.agents}
        self.events: list[Event] = []
        self.price_path = scenario.prices.generate(scenario.n_steps, scenario.seed)
        self._pending = sorted(scenario.events, key=lambda e: (e.block, e.params.asset_id))

    # -- agent actions ------------------------------------------------
    def _reject(self, agent_id: str, action: str, err: Exception) -> None:
        self.events.append(Event(self.protocol.block, agent_id, action, f"rejected: {err}"))

    def _endow(self, book: AgentBook, asset: str, amount: Fixed, prices: PriceTable) -> None:
        book.add(book.wallet, asset, amount)
        book.initial_usd += fmul(amount, prices[asset])

    def _supply(self, agent_id: str, book: AgentBook, asset: str, amount: Fixed) -> None:
        self.protocol.mint(agent_id, asset, amount)
        book.add(book.wallet, asset, -amount)
        book.add(book.net_supplied, asset, amount)

    def _act_supplier(self, a: PassiveSupplier, book: AgentBook, prices: PriceTable) -> None:
        p = self.protocol
        if not book.started:
            book.started = True
            amount = a.amount if a.amount is not None else fdiv(a.amount_usd, prices[a.market])
            self._endow(book, a.market, amount, prices)
            self._supply(a.agent_id, book, a.market, amount)
            return
        if not a.hold_constant:
            return
        target = a.amount if a.amount is not None else book.net_supplied.get(a.market, ZERO)
        excess = p.supply_balance(a.agent_id, a.market) - target
        if excess <= ZERO:
            return
        tokens = fdiv(excess, p.exchange_rate(a.market))
        if tokens == ZERO:
            return
        before = p.supply_balance(a.agent_id, a.market)
        paid = p.redeem(a.agent_id, a.market, tokens, prices)
        book.add(book.wallet, a.market, paid)
        interest = min(max(before - book.net_supplied.get(a.market, ZERO), ZERO), paid)
        book.earned_realized_usd += fmul(interest, prices[a.market])
        book.add(book.net_supplied, a.market, -(paid - interest))
        self.events.append(Event(p.block, a.agent_id, "redeem_interest", str(paid)))

    def _act_borrower(self, a: TargetLTVBorrower, book: AgentBook, prices: PriceTable) -> None:
        p = self.protocol
        c, b = a.collateral_market, a.borrow_market
        if not book.started:
            book.started = True
            amount = a.collateral_amount if a.collateral_amount is not None else fdiv(a.collateral_usd, prices[c])
            self._endow(book, c, amount, prices)
            self._supply(a.agent_id, book, c, amount)
            want = fdiv(fmul(fmul(p.supply_balance(a.agent_id, c), prices[c]), a.target_ratio), prices[b])
            if want > ZERO:
                p.borrow(a.agent_id, b, want, prices)
                book.add(book.wallet, b, want)
                book.add(book.net_borrowed, b, want)
            if a.resupply and want > ZERO:
                swapped = fdiv(fmul(want, prices[b]), prices[c])
                book.add(book.wallet, b, -want)
                book.add(book.wallet, c, swapped)
                self._supply(a.agent_id, book, c, swapped)
            return
        if a.rebalance_band is None:
            return
        coll_usd = fmul(p.supply_balance(a.agent_id, c), prices[c])
        debt = p.borrow_balance(a.agent_id, b)
        if coll_usd == ZERO:
            return
        ratio = fdiv(fmul(debt, prices[b]), coll_usd)
        if abs(ratio - a.target_ratio) <= a.rebalance_band and not (a.rebalance_band == ZERO and ratio != a.target_ratio):
            return
        desired = fdiv(fmul(coll_usd, a.target_ratio), prices[b])
        if debt > desired:
            available = book.wallet.get(b, ZERO)
            amount = min(debt - desired, available)
            if amount > ZERO:
                paid = p.repay(a.agent_id, b, amount)
                book.add(book.wallet, b, -paid)
                self._settle(a.agent_id, book, b, paid, prices)
        elif desired > debt:
            amount = desired - debt
            p.borrow(a.agent_id, b, amount, prices)
            book.add(book.wallet, b, amount)
            book.add(book.net_borrowed, b, amount)

    def _settle(self, agent_id: str, book: AgentBook, asset: str, paid: Fixed, prices: PriceTable) -> None:
        # Called after a repayment; it retires accrued interest first, then principal.
        owed_before = self.protocol.borrow_balance(agent_id, asset) + paid
        interest = min(max(owed_before - book.net_borrowed.get(asset, ZERO), ZERO), paid)
        book.paid_realized_usd += fmul(interest, prices[asset])
        book.add(book.net_borrowed, asset, -(paid - interest))

    def _act_liquidator(self, a: Liquidator, book: AgentBook, prices: PriceTable) -> None:
        p = self.protocol
        book.started = True
        for action in liquidator_step(a, p, prices):
            try:
                res = p.liquidate(
                    a.agent_id, action.borrower, action.repay_asset, action.collateral_asset, action.repay_amount, prices
                )
            except LendingError as err:
                self._reject(a.agent_id, "liquidate", err)
                continue
            book.add(book.wallet, action.repay_asset, -res.repay_amount)
            book.add(book.net_supplied, action.collateral_asset, res.seize_underlying)
            book.gas_usd += a.gas_cost_usd
            victim = self.books.get(action.borrower)
            if victim is not None:
                victim.add(victim.net_supplied, action.collateral_asset, -res.seize_underlying)
                self._settle(action.borrower, victim, action.repay_asset, res.repay_amount, prices)
            self.events.append(
                Event(
                    p.block,
                    a.agent_id,
                    "liquidate",
                    f"{action.borrower} repay {res.repay_amount} {action.repay_asset} "
                    f"seize {res.seize_tokens} {action.collateral_asset} tokens",
                )
            )

    # -- loop ---------------------------------------------------------
    def _apply_events(self, upto_block: int) -> None:
        while self._pending and self._pending[0].block <= upto_block:
            ev = self._pending.pop(0)
            self.protocol.advance(ev.block)
            self.protocol.set_params(ev.params)
            self.events.append(Event(ev.block, "-", "set_params", ev.params.asset_id))

    def step(self, k: int) -> StepRecord:
        sc = self.scenario
        block = sc.step_block(k)
        self._apply_events(block)
        self.protocol.advance(block)
        prices = PriceTable(self.price_path[k], block)
        self.protocol.accrue_all()
        if k == 0:
            for m in sc.markets:
                if m.seed_supply > ZERO:
                    self.protocol.mint(SEED_ACCOUNT.format(m.params.asset_id), m.params.asset_id, m.seed_supply)
        for a in execution_order(sc.agents):
            book = self.books[a.agent_id]
            try:
                if isinstance(a, PassiveSupplier):
                    self._act_supplier(a, book, prices)
                elif isinstance(a, TargetLTVBorrower):
                    self._act_borrower(a, book, prices)
                else:
                    self._act_liquidator(a, book, prices)
            except LendingError as err:
                self._reject(a.agent_id, type(a).__name__, err)
        return StepRecord(k, block, prices, self.protocol.snapshot(), copy.deepcopy(self.books))

    def run(self) -> RunResult:
        sc = self.scenario
        records = []
        for k in range(sc.n_steps):
            try:
                records.append(self.step(k))
            except ArithmeticError as err:
                raise RuntimeError(f"arithmetic failure at block {self.protocol.block}: {err}") from err
        ledger = strategy_ledger(records)
        reports = risk_reports(records, sc)
        return RunResult(records, ledger, reports, self.events, sc)


def run(scenario: Scenario) -> RunResult:
    return Runner(scenario).run()


# -- derived outputs ----------------------------------------------------

def agent_position(rec: StepRecord, agent_id: str) -> LedgerRow:
    """Net value and interest of one agent, recomputed from a step record alone."""
    p, prices, book = rec.protocol, rec.prices, rec.books[agent_id]
    value = -book.gas_usd
    for asset, amount in sorted(book.wallet.items()):
        value += fmul(amount, prices[asset])
    earned = paid = ZERO
    for asset in sorted(p.params):
        supplied = p.supply_balance(agent_id, asset)
        owed = p.borrow_balance(agent_id, asset)
        value += fmul(supplied - owed, prices[asset])
        earned += fmul(supplied - book.net_supplied.get(asset, ZERO), prices[asset])
        paid += fmul(owed - book.net_borrowed.get(asset, ZERO), prices[asset])
    return LedgerRow(rec.block, agent_id, value, earned + book.earned_realized_usd, paid + book.paid_realized_usd)


def strategy_ledger(records: Sequence[StepRecord]) -> list[LedgerRow]:
    rows = []
    for rec in records:
        for agent_id in sorted(rec.books):
            rows.append(agent_position(rec, agent_id))
    return rows


def _interval(records: Sequence[StepRecord], asset: str, i: int) -> tuple[Fixed, Fixed, Fixed, Fixed]:
    """``(loans*dt, deposits*dt, revenue, expense)`` in USD between records ``i`` and ``i+1``."""
    cur, nxt = records[i].protocol.states[asset], records[i + 1].protocol.states[asset]
    dt = records[i + 1].block - records[i].block
    price_now, price_next = records[i].prices[asset], records[i + 1].prices[asset]
    interest = nxt.cumulative_interest - cur.cumulative_interest
    reserve = nxt.cumulative_reserves - cur.cumulative_reserves
    return (
        fmul(cur.total_borrows, price_now) * dt,
        fmul(cur.total_supply, price_now) * dt,
        fmul(interest, price_next),
        fmul(interest - reserve, price_next),
    )


class _PeriodSums:
    def __init__(self) -> None:
        self.loans = self.deposits = self.revenue = self.expense = ZERO

    def add(self, terms: tuple[Fixed, Fixed, Fixed, Fixed]) -> None:
        self.loans += terms[0]
        self.deposits += terms[1]
        self.revenue += terms[2]
        self.expense += terms[3]

    def close(self, span: int, blocks_per_year: int) -> PeriodAccounting | None:
        if span <= 0:
            return None
        return PeriodAccounting(
            interest_revenue_usd=self.revenue,
            interest_expense_usd=self.expense,
            avg_loans_usd=self.loans / span,
            avg_deposits_usd=self.deposits / span,
            years=Fixed.from_int(span) / blocks_per_year,
        )


def period_accounting(
    records: Sequence[StepRecord], asset: str, start: int = 0, end: int | None = None
) -> PeriodAccounting | None:
    """Realized interest and time-weighted balances of one market between two records.

    Balances are read after each step's actions and held until the next step.
    Interest is valued at the price at the end of the interval it accrued in.
    """
    end = len(records) - 1 if end is None else end
    sums = _PeriodSums()
    for i in range(start, end):
        sums.add(_interval(records, asset, i))
    bpy = records[start].protocol.params[asset].blocks_per_year
    return sums.close(records[end].block - records[start].block, bpy)


def protocol_period(records: Sequence[StepRecord], start: int = 0, end: int | None = None) -> PeriodAccounting | None:
    """All markets combined; the period length uses the first market's blocks per year."""
    end = len(records) - 1 if end is None else end
    sums = _PeriodSums()
    assets = sorted(records[start].protocol.params)
    for i in range(start, end):
        for asset in assets:
            sums.add(_interval(records, asset, i))
    bpy = records[start].protocol.params[assets[0]].blocks_per_year
    return sums.close(records[end].block - records[start].block, bpy)


def risk_reports(records: Sequence[StepRecord], scenario: Scenario) -> list[RiskReport]:
    es_asset = scenario.es_asset
    assets = sorted(records[0].protocol.params)
    bpy = records[0].protocol.params[assets[0]].blocks_per_year
    sums = _PeriodSums()
    reports = []
    for i, rec in enumerate(records):
        if i > 0:
            for asset in assets:
                sums.add(_interval(records, asset, i - 1))
        period = sums.close(rec.block - records[0].block, bpy)
        history = None
        if es_asset is not None:
            history = [float(r.prices[es_asset]) for r in records[: i + 1]]
        book = book_from_protocol(rec.protocol, rec.prices)
        reports.append(risk_report(book, period, scenario.equity_usd, history, scenario.tail))
    return reports
