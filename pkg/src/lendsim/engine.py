"""Block-indexed state machine for a pooled, overcollateralized lending protocol.

Each market keeps its aggregates in underlying units and obeys the monetary
identity ``TS = C + TB - R`` after every operation. Accounts hold pool tokens
(claims on supply) and borrow principals stamped with the borrow index. USD
is used only for health and valuation.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .fixed import INFINITY, ONE, SCALE, ZERO, Fixed, fdiv, fmin, fmul, muldiv
from .rates import RateModel, borrow_rate

SECONDS_PER_YEAR = 31_536_000
# floor(31,536,000 s / 13.15 s per block)
BLOCKS_PER_YEAR = SECONDS_PER_YEAR * 100 // 1315
INITIAL_EXCHANGE_RATE = Fixed.parse("0.02")


class LendingError(Exception):
    """Base class for rejected protocol operations."""


class PreconditionError(LendingError, ValueError):
    pass


class InsufficientLiquidity(LendingError):
    pass


class ComptrollerRejection(LendingError):
    pass


@dataclass(frozen=True)
class MarketParams:
    asset_id: str
    rate_model: RateModel
    collateral_factor: Fixed
    close_factor: Fixed = Fixed.parse("0.5")
    liquidation_incentive: Fixed = Fixed.parse("0.08")
    blocks_per_year: int = BLOCKS_PER_YEAR
    initial_exchange_rate: Fixed = INITIAL_EXCHANGE_RATE

    def __post_init__(self) -> None:
        if not ZERO <= self.collateral_factor < ONE:
            raise PreconditionError(f"{self.asset_id}: collateral factor must lie in [0, 1)")
        if not ZERO < self.close_factor <= ONE:
            raise PreconditionError(f"{self.asset_id}: close factor must lie in (0, 1]")
        if self.liquidation_incentive < ZERO:
            raise PreconditionError(f"{self.asset_id}: liquidation incentive must be >= 0")
        if self.blocks_per_year <= 0:
            raise PreconditionError(f"{self.asset_id}: blocks_per_year must be positive")
        if self.initial_exchange_rate <= ZERO:
            raise PreconditionError(f"{self.asset_id}: initial exchange rate must be positive")

    @property
    def reserve_factor(self) -> Fixed:
        return self.rate_model.reserve_factor


@dataclass(frozen=True)
class MarketState:
    total_supply: Fixed = ZERO
    total_borrows: Fixed = ZERO
    reserves: Fixed = ZERO
    cash: Fixed = ZERO
    pool_token_supply: Fixed = ZERO
    borrow_index: Fixed = ONE
    last_accrual_block: int = 0
    # Running totals of accrued borrower interest and the reserve share of it.
    cumulative_interest: Fixed = ZERO
    cumulative_reserves: Fixed = ZERO

    @property
    def liquidity(self) -> Fixed:
        """Available market liquidity ``TS - TB`` (cash net of reserves)."""
        return self.total_supply - self.total_borrows

    def identity_holds(self) -> bool:
        return self.total_supply == self.cash + self.total_borrows - self.reserves


@dataclass
class BorrowSnapshot:
    principal: Fixed
    index: Fixed


@dataclass
class Account:
    address: str
    pool_tokens: dict[str, Fixed] = field(default_factory=dict)
    borrows: dict[str, BorrowSnapshot] = field(default_factory=dict)


@dataclass(frozen=True)
class PriceTable:
    prices: Mapping[str, Fixed]
    block: int = 0

    def __post_init__(self) -> None:
        for asset, p in self.prices.items():
            if p <= ZERO:
                raise PreconditionError(f"price for {asset} must be positive, got {p}")

    def __getitem__(self, asset: str) -> Fixed:
        try:
            return self.prices[asset]
        except KeyError:
            raise PreconditionError(f"no price for asset {asset!r}") from None


@dataclass(frozen=True)
class LiquidationResult:
    repay_amount: Fixed
    repay_usd: Fixed
    seize_usd: Fixed
    seize_tokens: Fixed
    seize_underlying: Fixed


def utilization(state: MarketState) -> Fixed:
    if state.total_supply <= ZERO:
        return ZERO
    return fdiv(state.total_borrows, state.total_supply)


def exchange_rate(state: MarketState, params: MarketParams | None = None) -> Fixed:
    if state.pool_token_supply == ZERO:
        return params.initial_exchange_rate if params is not None else INITIAL_EXCHANGE_RATE
    return fdiv(state.cash + state.total_borrows - state.reserves, state.pool_token_supply)


def accrue(state: MarketState, params: MarketParams, current_block: int) -> MarketState:
    """Accrue simple interest on total borrows since the last accrual block."""
    delta = current_block - state.last_accrual_block
    if delta < 0:
        raise PreconditionError(
            f"{params.asset_id}: block regression {state.last_accrual_block} -> {current_block}"
        )
    if delta == 0:
        return state
    # Accrual can push TB marginally above TS at full utilization.
    u = fmin(utilization(state), ONE)
    b = borrow_rate(params.rate_model, u)
    periods = params.blocks_per_year
    # interest = TB * b * delta / blocks_per_year, truncated once
    interest = Fixed(state.total_borrows.value * b.value * delta // (SCALE * periods))
    reserve_cut = fmul(interest, params.reserve_factor)
    index_growth = Fixed(state.borrow_index.value * b.value * delta // (SCALE * periods))
    return replace(
        state,
        total_borrows=state.total_borrows + interest,
        reserves=state.reserves + reserve_cut,
        # Supplier share is whatever the reserve cut leaves, so the identity stays exact.
        total_supply=state.total_supply + interest - reserve_cut,
        borrow_index=state.borrow_index + index_growth,
        last_accrual_block=current_block,
        cumulative_interest=state.cumulative_interest + interest,
        cumulative_reserves=state.cumulative_reserves + reserve_cut,
    )


def current_borrow_balance(snap: BorrowSnapshot | None, index: Fixed) -> Fixed:
    if snap is None or snap.principal == ZERO:
        return ZERO
    return muldiv(snap.principal, index, snap.index)


class Protocol:
    """A set of markets sharing one comptroller and one account book.

    Mutations are serialized; call :meth:`snapshot` for a read-only copy.
    """

    def __init__(self, markets: Iterable[MarketParams] = (), block: int = 0) -> None:
        self.block = block
        self.params: dict[str, MarketParams] = {}
        self.states: dict[str, MarketState] = {}
        self.accounts: dict[str, Account] = {}
        for p in markets:
            self.add_market(p)

    # -- setup --------------------------------------------------------
    def add_market(self, params: MarketParams) -> None:
        if params.asset_id in self.params:
            raise PreconditionError(f"market {params.asset_id} already listed")
        self.params[params.asset_id] = params
        self.states[params.asset_id] = MarketState(last_accrual_block=self.block)

    def set_params(self, params: MarketParams) -> None:
        """Swap a market's parameters after accruing under the old ones."""
        self.accrue(params.asset_id)
        self.params[params.asset_id] = params

    def advance(self, block: int) -> None:
        if block < self.block:
            raise PreconditionError(f"block regression {self.block} -> {block}")
        self.block = block

    def account(self, address: str) -> Account:
        acct = self.accounts.get(address)
        if acct is None:
            acct = self.accounts[address] = Account(address)
        return acct

    def _market(self, asset: str) -> tuple[MarketParams, MarketState]:
        try:
            return self.params[asset], self.states[asset]
        except KeyError:
            raise PreconditionError(f"unknown market {asset!r}") from None

    # -- views --------------------------------------------------------
    def accrue(self, asset: str) -> MarketState:
        params, state = self._market(asset)
        state = accrue(state, params, self.block)
        self.states[asset] = state
        return state

    def accrue_all(self) -> None:
        for asset in sorted(self.params):
            self.accrue(asset)

    def utilization(self, asset: str) -> Fixed:
        return utilization(self._market(asset)[1])

    def exchange_rate(self, asset: str) -> Fixed:
        params, state = self._market(asset)
        return exchange_rate(state, params)

    def borrow_balance(self, address: str, asset: str) -> Fixed:
        acct = self.accounts.get(address)
        if acct is None:
            return ZERO
        return current_borrow_balance(acct.borrows.get(asset), self.states[asset].borrow_index)

    def supply_balance(self, address: str, asset: str) -> Fixed:
        """Underlying value of the account's pool tokens in ``asset``."""
        acct = self.accounts.get(address)
        if acct is None:
            return ZERO
        tokens = acct.pool_tokens.get(asset, ZERO)
        return fmul(tokens, self.exchange_rate(asset)) if tokens else ZERO

    def account_liquidity(self, address: str, prices: PriceTable) -> tuple[Fixed, Fixed]:
        """Return ``(collateral-factor-weighted supply USD, borrow USD)``."""
        acct = self.accounts.get(address)
        if acct is None:
            return ZERO, ZERO
        weighted = ZERO
        for asset, tokens in sorted(acct.pool_tokens.items()):
            if tokens:
                supply_usd = fmul(fmul(tokens, self.exchange_rate(asset)), prices[asset])
                weighted += fmul(supply_usd, self.params[asset].collateral_factor)
        owed = ZERO
        for asset in sorted(acct.borrows):
            bal = self.borrow_balance(address, asset)
            if bal:
                owed += fmul(bal, prices[asset])
        return weighted, owed

    def health(self, address: str, prices: PriceTable) -> Fixed:
        weighted, owed = self.account_liquidity(address, prices)
        if owed == ZERO:
            return INFINITY
        return fdiv(weighted, owed)

    def _accrue_account_markets(self, address: str) -> None:
        acct = self.accounts.get(address)
        if acct is None:
            return
        for asset in sorted(set(acct.pool_tokens) | set(acct.borrows)):
            self.accrue(asset)

    def _require_healthy(self, address: str, prices: PriceTable, what: str) -> None:
        weighted, owed = self.account_liquidity(address, prices)
        if weighted < owed:
            raise ComptrollerRejection(
                f"{what} by {address} would leave health below 1 "
                f"(collateral {weighted} USD < borrows {owed} USD)"
            )

    # -- operations ---------------------------------------------------
    def mint(self, address: str, asset: str, amount: Fixed) -> Fixed:
        """Supply ``amount`` underlying; return pool tokens minted."""
        if amount <= ZERO:
            raise PreconditionError(f"mint amount must be positive, got {amount}")
        state = self.accrue(asset)
        tokens = fdiv(amount, exchange_rate(state, self.params[asset]))
        self.states[asset] = replace(
            state,
            cash=state.cash + amount,
            total_supply=state.total_supply + amount,
            pool_token_supply=state.pool_token_supply + tokens,
        )
        acct = self.account(address)
        acct.pool_tokens[asset] = acct.pool_tokens.get(asset, ZERO) + tokens
        return tokens

    def redeem(
        self, address: str, asset: str, pool_tokens: Fixed, prices: PriceTable | None = None
    ) -> Fixed:
        """Burn pool tokens; return underlying paid out."""
        if pool_tokens <= ZERO:
            raise PreconditionError(f"redeem amount must be positive, got {pool_tokens}")
        acct = self.accounts.get(address)
        held = acct.pool_tokens.get(asset, ZERO) if acct else ZERO
        if held < pool_tokens:
            raise PreconditionError(f"{address} holds {held} {asset} pool tokens, asked {pool_tokens}")
        self._accrue_account_markets(address)
        state = self.states[asset]
        underlying = fmul(pool_tokens, exchange_rate(state, self.params[asset]))
        if underlying > state.liquidity:
            raise InsufficientLiquidity(
                f"{asset}: redeem of {underlying} exceeds available liquidity {state.liquidity}"
            )
        old_state = state
        self.states[asset] = replace(
            state,
            cash=state.cash - underlying,
            total_supply=state.total_supply - underlying,
            pool_token_supply=state.pool_token_supply - pool_tokens,
        )
        acct.pool_tokens[asset] = held - pool_tokens
        if acct.borrows and any(b.principal for b in acct.borrows.values()):
            try:
                if prices is None:
                    raise ComptrollerRejection(f"redeem by borrower {address} needs prices")
                self._require_healthy(address, prices, "redeem")
            except ComptrollerRejection:
                self.states[asset] = old_state
                acct.pool_tokens[asset] = held
                raise
        return underlying

    def borrow(self, address: str, asset: str, amount: Fixed, prices: PriceTable) -> None:
        if amount <= ZERO:
            raise PreconditionError(f"borrow amount must be positive, got {amount}")
        self.accrue(asset)
        self._accrue_account_markets(address)
        state = self.states[asset]
        if amount > state.liquidity:
            raise InsufficientLiquidity(
                f"{asset}: borrow of {amount} exceeds available liquidity {state.liquidity}"
            )
        acct = self.account(address)
        weighted, owed = self.account_liquidity(address, prices)
        if weighted < owed + fmul(amount, prices[asset]):
            raise ComptrollerRejection(
                f"borrow of {amount} {asset} by {address} exceeds borrowing capacity "
                f"({weighted} USD weighted collateral, {owed} USD already borrowed)"
            )
        balance = self.borrow_balance(address, asset)
        acct.borrows[asset] = BorrowSnapshot(balance + amount, state.borrow_index)
        self.states[asset] = replace(
            state, cash=state.cash - amount, total_borrows=state.total_borrows + amount
        )

    def _reduce_borrow(self, address: str, asset: str, amount: Fixed) -> Fixed:
        state = self.states[asset]
        acct = self.accounts[address]
        balance = self.borrow_balance(address, asset)
        effective = fmin(amount, balance)
        if effective == ZERO:
            return ZERO
        acct.borrows[asset] = BorrowSnapshot(balance - effective, state.borrow_index)
        from_tb = fmin(effective, state.total_borrows)
        # Per-account truncation can leave a balance a few ulps above TB; the
        # excess repaid is credited to suppliers to keep the identity exact.
        self.states[asset] = replace(
            state,
            cash=state.cash + effective,
            total_borrows=state.total_borrows - from_tb,
            total_supply=state.total_supply + (effective - from_tb),
        )
        return effective

    def repay(self, address: str, asset: str, amount: Fixed) -> Fixed:
        """Repay up to ``amount``; return the amount actually consumed."""
        if amount <= ZERO:
            raise PreconditionError(f"repay amount must be positive, got {amount}")
        self.accrue(asset)
        if address not in self.accounts:
            return ZERO
        return self._reduce_borrow(address, asset, amount)

    def liquidate(
        self,
        liquidator: str,
        borrower: str,
        repay_asset: str,
        collateral_asset: str,
        repay_amount: Fixed,
        prices: PriceTable,
    ) -> LiquidationResult:
        if repay_amount <= ZERO:
            raise PreconditionError(f"repay amount must be positive, got {repay_amount}")
        if liquidator == borrower:
            raise PreconditionError("borrower cannot liquidate itself")
        self._market(collateral_asset)
        self.accrue(repay_asset)
        self.accrue(collateral_asset)
        self._accrue_account_markets(borrower)
        weighted, owed = self.account_liquidity(borrower, prices)
        if owed == ZERO or weighted >= owed:
            raise ComptrollerRejection(f"{borrower} is not liquidatable (health >= 1)")
        repay_params = self.params[repay_asset]
        balance = self.borrow_balance(borrower, repay_asset)
        cap = fmul(repay_params.close_factor, balance)
        if repay_amount > cap:
            raise ComptrollerRejection(
                f"repay {repay_amount} {repay_asset} exceeds close-factor cap {cap}"
            )
        coll_params = self.params[collateral_asset]
        repay_usd = fmul(repay_amount, prices[repay_asset])
        seize_usd = fmul(repay_usd, ONE + coll_params.liquidation_incentive)
        coll_rate = exchange_rate(self.states[collateral_asset], coll_params)
        seize_tokens = fdiv(seize_usd, fmul(prices[collateral_asset], coll_rate))
        acct = self.accounts[borrower]
        held = acct.pool_tokens.get(collateral_asset, ZERO)
        if held < seize_tokens:
            raise ComptrollerRejection(
                f"{borrower} holds {held} {collateral_asset} pool tokens, seize needs {seize_tokens}"
            )
        self._reduce_borrow(borrower, repay_asset, repay_amount)
        acct.pool_tokens[collateral_asset] = held - seize_tokens
        liq = self.account(liquidator)
        liq.pool_tokens[collateral_asset] = liq.pool_tokens.get(collateral_asset, ZERO) + seize_tokens
        return LiquidationResult(
            repay_amount=repay_amount,
            repay_usd=repay_usd,
            seize_usd=seize_usd,
            seize_tokens=seize_tokens,
            seize_underlying=fmul(seize_tokens, coll_rate),
        )

    # -- snapshots ----------------------------------------------------
    def snapshot(self) -> Protocol:
        return copy.deepcopy(self)

    def identity_violations(self) -> list[str]:
        return [a for a, s in sorted(self.states.items()) if not s.identity_holds()]
