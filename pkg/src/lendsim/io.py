"""File formats: price CSVs, fixture snapshots, scenario files and run outputs.

All numbers cross the file boundary as decimal strings so fixed-point values
survive exactly. Output CSVs always use ``.`` as the decimal separator.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

from .agents import PRESETS, Liquidator, PassiveSupplier, TargetLTVBorrower, strategy_preset
from .analytics import (
    AccountPosition,
    Book,
    MarketSummary,
    PeriodAccounting,
    RiskReport,
    combine_periods,
    end_of_period_accounting,
    expost_rates,
    report_to_dict,
)
from .engine import BLOCKS_PER_YEAR, INITIAL_EXCHANGE_RATE, MarketParams, PriceTable, Protocol
from .fixed import ONE, ZERO, Fixed, fmul
from .prices import PriceProcess
from .rates import DomainError, model_from_dict
from .runner import MarketSetup, ParamChange, RunResult, Scenario

log = logging.getLogger(__name__)

DEFAULT_RECONCILE_TOLERANCE = Fixed.parse("0.000001")


class ValidationError(ValueError):
    """Input file violates its schema or an accounting invariant."""

    def __init__(self, source: str, where: str, message: str) -> None:
        self.source, self.where = source, where
        super().__init__(f"{source}: {where}: {message}" if where else f"{source}: {message}")


# -- generic field access ------------------------------------------------

class _Fields:
    """Strict reader for one JSON object: unknown keys are errors, paths are reported."""

    def __init__(self, source: str, path: str, obj: Any, allowed: Iterable[str]) -> None:
        self.source, self.path = source, path
        if not isinstance(obj, dict):
            raise ValidationError(source, path or "<root>", "expected an object")
        self.obj = obj
        unknown = sorted(set(obj) - set(allowed))
        if unknown:
            raise ValidationError(source, self._at(unknown[0]), "unknown field")

    def _at(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def err(self, key: str, message: str) -> ValidationError:
        return ValidationError(self.source, self._at(key), message)

    def has(self, key: str) -> bool:
        return key in self.obj and self.obj[key] is not None

    def raw(self, key: str, default: Any = ...) -> Any:
        if key not in self.obj:
            if default is ...:
                raise self.err(key, "missing required field")
            return default
        return self.obj[key]

    def fixed(self, key: str, default: Any = ...) -> Fixed | None:
        v = self.raw(key, default)
        if v is None or isinstance(v, Fixed):
            return v
        if not isinstance(v, str):
            raise self.err(key, f"numbers must be decimal strings, got {type(v).__name__}")
        try:
            return Fixed.parse(v)
        except ValueError as e:
            raise self.err(key, str(e)) from None

    def integer(self, key: str, default: Any = ...) -> int | None:
        v = self.raw(key, default)
        if v is None:
            return None
        if isinstance(v, str) and v.strip().lstrip("-").isdigit():
            return int(v)
        if isinstance(v, int) and not isinstance(v, bool):
            return v
        raise self.err(key, "expected an integer")

    def string(self, key: str, default: Any = ...) -> str | None:
        v = self.raw(key, default)
        if v is not None and not isinstance(v, str):
            raise self.err(key, "expected a string")
        return v

    def boolean(self, key: str, default: Any = ...) -> bool:
        v = self.raw(key, default)
        if not isinstance(v, bool):
            raise self.err(key, "expected true or false")
        return v

    def sub(self, key: str, allowed: Iterable[str], default: Any = ...) -> _Fields | None:
        v = self.raw(key, default)
        if v is None:
            return None
        return _Fields(self.source, self._at(key), v, allowed)


def _read_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(str(path), f"line {e.lineno}", f"invalid JSON: {e.msg}") from None


# -- prices --------------------------------------------------------------

def load_price_history(path: Path) -> tuple[list[dt.date], dict[str, list[Fixed]]]:
    """Dense daily series per asset from a ``date,asset,price_usd`` CSV.

    Missing days are forward-filled (with a warning); every asset must have a
    price on the first calendar day of the file.
    """
    src = str(path)
    rows: dict[str, dict[dt.date, Fixed]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["date", "asset", "price_usd"]:
            raise ValidationError(src, "line 1", "header must be date,asset,price_usd")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ValidationError(src, f"line {lineno}", f"expected 3 columns, got {len(row)}")
            try:
                day = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise ValidationError(src, f"line {lineno}", f"bad ISO-8601 date {row[0]!r}") from None
            asset = row[1].strip()
            if not asset:
                raise ValidationError(src, f"line {lineno}", "empty asset")
            try:
                price = Fixed.parse(row[2])
            except ValueError as e:
                raise ValidationError(src, f"line {lineno}", f"price_usd: {e}") from None
            if price <= ZERO:
                raise ValidationError(src, f"line {lineno}", f"price_usd must be positive, got {row[2].strip()}")
            if day in rows.setdefault(asset, {}):
                raise ValidationError(src, f"line {lineno}", f"duplicate price for {asset} on {day}")
            rows[asset][day] = price
    if not rows:
        raise ValidationError(src, "", "no price rows")
    start = min(min(d) for d in rows.values())
    end = max(max(d) for d in rows.values())
    dates = [start + dt.timedelta(days=i) for i in range((end - start).days + 1)]
    series: dict[str, list[Fixed]] = {}
    for asset in sorted(rows):
        obs = rows[asset]
        if start not in obs:
            raise ValidationError(src, asset, f"no price on the first day {start}; cannot fill")
        filled, last, gaps = [], None, 0
        for day in dates:
            if day in obs:
                last = obs[day]
            else:
                gaps += 1
            filled.append(last)
        if gaps:
            log.warning("%s: forward-filled %d missing day(s) for %s", src, gaps, asset)
        series[asset] = filled
    return dates, series


def load_prices(path: Path) -> PriceProcess:
    dates, series = load_price_history(path)
    return PriceProcess.path(series, dates)


# -- fixtures ------------------------------------------------------------

_MARKET_KEYS = (
    "total_supply", "total_borrows", "reserves", "cash", "price_usd", "collateral_factor",
    "pool_token_supply", "borrow_index", "exchange_rate", "block",
)
_POSITION_KEYS = (
    "supply", "borrow", "supply_interest", "borrow_interest",
    "pool_tokens", "borrow_principal", "borrow_index_snapshot",
)
_PERIOD_KEYS = (
    "interest_revenue_usd", "interest_expense_usd", "avg_loans_usd", "avg_deposits_usd", "years",
)


@dataclass(frozen=True)
class FixtureSnapshot:
    book: Book
    # Per-market period accounting in USD, if the fixture carries it.
    period: dict[str, PeriodAccounting] | None
    equity_usd: Fixed | None
    years: Fixed


def _relative_gap(a: Fixed, b: Fixed) -> Fixed:
    denom = max(abs(a), abs(b))
    if denom == ZERO:
        return ZERO
    return Fixed(abs(a.value - b.value) * ONE.value // denom.value)


def load_fixture(path: Path, tolerance: Fixed = DEFAULT_RECONCILE_TOLERANCE) -> FixtureSnapshot:
    """Load and reconcile a market/account snapshot.

    Cash is inferred from the monetary identity when absent, and checked
    against it when present. Account sums must match market totals within
    ``tolerance`` (relative).
    """
    src = str(path)
    root = _Fields(src, "", _read_json(path), ("block", "markets", "accounts", "period", "equity_usd", "years"))
    block = root.integer("block")
    years = root.fixed("years", None) or ONE
    markets_raw = root.raw("markets")
    if not isinstance(markets_raw, dict) or not markets_raw:
        raise root.err("markets", "expected a non-empty object keyed by asset")
    markets: dict[str, MarketSummary] = {}
    prices: dict[str, Fixed] = {}
    for asset in sorted(markets_raw):
        f = _Fields(src, f"markets.{asset}", markets_raw[asset], _MARKET_KEYS)
        ts, tb, r = f.fixed("total_supply"), f.fixed("total_borrows"), f.fixed("reserves")
        for key, v in (("total_supply", ts), ("total_borrows", tb), ("reserves", r)):
            if v < ZERO:
                raise f.err(key, "must be non-negative")
        implied_cash = ts - tb + r
        cash = f.fixed("cash", None)
        if cash is not None and cash != implied_cash:
            raise ValidationError(
                src, f"markets.{asset}", f"monetary identity violated: TS={ts} but C+TB-R={cash + tb - r}"
            )
        price = f.fixed("price_usd")
        if price <= ZERO:
            raise f.err("price_usd", "must be positive")
        cf = f.fixed("collateral_factor")
        if not ZERO <= cf < ONE:
            raise f.err("collateral_factor", "must lie in [0, 1)")
        markets[asset] = MarketSummary(ts, tb, r, cf, implied_cash)
        prices[asset] = price

    accounts_raw = root.raw("accounts", [])
    if not isinstance(accounts_raw, list):
        raise root.err("accounts", "expected a list")
    accounts = []
    seen = set()
    for i, a in enumerate(accounts_raw):
        f = _Fields(src, f"accounts[{i}]", a, ("address", "positions"))
        address = f.string("address")
        if address in seen:
            raise f.err("address", f"duplicate account {address!r}")
        seen.add(address)
        positions = f.raw("positions", {})
        if not isinstance(positions, dict):
            raise f.err("positions", "expected an object keyed by asset")
        parts: dict[str, dict[str, Fixed]] = {k: {} for k in ("supply", "borrow", "supply_interest", "borrow_interest")}
        for asset in sorted(positions):
            if asset not in markets:
                raise f.err(f"positions.{asset}", "unknown market")
            pf = _Fields(src, f"accounts[{i}].positions.{asset}", positions[asset], _POSITION_KEYS)
            for key in parts:
                v = pf.fixed(key, None)
                if v is None:
                    continue
                if v < ZERO:
                    raise pf.err(key, "must be non-negative")
                if v:
                    parts[key][asset] = v
        accounts.append(AccountPosition(address, parts["supply"], parts["borrow"], parts["supply_interest"], parts["borrow_interest"]))

    for asset, m in markets.items():
        supplied = sum((p.supply.get(asset, ZERO) for p in accounts), ZERO)
        borrowed = sum((p.borrow.get(asset, ZERO) for p in accounts), ZERO)
        for label, total, acct_sum in (("total_supply", m.total_supply, supplied), ("total_borrows", m.total_borrows, borrowed)):
            if _relative_gap(total, acct_sum) > tolerance:
                raise ValidationError(
                    src, f"markets.{asset}",
                    f"{label}={total} does not reconcile with account sum {acct_sum} (tolerance {tolerance})",
                )

    period = None
    pf = root.sub("period", ("markets",), None)
    if pf is not None:
        per_market = pf.raw("markets")
        if not isinstance(per_market, dict):
            raise pf.err("markets", "expected an object keyed by asset")
        period = {}
        for asset in sorted(per_market):
            if asset not in markets:
                raise pf.err(f"markets.{asset}", "unknown market")
            q = _Fields(src, f"period.markets.{asset}", per_market[asset], _PERIOD_KEYS)
            vals = {k: q.fixed(k) for k in _PERIOD_KEYS[:4]}
            for k, v in vals.items():
                if v < ZERO:
                    raise q.err(k, "must be non-negative")
            period[asset] = PeriodAccounting(**vals, years=q.fixed("years", None) or years)
    equity = root.fixed("equity_usd", None)
    book = Book(block, markets, PriceTable(prices, block), accounts)
    return FixtureSnapshot(book, period, equity, years)


def fixture_period(fx_snap: FixtureSnapshot) -> dict[str, PeriodAccounting]:
    """Explicit period accounting, or the end-of-period convention from account interest."""
    if fx_snap.period is not None:
        return fx_snap.period
    return end_of_period_accounting(fx_snap.book, fx_snap.years)


# -- snapshot export -------------------------------------------------------

def export_snapshot(protocol: Protocol, prices: PriceTable) -> dict:
    """Engine state as a JSON document that :func:`load_fixture` also reads."""
    markets = {}
    for asset in sorted(protocol.states):
        s, p = protocol.states[asset], protocol.params[asset]
        markets[asset] = {
            "block": s.last_accrual_block,
            "total_supply": str(s.total_supply),
            "total_borrows": str(s.total_borrows),
            "reserves": str(s.reserves),
            "cash": str(s.cash),
            "pool_token_supply": str(s.pool_token_supply),
            "borrow_index": str(s.borrow_index),
            "exchange_rate": str(protocol.exchange_rate(asset)),
            "price_usd": str(prices[asset]),
            "collateral_factor": str(p.collateral_factor),
        }
    accounts = []
    for address in sorted(protocol.accounts):
        acct = protocol.accounts[address]
        positions = {}
        for asset in sorted(set(acct.pool_tokens) | set(acct.borrows)):
            pos = {}
            tokens = acct.pool_tokens.get(asset, ZERO)
            if tokens:
                pos["pool_tokens"] = str(tokens)
                pos["supply"] = str(protocol.supply_balance(address, asset))
            snap = acct.borrows.get(asset)
            if snap is not None and snap.principal:
                pos["borrow_principal"] = str(snap.principal)
                pos["borrow_index_snapshot"] = str(snap.index)
                pos["borrow"] = str(protocol.borrow_balance(address, asset))
            if pos:
                positions[asset] = pos
        if positions:
            accounts.append({"address": address, "positions": positions})
    return {"block": protocol.block, "markets": markets, "accounts": accounts}


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- scenarios -------------------------------------------------------------

_SCENARIO_KEYS = (
    "seed", "horizon_blocks", "blocks_per_step", "markets", "agents", "prices", "events",
    "equity_usd", "es_asset", "tail",
)
_MARKET_PARAM_KEYS = (
    "asset", "rate_model", "collateral_factor", "close_factor", "liquidation_incentive",
    "blocks_per_year", "initial_exchange_rate", "seed_supply",
)
_RATE_KEYS = ("kind", "alpha", "beta", "gamma", "u_kink", "reserve_factor")


def _rate_model(f: _Fields, key: str):
    r = f.sub(key, _RATE_KEYS)
    kind = r.string("kind", "linear")
    if kind not in ("linear", "kinked"):
        raise r.err("kind", "expected 'linear' or 'kinked'")
    needed = ("alpha", "beta") if kind == "linear" else ("alpha", "beta", "gamma", "u_kink")
    d = {"kind": kind, **{k: str(r.fixed(k)) for k in needed}, "reserve_factor": str(r.fixed("reserve_factor", Fixed(0)))}
    try:
        return model_from_dict(d)
    except DomainError as e:
        raise ValidationError(f.source, r.path, str(e)) from None


def _market_params(f: _Fields, base: MarketParams | None = None) -> MarketParams:
    def pick(key, conv, default):
        return conv(key) if f.has(key) else default

    try:
        return MarketParams(
            asset_id=f.string("asset") if base is None else base.asset_id,
            rate_model=_rate_model(f, "rate_model") if f.has("rate_model") or base is None else base.rate_model,
            collateral_factor=pick("collateral_factor", f.fixed, base.collateral_factor if base else None)
            if base
            else f.fixed("collateral_factor"),
            close_factor=pick("close_factor", f.fixed, base.close_factor if base else Fixed.parse("0.5")),
            liquidation_incentive=pick(
                "liquidation_incentive", f.fixed, base.liquidation_incentive if base else Fixed.parse("0.08")
            ),
            blocks_per_year=pick("blocks_per_year", f.integer, base.blocks_per_year if base else BLOCKS_PER_YEAR),
            initial_exchange_rate=pick(
                "initial_exchange_rate", f.fixed, base.initial_exchange_rate if base else INITIAL_EXCHANGE_RATE
            ),
        )
    except ValueError as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError(f.source, f.path, str(e)) from None


def _price_process(f: _Fields, base_dir: Path) -> PriceProcess:
    kind = f.string("kind")
    try:
        if kind == "constant":
            g = f.sub("prices", f.raw("prices").keys() if isinstance(f.raw("prices"), dict) else ())
            return PriceProcess.constant({a: g.fixed(a) for a in sorted(g.obj)})
        if kind == "deterministic_path":
            if f.has("csv"):
                return load_prices(base_dir / f.string("csv"))
            series_raw = f.raw("series")
            if not isinstance(series_raw, dict):
                raise f.err("series", "expected an object of asset -> list of decimal strings")
            series = {}
            for asset in sorted(series_raw):
                vals = series_raw[asset]
                if not isinstance(vals, list) or not all(isinstance(v, str) for v in vals):
                    raise f.err(f"series.{asset}", "expected a list of decimal strings")
                series[asset] = [Fixed.parse(v) for v in vals]
            return PriceProcess.path(series)
        if kind == "geometric_random_walk":
            init = f.raw("initial")
            g = f.sub("initial", init.keys() if isinstance(init, dict) else ())
            initial = {a: g.fixed(a) for a in sorted(g.obj)}
            drift = {a: float(Fixed.parse(v)) for a, v in sorted(f.raw("drift", {}).items())}
            vol = {a: float(Fixed.parse(v)) for a, v in sorted(f.raw("volatility", {}).items())}
            return PriceProcess.random_walk(initial, drift, vol)
    except ValidationError:
        raise
    except (ValueError, AttributeError) as e:
        raise ValidationError(f.source, f.path, str(e)) from None
    raise f.err("kind", "expected constant, deterministic_path or geometric_random_walk")


_PRICE_KEYS = ("kind", "prices", "csv", "series", "initial", "drift", "volatility")
_AGENT_KEYS = {
    "passive_supplier": ("id", "kind", "market", "amount", "amount_usd", "hold_constant"),
    "target_ltv_borrower": (
        "id", "kind", "collateral_market", "borrow_market", "target_ratio", "rebalance_band",
        "collateral_amount", "collateral_usd", "resupply",
    ),
    "liquidator": ("id", "kind", "gas_cost_usd", "min_profit_usd"),
    "preset": ("id", "kind", "preset", "initial_usd", "volatile", "stable"),
}


def _agents(src: str, items: Any) -> list:
    if not isinstance(items, list):
        raise ValidationError(src, "agents", "expected a list")
    out = []
    for i, raw in enumerate(items):
        path = f"agents[{i}]"
        if not isinstance(raw, dict) or raw.get("kind") not in _AGENT_KEYS:
            raise ValidationError(src, f"{path}.kind", f"expected one of {sorted(_AGENT_KEYS)}")
        kind = raw["kind"]
        f = _Fields(src, path, raw, _AGENT_KEYS[kind])
        aid = f.string("id")
        try:
            if kind == "passive_supplier":
                out.append(PassiveSupplier(aid, f.string("market"), f.fixed("amount", None), f.fixed("amount_usd", None),
                                           f.boolean("hold_constant", False)))
            elif kind == "target_ltv_borrower":
                out.append(TargetLTVBorrower(
                    aid, f.string("collateral_market"), f.string("borrow_market"), f.fixed("target_ratio"),
                    f.fixed("rebalance_band", None), f.fixed("collateral_amount", None),
                    f.fixed("collateral_usd", None), f.boolean("resupply", False),
                ))
            elif kind == "liquidator":
                out.append(Liquidator(aid, f.fixed("gas_cost_usd", Fixed(0)), f.fixed("min_profit_usd", Fixed(0))))
            else:
                name = f.string("preset")
                if name not in PRESETS:
                    raise f.err("preset", f"unknown preset; expected one of {PRESETS}")
                out.extend(strategy_preset(name, f.fixed("initial_usd"), f.string("volatile", "ETH"),
                                           f.string("stable", "USDC"), aid))
        except ValidationError:
            raise
        except ValueError as e:
            raise ValidationError(src, path, str(e)) from None
    return out


def scenario_from_dict(data: Any, source: str = "<scenario>", base_dir: Path = Path(".")) -> Scenario:
    root = _Fields(source, "", data, _SCENARIO_KEYS)
    markets_raw = root.raw("markets")
    if not isinstance(markets_raw, list) or not markets_raw:
        raise root.err("markets", "expected a non-empty list")
    setups, params = [], {}
    for i, m in enumerate(markets_raw):
        f = _Fields(source, f"markets[{i}]", m, _MARKET_PARAM_KEYS)
        p = _market_params(f)
        params[p.asset_id] = p
        setups.append(MarketSetup(p, f.fixed("seed_supply", Fixed(0))))
    prices_raw = root.raw("prices")
    prices = _price_process(_Fields(source, "prices", prices_raw, _PRICE_KEYS), base_dir)
    events = []
    for i, e in enumerate(root.raw("events", [])):
        f = _Fields(source, f"events[{i}]", e, ("block", "market", "params"))
        asset = f.string("market")
        if asset not in params:
            raise f.err("market", f"undefined market {asset!r}")
        pf = f.sub("params", _MARKET_PARAM_KEYS[1:-1])
        events.append(ParamChange(f.integer("block"), _market_params(pf, params[asset])))
    tail_raw = root.fixed("tail", None)
    try:
        return Scenario(
            markets=setups,
            agents=_agents(source, root.raw("agents", [])),
            prices=prices,
            horizon_blocks=root.integer("horizon_blocks"),
            blocks_per_step=root.integer("blocks_per_step", None),
            seed=root.integer("seed", 0),
            events=events,
            equity_usd=root.fixed("equity_usd", None),
            es_asset=root.string("es_asset", None),
            tail=float(tail_raw) if tail_raw is not None else 0.01,
        )
    except ValidationError:
        raise
    except ValueError as e:
        raise ValidationError(source, "", str(e)) from None


def load_scenario(path: Path, seed: int | None = None) -> Scenario:
    path = Path(path)
    data = _read_json(path)
    if seed is not None and isinstance(data, dict):
        data = {**data, "seed": seed}
    return scenario_from_dict(data, str(path), path.parent)


# -- output tables -----------------------------------------------------------

def _fmt(v: Fixed | int | None) -> str:
    return "" if v is None else str(v)


def _pct(v: Fixed | None) -> str:
    return "" if v is None else str(v * 100)


def _csv(rows: list[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def metrics_csv(result: RunResult) -> str:
    from .rates import quote

    records = result.records
    assets = sorted(records[0].protocol.params)
    agents = sorted(records[0].books)
    cols = ["step", "block"]
    for a in assets:
        cols += [f"{a}_{c}" for c in (
            "price_usd", "total_supply", "total_borrows", "reserves", "cash", "pool_token_supply",
            "borrow_index", "exchange_rate", "utilization", "borrow_rate", "net_supply_rate", "quoted_margin",
        )]
    cols += [f"{aid}_net_usd" for aid in agents]
    rows = [cols]
    ledger = {(r.block, r.agent_id): r for r in result.ledger}
    for rec in records:
        row = [str(rec.step), str(rec.block)]
        for a in assets:
            s, p = rec.protocol.states[a], rec.protocol
            u = min(p.utilization(a), ONE)
            q = quote(p.params[a].rate_model, u)
            row += [_fmt(x) for x in (
                rec.prices[a], s.total_supply, s.total_borrows, s.reserves, s.cash, s.pool_token_supply,
                s.borrow_index, p.exchange_rate(a), u, q.borrow_rate, q.net_supply_rate, q.quoted_margin,
            )]
        row += [_fmt(ledger[(rec.block, aid)].net_value_usd) for aid in agents]
        rows.append(row)
    return _csv(rows)


def ledger_csv(result: RunResult) -> str:
    rows = [["block", "agent_id", "net_value_usd", "interest_earned_usd", "interest_paid_usd"]]
    for r in result.ledger:
        rows.append([str(r.block), r.agent_id, _fmt(r.net_value_usd), _fmt(r.interest_earned_usd), _fmt(r.interest_paid_usd)])
    return _csv(rows)


def events_csv(result: RunResult) -> str:
    rows = [["block", "agent_id", "action", "detail"]]
    rows += [[str(e.block), e.agent_id, e.action, e.detail] for e in result.events]
    return _csv(rows)


LEVEL_COLUMNS = (
    ("borrows_usd", "borrows_usd"), ("rwa_usd", "rwa_usd"), ("ucb_usd", "ucb_usd"),
    ("reserves_usd", "reserves_usd"), ("equity_usd", "equity_usd"),
    ("operating_margin_usd", "operating_margin_usd"), ("collateral_usd", "collateral_usd"),
    ("collateral_es_1d_usd", "collateral_es_1d"), ("collateral_es_5d_usd", "collateral_es_5d"),
)
RATIO_COLUMNS = (
    ("solvency_pct", "solvency_ratio"), ("ucb_over_reserves_pct", "ucb_over_reserves"),
    ("ucb_over_borrows_pct", "ucb_over_borrows"), ("ucb_accounts_pct", "ucb_account_share"),
    ("roe_pct", "roe"), ("roa_pct", "roa"), ("reserves_over_equity_pct", "reserves_over_equity"),
    ("collateral_es_1d_pct", "collateral_es_1d_fraction"), ("collateral_es_5d_pct", "collateral_es_5d_fraction"),
)


def camels_csv(reports: list[tuple[str, RiskReport]]) -> str:
    """Two row-blocks: USD levels, then ratios in percent, one row per period."""
    rows = [["period", *[c for c, _ in LEVEL_COLUMNS]]]
    for label, r in reports:
        rows.append([label, *[_fmt(getattr(r, f)) for _, f in LEVEL_COLUMNS]])
    rows.append([])
    rows.append(["period", *[c for c, _ in RATIO_COLUMNS]])
    for label, r in reports:
        rows.append([label, *[_pct(getattr(r, f)) for _, f in RATIO_COLUMNS]])
    return _csv(rows)


def expost_csv(periods: list[tuple[str, str, PeriodAccounting]]) -> str:
    """Per-market active, passive and margin rates in percent per year."""
    rows = [["period", "market", "active_pct", "passive_pct", "margin_pct"]]
    for label, market, acct in periods:
        active, passive, margin = expost_rates(acct)
        rows.append([label, market, _pct(active), _pct(passive), _pct(margin)])
    return _csv(rows)


def report_json(report: RiskReport) -> str:
    return dumps(report_to_dict(report))


def write_run(result: RunResult, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    final = result.final
    files = {
        "metrics.csv": metrics_csv(result),
        "ledger.csv": ledger_csv(result),
        "events.csv": events_csv(result),
        "camels.csv": camels_csv([(str(r.block), r) for r in result.reports]),
        "expost_rates.csv": expost_csv(_run_periods(result)),
        "risk_report.json": report_json(result.reports[-1]),
        "snapshot.json": dumps(export_snapshot(final.protocol, final.prices)),
    }
    written = []
    for name, text in files.items():
        p = out / name
        p.write_text(text)
        written.append(p)
    return written


def _run_periods(result: RunResult) -> list[tuple[str, str, PeriodAccounting]]:
    from .runner import period_accounting

    out = []
    for asset in sorted(result.final.protocol.params):
        acct = period_accounting(result.records, asset)
        if acct is not None:
            out.append(("run", asset, acct))
    return out


def analyze_fixture(
    fixture: FixtureSnapshot, price_series: list[float] | None = None, tail: float = 0.01
) -> tuple[RiskReport, dict[str, PeriodAccounting]]:
    from .analytics import risk_report

    per_market = fixture_period(fixture)
    period = combine_periods(list(per_market.values())) if per_market else None
    report = risk_report(fixture.book, period, fixture.equity_usd, price_series, tail)
    return report, per_market


def collateral_value_series(book: Book, series: Mapping[str, list[Fixed]]) -> list[float]:
    """Daily USD value of the book's current supply holdings under a price history.

    Assets absent from ``series`` are held at the snapshot price.
    """
    length = max((len(s) for s in series.values()), default=0)
    held: dict[str, Fixed] = {}
    for pos in book.accounts:
        for asset, amount in pos.supply.items():
            held[asset] = held.get(asset, ZERO) + amount
    out = []
    for t in range(length):
        total = ZERO
        for asset in sorted(held):
            price = series[asset][t] if asset in series else book.prices[asset]
            total = total + fmul(held[asset], price)
        out.append(float(total))
    return out


def load_rate_model(path: Path):
    path = Path(path)
    data = _read_json(path)
    return _rate_model(_Fields(str(path), "", {"rate_model": data}, ("rate_model",)), "rate_model")
