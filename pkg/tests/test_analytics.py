import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lendsim.analytics import (
    AccountPosition, Book, MarketSummary, PeriodAccounting, book_from_protocol,
    collateral_expected_shortfall, combine_periods, earnings, expost_rates, risk_report,
    risk_weight, risk_weighted_assets, solvency_ratio, ucb_metrics,
)
from lendsim.engine import PriceTable, Protocol
from lendsim.fixed import ONE, ZERO, fx

from support import market, prices

TABLE = [
    ("0.5", "1.5"), ("1", "1.5"), ("1.000000000000000001", "1"), ("1.2", "1"), ("1.33", "1"),
    ("1.330000000000000001", "0.5"), ("1.5", "0.5"), ("2", "0.5"), ("2.000000000000000001", "0.2"),
    ("5", "0.2"), ("10", "0.2"), ("10.000000000000000001", "0"), ("50", "0"),
]


@pytest.mark.parametrize("h,w", TABLE)
def test_risk_weight_table(h, w):
    assert risk_weight(fx(h)) == fx(w)


def brute_force_es(prices_, horizon, tail):
    rets = [prices_[i + horizon] / prices_[i] - 1.0 for i in range(len(prices_) - horizon)]
    k = math.ceil(tail * len(rets))
    worst = sorted(rets)[:k]
    return -math.fsum(worst) / k


def random_prices(seed, n=1000):
    rng = np.random.default_rng(seed)
    return (100 * np.cumprod(1 + 0.03 * rng.standard_normal(n))).tolist()


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("horizon", [1, 5])
def test_es_matches_brute_force(seed, horizon):
    p = random_prices(seed)
    frac, usd = collateral_expected_shortfall(p, horizon, 0.01, 1.0)
    assert frac == brute_force_es(p, horizon, 0.01)
    assert usd == frac


def test_es_homogeneous_in_collateral():
    p = random_prices(3)
    frac, _ = collateral_expected_shortfall(p, 1, 0.01)
    for scale in (2.0, 1024.0, 3.7):
        _, usd = collateral_expected_shortfall(p, 1, 0.01, scale)
        assert usd == pytest.approx(frac * scale, rel=1e-15)


def test_es_constant_series_is_zero():
    frac, usd = collateral_expected_shortfall([42.0] * 300, 5, 0.01, 1e6)
    assert frac == 0.0 and usd == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.005, 0.2))
def test_es_property_oracle(seed, tail):
    p = random_prices(seed, 300)
    assert collateral_expected_shortfall(p, 1, tail)[0] == brute_force_es(p, 1, tail)


def test_es_rejects_short_or_bad_input():
    with pytest.raises(ValueError):
        collateral_expected_shortfall([1.0] * 249)
    with pytest.raises(ValueError):
        collateral_expected_shortfall([1.0] * 300, tail=0.6)


def _book():
    markets = {"USD": MarketSummary(fx(1000), fx(500), fx(10), fx("0.8"))}
    accounts = [
        AccountPosition("a", {"USD": fx(100)}, {"USD": fx(100)}),  # h = 0.8
        AccountPosition("b", {"USD": fx(500)}, {"USD": fx(200)}),  # h = 2
        AccountPosition("c", {"USD": fx(400)}, {"USD": fx(200)}),  # h = 1.6
        AccountPosition("d", {"USD": fx(100)}),
    ]
    return Book(7, markets, PriceTable({"USD": ONE}), accounts)


def test_rwa_solvency_ucb():
    book = _book()
    rwa = risk_weighted_assets(book.accounts, book.markets, book.prices)
    assert rwa == fx(150 + 100 + 100)
    assert solvency_ratio(fx(10), rwa) == fx(10) / 350
    assert solvency_ratio(fx(10), ZERO) is None
    u = ucb_metrics(book.accounts, book.markets, book.prices, fx(10))
    assert u.ucb_usd == fx(100)
    assert u.ucb_over_borrows == fx("0.2")
    assert u.ucb_over_reserves == fx(10)
    assert u.account_share == ONE / 3


def test_expost_and_earnings():
    acct = PeriodAccounting(fx(30), fx(20), fx(200), fx(400), fx("0.25"))
    active, passive, margin = expost_rates(acct)
    assert (active, passive, margin) == (fx("0.6"), fx("0.2"), fx("0.4"))
    op, roa, roe, r_e = earnings(acct, fx(1000), fx(200), fx(50))
    assert (op, roa, roe, r_e) == (fx(10), fx("0.05"), fx("0.01"), fx("0.05"))
    assert combine_periods([acct, acct]).interest_revenue_usd == fx(60)
    with pytest.raises(ValueError):
        combine_periods([acct, PeriodAccounting(ONE, ONE, ONE, ONE, ONE)])


def test_report_from_protocol_matches_positions():
    proto = Protocol([market("ETH", "0.75"), market("USDC", "0.8")])
    proto.mint("alice", "ETH", fx(10))
    proto.mint("bob", "USDC", fx(10_000))
    proto.borrow("alice", "USDC", fx(7000), prices(ETH="1000", USDC="1"))
    book = book_from_protocol(proto, prices(ETH="1000", USDC="1"))
    rep = risk_report(book)
    # alice: h = 7500 / 7000 in (1, 1.33] -> weight 1
    assert rep.rwa_usd == fx(7000)
    assert rep.borrows_usd == fx(7000)
    assert rep.ucb_usd == ZERO
    assert rep.collateral_usd == fx(20_000)
    rep2 = risk_report(book_from_protocol(proto, prices(ETH="900", USDC="1")))
    assert rep2.ucb_usd == fx(7000) and rep2.ucb_over_borrows == ONE
