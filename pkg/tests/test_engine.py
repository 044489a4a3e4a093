import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from lendsim.engine import (
    BLOCKS_PER_YEAR, ComptrollerRejection, InsufficientLiquidity, MarketParams, MarketState,
    PreconditionError, PriceTable, Protocol, accrue, utilization,
)
from lendsim.fixed import INFINITY, ONE, SCALE, ZERO, Fixed, fx
from lendsim.rates import LinearRateModel

from support import cf_gate, identity_sequences, market, prices, zrx_liquidation


def test_accrual_worked_example():
    params = MarketParams("X", LinearRateModel(fx("0.1"), ZERO, fx("0.1")), fx("0.5"), blocks_per_year=2_400_000)
    state = MarketState(total_supply=fx(3_000_000), total_borrows=fx(2_400_000), cash=fx(600_000))
    after = accrue(state, params, 1)
    assert after.total_borrows - state.total_borrows == fx("0.1")
    assert after.reserves == fx("0.01")
    assert after.total_supply - state.total_supply == fx("0.09")
    assert after.identity_holds()


def test_blocks_per_year_convention():
    assert BLOCKS_PER_YEAR == 2_398_174


def _trunc(q: Fraction) -> int:
    return math.trunc(q)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 200_000), min_size=1, max_size=20), st.integers(1, 10**6))
def test_accrual_path_matches_rational_oracle(deltas, borrows):
    model = LinearRateModel(fx("0.02"), fx("0.2"), fx("0.1"))
    params = MarketParams("X", model, fx("0.5"))
    tb = Fixed.from_int(borrows)
    state = MarketState(total_supply=tb * 2, total_borrows=tb, cash=tb)
    ts, tb_v, r, idx = state.total_supply.value, tb.value, 0, SCALE
    block = 0
    for d in deltas:
        block += d
        state = accrue(state, params, block)
        u = min(Fraction(tb_v * SCALE // ts if ts else 0, SCALE), 1)
        b = Fraction(2, 100) + Fraction(2, 10) * u
        b = Fraction(_trunc(b * SCALE), SCALE)
        interest = _trunc(Fraction(tb_v) * b * d / BLOCKS_PER_YEAR)
        cut = _trunc(Fraction(interest) / 10)
        idx += _trunc(Fraction(idx) * b * d / BLOCKS_PER_YEAR)
        tb_v += interest
        r += cut
        ts += interest - cut
        assert (state.total_borrows.value, state.reserves.value, state.total_supply.value, state.borrow_index.value) == (
            tb_v, r, ts, idx,
        )
        assert state.identity_holds()


def test_repay_after_accrual_oracle():
    model = LinearRateModel(fx("0.05"), fx("0.3"), fx("0.1"))
    proto = Protocol([MarketParams("USDC", model, fx("0.8"))])
    proto.mint("lender", "USDC", fx(1000))
    proto.mint("bob", "USDC", fx(500))
    proto.borrow("bob", "USDC", fx(300), prices(USDC="1"))
    i0 = proto.states["USDC"].borrow_index
    proto.advance(BLOCKS_PER_YEAR)
    proto.accrue("USDC")
    i1 = proto.states["USDC"].borrow_index
    expected = _trunc(Fraction(300 * SCALE) * i1.value / i0.value)
    assert proto.borrow_balance("bob", "USDC").value == expected
    tb_before = proto.states["USDC"].total_borrows
    paid = proto.repay("bob", "USDC", fx(10_000))
    assert paid.value == expected
    assert proto.borrow_balance("bob", "USDC") == ZERO
    assert proto.states["USDC"].total_borrows == tb_before - paid
    assert not proto.identity_violations()


def test_zrx_liquidation_example():
    proto, res = zrx_liquidation()
    assert res.seize_usd == fx("2.0216")
    assert res.seize_usd - res.repay_usd == fx("0.0216")
    assert res.seize_tokens == fx("80.864")
    assert proto.borrow_balance("alice", "ZRX") == fx(2)
    assert proto.accounts["bob"].pool_tokens["ETH"] == fx("80.864")
    assert not proto.identity_violations()


def test_collateral_factor_gate():
    assert cf_gate() == (True, True)


def test_health_exactly_one_is_not_liquidatable():
    proto = Protocol([market("ETH", "0.75")])
    proto.mint("lender", "ETH", fx(100))
    proto.mint("alice", "ETH", fx(4))
    proto.borrow("alice", "ETH", fx(3), prices(ETH="1"))
    assert proto.health("alice", prices(ETH="1")) == ONE
    with pytest.raises(ComptrollerRejection):
        proto.liquidate("bob", "alice", "ETH", "ETH", fx(1), prices(ETH="1"))


def test_close_factor_cap():
    proto, _ = zrx_liquidation()
    # 2 ZRX still owed at health < 1; the cap is half of it.
    with pytest.raises(ComptrollerRejection):
        proto.liquidate("bob", "alice", "ZRX", "ETH", fx(1) + Fixed(1), prices(ETH="0.5", ZRX="1"))


def test_redeem_and_borrow_liquidity_limits():
    proto = Protocol([market("ETH", "0.75"), market("USDC", "0.8")])
    proto.mint("bob", "ETH", fx(20))
    proto.mint("alice", "USDC", fx(100))
    proto.borrow("alice", "ETH", fx(18), prices(ETH="1", USDC="1"))
    with pytest.raises(InsufficientLiquidity):
        proto.borrow("alice", "ETH", fx(3), prices(ETH="1", USDC="1"))
    with pytest.raises(InsufficientLiquidity):
        proto.redeem("bob", "ETH", fx(500), prices(ETH="1", USDC="1"))
    # Redeeming collateral that backs a borrow is blocked and rolled back.
    tokens = proto.accounts["alice"].pool_tokens["USDC"]
    before = proto.states["USDC"]
    with pytest.raises(ComptrollerRejection):
        proto.redeem("alice", "USDC", tokens * 4 / 5, prices(ETH="1", USDC="1"))
    assert proto.accounts["alice"].pool_tokens["USDC"] == tokens
    assert proto.states["USDC"] == before
    assert not proto.identity_violations()


def test_preconditions():
    proto = Protocol([market("ETH")])
    with pytest.raises(PreconditionError):
        proto.mint("a", "ETH", ZERO)
    with pytest.raises(PreconditionError):
        proto.mint("a", "BTC", ONE)
    proto.advance(10)
    with pytest.raises(PreconditionError):
        proto.advance(5)
    with pytest.raises(PreconditionError):
        PriceTable({"ETH": ZERO})
    assert proto.health("nobody", prices(ETH="1")) == INFINITY


def test_utilization_zero_supply():
    assert utilization(MarketState()) == ZERO


def test_monetary_identity_random_sequences():
    n_ops, violations = identity_sequences(500, seed=1)
    assert n_ops > 5000 and violations == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_monetary_identity_hypothesis(seed):
    assert identity_sequences(1, ops_per_sequence=25, seed=seed)[1] == 0
