import pytest

from lendsim.agents import Liquidator, PassiveSupplier, TargetLTVBorrower, liquidator_step, max_repay, strategy_preset
from lendsim.analytics import expost_rates
from lendsim.experiments import dust_scenario, preset_scenario, steady_state_scenario
from lendsim.fixed import ONE, ZERO, fdiv, fmul, fx
from lendsim.prices import PriceProcess
from lendsim.rates import LinearRateModel, quote
from lendsim.runner import MarketSetup, ParamChange, Scenario, agent_position, period_accounting, run

from support import market


def rel(a, b):
    return abs(float(a) - float(b)) / abs(float(b))


@pytest.fixture(scope="module")
def steady():
    return run(steady_state_scenario())


def test_steady_state_expost_equals_quoted(steady):
    acct = period_accounting(steady.records, "USDC")
    active, passive, margin = expost_rates(acct)
    u = fdiv(acct.avg_loans_usd, acct.avg_deposits_usd)
    q = quote(steady.scenario.markets[1].params.rate_model, u)
    assert rel(u, fx("0.5")) < 1e-12
    assert rel(active, q.borrow_rate) < 1e-6
    assert rel(passive, q.net_supply_rate) < 1e-6
    assert rel(margin, q.quoted_margin) < 1e-6


def test_steady_state_ledger(steady):
    rows = {r.agent_id: r for r in steady.ledger if r.block == steady.final.block}
    assert rel(rows["saver"].interest_earned_usd, 54_000) < 1e-3
    assert rel(rows["borrower"].interest_paid_usd, 60_000) < 1e-3
    assert not [e for e in steady.events if e.detail.startswith("rejected")]


def test_agent_position_recomputes_from_record(steady):
    rec = steady.records[100]
    rows = [r for r in steady.ledger if r.block == rec.block]
    assert rows == [agent_position(rec, aid) for aid in sorted(rec.books)]


def test_ledger_value_conserved_at_zero_rates():
    result = run(preset_scenario("2000"))
    finals = [r for r in result.ledger if r.block == result.final.block]
    assert [r.net_value_usd for r in finals] == [fx(1000)] * 4


def test_levered_preset_under_doubling():
    result = run(preset_scenario("4000"))
    finals = {r.agent_id: r.net_value_usd for r in result.ledger if r.block == result.final.block}
    assert finals["levered_collateral"] == fx(2500)
    assert finals["passive_collateral"] == fx(2000)
    assert finals["passive_stable"] == fx(1000)


def test_unknown_preset():
    with pytest.raises(ValueError):
        strategy_preset("yolo", fx(1))


def test_scenario_validation():
    m = MarketSetup(market("ETH"))
    with pytest.raises(ValueError):
        Scenario([m], [PassiveSupplier("s", "BTC", amount=ONE)], PriceProcess.constant({"ETH": ONE}), 100)
    with pytest.raises(ValueError):
        Scenario([m], [], PriceProcess.constant({"ETH": ONE}), 0)


def test_param_change_event_applies():
    model = LinearRateModel(fx("0.02"), fx("0.2"), fx("0.1"))
    high = LinearRateModel(fx("0.5"), fx("0.2"), fx("0.1"))
    usdc = market("USDC", "0.8", model)
    sc = Scenario(
        [MarketSetup(market("ETH", "0.75", model)), MarketSetup(usdc)],
        [
            PassiveSupplier("s", "USDC", amount=fx(1000)),
            TargetLTVBorrower("b", "ETH", "USDC", fx("0.5"), collateral_amount=fx(1)),
        ],
        PriceProcess.constant({"ETH": fx(1000), "USDC": ONE}),
        horizon_blocks=10 * 6570,
        events=[ParamChange(5 * 6570, market("USDC", "0.8", high))],
    )
    result = run(sc)
    assert [e.action for e in result.events] == ["set_params"]
    assert result.final.protocol.params["USDC"].rate_model == high
    early = period_accounting(result.records, "USDC", 1, 5)
    late = period_accounting(result.records, "USDC", 5, 10)
    assert expost_rates(late)[0] > expost_rates(early)[0] * 3


def test_determinism_random_walk():
    sc = dust_scenario(n_small=20, n_large=2)
    a, b = run(sc), run(sc)
    assert a.ledger == b.ledger and a.events == b.events and a.reports == b.reports


@pytest.fixture(scope="module")
def dust():
    return run(dust_scenario())


def test_dust_accounts_left_unliquidated(dust):
    final = dust.final
    keeper = Liquidator("keeper", gas_cost_usd=fx(5))
    assert liquidator_step(keeper, final.protocol, final.prices) == []
    rep = dust.reports[-1]
    assert rep.ucb_usd > ZERO
    assert rep.ucb_over_borrows < fx("0.001")
    assert rep.ucb_account_share > fx("0.5")
    # Every remaining underwater account is worth less than the gas to liquidate.
    p = final.protocol
    for addr in sorted(p.accounts):
        w, owed = p.account_liquidity(addr, final.prices)
        if owed > ZERO and w < owed:
            r = max_repay(p, addr, "USDC", "ETH", final.prices)
            assert fmul(fmul(r, final.prices["USDC"]), p.params["ETH"].liquidation_incentive) < fx(5)


def test_dust_large_accounts_liquidated(dust):
    liquidated = {e.detail.split()[0] for e in dust.events if e.action == "liquidate"}
    assert {f"large{i:03d}" for i in range(20)} <= liquidated
    assert not dust.final.protocol.identity_violations()


def test_liquidator_ignores_healthy_and_respects_min_profit():
    sc = dust_scenario(n_small=5, n_large=1, days=2)
    rec = run(sc).final
    assert liquidator_step(Liquidator("k"), rec.protocol, rec.prices) == []
