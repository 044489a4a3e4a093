"""Shared builders for the unit and acceptance tests."""
from __future__ import annotations

import random

from lendsim.engine import LendingError, MarketParams, PriceTable, Protocol
from lendsim.fixed import ONE, ZERO, Fixed, fdiv, fmul, fx
from lendsim.rates import KinkedRateModel, LinearRateModel

FLAT = LinearRateModel(ZERO, ZERO, ZERO)


def market(asset: str, cf: str = "0.75", model=FLAT, **kw) -> MarketParams:
    return MarketParams(asset, model, fx(cf), **kw)


def prices(**p: str) -> PriceTable:
    return PriceTable({k: fx(v) for k, v in p.items()})


def zrx_liquidation():
    """Borrow 4 ZRX against 4 ETH, let ETH fall, repay 2 ZRX at a 1.08% incentive."""
    proto = Protocol([
        market("ETH", "0.75", liquidation_incentive=fx("0.0108")),
        market("ZRX", "0.5"),
    ])
    proto.mint("lender", "ZRX", fx(100))
    proto.mint("alice", "ETH", fx(4))
    proto.borrow("alice", "ZRX", fx(4), prices(ETH="2", ZRX="1"))
    return proto, proto.liquidate("bob", "alice", "ZRX", "ETH", fx(2), prices(ETH="1.25", ZRX="1"))


def cf_gate() -> tuple[bool, bool]:
    """(3 ETH allowed, 3 ETH + 1 ulp rejected) against 4 ETH at cf 0.75."""
    def attempt(amount: Fixed) -> bool:
        proto = Protocol([market("ETH", "0.75")])
        proto.mint("lender", "ETH", fx(100))
        proto.mint("alice", "ETH", fx(4))
        try:
            proto.borrow("alice", "ETH", amount, prices(ETH="1"))
            return True
        except LendingError:
            return False
    return attempt(fx(3)), not attempt(fx(3) + Fixed(1))


def identity_sequences(n_sequences: int, ops_per_sequence: int = 12, seed: int = 0) -> tuple[int, int]:
    """Random operation sequences on three markets; returns (operations, identity violations)."""
    rng = random.Random(seed)
    models = [
        LinearRateModel(fx("0.02"), fx("0.2"), fx("0.1")),
        KinkedRateModel(fx("0"), fx("0.05"), fx("1"), fx("0.8"), fx("0.2")),
        LinearRateModel(fx("0.05"), fx("0.3"), fx("0.15")),
    ]
    assets = ["ETH", "USDC", "DAI"]
    users = ["u0", "u1", "u2", "u3"]
    n_ops = violations = 0
    for _ in range(n_sequences):
        proto = Protocol([MarketParams(a, m, fx("0.75")) for a, m in zip(assets, models)])
        table = {"ETH": fx(2000), "USDC": ONE, "DAI": ONE}
        # Pre-fund every market and give each user some collateral, checked like any other step.
        for asset in assets:
            proto.mint("lender", asset, fx(10_000_000))
        for user in users:
            asset = rng.choice(assets)
            proto.mint(user, asset, Fixed(rng.randrange(1, 10**24)))
        n_ops += len(assets) + len(users)
        violations += len(proto.identity_violations())
        for _ in range(ops_per_sequence):
            op = rng.choice(("mint", "mint", "redeem", "borrow", "borrow", "repay", "liquidate", "liquidate", "time", "price"))
            user, asset = rng.choice(users), rng.choice(assets)
            amount = Fixed(rng.randrange(1, 10**22))
            pt = PriceTable(dict(table))
            try:
                if op == "mint":
                    proto.mint(user, asset, amount)
                elif op == "redeem":
                    held = proto.accounts.get(user) and proto.accounts[user].pool_tokens.get(asset, ZERO)
                    if held:
                        proto.redeem(user, asset, Fixed(rng.randrange(1, held.value + 1)), pt)
                elif op == "borrow":
                    # Aim near the remaining capacity so some borrows pass and some fail.
                    weighted, owed = proto.account_liquidity(user, pt)
                    room = fdiv(weighted - owed, pt[asset]) if weighted > owed else amount
                    liquid = proto.states[asset].liquidity
                    cap = min(room, liquid) if liquid > ZERO else room
                    amount = Fixed(max(1, cap.value * rng.randrange(50, 110) // 100))
                    proto.borrow(user, asset, amount, pt)
                elif op == "repay":
                    proto.repay(user, asset, amount)
                elif op == "liquidate":
                    underwater = [u for u in users if proto.health(u, pt) < ONE]
                    user = rng.choice(underwater) if underwater else user
                    debts = [a for a in assets if proto.borrow_balance(user, a)]
                    asset = rng.choice(debts) if debts else asset
                    owed = proto.borrow_balance(user, asset)
                    held = [a for a, t in sorted(proto.accounts[user].pool_tokens.items()) if t] if owed else []
                    if held:
                        repay = Fixed(rng.randrange(1, owed.value // 2 + 1)) if owed.value > 1 else owed
                        proto.liquidate("keeper", user, asset, rng.choice(held), repay, pt)
                elif op == "time":
                    proto.advance(proto.block + rng.randrange(1, 500_000))
                    proto.accrue_all()
                else:
                    table["ETH"] = fmul(table["ETH"], fx(rng.choice(("0.5", "0.8", "0.95", "1.1", "1.5"))))
            except LendingError:
                pass
            n_ops += 1
            if proto.identity_violations():
                violations += 1
    return n_ops, violations


# Synthetic book sized to the published quarter: a dust account below health 1,
# an account exactly at health 1 (weight 1.5) and the remaining book at health
# 1.2 (weight 1).
FIXTURE_TARGETS = {
    "reserves": Fixed.from_int(27_372_147),
    "rwa": Fixed.from_int(3_600_122_326),
    "ucb": Fixed.from_int(905_031),
    "borrows": Fixed.from_int(3_568_787_044),
    "revenue": Fixed.parse("176020000"),
    "expense": Fixed.parse("204300000"),
    "equity": Fixed.from_int(1_790_332_941),
}


def camels_fixture_dict() -> dict:
    t = FIXTURE_TARGETS
    # weights: 1.5 * (h=1 block) + 1.0 * rest + 1.5 * ucb = rwa, blocks sum to borrows
    at_one = (t["rwa"] - t["borrows"] - fdiv(t["ucb"], fx(2))) * 2
    rest = t["borrows"] - t["ucb"] - at_one
    cf = fx("0.8")
    accounts = [
        ("dust", t["ucb"], fdiv(fmul(t["ucb"], fx("0.9")), cf)),
        ("edge", at_one, fdiv(at_one, cf)),
        ("bulk", rest, fdiv(fmul(rest, fx("1.2")), cf)),
    ]
    supply_total = sum((s for _, _, s in accounts), ZERO)
    # Interest is apportioned to accounts pro rata so the fixture's own period block carries it.
    return {
        "block": 12_000_000,
        "years": "0.25",
        "equity_usd": str(t["equity"]),
        "markets": {
            "USD": {
                "total_supply": str(supply_total),
                "total_borrows": str(t["borrows"]),
                "reserves": str(t["reserves"]),
                "price_usd": "1",
                "collateral_factor": str(cf),
            }
        },
        "accounts": [
            {"address": a, "positions": {"USD": {"supply": str(s), "borrow": str(b)}}} for a, b, s in accounts
        ],
        "period": {
            "markets": {
                "USD": {
                    "interest_revenue_usd": str(t["revenue"]),
                    "interest_expense_usd": str(t["expense"]),
                    "avg_loans_usd": str(t["borrows"]),
                    "avg_deposits_usd": str(supply_total),
                    "years": "0.25",
                }
            }
        },
    }
