"""Sweep liquidator gas cost and report how much undercollateralized debt is left behind."""
import argparse
import csv
import sys

from lendsim.experiments import dust_scenario
from lendsim.runner import run


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gas", nargs="+", default=["0", "1", "5", "20"], help="gas costs in USD")
    ap.add_argument("--small", type=int, default=200, help="number of dust borrowers")
    ap.add_argument("--drop", default="0.9", help="ETH price multiplier applied on day 3")
    args = ap.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["gas_cost_usd", "liquidations", "ucb_usd", "ucb_over_borrows_pct", "ucb_accounts_pct"])
    for gas in args.gas:
        result = run(dust_scenario(n_small=args.small, gas_cost_usd=gas, drop=args.drop))
        rep = result.reports[-1]
        n_liq = sum(e.action == "liquidate" for e in result.events)
        share = rep.ucb_account_share
        ratio = rep.ucb_over_borrows
        w.writerow([gas, n_liq, rep.ucb_usd, "" if ratio is None else ratio * 100, "" if share is None else share * 100])


if __name__ == "__main__":
    main()
