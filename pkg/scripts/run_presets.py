"""Net value of the four strategy presets under a chosen ETH path.

    python scripts/run_presets.py --final-price 4000 --rates
"""
import argparse
import csv
import sys

from lendsim.experiments import preset_scenario
from lendsim.runner import run


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--final-price", default="4000", help="ETH price after day 0 (starts at 2000)")
    ap.add_argument("--initial-usd", default="1000")
    ap.add_argument("--days", type=int, default=30)
    ap.add_argument("--rates", action="store_true", help="use a live linear rate model instead of zero rates")
    args = ap.parse_args()
    result = run(preset_scenario(args.final_price, args.initial_usd, rates_zero=not args.rates, steps=args.days))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["block", "agent_id", "net_value_usd", "interest_earned_usd", "interest_paid_usd"])
    for r in result.ledger:
        w.writerow([r.block, r.agent_id, r.net_value_usd, r.interest_earned_usd, r.interest_paid_usd])


if __name__ == "__main__":
    main()
