"""Command-line entry point: ``lendsim simulate|analyze|rates``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io as lio
from .fixed import ONE, Fixed
from .rates import KinkedRateModel, optimal_utilization, quote
from .runner import run

EXIT_OK, EXIT_VALIDATION, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("lendsim")


def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario = lio.load_scenario(args.scenario, seed=args.seed)
    result = run(scenario)
    out = Path(args.out)
    for p in lio.write_run(result, out):
        print(p)
    return EXIT_OK


def _cmd_analyze(args: argparse.Namespace) -> int:
    fixture = lio.load_fixture(args.fixture)
    series = None
    if args.prices:
        _, history = lio.load_price_history(args.prices)
        series = lio.collateral_value_series(fixture.book, history)
    report, per_market = lio.analyze_fixture(fixture, series, args.tail)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "risk_report.json": lio.report_json(report),
        "camels.csv": lio.camels_csv([(str(report.block), report)]),
        "expost_rates.csv": lio.expost_csv([(str(report.block), a, p) for a, p in sorted(per_market.items())]),
    }
    for name, text in files.items():
        (out / name).write_text(text)
        print(out / name)
    return EXIT_OK


def rate_curve_csv(model, grid: int) -> str:
    rows = [["label", "u", "borrow_rate", "gross_supply_rate", "net_supply_rate", "quoted_margin"]]

    def row(label: str, u: Fixed) -> list[str]:
        q = quote(model, u)
        return [label, str(u), str(q.borrow_rate), str(q.gross_supply_rate), str(q.net_supply_rate), str(q.quoted_margin)]

    points = [ONE * i / grid for i in range(grid + 1)]
    rows += [row("curve", u) for u in points]
    if isinstance(model, KinkedRateModel):
        # No closed form past the kink: report the best grid point.
        best = max(points, key=lambda u: (quote(model, u).quoted_margin, -u.value))
        rows.append(row("u_star_grid", best))
    else:
        rows.append(row("u_star", optimal_utilization(model)))
    return lio._csv(rows)


def _cmd_rates(args: argparse.Namespace) -> int:
    if args.grid < 1:
        raise _Usage("--grid must be a positive integer")
    model = lio.load_rate_model(args.params)
    sys.stdout.write(rate_curve_csv(model, args.grid))
    return EXIT_OK


class _Usage(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lendsim", description="Lending-protocol simulator and risk analytics")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write CSV/JSON reports")
    p.add_argument("scenario", type=Path)
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("analyze", help="risk report for a market/account fixture")
    p.add_argument("fixture", type=Path)
    p.add_argument("--prices", type=Path, default=None, help="date,asset,price_usd CSV for expected shortfall")
    p.add_argument("--tail", type=float, default=0.01)
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("rates", help="print rate and margin curves with the optimal utilization")
    p.add_argument("params", type=Path)
    p.add_argument("--grid", type=int, default=100, help="number of grid intervals on [0, 1]")
    p.set_defaults(func=_cmd_rates)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except _Usage as e:
        print(f"lendsim: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"lendsim: error: {e.filename}: file not found", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, ArithmeticError, RuntimeError) as e:
        # ValidationError and domain errors are ValueErrors.
        print(f"lendsim: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
