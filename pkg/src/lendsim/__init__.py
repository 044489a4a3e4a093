"""Deterministic lending-protocol simulator with bank-style risk analytics."""
from .analytics import RiskReport, risk_report
from .engine import MarketParams, PriceTable, Protocol
from .fixed import Fixed, fx
from .rates import KinkedRateModel, LinearRateModel, optimal_utilization, quote
from .runner import Scenario, run

__all__ = [
    "Fixed", "fx", "LinearRateModel", "KinkedRateModel", "quote", "optimal_utilization",
    "MarketParams", "PriceTable", "Protocol", "Scenario", "run", "RiskReport", "risk_report",
]
