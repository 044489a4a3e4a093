"""Utilization-driven interest-rate curves and the margin algebra built on them.

All rates are annualized fractions. Conversion to per-block happens only in
the engine's accrual step.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .fixed import ONE, ZERO, Fixed, fdiv, fmax, fmin, fmul, fx


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class LinearRateModel:
    alpha: Fixed
    beta: Fixed
    reserve_factor: Fixed = ZERO

    def __post_init__(self) -> None:
        # beta == 0 is accepted so zero-rate scenarios can be expressed;
        # optimal_utilization rejects it.
        if self.alpha < 0 or self.beta < 0:
            raise DomainError(f"alpha and beta must be non-negative: {self}")
        if not ZERO <= self.reserve_factor < ONE:
            raise DomainError(f"reserve factor must lie in [0, 1): {self.reserve_factor}")

    def borrow_rate(self, u: Fixed) -> Fixed:
        return self.alpha + fmul(self.beta, u)


@dataclass(frozen=True)
class KinkedRateModel:
    alpha: Fixed
    beta: Fixed
    gamma: Fixed
    u_kink: Fixed
    reserve_factor: Fixed = ZERO

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise DomainError(f"alpha and beta must be non-negative: {self}")
        if not self.gamma > self.beta:
            raise DomainError(f"post-kink slope must exceed pre-kink slope: {self}")
        if not ZERO < self.u_kink < ONE:
            raise DomainError(f"kink must lie in (0, 1): {self.u_kink}")
        if not ZERO <= self.reserve_factor < ONE:
            raise DomainError(f"reserve factor must lie in [0, 1): {self.reserve_factor}")

    def lower_branch(self, u: Fixed) -> Fixed:
        return self.alpha + fmul(self.beta, u)

    def upper_branch(self, u: Fixed) -> Fixed:
        return self.alpha + fmul(self.beta, self.u_kink) + fmul(self.gamma, u - self.u_kink)

    def borrow_rate(self, u: Fixed) -> Fixed:
        return self.lower_branch(u) if u <= self.u_kink else self.upper_branch(u)


RateModel = Union[LinearRateModel, KinkedRateModel]


@dataclass(frozen=True)
class RateQuote:
    borrow_rate: Fixed
    gross_supply_rate: Fixed
    net_supply_rate: Fixed
    quoted_margin: Fixed
    utilization: Fixed


def _check_u(u: Fixed) -> None:
    if not ZERO <= u <= ONE:
        raise DomainError(f"utilization outside [0, 1]: {u}")


def borrow_rate(model: RateModel, u: Fixed) -> Fixed:
    _check_u(u)
    return model.borrow_rate(u)


def supply_rates(model: RateModel, u: Fixed) -> tuple[Fixed, Fixed]:
    """Return ``(gross, net)`` supply rates: ``b*u`` and ``b*u*(1-psi)``."""
    b = borrow_rate(model, u)
    gross = fmul(b, u)
    return gross, fmul(gross, ONE - model.reserve_factor)


def quoted_margin(model: RateModel, u: Fixed) -> Fixed:
    # Borrow rate minus net supply rate, evaluated from the definitions.
    b = borrow_rate(model, u)
    _, net = supply_rates(model, u)
    return b - net


def quote(model: RateModel, u: Fixed) -> RateQuote:
    b = borrow_rate(model, u)
    gross = fmul(b, u)
    net = fmul(gross, ONE - model.reserve_factor)
    return RateQuote(b, gross, net, b - net, u)


def optimal_utilization(model: LinearRateModel) -> Fixed:
    """Margin-maximizing utilization of a linear model, clamped to [0, 1]."""
    if not isinstance(model, LinearRateModel):
        raise DomainError("closed-form optimum exists only for the linear model")
    if model.beta == ZERO:
        raise DomainError("beta must be positive for an interior optimum")
    u = (fdiv(ONE, ONE - model.reserve_factor) - fdiv(model.alpha, model.beta)) / 2
    return fmin(fmax(u, ZERO), ONE)


def model_from_dict(d: dict, reserve_factor: Fixed | None = None) -> RateModel:
    """Build a model from ``{"kind": "linear"|"kinked", ...}`` with decimal strings."""
    kind = d.get("kind", "linear")
    psi = reserve_factor if reserve_factor is not None else fx(d.get("reserve_factor", "0"))
    if kind == "linear":
        return LinearRateModel(fx(d["alpha"]), fx(d["beta"]), psi)
    if kind == "kinked":
        return KinkedRateModel(fx(d["alpha"]), fx(d["beta"]), fx(d["gamma"]), fx(d["u_kink"]), psi)
    raise DomainError(f"unknown rate model kind: {kind!r}")


def model_to_dict(model: RateModel) -> dict:
    if isinstance(model, LinearRateModel):
        out = {"kind": "linear", "alpha": str(model.alpha), "beta": str(model.beta)}
    else:
        out = {
            "kind": "kinked",
            "alpha": str(model.alpha),
            "beta": str(model.beta),
            "gamma": str(model.gamma),
            "u_kink": str(model.u_kink),
        }
    out["reserve_factor"] = str(model.reserve_factor)
    return out
