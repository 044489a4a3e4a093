from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lendsim.fixed import ONE, ULP, ZERO, Fixed, fx
from lendsim.rates import (
    DomainError, KinkedRateModel, LinearRateModel, borrow_rate, model_from_dict, model_to_dict,
    optimal_utilization, quote, quoted_margin, supply_rates,
)

LIN = LinearRateModel(fx("0.02"), fx("0.2"), fx("0.1"))
KINK = KinkedRateModel(fx("0"), fx("0.05"), fx("1"), fx("0.8"), fx("0.1"))


def test_linear_examples():
    q = quote(LIN, fx("0.5"))
    assert q.borrow_rate == fx("0.12")
    assert q.gross_supply_rate == fx("0.06")
    assert q.net_supply_rate == fx("0.054")
    assert q.quoted_margin == fx("0.066")
    assert optimal_utilization(LIN) == fx("0.505555555555555555")


def test_kinked_examples():
    assert borrow_rate(KINK, fx("0.9")) == fx("0.14")
    assert KINK.lower_branch(fx("0.8")) == KINK.upper_branch(fx("0.8")) == fx("0.04")


def test_margin_polynomial_expansion():
    # m(u) = a + (b - a(1-psi))u - b(1-psi)u^2, checked exactly on a grid.
    a, b, psi = (Fraction(x) for x in ("0.02", "0.2", "0.1"))
    for i in range(1001):
        u = Fixed.from_int(i) / 1000
        uq = u.to_fraction()
        exact = a + (b - a * (1 - psi)) * uq - b * (1 - psi) * uq * uq
        got = quoted_margin(LIN, u).to_fraction()
        # Three truncations, each under one ulp.
        assert abs(got - exact) <= Fraction(3, 10**18)


@given(st.integers(0, 10**18))
def test_supply_rate_below_borrow_rate(m):
    u = Fixed(m)
    gross, net = supply_rates(LIN, u)
    assert ZERO <= net <= gross <= borrow_rate(LIN, u)


def test_domain_errors():
    with pytest.raises(DomainError):
        borrow_rate(LIN, ONE + ULP)
    with pytest.raises(DomainError):
        borrow_rate(LIN, -ULP)
    with pytest.raises(DomainError):
        optimal_utilization(LinearRateModel(fx("0.02"), ZERO, fx("0.1")))
    with pytest.raises(ValueError):
        LinearRateModel(fx("0.02"), fx("0.2"), ONE)
    with pytest.raises(ValueError):
        KinkedRateModel(fx("0"), fx("0.2"), fx("0.1"), fx("0.8"), ZERO)


def test_optimum_clamped():
    assert optimal_utilization(LinearRateModel(fx("0.5"), fx("0.01"), ZERO)) == ZERO
    assert optimal_utilization(LinearRateModel(ZERO, fx("0.2"), fx("0.9"))) == ONE


def test_grid_search_oracle_small():
    grid = np.linspace(0, 1, 100_001)
    a, b, psi = 0.02, 0.2, 0.1
    m = (a + b * grid) * (1 - grid * (1 - psi))
    assert abs(grid[np.argmax(m)] - float(optimal_utilization(LIN))) < 1e-5


def test_dict_round_trip():
    for model in (LIN, KINK):
        assert model_from_dict(model_to_dict(model)) == model


def test_kinked_margin_uses_definitional_form():
    # Upper branch margin is b - b*u*(1 - psi) with the kinked b substituted directly.
    a, b, g, k, psi = (Fraction(x) for x in ("0", "0.05", "1", "0.8", "0.1"))
    for i in range(1001):
        u = Fixed.from_int(i) / 1000
        uq = u.to_fraction()
        rate = a + b * uq if uq <= k else a + b * k + g * (uq - k)
        exact = rate - rate * uq * (1 - psi)
        assert abs(quoted_margin(KINK, u).to_fraction() - exact) <= Fraction(3, 10**18)
