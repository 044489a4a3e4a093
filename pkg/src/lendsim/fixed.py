"""Scaled-integer decimal arithmetic with 18 fractional digits.

Every balance, rate and price inside the engine is a ``Fixed``. Products and
quotients truncate toward zero, the way integer math behaves on-chain, so a
simulation run is bit-reproducible on any platform.
"""
from __future__ import annotations

import re
from decimal import Decimal
from fractions import Fraction

DECIMALS = 18
SCALE = 10**DECIMALS

# Intermediates get 256 bits, stored values a signed 256-bit range.
_INTERMEDIATE_LIMIT = 1 << 256
_VALUE_LIMIT = 1 << 255

_DECIMAL_RE = re.compile(r"^([+-]?)(\d+)(?:\.(\d*))?$|^([+-]?)\.(\d+)$")


class FixedOverflow(ArithmeticError):
    """Raised when a mantissa leaves the representable range."""


def _tdiv(num: int, den: int) -> int:
    q = abs(num) // abs(den)
    return -q if (num < 0) != (den < 0) else q


def _check(value: int) -> int:
    if not -_VALUE_LIMIT <= value < _VALUE_LIMIT:
        raise FixedOverflow(f"fixed-point value out of range: {value}")
    return value


class Fixed:
    __slots__ = ("value",)

    def __init__(self, value: int = 0) -> None:
        if not isinstance(value, int) or isinstance(value, bool):
            raise TypeError(f"Fixed takes an integer mantissa, got {type(value).__name__}")
        self.value = _check(value)

    # -- construction -------------------------------------------------
    @classmethod
    def parse(cls, text: str) -> Fixed:
        """Parse a decimal string such as ``"-12.5"`` exactly."""
        s = text.strip()
        m = _DECIMAL_RE.match(s)
        if m is None:
            raise ValueError(f"not a decimal number: {text!r}")
        if m.group(2) is not None:
            sign, whole, frac = m.group(1), m.group(2), m.group(3) or ""
        else:
            sign, whole, frac = m.group(4), "0", m.group(5)
        if len(frac) > DECIMALS:
            raise ValueError(f"more than {DECIMALS} fractional digits: {text!r}")
        mantissa = int(whole) * SCALE + int(frac.ljust(DECIMALS, "0") or "0")
        return cls(-mantissa if sign == "-" else mantissa)

    @classmethod
    def from_int(cls, n: int) -> Fixed:
        return cls(n * SCALE)

    @classmethod
    def from_fraction(cls, q: Fraction) -> Fixed:
        """Truncate an exact rational to 18 digits."""
        return cls(_tdiv(q.numerator * SCALE, q.denominator))

    @classmethod
    def from_float(cls, x: float) -> Fixed:
        """Convert via the shortest decimal repr, rounded half-even to 18 digits.

        Only for boundary conversions (generated prices, statistics); the
        engine itself never touches floats.
        """
        d = Decimal(repr(float(x))).quantize(Decimal(1).scaleb(-DECIMALS))
        return cls(int(d.scaleb(DECIMALS)))

    # -- conversion ---------------------------------------------------
    def __str__(self) -> str:
        v = self.value
        sign = "-" if v < 0 else ""
        whole, frac = divmod(abs(v), SCALE)
        if frac == 0:
            return f"{sign}{whole}"
        return f"{sign}{whole}.{str(frac).rjust(DECIMALS, '0').rstrip('0')}"

    def __repr__(self) -> str:
        return f"Fixed('{self}')"

    def __float__(self) -> float:
        return self.value / SCALE

    def to_fraction(self) -> Fraction:
        return Fraction(self.value, SCALE)

    def to_decimal(self) -> Decimal:
        return Decimal(self.value).scaleb(-DECIMALS)

    # -- arithmetic ---------------------------------------------------
    def __add__(self, other: Fixed) -> Fixed:
        if not isinstance(other, Fixed):
            return NotImplemented
        return Fixed(self.value + other.value)

    def __sub__(self, other: Fixed) -> Fixed:
        if not isinstance(other, Fixed):
            return NotImplemented
        return Fixed(self.value - other.value)

    def __neg__(self) -> Fixed:
        return Fixed(-self.value)

    def __abs__(self) -> Fixed:
        return Fixed(abs(self.value))

    def __mul__(self, other: Fixed | int) -> Fixed:
        if isinstance(other, Fixed):
            return fmul(self, other)
        if isinstance(other, int) and not isinstance(other, bool):
            return Fixed(self.value * other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other: Fixed | int) -> Fixed:
        if isinstance(other, Fixed):
            return fdiv(self, other)
        if isinstance(other, int) and not isinstance(other, bool):
            if other == 0:
                raise ZeroDivisionError("fixed-point division by zero")
            return Fixed(_tdiv(self.value, other))
        return NotImplemented

    # -- comparison ---------------------------------------------------
    def _cmp_value(self, other) -> int:
        if isinstance(other, Fixed):
            return other.value
        if isinstance(other, int) and not isinstance(other, bool):
            return other * SCALE
        raise TypeError(f"cannot compare Fixed with {type(other).__name__}")

    def __eq__(self, other) -> bool:
        if isinstance(other, (Fixed, int)) and not isinstance(other, bool):
            return self.value == self._cmp_value(other)
        return NotImplemented

    def __lt__(self, other) -> bool:
        return self.value < self._cmp_value(other)

    def __le__(self, other) -> bool:
        return self.value <= self._cmp_value(other)

    def __gt__(self, other) -> bool:
        return self.value > self._cmp_value(other)

    def __ge__(self, other) -> bool:
        return self.value >= self._cmp_value(other)

    def __hash__(self) -> int:
        return hash(("Fixed", self.value))

    def __bool__(self) -> bool:
        return self.value != 0

    def __reduce__(self):
        return (Fixed, (self.value,))


def fmul(a: Fixed, b: Fixed) -> Fixed:
    product = a.value * b.value
    if abs(product) >= _INTERMEDIATE_LIMIT:
        raise FixedOverflow(f"product overflows 256-bit intermediate: {a} * {b}")
    return Fixed(_tdiv(product, SCALE))


def fdiv(a: Fixed, b: Fixed) -> Fixed:
    if b.value == 0:
        raise ZeroDivisionError(f"fixed-point division by zero: {a} / 0")
    num = a.value * SCALE
    if abs(num) >= _INTERMEDIATE_LIMIT:
        raise FixedOverflow(f"dividend overflows 256-bit intermediate: {a}")
    return Fixed(_tdiv(num, b.value))


def muldiv(a: Fixed, b: Fixed, c: Fixed) -> Fixed:
    """``a * b / c`` with a single truncation."""
    if c.value == 0:
        raise ZeroDivisionError("fixed-point division by zero")
    num = a.value * b.value
    if abs(num) >= _INTERMEDIATE_LIMIT:
        raise FixedOverflow(f"product overflows 256-bit intermediate: {a} * {b}")
    return Fixed(_tdiv(num, c.value))


def fx(x: Fixed | str | int) -> Fixed:
    """Coerce a decimal string or integer to ``Fixed``."""
    if isinstance(x, Fixed):
        return x
    if isinstance(x, str):
        return Fixed.parse(x)
    if isinstance(x, int) and not isinstance(x, bool):
        return Fixed.from_int(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Fixed (use a decimal string)")


def fmin(a: Fixed, b: Fixed) -> Fixed:
    return a if a <= b else b


def fmax(a: Fixed, b: Fixed) -> Fixed:
    return a if a >= b else b


ZERO = Fixed(0)
ONE = Fixed(SCALE)
ULP = Fixed(1)
# Health of an account with no borrows.
INFINITY = Fixed(_VALUE_LIMIT - 1)
