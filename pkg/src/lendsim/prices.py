"""Price processes driving a simulation, one price table per step."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .fixed import ULP, ZERO, Fixed, fmax, fmul

KINDS = ("constant", "deterministic_path", "geometric_random_walk")

# Floor on a random-walk step multiplier so prices stay positive.
_MIN_STEP_FACTOR = 0.01


@dataclass(frozen=True)
class PriceProcess:
    kind: str
    initial: Mapping[str, Fixed] = field(default_factory=dict)
    series: Mapping[str, Sequence[Fixed]] = field(default_factory=dict)
    drift: Mapping[str, float] = field(default_factory=dict)
    volatility: Mapping[str, float] = field(default_factory=dict)
    dates: Sequence[dt.date] = ()

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown price process kind {self.kind!r}; expected one of {KINDS}")
        values = self.series.values() if self.kind == "deterministic_path" else [self.initial.values()]
        for seq in values:
            for p in seq:
                if p <= ZERO:
                    raise ValueError(f"prices must be positive, got {p}")
        if self.kind == "deterministic_path":
            lengths = {len(s) for s in self.series.values()}
            if len(lengths) > 1 or 0 in lengths:
                raise ValueError("path series must be non-empty and of equal length")
        if self.kind == "geometric_random_walk":
            for asset in self.initial:
                if self.volatility.get(asset, 0.0) < 0:
                    raise ValueError(f"volatility for {asset} must be non-negative")

    @classmethod
    def constant(cls, prices: Mapping[str, Fixed]) -> PriceProcess:
        return cls("constant", initial=dict(prices))

    @classmethod
    def path(cls, series: Mapping[str, Sequence[Fixed]], dates: Sequence[dt.date] = ()) -> PriceProcess:
        return cls("deterministic_path", series={a: list(s) for a, s in series.items()}, dates=tuple(dates))

    @classmethod
    def random_walk(
        cls,
        initial: Mapping[str, Fixed],
        drift: Mapping[str, float],
        volatility: Mapping[str, float],
    ) -> PriceProcess:
        return cls("geometric_random_walk", initial=dict(initial), drift=dict(drift), volatility=dict(volatility))

    @property
    def assets(self) -> list[str]:
        return sorted(self.series if self.kind == "deterministic_path" else self.initial)

    def generate(self, n_steps: int, seed: int = 0) -> list[dict[str, Fixed]]:
        """Prices for steps ``0..n_steps-1``; a path shorter than that holds its last value."""
        if self.kind == "constant":
            return [dict(self.initial) for _ in range(n_steps)]
        if self.kind == "deterministic_path":
            length = len(next(iter(self.series.values())))
            return [{a: self.series[a][min(k, length - 1)] for a in self.assets} for k in range(n_steps)]
        rng = np.random.default_rng(seed)
        current = dict(self.initial)
        out = []
        for k in range(n_steps):
            if k > 0:
                for asset in self.assets:
                    z = float(rng.standard_normal())
                    factor = 1.0 + self.drift.get(asset, 0.0) + self.volatility.get(asset, 0.0) * z
                    stepped = fmul(current[asset], Fixed.from_float(max(factor, _MIN_STEP_FACTOR)))
                    current[asset] = fmax(stepped, ULP)
            out.append(dict(current))
        return out
