"""Campaign metrics, computed exactly as ratios of counted events.

Values are kept as `fractions.Fraction` so equality checks in reports and
tests are exact; floats only appear at the presentation edge. Sampling
error on a success ratio over N trials is quoted as a plain 1/sqrt(N)
margin, clamped to the [0, 1] probability range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import UndefinedMetricError


@dataclass(frozen=True, slots=True)
class RatioMetric:
    numerator: int
    denominator: int

    @property
    def value(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    @property
    def margin(self) -> float:
        return 1.0 / math.sqrt(self.denominator)

    @property
    def band(self) -> tuple[float, float]:
        center = float(self.value)
        return (max(0.0, center - self.margin), min(1.0, center + self.margin))

    def __str__(self) -> str:
        return f"{self.numerator}/{self.denominator}"

    def to_dict(self) -> dict:
        low, high = self.band
        return {
            "numerator": self.numerator,
            "denominator": self.denominator,
            "exact": str(self),
            "value": float(self.value),
            "margin": self.margin,
            "band": [low, high],
        }


def ratio(numerator: int, denominator: int, what: str = "metric") -> RatioMetric:
    if denominator <= 0:
        raise UndefinedMetricError(f"{what} is undefined over {denominator} events")
    if not 0 <= numerator <= denominator:
        raise UndefinedMetricError(
            f"{what}: numerator {numerator} outside [0, {denominator}]"
        )
    return RatioMetric(numerator, denominator)


def execution_progress(executed: int, planned: int) -> RatioMetric:
    """Share of planned adversary actions that actually executed."""
    return ratio(executed, planned, "execution progress")


def injection_success(successes: int, trials: int) -> RatioMetric:
    """Share of injection attempts that ended with a live agent."""
    return ratio(successes, trials, "injection success")
