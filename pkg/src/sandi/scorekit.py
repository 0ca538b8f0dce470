# src/sandi/scorekit.py
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from functools import cached_property
from typing import Final, Sequence

import numpy as np

from sandi.contracts import ParameterError

# Scores are fixed-point integers with this denominator, so epoch iteration is exact.
SCORE_DENOM: Final = 100

DEFAULT_LABELS: Final = ("low", "medium", "high", "very high")
FIVE_STAR_LABELS: Final = ("1", "2", "3", "4", "5")


def _to_units(value: int | float | str | Decimal | Fraction, *, what: str) -> int:
    try:
        exact = Fraction(Decimal(str(value))) if not isinstance(value, Fraction) else value
    except (InvalidOperation, ValueError, OverflowError) as e:
        raise ParameterError(f"{what} is not a number: {value!r}") from e
    scaled = exact * SCORE_DENOM
    if scaled.denominator != 1:
        raise ParameterError(
            f"{what}={value} is not representable with denominator {SCORE_DENOM}",
            field=what,
        )
    return int(scaled)


@dataclass(frozen=True, order=True)
class Score:
    """Signed fixed-point score: value = units / SCORE_DENOM. No lower bound."""

    units: int

    @classmethod
    def of(cls, value: int | float | str | Decimal | Fraction) -> Score:
        return cls(_to_units(value, what="score"))

    def as_decimal(self) -> Decimal:
        return (Decimal(self.units) / SCORE_DENOM).quantize(Decimal(1) / SCORE_DENOM)

    def __float__(self) -> float:
        return self.units / SCORE_DENOM

    def __str__(self) -> str:
        return str(self.as_decimal())


ZERO: Final = Score(0)


@dataclass(frozen=True)
class ScoreParams:
    """
    k: tolerance (reports/epoch absorbed without loss), >= 1
    b: recovery per quiet epoch, 0 < b <= 1, on the fixed-point grid
    M: integer score ceiling, >= 1
    epsilon: DP parameter of the report-count noise, None = off
    """

    k: int
    b: Score
    M: Score
    epsilon: float | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}", field="k")
        if not 0 < self.b.units <= SCORE_DENOM:
            raise ParameterError(f"b must be in (0, 1], got {self.b}", field="b")
        if self.M.units < SCORE_DENOM or self.M.units % SCORE_DENOM:
            raise ParameterError(f"M must be an integer >= 1, got {self.M}", field="M")
        if self.epsilon is not None and not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ParameterError(
                f"epsilon must be > 0 or off, got {self.epsilon}", field="epsilon"
            )

    @classmethod
    def create(
        cls,
        k: int = 1,
        b: int | float | str = "0.5",
        M: int = 100,
        epsilon: float | None = None,
    ) -> ScoreParams:
        return cls(k=int(k), b=Score(_to_units(b, what="b")), M=Score.of(M), epsilon=epsilon)


@dataclass(frozen=True)
class ReputationConfig:
    """Ordered labels (lowest first) and inclusive lower-bound cut points between them."""

    labels: tuple[str, ...]
    thresholds: tuple[Score, ...]

    def __post_init__(self) -> None:
        if len(self.labels) < 2:
            raise ParameterError("reputation needs at least two labels", field="labels")
        if len(self.thresholds) != len(self.labels) - 1:
            raise ParameterError(
                f"expected {len(self.labels) - 1} thresholds, got {len(self.thresholds)}",
                field="thresholds",
            )
        units = [t.units for t in self.thresholds]
        if any(a >= b for a, b in zip(units, units[1:], strict=False)):
            raise ParameterError("thresholds must be strictly increasing", field="thresholds")

    @cached_property
    def _cut_units(self) -> list[int]:
        return [t.units for t in self.thresholds]

    @classmethod
    def from_values(
        cls, labels: Sequence[str], thresholds: Sequence[int | float | str]
    ) -> ReputationConfig:
        return cls(
            labels=tuple(str(label) for label in labels),
            thresholds=tuple(Score(_to_units(t, what="threshold")) for t in thresholds),
        )

    @classmethod
    def default(cls, M: int | Score = 100) -> ReputationConfig:
        m = M.units if isinstance(M, Score) else int(M) * SCORE_DENOM
        return cls(
            labels=DEFAULT_LABELS,
            thresholds=(ZERO, Score(m // 4), Score(m * 3 // 4)),
        )

    @classmethod
    def five_star(cls, M: int | Score = 100) -> ReputationConfig:
        # 1..5 stars: below 0 is one star, the rest of [0, M] split in quarters
        m = M.units if isinstance(M, Score) else int(M) * SCORE_DENOM
        return cls(
            labels=FIVE_STAR_LABELS,
            thresholds=(ZERO, Score(m // 4), Score(m // 2), Score(m * 3 // 4)),
        )

    def index_of(self, label: str) -> int:
        return self.labels.index(label)


# -----------------------------
# Score function
# -----------------------------


def update_score(sc: Score, x: int, p: ScoreParams) -> Score:
    """
    Epoch update:

      x >= k          -> sc - x + k
      x < k, sc >= 0  -> min(sc + b, M)
      x < k, sc < 0   -> min(sc - x + k, 0)
    """
    if x < 0:
        raise ParameterError(f"report count must be >= 0, got {x}", field="x")
    if sc.units > p.M.units:
        raise ParameterError(f"score {sc} is above the ceiling {p.M}", field="sc")

    if x >= p.k:
        return Score(sc.units - (x - p.k) * SCORE_DENOM)
    if sc.units >= 0:
        return Score(min(sc.units + p.b.units, p.M.units))
    return Score(min(sc.units - (x - p.k) * SCORE_DENOM, 0))


def reputation_index(sc: Score, cfg: ReputationConfig) -> int:
    # number of thresholds t with sc >= t
    return bisect.bisect_right(cfg._cut_units, sc.units)


def reputation(sc: Score, cfg: ReputationConfig) -> str:
    return cfg.labels[reputation_index(sc, cfg)]


# -----------------------------
# Report-count noise (two-sided geometric)
# -----------------------------


def _check_epsilon(epsilon: float) -> float:
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ParameterError(f"epsilon must be a positive real, got {epsilon}", field="epsilon")
    return float(epsilon)


def report_noise_pmf(v: int, epsilon: float) -> float:
    """P[N = v] = (1 - a) / (1 + a) * a^|v| with a = exp(-epsilon)."""
    a = math.exp(-_check_epsilon(epsilon))
    return (1.0 - a) / (1.0 + a) * a ** abs(v)


def sample_report_noise(epsilon: float, rng: np.random.Generator) -> int:
    # difference of two i.i.d. geometric variables is discrete-Laplace
    p = -math.expm1(-_check_epsilon(epsilon))
    g1, g2 = rng.geometric(p, size=2)
    return int(g1) - int(g2)


def sample_report_noise_batch(
    epsilon: float, rng: np.random.Generator, size: int
) -> np.ndarray:
    p = -math.expm1(-_check_epsilon(epsilon))
    return rng.geometric(p, size=size) - rng.geometric(p, size=size)


def noised_update(
    sc: Score, x: int, p: ScoreParams, rng: np.random.Generator | None = None
) -> Score:
    if p.epsilon is None:
        return update_score(sc, x, p)
    if x < 0:
        raise ParameterError(f"report count must be >= 0, got {x}", field="x")
    noise = sample_report_noise(p.epsilon, rng if rng is not None else np.random.default_rng())
    # negative noised counts are clamped before the score function
    return update_score(sc, max(0, x + noise), p)


def expected_noised_update(sc: Score, x: int, p: ScoreParams, support: int = 40) -> float:
    """Exact expectation of noised_update, summing the noise PMF over [-support, support]."""
    if p.epsilon is None:
        return float(update_score(sc, x, p))
    return sum(
        report_noise_pmf(v, p.epsilon) * float(update_score(sc, max(0, x + v), p))
        for v in range(-support, support + 1)
    )
