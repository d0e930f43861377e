"""Intervals, regions and coverage bookkeeping built from bootstrap draws."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .bootstrap import BootstrapDraws
from .lasso import LassoFit

MIN_DRAWS = 20


class Side(str, Enum):
    TWO_SIDED = "two_sided"
    RIGHT_SIDED = "right_sided"


@dataclass(frozen=True)
class IntervalEstimate:
    coef_index: int
    level: float
    side: Side
    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not self.lower <= self.upper:
            raise ValueError(f"interval is empty: [{self.lower}, {self.upper}]")
        if self.side is Side.RIGHT_SIDED and self.lower != -math.inf:
            raise ValueError("right-sided intervals are unbounded below")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def __contains__(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class RegionEstimate:
    """Sup-norm ball ``{b : max_j |b_j - center_j| <= radius}``."""

    center: np.ndarray
    radius: float
    level: float

    def contains(self, beta) -> bool:
        return bool(np.max(np.abs(np.asarray(beta) - self.center)) <= self.radius)


@dataclass(frozen=True)
class CoverageReport:
    coef_index: np.ndarray
    hits: np.ndarray
    counts: np.ndarray
    mean_width: np.ndarray
    side: Side
    method: str = ""
    scenario: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def coverage(self) -> np.ndarray:
        return self.hits / self.counts


def _quantile(x: np.ndarray, q):
    return np.quantile(x, q, method="linear")


def _validate_level(level: float) -> float:
    level = float(level)
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    return level


def percentile_interval(draws: BootstrapDraws, fit: LassoFit, j: int, level: float,
                        side: Side | str = Side.TWO_SIDED, method: str = "basic") -> IntervalEstimate:
    """Bootstrap interval for coefficient ``j``.

    ``method="basic"`` reflects the quantiles of ``T*`` around the Lasso
    estimate, ``[b_j - q_hi/sqrt(n), b_j - q_lo/sqrt(n)]``.  ``"percentile"``
    reports the quantiles of the replicate estimates themselves.
    """
    level = _validate_level(level)
    side = Side(side)
    if draws.B < MIN_DRAWS:
        raise ValueError(f"need at least {MIN_DRAWS} bootstrap draws, got {draws.B}")
    if not 0 <= j < draws.T_star.shape[1]:
        raise ValueError(f"coefficient index {j} out of range")
    col = draws.T_star[:, j]
    root_n = math.sqrt(draws.n)
    if method == "basic":
        est = float(fit.beta[j])
        if side is Side.TWO_SIDED:
            lo, hi = _quantile(col, [(1 - level) / 2, (1 + level) / 2])
            return IntervalEstimate(j, level, side, est - hi / root_n, est - lo / root_n)
        q = _quantile(col, 1 - level)
        return IntervalEstimate(j, level, side, -math.inf, est - q / root_n)
    if method == "percentile":
        center = float(draws.center[j])
        if side is Side.TWO_SIDED:
            lo, hi = _quantile(col, [(1 - level) / 2, (1 + level) / 2])
            return IntervalEstimate(j, level, side, center + lo / root_n, center + hi / root_n)
        q = _quantile(col, level)
        return IntervalEstimate(j, level, side, -math.inf, center + q / root_n)
    raise ValueError(f"unknown interval method {method!r}")


def sup_norm_region(draws: BootstrapDraws, fit: LassoFit, level: float) -> RegionEstimate:
    level = _validate_level(level)
    if draws.B < MIN_DRAWS:
        raise ValueError(f"need at least {MIN_DRAWS} bootstrap draws, got {draws.B}")
    stat = np.abs(draws.T_star).max(axis=1)
    radius = float(_quantile(stat, level)) / math.sqrt(draws.n)
    return RegionEstimate(center=np.asarray(fit.beta, dtype=np.float64).copy(), radius=radius, level=level)


def coverage_tally(intervals, truth, method: str = "", scenario: str = "") -> CoverageReport:
    """Per-coefficient share of ``intervals`` that contain ``truth``."""
    truth = np.asarray(truth, dtype=np.float64)
    intervals = list(intervals)
    if not intervals:
        raise ValueError("no intervals to tally")
    sides = {iv.side for iv in intervals}
    if len(sides) != 1:
        raise ValueError("cannot tally one- and two-sided intervals together")
    index = sorted({iv.coef_index for iv in intervals})
    if index[0] < 0 or index[-1] >= truth.size:
        raise ValueError("interval references a coefficient outside truth")
    pos = {j: k for k, j in enumerate(index)}
    hits = np.zeros(len(index))
    counts = np.zeros(len(index))
    widths = np.zeros(len(index))
    for iv in intervals:
        k = pos[iv.coef_index]
        counts[k] += 1
        hits[k] += truth[iv.coef_index] in iv
        widths[k] += iv.width
    side = sides.pop()
    mean_width = widths / counts if side is Side.TWO_SIDED else np.full(len(index), np.nan)
    return CoverageReport(np.array(index), hits, counts, mean_width, side, method, scenario)


def empirical_coverage_ratio(pb: CoverageReport, other: CoverageReport) -> np.ndarray:
    """Coverage of ``pb`` divided by coverage of ``other``, per coefficient.

    A zero denominator yields ``inf`` (and a warning).
    """
    if pb.side is not other.side or not np.array_equal(pb.coef_index, other.coef_index):
        raise ValueError("coverage reports cover different coefficients or interval types")
    num, den = pb.coverage, other.coverage
    zero = den == 0
    if zero.any():
        warnings.warn(f"zero competitor coverage for coefficients {pb.coef_index[zero].tolist()}", stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(zero, np.inf, num / np.where(zero, 1.0, den))
