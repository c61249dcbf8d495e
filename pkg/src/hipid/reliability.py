"""Follower merit function, noise decomposition and parameter error domains.

The follower merit is the noise-free merit built from data simulated at the
identified minimizer ``p_min``.  Its sublevel set at ``F(p_min)`` is the
parameter error domain; the per-parameter half-width of that set is reported
as the generalized standard deviation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .grid import CleverSection
from .model import DataSeries, ModelDefinition, ParameterVector, response


@dataclass(frozen=True)
class FollowerModel:
    model: ModelDefinition
    p_min: ParameterVector
    simulated_data: DataSeries

    @classmethod
    def build(cls, model: ModelDefinition, p_min, schedule) -> "FollowerModel":
        if not isinstance(p_min, ParameterVector):
            p_min = model.params(p_min, check=False)
        sched = schedule.schedule if isinstance(schedule, DataSeries) else schedule
        return cls(model, p_min, DataSeries(sched, response(model, p_min, sched)))

    def residual(self, p) -> np.ndarray:
        """Follower residual ``h'(p) = u(p) - u(p_min)``."""
        return response(self.model, p, self.simulated_data.schedule) - self.simulated_data.values


@dataclass(frozen=True)
class NoiseVector:
    entries: np.ndarray
    norm_sq: float

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.norm_sq))


@dataclass(frozen=True)
class SimilarityBand:
    lower: float
    upper: float

    def contains(self, value: float, rtol: float = 0.0) -> bool:
        slack = rtol * max(1.0, abs(self.lower), abs(self.upper))
        return self.lower - slack <= value <= self.upper + slack


@dataclass(frozen=True)
class ErrorInterval:
    parameter_index: int
    level: float
    intervals: Tuple[Tuple[float, float], ...]
    half_width: float
    primary: Optional[int]  # index of the interval holding the section minimizer
    clipped: Tuple[bool, ...] = ()

    @property
    def empty(self) -> bool:
        return not self.intervals

    @property
    def width(self) -> float:
        return 2.0 * self.half_width

    def contains(self, x: float) -> bool:
        return any(lo <= x <= hi for lo, hi in self.intervals)


def follower_merit(fm: FollowerModel, p) -> float:
    h = fm.residual(p)
    return float(h @ h)


def noise_decompose(fm: FollowerModel, data: DataSeries) -> NoiseVector:
    """Noise relative to the identified minimizer: ``z = f - u(p_min)``."""
    if data.times.shape != fm.simulated_data.times.shape or not np.array_equal(
        data.times, fm.simulated_data.times
    ):
        raise ValueError("data schedule does not match the follower schedule")
    z = data.values - fm.simulated_data.values
    return NoiseVector(z, float(z @ z))


def merit_relation_check(fm: FollowerModel, data: DataSeries, p) -> Tuple[float, float]:
    """Both sides of ``F(p) = F'(p) - 2 h'(p).z + F(p_min)``."""
    z = noise_decompose(fm, data)
    hp = fm.residual(p)
    h = data.values - response(fm.model, p, data.schedule)
    lhs = float(h @ h)
    rhs = float(hp @ hp) - 2.0 * float(hp @ z.entries) + z.norm_sq
    return lhs, rhs


def similarity_band(fm: FollowerModel, z: NoiseVector, p) -> SimilarityBand:
    """Bounds on ``F(p) - F'(p)`` from the Cauchy-Schwarz inequality."""
    hn = float(np.linalg.norm(fm.residual(p)))
    zn = z.norm
    return SimilarityBand(-2.0 * hn * zn + z.norm_sq, 2.0 * hn * zn + z.norm_sq)


def in_similarity_domain(fm: FollowerModel, z: NoiseVector, p) -> bool:
    """Whether the follower residual dominates the noise at ``p``."""
    return follower_merit(fm, p) > z.norm_sq


def pseudometric(fa: float, fb: float) -> float:
    if not (np.isfinite(fa) and np.isfinite(fb)):
        raise ValueError("merit values must be finite")
    return abs(float(fa) - float(fb))


def error_domain_1d(section: CleverSection, level: float) -> ErrorInterval:
    """Sublevel intervals of a sampled section, endpoints linearly interpolated.

    An interval touching the end of the sampled range is clipped there and
    flagged.  A level below the sampled minimum yields an empty result.
    """
    x = np.asarray(section.x, dtype=float)
    f = np.asarray(section.values, dtype=float)
    inside = f <= level
    intervals: List[Tuple[float, float]] = []
    clipped: List[bool] = []
    owners: List[Tuple[int, int]] = []
    k = 0
    n = x.size
    while k < n:
        if not inside[k]:
            k += 1
            continue
        start = k
        while k + 1 < n and inside[k + 1]:
            k += 1
        stop = k
        clip = False
        if start == 0:
            lo = x[0]
            clip = True
        else:
            lo = _crossing(x[start - 1], f[start - 1], x[start], f[start], level)
        if stop == n - 1:
            hi = x[-1]
            clip = True
        else:
            hi = _crossing(x[stop], f[stop], x[stop + 1], f[stop + 1], level)
        intervals.append((float(lo), float(hi)))
        clipped.append(clip)
        owners.append((start, stop))
        k += 1

    if not intervals:
        return ErrorInterval(section.parameter_index, float(level), (), 0.0, None, ())
    kmin = int(np.argmin(f))
    primary = next(j for j, (a, b) in enumerate(owners) if a <= kmin <= b)
    lo, hi = intervals[primary]
    return ErrorInterval(
        section.parameter_index, float(level), tuple(intervals), 0.5 * (hi - lo), primary, tuple(clipped)
    )


def _crossing(xa, fa, xb, fb, level):
    if fb == fa:
        return xa
    return xa + (level - fa) / (fb - fa) * (xb - xa)
