"""Estimators turning trial outputs into statistical checks.

Confidence intervals use the normal approximation (mean +/- z * s/sqrt(n)).
Goodness-of-fit helpers (KS, chi-square) report p-values compared against a
fixed significance of 0.001 to keep seeded suites non-flaky.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DataError, UndefinedCorrelationError
from .interest_space import sample_profile_coords

log = logging.getLogger(__name__)

#: Significance level shared by all goodness-of-fit checks.
ALPHA = 0.001

#: Upper angle bound (to the source) used by the forwarding-set estimate.
FORWARD_ANGLE_MAX = 3.0 * math.pi / 8.0


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    ci_low: float
    ci_high: float
    count: int
    delivery_rate: float = math.nan

    def __post_init__(self):
        if self.count < 0:
            raise ConfigurationError("count must be >= 0")
        if self.count >= 1 and math.isfinite(self.mean):
            if not self.ci_low <= self.mean <= self.ci_high:
                raise ConfigurationError(
                    "confidence interval must bracket the mean"
                )

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2.0

    def overlaps(self, other: "SummaryStats") -> bool:
        return self.ci_low <= other.ci_high and other.ci_low <= self.ci_high


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float

    def __post_init__(self):
        if not -1e-9 <= self.r_squared <= 1.0 + 1e-9:
            raise ConfigurationError(f"r_squared out of range: {self.r_squared}")


@dataclass(frozen=True)
class CorrelationReport:
    pearson: float
    pair_count: int

    def __post_init__(self):
        if not -1.0 - 1e-9 <= self.pearson <= 1.0 + 1e-9:
            raise ConfigurationError(f"pearson out of range: {self.pearson}")
        if self.pair_count < 2:
            raise ConfigurationError("correlation needs at least 2 pairs")


def mean_ci(samples, confidence: float = 0.95) -> SummaryStats:
    """Sample mean with a normal-approximation confidence interval."""
    values = np.asarray(list(samples), dtype=float)
    if values.size < 2:
        raise DataError(f"mean_ci needs >= 2 samples, got {values.size}")
    if not 0.0 < confidence < 1.0:
        raise ConfigurationError(f"confidence must be in (0, 1), got {confidence}")
    mean = float(values.mean())
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    half = z * float(values.std(ddof=1)) / math.sqrt(values.size)
    return SummaryStats(mean=mean, ci_low=mean - half, ci_high=mean + half,
                        count=int(values.size))


def standard_error(samples) -> float:
    values = np.asarray(list(samples), dtype=float)
    if values.size < 2:
        raise DataError("standard error needs >= 2 samples")
    return float(values.std(ddof=1)) / math.sqrt(values.size)


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    if float(x.std()) == 0.0 or float(y.std()) == 0.0:
        raise UndefinedCorrelationError(
            "zero variance in one of the series; correlation is undefined"
        )
    return float(np.corrcoef(x, y)[0, 1])


def meeting_similarity_correlation(trace, profiles) -> CorrelationReport:
    """Pearson correlation of per-pair contact counts with cosine similarity.

    Every unordered pair from the trace's node set contributes a point, pairs
    that never met contribute a zero count.
    """
    table = profiles.profiles if hasattr(profiles, "profiles") else profiles
    nodes = sorted(trace.node_ids)
    missing = [node for node in nodes if node not in table]
    if missing:
        raise DataError(f"trace nodes without profiles: {missing[:5]}")
    if len(nodes) < 2:
        raise DataError("correlation needs at least 2 nodes in the trace")

    counts: dict = {}
    for event in trace.events:
        pair = event.pair()
        counts[pair] = counts.get(pair, 0) + 1

    count_series = []
    sim_series = []
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            count_series.append(counts.get((a, b) if a <= b else (b, a), 0))
            sim = float(np.clip(np.dot(table[a].coords, table[b].coords), 0.0, 1.0))
            sim_series.append(sim)
    x = np.asarray(count_series, dtype=float)
    y = np.asarray(sim_series, dtype=float)
    return CorrelationReport(pearson=_pearson(x, y), pair_count=x.size)


def log_delta_fit(points) -> FitResult:
    """Least-squares fit of mean delay against log(1/delta)."""
    points = list(points)
    if len(points) < 3:
        raise DataError("log_delta_fit needs >= 3 points")
    deltas = np.array([p[0] for p in points], dtype=float)
    means = np.array([p[1] for p in points], dtype=float)
    if np.any((deltas <= 0.0) | (deltas >= 1.0)):
        raise DataError("deltas must lie in (0, 1)")
    if np.unique(deltas).size != deltas.size:
        raise DataError("deltas must be distinct")
    x = np.log(1.0 / deltas)
    fit = stats.linregress(x, means)
    return FitResult(slope=float(fit.slope), intercept=float(fit.intercept),
                     r_squared=float(fit.rvalue) ** 2)


def boundedness_check(points, band: float) -> bool:
    """True iff the mean delays stay within a multiplicative band of each
    other across the swept population sizes."""
    points = list(points)
    if len(points) < 3:
        raise DataError("boundedness_check needs >= 3 points")
    if band <= 1.0:
        raise ConfigurationError(f"band must be > 1, got {band}")
    means = np.array([p[1] for p in points], dtype=float)
    if np.any(means <= 0.0):
        raise DataError("mean delays must be positive")
    return bool(means.max() / means.min() <= band)


def forwarding_fraction(rng: np.random.Generator, m: int, gamma: float,
                        samples: int) -> float:
    """Monte-Carlo probability that a random profile is a useful relay.

    Useful means: cosine similarity to the destination at least gamma, and
    angle to the source at most 3pi/8. Endpoints are in the worst-case
    geometry (source on the first axis, destination on the second).
    """
    if samples < 10_000:
        raise ConfigurationError(f"need >= 10^4 samples, got {samples}")
    coords = sample_profile_coords(rng, m, samples)
    cos_angle_min = math.cos(FORWARD_ANGLE_MAX)
    useful = (coords[:, 1] >= gamma) & (coords[:, 0] >= cos_angle_min)
    return float(useful.mean())


def delay_difference_vs_ttl(results_fm, results_ib, ttl_grid):
    """Per-TTL difference of mean delivery delays (FM minus the comparison).

    A TTL with no delivered trials in either set is omitted and logged.
    """
    fm_times = np.sort([r.delivery_time for r in results_fm if r.delivered])
    ib_times = np.sort([r.delivery_time for r in results_ib if r.delivered])
    out = []
    for ttl in ttl_grid:
        fm = fm_times[fm_times <= ttl]
        ib = ib_times[ib_times <= ttl]
        if fm.size == 0 or ib.size == 0:
            log.warning("ttl %g omitted: no deliveries in one result set", ttl)
            continue
        out.append((float(ttl), float(fm.mean() - ib.mean())))
    return out


def ks_exponential(samples, rate: float) -> tuple[float, float]:
    """(statistic, p-value) of a KS test against Exp(rate)."""
    if rate <= 0.0:
        raise ConfigurationError("rate must be > 0")
    result = stats.kstest(np.asarray(list(samples), dtype=float), "expon",
                          args=(0.0, 1.0 / rate))
    return float(result.statistic), float(result.pvalue)


def chi_square_counts(counts, probabilities) -> tuple[float, float]:
    """(statistic, p-value) of a chi-square test of observed index counts
    against the given category probabilities."""
    counts = np.asarray(counts, dtype=float)
    probabilities = np.asarray(probabilities, dtype=float)
    if counts.shape != probabilities.shape:
        raise DataError("counts and probabilities must align")
    if not math.isclose(float(probabilities.sum()), 1.0, rel_tol=1e-9):
        raise DataError("probabilities must sum to 1")
    expected = probabilities * counts.sum()
    result = stats.chisquare(counts, expected)
    return float(result.statistic), float(result.pvalue)
