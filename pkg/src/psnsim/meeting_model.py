"""Pairwise meeting intensities and competing exponential clocks.

Two regimes: social-oblivious mobility gives every pair the same rate;
interest-based mobility couples the rate to cosine similarity through
rate = k * cos(angle) + delta, with k chosen so the mean rate over a random
profile equals the oblivious baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .interest_space import InterestProfile, Population

SOCIAL_OBLIVIOUS = "social_oblivious"
INTEREST_BASED = "interest_based"
KINDS = (SOCIAL_OBLIVIOUS, INTEREST_BASED)


def normalization_k(lam: float, delta: float) -> float:
    """Similarity-coupling constant making the mean pair rate equal lam.

    The mean of cos(angle) over a uniform angle on [0, pi/2] is 2/pi, so
    k = (pi/2)(lam - delta) gives E[rate] = 2k/pi + delta = lam.
    """
    if not 0.0 <= delta < lam:
        raise ConfigurationError(
            f"need 0 <= delta < lambda, got delta={delta}, lambda={lam}"
        )
    return (math.pi / 2.0) * (lam - delta)


@dataclass(frozen=True)
class RateModel:
    """Meeting-rate regime. `delta` and `k` are meaningful only when
    interest-based."""

    kind: str
    lam: float
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown rate model kind {self.kind!r}")
        if self.lam <= 0.0:
            raise ConfigurationError(f"lambda must be > 0, got {self.lam}")
        if self.kind == INTEREST_BASED:
            normalization_k(self.lam, self.delta)  # validates delta < lambda

    @property
    def k(self) -> float:
        if self.kind != INTEREST_BASED:
            return 0.0
        return normalization_k(self.lam, self.delta)


def pair_rate(model: RateModel, a: InterestProfile, b: InterestProfile) -> float:
    """Meeting rate between two nodes under the model."""
    if a.m != b.m:
        raise DimensionError(f"dimension mismatch: {a.m} vs {b.m}")
    if model.kind == SOCIAL_OBLIVIOUS:
        return model.lam
    cos = float(np.clip(np.dot(a.coords, b.coords), 0.0, 1.0))
    return model.k * cos + model.delta


def pair_rates_rows(model: RateModel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise pair rates for coordinate arrays of equal shape (engine path)."""
    if model.kind == SOCIAL_OBLIVIOUS:
        return np.full(a.shape[0], model.lam)
    cos = np.clip(np.einsum("ij,ij->i", a, b), 0.0, 1.0)
    return model.k * cos + model.delta


@dataclass(frozen=True)
class RateMatrix:
    """Symmetric (n+2) x (n+2) tabulation of pair rates; diagonal unused."""

    rates: np.ndarray

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        object.__setattr__(self, "rates", rates)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
            raise ConfigurationError("rate matrix must be square")
        if np.any(rates < 0.0):
            raise ConfigurationError("rates must be non-negative")
        if not np.allclose(rates, rates.T):
            raise ConfigurationError("rate matrix must be symmetric")

    @property
    def size(self) -> int:
        return self.rates.shape[0]


def build_rate_matrix(model: RateModel, pop: Population) -> RateMatrix:
    coords = pop.coords_matrix()
    size = coords.shape[0]
    if model.kind == SOCIAL_OBLIVIOUS:
        rates = np.full((size, size), model.lam)
    else:
        gram = np.clip(coords @ coords.T, 0.0, 1.0)
        rates = model.k * gram + model.delta
    np.fill_diagonal(rates, 0.0)
    return RateMatrix(rates)


def sample_min_meeting(
    rng: np.random.Generator, rates
) -> tuple[float, int]:
    """First firing of competing exponential clocks.

    The firing time is exponential with the summed rate and the firing index
    is drawn with probability proportional to its rate, independently of the
    time. Draw order (time, then index) is fixed for determinism.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        raise ConfigurationError("sample_min_meeting needs at least one rate")
    if np.any(rates <= 0.0):
        raise ConfigurationError("all rates must be strictly positive")
    total = float(rates.sum())
    time = float(rng.exponential(1.0 / total))
    cumulative = np.cumsum(rates)
    index = int(np.searchsorted(cumulative, rng.random() * total, side="right"))
    if index >= rates.size:  # guard against u == 1 rounding
        index = rates.size - 1
    return time, index
