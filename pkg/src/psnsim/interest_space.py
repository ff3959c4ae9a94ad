"""Node interest profiles on the positive orthant of the m-dimensional unit sphere.

A profile is a unit vector with non-negative coordinates. Random profiles
follow a two-step construction: first the angle to an anchor vector is drawn
uniformly on [0, pi/2], then a direction is drawn uniformly from the slice of
the sphere at exactly that angle, rejecting candidates that leave the
positive orthant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, SamplingError

NORM_TOL = 1e-9

#: Retry budget for positive-orthant rejection sampling (per profile).
MAX_REJECTION_TRIES = 10 ** 6

#: Tolerance for negative coordinates produced by rotation round-off;
#: anything below -_NEG_EPS is a genuine rejection.
_NEG_EPS = 1e-12

WORST_CASE = "worst_case"
UNIFORM_ANGLE = "uniform_angle"
SCENARIOS = (WORST_CASE, UNIFORM_ANGLE)


@dataclass(frozen=True)
class InterestProfile:
    """A node's fixed coordinates in interest space (unit norm, all >= 0)."""

    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        object.__setattr__(self, "coords", coords)
        if coords.ndim != 1 or coords.size < 2:
            raise ConfigurationError(
                "interest profile needs at least 2 coordinates"
            )
        if np.any(coords < 0.0):
            raise ConfigurationError(
                "interest profile coordinates must be non-negative"
            )
        norm = float(np.linalg.norm(coords))
        if abs(norm - 1.0) > NORM_TOL:
            raise ConfigurationError(
                f"interest profile norm is {norm!r}, expected 1 within {NORM_TOL}"
            )

    @property
    def m(self) -> int:
        return self.coords.size


@dataclass(frozen=True)
class Population:
    """A source, a destination, and n potential relay nodes."""

    source: InterestProfile
    destination: InterestProfile
    relays: list = field(default_factory=list)

    def __post_init__(self):
        m = self.source.m
        for p in (self.destination, *self.relays):
            if p.m != m:
                raise DimensionError(
                    f"population mixes dimensions {m} and {p.m}"
                )

    @property
    def n(self) -> int:
        return len(self.relays)

    @property
    def m(self) -> int:
        return self.source.m

    def coords_matrix(self) -> np.ndarray:
        """Stack profiles as rows in engine order: source, destination, relays."""
        rows = [self.source.coords, self.destination.coords]
        rows.extend(p.coords for p in self.relays)
        return np.array(rows, dtype=float)


def cosine_similarity(a: InterestProfile, b: InterestProfile) -> float:
    """Cosine of the angle between two profiles, clamped to [0, 1].

    Both profiles are unit vectors so this is their inner product; the clamp
    only absorbs rounding (the positive orthant admits no negative cosines).
    """
    if a.m != b.m:
        raise DimensionError(f"dimension mismatch: {a.m} vs {b.m}")
    return float(np.clip(np.dot(a.coords, b.coords), 0.0, 1.0))


def _canonical_axis(m: int) -> np.ndarray:
    e1 = np.zeros(m)
    e1[0] = 1.0
    return e1


def _householder(anchor: np.ndarray) -> np.ndarray | None:
    """Orthogonal map sending the first basis vector to `anchor`.

    Returns None when the anchor already is the first basis vector, so the
    canonical construction can skip the rotation entirely.
    """
    m = anchor.size
    e1 = _canonical_axis(m)
    if np.array_equal(anchor, e1):
        return None
    v = e1 - anchor
    v = v / np.linalg.norm(v)
    return np.eye(m) - 2.0 * np.outer(v, v)


def sample_profile_coords(
    rng: np.random.Generator,
    m: int,
    count: int,
    anchor: np.ndarray | None = None,
    alphas: np.ndarray | None = None,
    max_tries: int = MAX_REJECTION_TRIES,
) -> np.ndarray:
    """Vectorized two-step sampler returning a (count, m) coordinate array.

    Each row makes exactly its drawn angle with `anchor` (default: the first
    basis vector). The direction within the fixed-angle slice is uniform over
    the part that stays in the positive orthant, obtained by rejection.
    """
    if m < 2:
        raise ConfigurationError(f"m must be >= 2, got {m}")
    if anchor is None:
        anchor = _canonical_axis(m)
    else:
        anchor = np.asarray(anchor, dtype=float)
        if anchor.size != m:
            raise DimensionError(f"anchor has dimension {anchor.size}, expected {m}")
    if alphas is None:
        alphas = rng.uniform(0.0, math.pi / 2.0, count)
    else:
        alphas = np.asarray(alphas, dtype=float)

    rotation = _householder(anchor)
    if rotation is None:
        # Canonical anchor: the positive-orthant slice is the image of the
        # whole slice under coordinate sign flips, so reflecting a uniform
        # direction into the orthant is exact and needs no rejection.
        z = np.abs(rng.standard_normal((count, m - 1)))
        norms = np.linalg.norm(z, axis=1)
        norms[norms == 0.0] = 1.0
        out = np.empty((count, m))
        out[:, 0] = np.cos(alphas)
        out[:, 1:] = np.sin(alphas)[:, None] * (z / norms[:, None])
        np.clip(out, 0.0, None, out=out)
        return out

    out = np.empty((count, m))
    pending = np.arange(count)
    tries = 0
    while pending.size:
        tries += 1
        if tries > max_tries:
            raise SamplingError(
                f"no positive-orthant vector found after {max_tries} tries "
                f"(anchor={anchor!r})"
            )
        z = rng.standard_normal((pending.size, m - 1))
        norms = np.linalg.norm(z, axis=1)
        norms[norms == 0.0] = 1.0  # measure-zero guard; candidate fails positivity
        directions = z / norms[:, None]
        a = alphas[pending]
        cand = np.empty((pending.size, m))
        cand[:, 0] = np.cos(a)
        cand[:, 1:] = np.sin(a)[:, None] * directions
        if rotation is not None:
            cand = cand @ rotation.T
        ok = np.all(cand >= -_NEG_EPS, axis=1)
        out[pending[ok]] = cand[ok]
        pending = pending[~ok]
    np.clip(out, 0.0, None, out=out)
    return out


def sample_profile(
    rng: np.random.Generator,
    m: int,
    anchor: InterestProfile | None = None,
    alpha: float | None = None,
    max_tries: int = MAX_REJECTION_TRIES,
) -> InterestProfile:
    """Draw one random profile. `alpha` pins the angle to the anchor (tests)."""
    anchor_coords = anchor.coords if anchor is not None else None
    alphas = None if alpha is None else np.array([float(alpha)])
    coords = sample_profile_coords(
        rng, m, 1, anchor=anchor_coords, alphas=alphas, max_tries=max_tries
    )
    return InterestProfile(coords[0])


def make_endpoints(
    scenario: str, rng: np.random.Generator, m: int
) -> tuple[InterestProfile, InterestProfile]:
    """Source/destination pair for a delivery scenario.

    worst_case pins the two canonical basis vectors (orthogonal interests);
    uniform_angle keeps the canonical source and draws the destination with a
    uniform angle to it.
    """
    if m < 2:
        raise ConfigurationError(f"m must be >= 2, got {m}")
    source = InterestProfile(_canonical_axis(m))
    if scenario == WORST_CASE:
        coords = np.zeros(m)
        coords[1] = 1.0
        return source, InterestProfile(coords)
    if scenario == UNIFORM_ANGLE:
        return source, sample_profile(rng, m, anchor=source)
    raise ConfigurationError(f"unknown scenario {scenario!r}")
