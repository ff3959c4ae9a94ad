"""Contact traces and profile tables: parsing, filtering, synthesis, I/O.

Trace CSV format: `a,b,start,end` with node ids as unquoted tokens and times
as decimal seconds; header optional. Profile CSV: `node_id,c1,...,cm`
(rows are normalized to unit norm on load). Attribute table CSV:
`node_id,attr1;attr2;...`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, TraceParseError
from .interest_space import InterestProfile
from .meeting_model import RateMatrix

DEFAULT_MIN_CONTACT = 300.0  # seconds; drops "very short" conference contacts


@dataclass(frozen=True)
class ContactEvent:
    a: str
    b: str
    start: float
    end: float

    def __post_init__(self):
        if self.a == self.b:
            raise DataError(f"self-contact for node {self.a!r}")
        if self.end < self.start:
            raise DataError(
                f"contact ends before it starts ({self.start} > {self.end})"
            )

    @property
    def duration(self) -> float:
        return self.end - self.start

    def pair(self) -> tuple[str, str]:
        return (self.a, self.b) if self.a <= self.b else (self.b, self.a)


def _event_key(event: ContactEvent):
    return (event.start, event.a, event.b, event.end)


@dataclass(frozen=True)
class ContactTrace:
    events: list
    node_ids: set = field(default_factory=set)

    def __post_init__(self):
        for prev, cur in zip(self.events, self.events[1:]):
            if cur.start < prev.start:
                raise DataError("trace events must be sorted by start time")
        ids = {node for e in self.events for node in (e.a, e.b)}
        if not self.node_ids:
            object.__setattr__(self, "node_ids", ids)
        elif not ids <= self.node_ids:
            raise DataError("event node ids missing from node_ids")

    @classmethod
    def from_events(cls, events, node_ids: set | None = None) -> "ContactTrace":
        return cls(sorted(events, key=_event_key), node_ids or set())

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class ProfileTable:
    """node id -> InterestProfile, all sharing one dimension."""

    profiles: dict

    def __post_init__(self):
        if not self.profiles:
            raise DataError("profile table is empty")
        dims = {p.m for p in self.profiles.values()}
        if len(dims) != 1:
            raise DataError(f"profiles mix dimensions {sorted(dims)}")

    @property
    def m(self) -> int:
        return next(iter(self.profiles.values())).m

    def __contains__(self, node) -> bool:
        return node in self.profiles

    def __iter__(self):
        return iter(self.profiles)


def _parse_float(token: str, line_no: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise TraceParseError(f"bad {what} {token!r}", line_no) from None
    if not math.isfinite(value):
        raise TraceParseError(f"non-finite {what} {token!r}", line_no)
    return value


def parse_trace(stream) -> ContactTrace:
    """Read a contact trace; dedupes exact duplicate lines, sorts by start."""
    events = []
    seen = set()
    for line_no, row in enumerate(csv.reader(stream), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        row = [token.strip() for token in row]
        if line_no == 1 and row[:1] == ["a"]:
            continue  # optional header
        if len(row) != 4:
            raise TraceParseError(f"expected 4 fields, got {len(row)}", line_no)
        a, b = row[0], row[1]
        start = _parse_float(row[2], line_no, "start time")
        end = _parse_float(row[3], line_no, "end time")
        key = (a, b, start, end)
        if key in seen:
            continue
        seen.add(key)
        try:
            events.append(ContactEvent(a, b, start, end))
        except DataError as exc:
            raise TraceParseError(str(exc), line_no) from None
    return ContactTrace.from_events(events)


def write_trace(trace: ContactTrace, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["a", "b", "start", "end"])
    for event in trace.events:
        writer.writerow([event.a, event.b, repr(float(event.start)),
                         repr(float(event.end))])


def merge_overlapping(trace: ContactTrace) -> ContactTrace:
    """Coalesce overlapping or touching sightings of the same pair.

    Trace granularity (e.g. 120 s scan intervals) can split one encounter
    into several rows; merging first keeps the duration filter honest.
    """
    by_pair: dict = {}
    for event in trace.events:
        by_pair.setdefault(event.pair(), []).append(event)
    merged = []
    for (a, b), events in by_pair.items():
        events.sort(key=lambda e: (e.start, e.end))
        cur_start, cur_end = events[0].start, events[0].end
        for event in events[1:]:
            if event.start <= cur_end:
                cur_end = max(cur_end, event.end)
            else:
                merged.append(ContactEvent(a, b, cur_start, cur_end))
                cur_start, cur_end = event.start, event.end
        merged.append(ContactEvent(a, b, cur_start, cur_end))
    return ContactTrace.from_events(merged, set(trace.node_ids))


def filter_short_contacts(trace: ContactTrace,
                          min_duration: float = DEFAULT_MIN_CONTACT) -> ContactTrace:
    """Drop contacts shorter than `min_duration` seconds (after merging
    overlapping sightings of the same pair)."""
    if min_duration < 0.0:
        raise DataError("min_duration must be >= 0")
    merged = merge_overlapping(trace)
    kept = [e for e in merged.events if e.duration >= min_duration]
    return ContactTrace.from_events(kept, set(trace.node_ids))


def generate_synthetic_trace(
    rng: np.random.Generator,
    rates: RateMatrix,
    horizon: float,
    contact_duration: float,
    node_ids: list | None = None,
) -> ContactTrace:
    """Realize the pairwise Poisson meeting processes as a contact trace.

    Each pair's contact starts form a Poisson process with the pair's rate on
    [0, horizon); every contact gets the fixed duration.
    """
    if horizon <= 0.0:
        raise DataError("horizon must be > 0")
    size = rates.size
    if node_ids is None:
        node_ids = [str(i) for i in range(size)]
    elif len(node_ids) != size:
        raise DataError(
            f"need {size} node ids for the rate matrix, got {len(node_ids)}"
        )
    events = []
    for i in range(size):
        for j in range(i + 1, size):
            rate = rates.rates[i, j]
            if rate <= 0.0:
                continue
            count = rng.poisson(rate * horizon)
            if count == 0:
                continue
            starts = np.sort(rng.uniform(0.0, horizon, count))
            events.extend(
                ContactEvent(node_ids[i], node_ids[j], float(s),
                             float(s) + contact_duration)
                for s in starts
            )
    return ContactTrace.from_events(events, set(node_ids))


def build_binary_profiles(attribute_rows) -> ProfileTable:
    """0/1 profiles from categorical attributes, normalized to unit norm.

    `attribute_rows` maps node id -> iterable of attribute names (or is an
    iterable of (node_id, attrs) pairs). The interest dimension is the size
    of the attribute universe.
    """
    rows = dict(attribute_rows.items()) if hasattr(attribute_rows, "items") \
        else dict(attribute_rows)
    universe = sorted({attr for attrs in rows.values() for attr in attrs})
    if len(universe) < 2:
        raise DataError("attribute universe needs at least 2 attributes")
    position = {attr: i for i, attr in enumerate(universe)}
    profiles = {}
    for node, attrs in rows.items():
        if not attrs:
            raise DataError(f"node {node!r} has no attributes (zero vector)")
        coords = np.zeros(len(universe))
        for attr in attrs:
            coords[position[attr]] = 1.0
        profiles[node] = InterestProfile(coords / np.linalg.norm(coords))
    return ProfileTable(profiles)


def load_profiles(stream) -> ProfileTable:
    """Read `node_id,c1,...,cm` rows; normalizes, rejects negative entries."""
    profiles = {}
    for line_no, row in enumerate(csv.reader(stream), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        row = [token.strip() for token in row]
        if len(row) < 3:
            raise TraceParseError("expected node_id plus >= 2 coordinates", line_no)
        node = row[0]
        coords = np.array([_parse_float(t, line_no, "coordinate") for t in row[1:]])
        if np.any(coords < 0.0):
            raise TraceParseError(f"negative coordinate for node {node!r}", line_no)
        norm = np.linalg.norm(coords)
        if norm == 0.0:
            raise TraceParseError(f"zero vector for node {node!r}", line_no)
        profiles[node] = InterestProfile(coords / norm)
    return ProfileTable(profiles)


def write_profiles(table: ProfileTable, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    for node in sorted(table.profiles):
        writer.writerow(
            [node, *(repr(float(c)) for c in table.profiles[node].coords)]
        )


def load_attribute_table(stream) -> dict:
    """Read `node_id,attr1;attr2;...` rows for build_binary_profiles."""
    rows = {}
    for line_no, row in enumerate(csv.reader(stream), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            raise TraceParseError("expected `node_id,attr1;attr2;...`", line_no)
        node = row[0].strip()
        attrs = [a.strip() for a in row[1].split(";") if a.strip()]
        rows[node] = attrs
    return rows
