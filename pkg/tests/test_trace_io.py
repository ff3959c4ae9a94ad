import io
import math

import numpy as np
import pytest

from psnsim.errors import DataError, TraceParseError
from psnsim.meeting_model import RateMatrix
from psnsim.trace_io import (
    ContactEvent,
    ContactTrace,
    build_binary_profiles,
    filter_short_contacts,
    generate_synthetic_trace,
    load_attribute_table,
    load_profiles,
    merge_overlapping,
    parse_trace,
    write_profiles,
    write_trace,
)


class TestContactEvent:
    def test_duration_and_pair(self):
        e = ContactEvent("b", "a", 1.0, 3.5)
        assert e.duration == 2.5
        assert e.pair() == ("a", "b")

    def test_rejects_self_contact(self):
        with pytest.raises(DataError):
            ContactEvent("a", "a", 0.0, 1.0)

    def test_rejects_negative_duration(self):
        with pytest.raises(DataError):
            ContactEvent("a", "b", 2.0, 1.0)


class TestParsing:
    def test_round_trip(self):
        trace = ContactTrace.from_events([
            ContactEvent("a", "b", 0.0, 10.0),
            ContactEvent("b", "c", 5.0, 6.5),
        ])
        buf = io.StringIO()
        write_trace(trace, buf)
        buf.seek(0)
        parsed = parse_trace(buf)
        assert parsed.events == trace.events

    def test_header_is_optional(self):
        with_header = parse_trace(io.StringIO("a,b,start,end\nx,y,0,1\n"))
        without = parse_trace(io.StringIO("x,y,0,1\n"))
        assert with_header.events == without.events

    def test_duplicate_lines_deduped(self):
        trace = parse_trace(io.StringIO("x,y,0,1\nx,y,0,1\nx,y,2,3\n"))
        assert len(trace) == 2

    def test_sorts_by_start(self):
        trace = parse_trace(io.StringIO("x,y,5,6\nx,z,0,1\n"))
        assert [e.start for e in trace.events] == [0.0, 5.0]

    @pytest.mark.parametrize("line,msg", [
        ("x,y,zero,1\n", "start"),
        ("x,y,0\n", "fields"),
        ("x,x,0,1\n", "self-contact"),
        ("x,y,2,1\n", "before"),
        ("x,y,nan,1\n", "start"),
    ])
    def test_parse_errors_cite_the_line(self, line, msg):
        with pytest.raises(TraceParseError) as info:
            parse_trace(io.StringIO("a,b,0,1\n" + line))
        assert "line 2" in str(info.value)
        assert msg in str(info.value)


class TestMergeAndFilter:
    def test_overlapping_sightings_merge(self):
        trace = ContactTrace.from_events([
            ContactEvent("a", "b", 0.0, 100.0),
            ContactEvent("b", "a", 50.0, 180.0),
            ContactEvent("a", "b", 180.0, 200.0),  # touching counts as one
            ContactEvent("a", "c", 0.0, 50.0),
        ])
        merged = merge_overlapping(trace)
        ab = [e for e in merged.events if e.pair() == ("a", "b")]
        assert len(ab) == 1
        assert (ab[0].start, ab[0].end) == (0.0, 200.0)
        assert len(merged) == 2

    def test_filter_drops_short_contacts(self):
        trace = ContactTrace.from_events([
            ContactEvent("a", "b", 0.0, 100.0),
            ContactEvent("a", "b", 1000.0, 1400.0),
        ])
        kept = filter_short_contacts(trace, 300.0)
        assert len(kept) == 1
        assert kept.events[0].start == 1000.0

    def test_merge_happens_before_filtering(self):
        # Two 200 s sightings overlapping into 350 s survive a 300 s filter.
        trace = ContactTrace.from_events([
            ContactEvent("a", "b", 0.0, 200.0),
            ContactEvent("a", "b", 150.0, 350.0),
        ])
        kept = filter_short_contacts(trace, 300.0)
        assert len(kept) == 1
        assert kept.events[0].duration == 350.0

    def test_filter_keeps_node_universe(self):
        trace = ContactTrace.from_events([ContactEvent("a", "b", 0.0, 10.0)])
        kept = filter_short_contacts(trace, 300.0)
        assert kept.node_ids == {"a", "b"}
        assert len(kept) == 0


class TestSyntheticTraces:
    def test_counts_follow_the_rates(self):
        rates = np.array([
            [0.0, 2.0, 0.0],
            [2.0, 0.0, 0.5],
            [0.0, 0.5, 0.0],
        ])
        rng = np.random.default_rng(13)
        trace = generate_synthetic_trace(rng, RateMatrix(rates), 2000.0, 1.0)
        counts = {}
        for e in trace.events:
            counts[e.pair()] = counts.get(e.pair(), 0) + 1
        assert ("0", "2") not in counts
        assert abs(counts[("0", "1")] / 2000.0 - 2.0) < 0.1
        assert abs(counts[("1", "2")] / 2000.0 - 0.5) < 0.05

    def test_events_sorted_with_fixed_duration(self):
        rates = RateMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        rng = np.random.default_rng(17)
        trace = generate_synthetic_trace(rng, rates, 50.0, 2.5,
                                         node_ids=["u", "v"])
        starts = [e.start for e in trace.events]
        assert starts == sorted(starts)
        assert all(math.isclose(e.duration, 2.5) for e in trace.events)
        assert trace.node_ids == {"u", "v"}

    def test_node_id_arity_checked(self):
        rates = RateMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        with pytest.raises(DataError):
            generate_synthetic_trace(np.random.default_rng(0), rates, 10.0,
                                     1.0, node_ids=["only-one"])


class TestProfiles:
    def test_binary_profiles_normalized(self):
        table = build_binary_profiles({
            "u": ["music", "sports"],
            "v": ["music"],
            "w": ["cooking"],
        })
        assert table.m == 3
        u = table.profiles["u"].coords
        assert math.isclose(float(np.linalg.norm(u)), 1.0)
        sim = float(np.dot(u, table.profiles["v"].coords))
        assert math.isclose(sim, 1.0 / math.sqrt(2.0))
        assert float(np.dot(u, table.profiles["w"].coords)) == 0.0

    def test_binary_profiles_reject_empty_attributes(self):
        with pytest.raises(DataError):
            build_binary_profiles({"u": [], "v": ["music", "film"]})

    def test_profile_round_trip(self):
        table = build_binary_profiles({"u": ["a", "b"], "v": ["b", "c"]})
        buf = io.StringIO()
        write_profiles(table, buf)
        buf.seek(0)
        loaded = load_profiles(buf)
        for node in table.profiles:
            assert np.allclose(loaded.profiles[node].coords,
                               table.profiles[node].coords)

    def test_load_normalizes_rows(self):
        loaded = load_profiles(io.StringIO("u,3,4\nv,1,0\n"))
        assert np.allclose(loaded.profiles["u"].coords, [0.6, 0.8])

    def test_load_rejects_bad_rows(self):
        with pytest.raises(TraceParseError):
            load_profiles(io.StringIO("u,1,-0.5\n"))
        with pytest.raises(TraceParseError):
            load_profiles(io.StringIO("u,0,0\n"))
        with pytest.raises(TraceParseError):
            load_profiles(io.StringIO("u,1\n"))

    def test_dimension_mix_rejected(self):
        with pytest.raises(DataError):
            load_profiles(io.StringIO("u,1,0\nv,1,0,0\n"))

    def test_attribute_table_parsing(self):
        rows = load_attribute_table(io.StringIO("u,music;sports\nv,music\n"))
        assert rows == {"u": ["music", "sports"], "v": ["music"]}
