import io
import math
from datetime import datetime, timezone

import pytest
from hypothesis import given, strategies as st

from encounterpred.core import EventKind, MalformedRecord, ProximityEvent
from encounterpred.features import (ConfigError, DurationBins, bin_duration, featurize_event,
                                    featurize_events, featurize_timestamp, parse_edges, read_featurized,
                                    write_featurized)


def utc(*args):
    return int(datetime(*args, tzinfo=timezone.utc).timestamp())


@pytest.mark.parametrize("stamp, expected", [
    ((2024, 1, 1, 14, 37), (1, 7)),
    ((2024, 1, 7, 0, 0), (7, 0)),
    ((2024, 1, 3, 23, 59), (3, 11)),
])
def test_featurize_timestamp(stamp, expected):
    ctx = featurize_timestamp(utc(*stamp))
    assert (ctx.phi, ctx.iota) == expected


def test_timezone_shifts_calendar():
    # 23:30 UTC Sunday is 00:30 Monday in Berlin (winter)
    ctx = featurize_timestamp(utc(2024, 1, 7, 23, 30), tz="Europe/Berlin")
    assert (ctx.phi, ctx.iota) == (1, 0)


def test_slot_length_must_divide_day():
    with pytest.raises(ConfigError):
        featurize_timestamp(0, slot_hours=5)


@given(st.integers(0, 2_000_000_000))
def test_weekly_periodicity(ts):
    assert featurize_timestamp(ts) == featurize_timestamp(ts + 7 * 86400)


@given(st.integers(0, 2_000_000_000))
def test_same_window_same_slot(ts):
    base = ts - ts % 7200
    assert featurize_timestamp(base) == featurize_timestamp(base + 7199)


def test_featurize_event_pair():
    e = ProximityEvent(EventKind.ENCOUNTER, "A", "B", "p", utc(2024, 1, 1, 9), utc(2024, 1, 1, 10, 30))
    a, b = featurize_event(e)
    assert (a.user, a.phi, a.iota_s, a.iota_e, a.poi, a.peer, a.raw_duration) == ("A", 1, 4, 5, "p", "B", 5400)
    assert (b.user, b.peer) == ("B", "A")


def test_midnight_crossing_anchors_to_start():
    e = ProximityEvent(EventKind.ENCOUNTER, "A", "B", "p", utc(2024, 1, 1, 23, 30), utc(2024, 1, 2, 0, 30))
    a, _ = featurize_event(e)
    assert (a.phi, a.iota_s, a.iota_e) == (1, 11, 0)


@given(st.lists(st.tuples(st.integers(0, 2_000_000_000), st.integers(1, 30000)), max_size=20),
       st.sampled_from(["UTC", "Europe/Berlin", "America/New_York", "Asia/Kolkata"]))
def test_batch_matches_single(spans, tz):
    evs = [ProximityEvent(EventKind.ENCOUNTER, "A", "B", "p", s, s + d) for s, d in spans]
    batch = featurize_events(evs, tz=tz)
    single = [r for e in evs for r in featurize_event(e, tz=tz)]
    assert batch == single
    assert len(batch) == 2 * len(evs)


@pytest.mark.parametrize("secs, idx", [(1200, 1), (900, 1), (899, 0), (90000, 5), (1, 0)])
def test_bin_duration(secs, idx):
    assert bin_duration(secs).bin_index == idx


def test_nonpositive_duration_rejected():
    with pytest.raises(MalformedRecord):
        bin_duration(0)


@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_binning_monotone(a, b):
    bins = DurationBins()
    lo, hi = sorted((a, b))
    assert bins.index(lo) <= bins.index(hi)


def test_representatives_median_and_fallback():
    reps = DurationBins().representatives([1000, 1200, 1700, 20000])
    assert reps[1] == 1200
    assert reps[5] == 20000
    assert reps[0] == 450 and reps[2] == 2700


def test_top_bin_midpoint_fallback():
    assert DurationBins().midpoint(5) == 1.5 * 14400


def test_edges_parse_and_validate():
    assert parse_edges("0,60,inf").edges == (0.0, 60.0, math.inf)
    with pytest.raises(ConfigError):
        parse_edges("0,60,30")


def test_csv_round_trip():
    e = ProximityEvent(EventKind.ENCOUNTER, "A", "B", "p", 3600, 9000)
    recs = list(featurize_event(e))
    buf = io.StringIO()
    write_featurized(buf, recs)
    assert buf.getvalue().splitlines()[0] == "user,phi,iota_s,iota_e,poi,peer,duration_s,duration_bin"
    buf.seek(0)
    assert read_featurized(buf) == recs
