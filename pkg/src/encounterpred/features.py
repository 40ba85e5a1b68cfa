"""Temporal featurization of proximity events.

A timestamp maps to (day of week, slot) in a fixed timezone, Monday = 1 and
slot = floor(local_hour / H). Event durations are discretized into bins so
the duration predictor can treat them as classes.
"""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from datetime import datetime
from functools import lru_cache
from typing import IO, Iterable, Sequence
from zoneinfo import ZoneInfo

import numpy as np

from .core import MalformedRecord, ProximityEvent, TemporalContext

DEFAULT_SLOT_HOURS = 2
DEFAULT_TIMEZONE = "UTC"
DEFAULT_EDGES = (0, 900, 1800, 3600, 7200, 14400, math.inf)

FEATURIZED_COLUMNS = ("user", "phi", "iota_s", "iota_e", "poi", "peer", "duration_s", "duration_bin")


class ConfigError(ValueError):
    pass


def n_slots(slot_hours: int) -> int:
    if slot_hours <= 0 or 24 % slot_hours:
        raise ConfigError(f"slot length H={slot_hours} must divide 24")
    return 24 // slot_hours


@lru_cache(maxsize=64)
def _zone(tz: str) -> ZoneInfo:
    return ZoneInfo(tz)


def featurize_timestamp(ts: int, slot_hours: int = DEFAULT_SLOT_HOURS,
                        tz: str = DEFAULT_TIMEZONE) -> TemporalContext:
    n_slots(slot_hours)
    local = datetime.fromtimestamp(ts, _zone(tz))
    return TemporalContext(local.isoweekday(), local.hour // slot_hours)


@dataclass(frozen=True, slots=True)
class DurationClass:
    bin_index: int
    representative_seconds: float


@dataclass(frozen=True)
class DurationBins:
    """Left-closed duration bins ``[edges[i], edges[i+1])``."""

    edges: tuple[float, ...] = DEFAULT_EDGES

    def __post_init__(self):
        if len(self.edges) < 2 or any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ConfigError(f"duration bin edges must be strictly increasing: {self.edges}")

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    def index(self, seconds: float) -> int:
        if seconds <= 0:
            raise MalformedRecord(f"duration must be positive, got {seconds}")
        i = bisect.bisect_right(self.edges, seconds) - 1
        return min(max(i, 0), self.n_bins - 1)

    def midpoint(self, i: int) -> float:
        lo, hi = self.edges[i], self.edges[i + 1]
        if math.isinf(hi):
            return 1.5 * lo if lo > 0 else 1.0
        return (lo + hi) / 2

    def representatives(self, durations: Iterable[float]) -> dict[int, float]:
        """Median training duration per bin, bin midpoint for empty bins."""
        groups: dict[int, list[float]] = {i: [] for i in range(self.n_bins)}
        for d in durations:
            groups[self.index(d)].append(d)
        return {i: float(np.median(g)) if g else self.midpoint(i) for i, g in groups.items()}


def bin_duration(seconds: float, bins: DurationBins | None = None,
                 representatives: dict[int, float] | None = None) -> DurationClass:
    bins = bins or DurationBins()
    i = bins.index(seconds)
    rep = representatives[i] if representatives else bins.midpoint(i)
    return DurationClass(i, rep)


@dataclass(frozen=True, slots=True)
class FeaturizedRecord:
    user: str
    phi: int
    iota_s: int
    iota_e: int
    poi: str
    peer: str
    raw_duration: int
    duration_bin: int

    @property
    def context(self) -> TemporalContext:
        return TemporalContext(self.phi, self.iota_s)


def featurize_event(event: ProximityEvent, slot_hours: int = DEFAULT_SLOT_HOURS,
                    tz: str = DEFAULT_TIMEZONE,
                    bins: DurationBins | None = None) -> tuple[FeaturizedRecord, FeaturizedRecord]:
    """One record per participant; day of week is anchored to the start time."""
    bins = bins or DurationBins()
    start = featurize_timestamp(event.start, slot_hours, tz)
    end = featurize_timestamp(event.end, slot_hours, tz)
    dur = event.end - event.start
    b = bins.index(dur)
    return (
        FeaturizedRecord(event.user_a, start.phi, start.iota, end.iota, event.poi, event.user_b, dur, b),
        FeaturizedRecord(event.user_b, start.phi, start.iota, end.iota, event.poi, event.user_a, dur, b),
    )


def featurize_events(events: Iterable[ProximityEvent], slot_hours: int = DEFAULT_SLOT_HOURS,
                     tz: str = DEFAULT_TIMEZONE,
                     bins: DurationBins | None = None) -> list[FeaturizedRecord]:
    """Featurize many events, caching calendar lookups per slot-aligned hour."""
    bins = bins or DurationBins()
    n_slots(slot_hours)
    zone = _zone(tz)
    cache: dict[int, tuple[int, int]] = {}

    def ctx(ts: int) -> tuple[int, int]:
        # whole-hour UTC offsets only are cached; the bucket is the UTC hour
        hour = ts // 3600
        hit = cache.get(hour)
        if hit is None:
            local = datetime.fromtimestamp(hour * 3600, zone)
            if local.minute or local.second:
                local = datetime.fromtimestamp(ts, zone)
                return local.isoweekday(), local.hour // slot_hours
            hit = cache[hour] = (local.isoweekday(), local.hour // slot_hours)
        return hit

    out = []
    for e in events:
        phi, i_s = ctx(e.start)
        _, i_e = ctx(e.end)
        dur = e.end - e.start
        b = bins.index(dur)
        out.append(FeaturizedRecord(e.user_a, phi, i_s, i_e, e.poi, e.user_b, dur, b))
        out.append(FeaturizedRecord(e.user_b, phi, i_s, i_e, e.poi, e.user_a, dur, b))
    return out


def group_by_user(records: Iterable[FeaturizedRecord]) -> dict[str, list[FeaturizedRecord]]:
    out: dict[str, list[FeaturizedRecord]] = {}
    for r in records:
        out.setdefault(r.user, []).append(r)
    return out


def write_featurized(stream: IO, records: Iterable[FeaturizedRecord]) -> int:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(FEATURIZED_COLUMNS)
    n = 0
    for r in records:
        w.writerow((r.user, r.phi, r.iota_s, r.iota_e, r.poi, r.peer, r.raw_duration, r.duration_bin))
        n += 1
    return n


def read_featurized(stream: IO) -> list[FeaturizedRecord]:
    reader = csv.DictReader(stream)
    if not set(FEATURIZED_COLUMNS) <= set(reader.fieldnames or []):
        raise MalformedRecord(f"not a featurized CSV, header = {reader.fieldnames}")
    return [
        FeaturizedRecord(r["user"], int(r["phi"]), int(r["iota_s"]), int(r["iota_e"]), r["poi"],
                         r["peer"], int(r["duration_s"]), int(r["duration_bin"]))
        for r in reader
    ]


def parse_edges(text: str | Sequence[float]) -> DurationBins:
    """Parse ``"0,900,1800,inf"`` style edge lists."""
    if isinstance(text, str):
        vals = [float(t) for t in text.split(",") if t.strip()]
    else:
        vals = [float(t) for t in text]
    return DurationBins(tuple(vals))
