"""Encounter / colocation extraction by per-PoI interval overlap.

Each PoI is swept once in start order with a heap of active intervals
keyed by end time, giving O(n log n + k) for n intervals and k events.
"""
from __future__ import annotations

import csv
import heapq
from collections import defaultdict
from typing import IO, Iterable

from .core import EventKind, MalformedRecord, ProximityEvent, canonicalize, user_key

EVENT_COLUMNS = ("UserA", "UserB", "PoIId", "StartTime", "EndTime")


def _event_sort_key(e: ProximityEvent):
    return (user_key(e.poi), e.start, e.end, user_key(e.user_a), user_key(e.user_b))


def _sweep_poi(poi, spans: list[tuple[int, int, str]], kind: EventKind, out: list) -> None:
    spans.sort(key=lambda t: (t[0], t[1], user_key(t[2])))
    heap: list[tuple[int, int]] = []
    active: dict[int, tuple[int, int, str]] = {}
    for idx, (s, e, u) in enumerate(spans):
        while heap and heap[0][0] <= s:
            _, gone = heapq.heappop(heap)
            del active[gone]
        for s2, e2, v in active.values():
            if v == u:
                continue
            lo, hi = s, min(e, e2)
            if hi > lo:
                out.append(canonicalize(ProximityEvent(kind, u, v, poi, lo, hi)))
        active[idx] = (s, e, u)
        heapq.heappush(heap, (e, idx))


def extract_events(intervals: Iterable, kind: EventKind | str = EventKind.ENCOUNTER) -> list[ProximityEvent]:
    """Emit one event per pair of distinct users overlapping at the same PoI.

    The event spans the intersection of the two intervals; intersections of
    zero length are not events. Output is sorted by (poi, start, end, users).
    """
    kind = EventKind(kind)
    by_poi: dict[str, list[tuple[int, int, str]]] = defaultdict(list)
    for iv in intervals:
        by_poi[iv.poi].append((iv.start, iv.end, iv.user))
    out: list[ProximityEvent] = []
    for poi, spans in by_poi.items():
        _sweep_poi(poi, spans, kind, out)
    out.sort(key=_event_sort_key)
    return out


def write_events(stream: IO, events: Iterable[ProximityEvent]) -> int:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(EVENT_COLUMNS)
    n = 0
    for e in events:
        w.writerow((e.user_a, e.user_b, e.poi, e.start, e.end))
        n += 1
    return n


def read_events(stream: IO, kind: EventKind | str = EventKind.ENCOUNTER) -> list[ProximityEvent]:
    kind = EventKind(kind)
    reader = csv.DictReader(stream)
    if not set(EVENT_COLUMNS) <= set(reader.fieldnames or []):
        raise MalformedRecord(f"not an event CSV, header = {reader.fieldnames}")
    return [
        canonicalize(ProximityEvent(kind, r["UserA"], r["UserB"], r["PoIId"],
                                    int(r["StartTime"]), int(r["EndTime"])))
        for r in reader
    ]
