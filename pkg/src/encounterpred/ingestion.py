"""Parsing of WiFi session logs and CDR activity logs into intervals.

WiFi sessions become :class:`VisitRecord` objects after start/stop pairing,
same-AP gap merging (ping-pong smoothing) and the minimum dwell filter.
CDR activities become :class:`PresenceInterval` objects by widening every
activity by ``t_h`` seconds on both sides and merging overlaps.
"""
from __future__ import annotations

import csv
import io
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .core import MalformedRecord, PresenceInterval, VisitRecord

log = logging.getLogger(__name__)

DEFAULT_MIN_DWELL = 900
DEFAULT_MERGE_GAP = 60
DEFAULT_T_H = 900

WIFI_COLUMNS = ("timestamp", "ap_id", "device_id", "session_seconds", "status")
CDR_COLUMNS = ("user_id", "peer_id", "timestamp", "duration_seconds", "cell_id", "activity")
VISIT_COLUMNS = ("user", "poi", "arrival", "departure")
INTERVAL_COLUMNS = ("user", "poi", "start", "end")


@dataclass(frozen=True, slots=True)
class WifiSessionRecord:
    timestamp: int
    ap: str
    device: str
    session_seconds: int
    status: str  # "start" | "stop"


@dataclass(frozen=True, slots=True)
class CdrActivityRecord:
    user: str
    peer_user: str | None
    timestamp: int
    duration_seconds: int
    cell: str
    activity: str  # "voice" | "text" | "data"


@dataclass
class ParseTally:
    """Counts of lines seen, records emitted and records skipped, by reason."""

    emitted: int = 0
    skipped: Counter = field(default_factory=Counter)

    @property
    def total_skipped(self) -> int:
        return sum(self.skipped.values())

    @property
    def seen(self) -> int:
        return self.emitted + self.total_skipped

    def skip(self, reason: str, lineno: int | None = None, line: str = ""):
        self.skipped[reason] += 1
        if lineno is not None:
            log.warning("skipping line %d (%s): %r", lineno, reason, line[:120])


@dataclass(frozen=True)
class LogFormat:
    """Column layout of a delimited log.

    ``columns`` names the logical fields in file order when ``header`` is
    false; with a header the file's own header row is mapped through
    ``rename`` (file column -> logical field) and must contain every field.
    """

    columns: tuple[str, ...] = WIFI_COLUMNS
    header: bool = True
    delimiter: str = ","
    rename: dict = field(default_factory=dict)
    strip_prefixes: tuple[str, ...] = ("AP:", "DEV:")


def _text_lines(stream: IO) -> Iterator[str]:
    if isinstance(stream, (io.TextIOBase,)) or hasattr(stream, "encoding"):
        yield from stream
        return
    for raw in stream:
        yield raw.decode("utf-8") if isinstance(raw, bytes) else raw


def _strip(token: str, prefixes: tuple[str, ...]) -> str:
    token = token.strip()
    for p in prefixes:
        if token.startswith(p):
            return token[len(p):]
    return token


def _rows(stream: IO, fmt: LogFormat, tally: ParseTally) -> Iterator[tuple[int, dict, str]]:
    lines = _text_lines(stream)
    reader = csv.reader(lines, delimiter=fmt.delimiter)
    columns = list(fmt.columns)
    lineno = 0
    if fmt.header:
        try:
            head = next(reader)
        except StopIteration:
            return
        lineno = 1
        head = [fmt.rename.get(h.strip(), h.strip()) for h in head]
        missing = [c for c in fmt.columns if c not in head]
        if missing:
            raise ValueError(f"log header is missing columns {missing}; got {head}")
        columns = head
    for row in reader:
        lineno += 1
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(columns):
            tally.skip("wrong column count", lineno, fmt.delimiter.join(row))
            continue
        yield lineno, dict(zip(columns, row)), fmt.delimiter.join(row)


def parse_wifi_log(stream: IO, fmt: LogFormat | None = None,
                   tally: ParseTally | None = None) -> Iterator[WifiSessionRecord]:
    """Lazily parse a WiFi association log.

    Malformed lines are skipped with a warning and counted in ``tally``.
    """
    fmt = fmt or LogFormat()
    tally = tally if tally is not None else ParseTally()
    for lineno, row, line in _rows(stream, fmt, tally):
        try:
            ts = int(row["timestamp"].strip())
            secs = int(float(row["session_seconds"].strip() or 0))
            status = row["status"].strip().lower()
            ap = _strip(row["ap_id"], fmt.strip_prefixes)
            dev = _strip(row["device_id"], fmt.strip_prefixes)
        except (ValueError, KeyError):
            tally.skip("unparseable field", lineno, line)
            continue
        if status not in ("start", "stop") or secs < 0 or not ap or not dev:
            tally.skip("invalid value", lineno, line)
            continue
        tally.emitted += 1
        yield WifiSessionRecord(ts, ap, dev, secs, status)


CDR_FORMAT = LogFormat(columns=CDR_COLUMNS, strip_prefixes=())


def parse_cdr_log(stream: IO, fmt: LogFormat | None = None,
                  tally: ParseTally | None = None) -> Iterator[CdrActivityRecord]:
    """Lazily parse a CDR activity log; text/data rows must carry zero duration."""
    fmt = fmt or CDR_FORMAT
    tally = tally if tally is not None else ParseTally()
    for lineno, row, line in _rows(stream, fmt, tally):
        try:
            user = row["user_id"].strip()
            peer = row["peer_id"].strip() or None
            ts = int(row["timestamp"].strip())
            dur = int(float(row["duration_seconds"].strip() or 0))
            cell = row["cell_id"].strip()
            activity = row["activity"].strip().lower()
        except (ValueError, KeyError):
            tally.skip("unparseable field", lineno, line)
            continue
        if (not user or not cell or dur < 0 or activity not in ("voice", "text", "data")
                or (activity != "voice" and dur != 0)):
            tally.skip("invalid value", lineno, line)
            continue
        tally.emitted += 1
        yield CdrActivityRecord(user, peer, ts, dur, cell, activity)


def _pair_sessions(sessions: list[WifiSessionRecord], tally: ParseTally) -> list[tuple[int, int]]:
    """Turn one (device, AP) stream of start/stop records into raw intervals."""
    out = []
    pending: WifiSessionRecord | None = None

    def close_orphan(rec: WifiSessionRecord, forward: bool):
        if rec.session_seconds > 0:
            if forward:
                out.append((rec.timestamp, rec.timestamp + rec.session_seconds))
            else:
                out.append((rec.timestamp - rec.session_seconds, rec.timestamp))
        else:
            tally.skip("start without stop" if forward else "stop without start")

    for rec in sessions:
        if rec.status == "start":
            if pending is not None:
                close_orphan(pending, forward=True)
            pending = rec
        else:
            if pending is not None:
                if rec.timestamp > pending.timestamp:
                    out.append((pending.timestamp, rec.timestamp))
                elif rec.session_seconds > 0:
                    out.append((rec.timestamp - rec.session_seconds, rec.timestamp))
                else:
                    tally.skip("empty session")
                pending = None
            else:
                close_orphan(rec, forward=False)
    if pending is not None:
        close_orphan(pending, forward=True)
    return out


def merge_intervals(spans: Iterable[tuple[int, int]], gap: int = 0) -> list[tuple[int, int]]:
    """Merge spans whose separation is at most ``gap`` (overlaps always merge)."""
    merged: list[list[int]] = []
    for s, e in sorted(spans):
        if merged and s - merged[-1][1] <= gap:
            if e > merged[-1][1]:
                merged[-1][1] = e
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def build_visits(sessions: Iterable[WifiSessionRecord], min_dwell: int = DEFAULT_MIN_DWELL,
                 merge_gap: int = DEFAULT_MERGE_GAP,
                 tally: ParseTally | None = None) -> list[VisitRecord]:
    """Build per-user AP visits from association sessions.

    Sessions of one device at one AP separated by at most ``merge_gap``
    seconds are merged; merged visits shorter than ``min_dwell`` are dropped.
    Output is ordered by (user, arrival, poi).
    """
    tally = tally if tally is not None else ParseTally()
    streams: dict[tuple[str, str], list[WifiSessionRecord]] = defaultdict(list)
    for rec in sessions:
        streams[(rec.device, rec.ap)].append(rec)

    visits = []
    for (dev, ap), recs in streams.items():
        # stop sorts before start at equal timestamps so back-to-back sessions pair correctly
        recs.sort(key=lambda r: (r.timestamp, r.status != "stop", r.session_seconds))
        for s, e in merge_intervals(_pair_sessions(recs, tally), merge_gap):
            if e - s < min_dwell:
                tally.skip("below min dwell")
                continue
            visits.append(VisitRecord(dev, ap, s, e))
            tally.emitted += 1
    visits.sort(key=lambda v: (v.user, v.arrival, v.poi, v.departure))
    return visits


def build_presence(activities: Iterable[CdrActivityRecord], t_h: int = DEFAULT_T_H) -> list[PresenceInterval]:
    """Expand CDR activities to presence windows ``[t - t_h, t + t_h + Td]``.

    Overlapping (or touching) windows of one user at one cell are merged.
    """
    spans: dict[tuple[str, str], list[tuple[int, int]]] = defaultdict(list)
    for a in activities:
        spans[(a.user, a.cell)].append((a.timestamp - t_h, a.timestamp + t_h + a.duration_seconds))
    out = []
    for (user, cell), ss in spans.items():
        for s, e in merge_intervals(ss):
            out.append(PresenceInterval(user, cell, s, e))
    out.sort(key=lambda p: (p.user, p.start, p.poi, p.end))
    return out


def read_intervals(stream: IO) -> list[PresenceInterval | VisitRecord]:
    """Read an interval CSV (``user,poi,start,end`` or the visit layout)."""
    reader = csv.DictReader(stream)
    fields = reader.fieldnames or []
    out: list = []
    if set(VISIT_COLUMNS) <= set(fields):
        for row in reader:
            out.append(VisitRecord(row["user"], row["poi"], int(row["arrival"]), int(row["departure"])))
    elif set(INTERVAL_COLUMNS) <= set(fields):
        for row in reader:
            out.append(PresenceInterval(row["user"], row["poi"], int(row["start"]), int(row["end"])))
    else:
        raise MalformedRecord(f"not an interval CSV, header = {fields}")
    return out


def write_intervals(stream: IO, intervals: Iterable) -> int:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(INTERVAL_COLUMNS)
    n = 0
    for iv in intervals:
        w.writerow((iv.user, iv.poi, iv.start, iv.end))
        n += 1
    return n


def write_visits(stream: IO, visits: Iterable[VisitRecord]) -> int:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(VISIT_COLUMNS)
    n = 0
    for v in visits:
        w.writerow((v.user, v.poi, v.arrival, v.departure))
        n += 1
    return n


def check_disjoint(intervals: Iterable) -> None:
    """Raise if any user has two overlapping intervals at the same PoI."""
    by_key: dict[tuple, list] = defaultdict(list)
    for iv in intervals:
        by_key[(iv.user, iv.poi)].append((iv.start, iv.end))
    for key, spans in by_key.items():
        spans.sort()
        for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
            if s1 < e0:
                raise MalformedRecord(f"overlapping intervals for {key}: [{s0},{e0}] and [{s1},{e1}]")
