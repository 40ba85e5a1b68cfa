"""Synthetic visit traces with planted weekly meeting schedules.

Users are split into cohorts. Each cohort has a few daily slots; in every
slot its members are paired and every pair is assigned a PoI. The same
weekly template repeats for ``n_weeks``. With ``weekend_conflict`` the
weekend template uses the same slots but a different pairing and different
PoIs, which breaks the independence of day-of-week and slot given the PoI.

Noise acts per slot occurrence: each meeting is independently marked noisy
with probability ``noise_rate``; members of the noisy meetings are re-paired
at random and each new pair gets a uniformly random PoI.

Pairs sharing a PoI in the same slot get disjoint sub-windows of the slot,
so only planted partners overlap in a noiseless trace.
"""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from typing import IO, Sequence
from zoneinfo import ZoneInfo

import numpy as np

from .core import VisitRecord
from .features import FeaturizedRecord, DurationBins, n_slots

# Monday 2024-01-01 00:00 UTC
DEFAULT_START = 1704067200
WEEKDAYS = (1, 2, 3, 4, 5)
WEEKEND = (6, 7)


class InfeasibleSchedule(ValueError):
    pass


@dataclass(frozen=True)
class Meeting:
    """One weekly-recurring booking: ``members`` meet at ``poi`` in slot (phi, iota)."""

    phi: int
    iota: int
    members: tuple[str, ...]
    poi: str
    median_seconds: float


@dataclass
class ScheduleSpec:
    n_users: int = 50
    n_pois: int = 8
    n_weeks: int = 6
    daily_slots: int = 3
    days: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7)
    cohort_size: int = 6
    noise_rate: float = 0.0
    weekend_conflict: bool = False
    median_duration: float = 2400.0
    duration_sigma: float = 0.5
    slot_hours: int = 2
    seed: int = 0
    start: int = DEFAULT_START
    timezone: str = "UTC"
    schedule: list[Meeting] | None = None
    user_prefix: str = "u"
    poi_prefix: str = "p"

    def validate(self) -> None:
        if not 0.0 <= self.noise_rate <= 1.0:
            raise InfeasibleSchedule(f"noise_rate must be in [0, 1], got {self.noise_rate}")
        if self.n_users < 1 or self.n_pois < 1 or self.n_weeks < 1:
            raise InfeasibleSchedule("n_users, n_pois and n_weeks must be positive")
        slots = n_slots(self.slot_hours)
        if not 1 <= self.daily_slots <= slots:
            raise InfeasibleSchedule(f"daily_slots must be in 1..{slots}")
        if not self.days or any(not 1 <= d <= 7 for d in self.days):
            raise InfeasibleSchedule(f"days must be within 1..7, got {self.days}")
        if self.cohort_size < 1:
            raise InfeasibleSchedule("cohort_size must be positive")
        if self.weekend_conflict and (self.n_pois < 3
                                      or not set(self.days) & set(WEEKDAYS) or not set(self.days) & set(WEEKEND)):
            raise InfeasibleSchedule("weekend_conflict needs weekday and weekend days and >= 3 PoIs")
        if self.schedule is not None:
            validate_meetings(self.schedule, self)

    def user(self, i: int) -> str:
        return f"{self.user_prefix}{i:0{len(str(self.n_users - 1))}d}"

    def poi(self, i: int) -> str:
        return f"{self.poi_prefix}{i:0{len(str(self.n_pois - 1))}d}"

    def slot_start(self, week: int, phi: int, iota: int) -> int:
        """Epoch of the slot start, counted in local days from the first Monday."""
        zone = ZoneInfo(self.timezone)
        base = datetime.fromtimestamp(self.start, zone)
        day = base.toordinal() + week * 7 + (phi - base.isoweekday())
        local = datetime.fromordinal(day).replace(hour=iota * self.slot_hours, tzinfo=zone)
        return int(local.timestamp())


def validate_meetings(meetings: Sequence[Meeting], spec: ScheduleSpec) -> None:
    """Reject double bookings and out-of-range slots or PoIs."""
    slots = n_slots(spec.slot_hours)
    pois = {spec.poi(i) for i in range(spec.n_pois)}
    booked: dict = {}
    for m in meetings:
        if not 1 <= m.phi <= 7 or not 0 <= m.iota < slots:
            raise InfeasibleSchedule(f"meeting slot out of range: {m}")
        if m.poi not in pois:
            raise InfeasibleSchedule(f"meeting PoI {m.poi!r} is not one of the spec's PoIs")
        if len(set(m.members)) != len(m.members) or not m.members:
            raise InfeasibleSchedule(f"meeting members must be distinct and non-empty: {m}")
        for u in m.members:
            key = (u, m.phi, m.iota)
            if key in booked:
                raise InfeasibleSchedule(f"user {u} is booked twice in slot (phi={m.phi}, iota={m.iota})")
            booked[key] = m


def _pairings(members: list[str], rng: np.random.Generator) -> list[tuple[str, ...]]:
    order = [members[i] for i in rng.permutation(len(members))]
    groups = [tuple(order[i:i + 2]) for i in range(0, len(order) - 1, 2)]
    if len(order) % 2:
        groups.append((order[-1],))
    return groups


def plan_schedule(spec: ScheduleSpec) -> list[Meeting]:
    """Draw the weekly meeting template for ``spec``."""
    rng = np.random.default_rng([spec.seed, 1])
    users = [spec.user(i) for i in range(spec.n_users)]
    n_sl = n_slots(spec.slot_hours)
    if spec.weekend_conflict:
        day_types = [tuple(d for d in spec.days if d in WEEKDAYS), tuple(d for d in spec.days if d in WEEKEND)]
    else:
        day_types = [tuple(spec.days)]
    meetings = []
    for c0 in range(0, spec.n_users, spec.cohort_size):
        cohort = users[c0:c0 + spec.cohort_size]
        iotas = sorted(rng.choice(n_sl, size=spec.daily_slots, replace=False).tolist())
        for iota in iotas:
            weekday_poi: dict[str, int] = {}
            for t, days in enumerate(day_types):
                for group in _pairings(cohort, rng):
                    if t == 0:
                        p = int(rng.integers(spec.n_pois))
                        for u in group:
                            weekday_poi[u] = p
                    else:
                        banned = {weekday_poi[u] for u in group}
                        choices = [p for p in range(spec.n_pois) if p not in banned]
                        p = int(choices[rng.integers(len(choices))])
                    med = spec.median_duration * float(rng.uniform(0.6, 1.4))
                    for phi in days:
                        meetings.append(Meeting(phi, iota, group, spec.poi(p), med))
    meetings.sort(key=lambda m: (m.phi, m.iota, m.members))
    return meetings


@dataclass
class SyntheticTrace:
    visits: list[VisitRecord]
    truth: list[FeaturizedRecord]
    meetings: list[Meeting] = field(default_factory=list)


def generate(spec: ScheduleSpec, bins: DurationBins | None = None) -> SyntheticTrace:
    """Materialize ``n_weeks`` of visits and the planted ground-truth records."""
    spec.validate()
    bins = bins or DurationBins()
    meetings = spec.schedule if spec.schedule is not None else plan_schedule(spec)
    rng = np.random.default_rng([spec.seed, 2])
    slot_len = spec.slot_hours * 3600
    by_slot: dict = defaultdict(list)
    for m in meetings:
        by_slot[(m.phi, m.iota)].append(m)
    slot_keys = sorted(by_slot)

    visits: list[VisitRecord] = []
    truth: list[FeaturizedRecord] = []
    for week in range(spec.n_weeks):
        for phi, iota in slot_keys:
            base = spec.slot_start(week, phi, iota)
            planned = by_slot[(phi, iota)]
            noisy = rng.random(len(planned)) < spec.noise_rate
            groups = [(m.members, m.poi, m.median_seconds) for m, z in zip(planned, noisy) if not z]
            if noisy.any():
                pool = [u for m, z in zip(planned, noisy) if z for u in m.members]
                meds = [m.median_seconds for m, z in zip(planned, noisy) if z]
                for j, g in enumerate(_pairings(pool, rng)):
                    groups.append((g, spec.poi(int(rng.integers(spec.n_pois))), meds[j % len(meds)]))
            # pairs sharing a PoI split the slot into disjoint windows
            at_poi: dict = defaultdict(list)
            for g in groups:
                at_poi[g[1]].append(g)
            for poi in sorted(at_poi):
                gs = at_poi[poi]
                win = slot_len // len(gs)
                for j, (members, _, med) in enumerate(gs):
                    w0 = base + j * win
                    offset = int(rng.integers(0, max(1, win // 8)))
                    dur = int(round(med * math.exp(spec.duration_sigma * rng.standard_normal())))
                    dur = min(max(dur, 60), win - offset - 1)
                    if dur <= 0:
                        continue
                    s, e = w0 + offset, w0 + offset + dur
                    for u in members:
                        visits.append(VisitRecord(u, poi, s, e))
                    if len(members) > 1:
                        b = bins.index(e - s)
                        for u in members:
                            for v in members:
                                if u != v:
                                    truth.append(FeaturizedRecord(u, phi, iota, iota, poi, v, e - s, b))
    visits.sort(key=lambda v: (v.arrival, v.user, v.poi))
    truth.sort(key=lambda r: (r.user, r.phi, r.iota_s, r.peer))
    return SyntheticTrace(visits, truth, list(meetings))


def write_truth(stream: IO, truth: Sequence[FeaturizedRecord]) -> int:
    from .features import write_featurized
    return write_featurized(stream, truth)


def write_schedule(stream: IO, meetings: Sequence[Meeting]) -> int:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("phi", "iota", "members", "poi", "median_seconds"))
    for m in meetings:
        w.writerow((m.phi, m.iota, " ".join(m.members), m.poi, f"{m.median_seconds:.1f}"))
    return len(meetings)
