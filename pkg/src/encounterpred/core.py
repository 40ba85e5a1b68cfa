"""Shared record types and the canonical user ordering.

All identifiers (users, PoIs, peers) are opaque tokens compared by
identity; the only ordering defined on them is lexicographic on their
string form, used to canonicalize unordered user pairs.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Union

UserId = str
PoiId = str
PeerId = str


class EventKind(str, Enum):
    ENCOUNTER = "encounter"
    COLOCATION = "colocation"


class MalformedRecord(ValueError):
    """A record violates a structural invariant of its type."""


def user_key(user) -> str:
    return str(user)


@dataclass(frozen=True, slots=True)
class VisitRecord:
    user: UserId
    poi: PoiId
    arrival: int
    departure: int

    def __post_init__(self):
        if self.departure <= self.arrival:
            raise MalformedRecord(f"visit departure {self.departure} <= arrival {self.arrival}")

    @property
    def start(self) -> int:
        return self.arrival

    @property
    def end(self) -> int:
        return self.departure


@dataclass(frozen=True, slots=True)
class PresenceInterval:
    user: UserId
    poi: PoiId
    start: int
    end: int

    def __post_init__(self):
        if self.end <= self.start:
            raise MalformedRecord(f"presence end {self.end} <= start {self.start}")


Interval = Union[VisitRecord, PresenceInterval]


@dataclass(frozen=True, slots=True)
class ProximityEvent:
    kind: EventKind
    user_a: UserId
    user_b: UserId
    poi: PoiId
    start: int
    end: int

    def __post_init__(self):
        if self.user_a == self.user_b:
            raise MalformedRecord(f"reflexive event for user {self.user_a!r}")
        if self.end <= self.start:
            raise MalformedRecord(f"event end {self.end} <= start {self.start}")

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass(frozen=True, slots=True)
class TemporalContext:
    phi: int
    iota: int

    def __post_init__(self):
        if not 1 <= self.phi <= 7:
            raise ValueError(f"day of week must be in 1..7, got {self.phi}")
        if self.iota < 0:
            raise ValueError(f"slot must be non-negative, got {self.iota}")


def canonicalize(event: ProximityEvent) -> ProximityEvent:
    """Return ``event`` with its two users in canonical (string) order."""
    if event.user_a == event.user_b:
        raise MalformedRecord(f"reflexive event for user {event.user_a!r}")
    if user_key(event.user_a) < user_key(event.user_b):
        return event
    return replace(event, user_a=event.user_b, user_b=event.user_a)
