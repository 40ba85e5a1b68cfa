"""Encounter and colocation prediction from WiFi and CDR mobility traces."""
from .core import (EventKind, MalformedRecord, PresenceInterval, ProximityEvent, TemporalContext,
                   VisitRecord, canonicalize)

__all__ = ["EventKind", "MalformedRecord", "PresenceInterval", "ProximityEvent", "TemporalContext",
           "VisitRecord", "canonicalize"]
__version__ = "0.1.0"
