import pytest
from hypothesis import given, strategies as st

from encounterpred.core import (EventKind, MalformedRecord, PresenceInterval, ProximityEvent,
                                TemporalContext, VisitRecord, canonicalize)


def ev(a, b, poi="p", s=10, e=20):
    return ProximityEvent(EventKind.ENCOUNTER, a, b, poi, s, e)


def test_canonicalize_swaps_out_of_order_users():
    assert canonicalize(ev("B", "A")) == ev("A", "B")


def test_canonicalize_identity():
    e = ev("A", "B")
    assert canonicalize(e) is e


def test_reflexive_event_rejected():
    with pytest.raises(MalformedRecord):
        canonicalize(ev("A", "A"))


def test_ordering_is_lexicographic_on_string_form():
    # "10" < "9" as strings
    assert canonicalize(ev("9", "10")).user_a == "10"


@given(st.text(min_size=1, max_size=5), st.text(min_size=1, max_size=5))
def test_canonicalize_idempotent_and_swap_invariant(a, b):
    if a == b:
        return
    once = canonicalize(ev(a, b))
    assert canonicalize(once) == once
    assert canonicalize(ev(b, a)) == once
    assert str(once.user_a) < str(once.user_b)


@pytest.mark.parametrize("cls", [VisitRecord, PresenceInterval])
def test_intervals_need_positive_length(cls):
    with pytest.raises(MalformedRecord):
        cls("A", "p", 5, 5)


def test_temporal_context_bounds():
    TemporalContext(7, 11)
    with pytest.raises(ValueError):
        TemporalContext(0, 1)
    with pytest.raises(ValueError):
        TemporalContext(8, 1)
