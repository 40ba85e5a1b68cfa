import pytest

from encounterpred.core import EventKind, ProximityEvent
from encounterpred.features import FeaturizedRecord


def rec(user="A", phi=1, iota=4, poi="p", peer="B", dur=1800, bin_=2, iota_e=None):
    return FeaturizedRecord(user, phi, iota, iota if iota_e is None else iota_e, poi, peer, dur, bin_)


@pytest.fixture
def make_record():
    return rec


@pytest.fixture
def event():
    return ProximityEvent(EventKind.ENCOUNTER, "A", "B", "p", 10, 20)


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" and outcome != "error":
                continue
            crit = dict(rep.user_properties).get("criterion")
            if crit:
                lines.append((crit[0], "PASS" if outcome == "passed" else "FAIL", crit[1]))
    if lines:
        terminalreporter.section("acceptance criteria")
        for n, status, text in sorted(lines):
            terminalreporter.write_line(f"criterion {n:>2}: {status}  {text}")


@pytest.fixture(autouse=True)
def _criterion_property(request, record_property):
    m = request.node.get_closest_marker("criterion")
    if m:
        record_property("criterion", (m.args[0], m.args[1]))
