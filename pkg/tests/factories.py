"""Random record and model generators shared by the tests."""
from __future__ import annotations

import random

from encounterpred.bayes import LABEL_FEATURES, fit
from encounterpred.core import TemporalContext
from encounterpred.features import DurationBins, FeaturizedRecord

# ten 15-minute bins plus an open top bin, so duration models can have 10 classes
FINE_BINS = DurationBins(tuple(range(0, 9001, 900)) + (float("inf"),))


def random_records(rng: random.Random, kind: str, n_classes: int, n: int) -> list[FeaturizedRecord]:
    """Draw ``n`` records whose labels follow a random multinomial over ``n_classes``."""
    probs = [rng.random() ** 2 + 1e-3 for _ in range(n_classes)]
    pois = [f"p{i}" for i in range(rng.randint(1, 4))]
    phis = rng.sample(range(1, 8), rng.randint(1, 7))
    iotas = rng.sample(range(12), rng.randint(1, 12))
    out = []
    for _ in range(n):
        c = rng.choices(range(n_classes), probs)[0]
        # features loosely tied to the class so weights are non-trivial
        phi = phis[(c + rng.randint(0, 1)) % len(phis)] if rng.random() < 0.6 else rng.choice(phis)
        iota = iotas[(2 * c) % len(iotas)] if rng.random() < 0.6 else rng.choice(iotas)
        poi = pois[c % len(pois)] if kind != "poi" else f"L{c}"
        peer = f"c{c}" if kind == "contact" else "x"
        dur = 60 + c * 900 + rng.randint(0, 800)  # always inside bin c of FINE_BINS
        out.append(FeaturizedRecord("u", phi, iota, iota, poi, peer, dur, c if kind == "duration" else 0))
    return out


def random_model(rng: random.Random):
    kind = rng.choice(("poi", "duration", "contact"))
    n_classes = rng.randint(1, 10)
    recs = random_records(rng, kind, n_classes, rng.randint(1, 60))
    return fit(recs, kind, alpha=rng.choice((1.0, 0.5, 2.0)), bins=FINE_BINS)


def random_weights(rng: random.Random, kind: str) -> dict:
    return {f: rng.uniform(0, 2) for f in LABEL_FEATURES[kind]}


def random_query(rng: random.Random, model):
    ctx = TemporalContext(rng.randint(1, 7), rng.randint(0, 11))
    poi = None
    if model.label_kind == "duration":
        seen = sorted(model.observed_values("poi"))
        poi = rng.choice(seen + ["unseen"])
    return ctx, poi
