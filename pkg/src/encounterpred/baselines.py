"""Reference predictors: plain naive Bayes and a Gaussian temporal model."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

from .bayes import SCHEMA, CountModel, Prediction, rank
from .core import TemporalContext
from .features import DEFAULT_SLOT_HOURS, FeaturizedRecord

VARIANCE_FLOOR = 0.25


def predict_nbc(model: CountModel, ctx: TemporalContext, k: int = 1, poi=None) -> Prediction:
    """Unweighted MAP ranking ``log P(c) + sum_f log P(v_f|c)``.

    Evaluated straight from the count tables, without the compiled
    log-tables the weighted predictors use.
    """
    values = {"phi": ctx.phi, "iota": ctx.iota, "poi": poi}
    labels = model.classes
    if not labels:
        return Prediction([], k)
    scores = []
    for c in labels:
        s = math.log(model.prior(c))
        for f in model.features:
            s += math.log(model.cond(f, values[f], c))
        scores.append(s)
    return Prediction(rank(labels, scores, [model.class_counts[c] for c in labels], k), k)


def slot_hour(iota: int, slot_hours: int = DEFAULT_SLOT_HOURS) -> float:
    """Centre of a day slot in hours."""
    return iota * slot_hours + slot_hours / 2


@dataclass(frozen=True)
class GaussianPoi:
    count: int
    mean_phi: float
    var_phi: float
    mean_hour: float
    var_hour: float


def _moments(xs: list[float]) -> tuple[float, float]:
    m = sum(xs) / len(xs)
    var = sum((x - m) ** 2 for x in xs) / (len(xs) - 1) if len(xs) > 1 else 0.0
    return m, max(var, VARIANCE_FLOOR)


def _log_normal_pdf(x: float, mean: float, var: float) -> float:
    return -0.5 * (math.log(2 * math.pi * var) + (x - mean) ** 2 / var)


class GaussianSTModel:
    """Per-PoI Gaussians over day of week and hour, no circular wraparound."""

    def __init__(self, pois: dict[str, GaussianPoi]):
        self.pois = pois
        self.total = sum(p.count for p in pois.values())

    @classmethod
    def fit(cls, records: Sequence[FeaturizedRecord], slot_hours: int = DEFAULT_SLOT_HOURS,
            hours: Sequence[float] | None = None) -> "GaussianSTModel":
        phis: dict = defaultdict(list)
        hrs: dict = defaultdict(list)
        for i, r in enumerate(records):
            phis[r.poi].append(float(r.phi))
            hrs[r.poi].append(hours[i] if hours is not None else slot_hour(r.iota_s, slot_hours))
        pois = {}
        for p in phis:
            mp, vp = _moments(phis[p])
            mh, vh = _moments(hrs[p])
            pois[p] = GaussianPoi(len(phis[p]), mp, vp, mh, vh)
        return cls(pois)

    def predict(self, phi: float, hour: float, k: int = 1) -> Prediction:
        labels = sorted(self.pois, key=str)
        if not labels:
            return Prediction([], k)
        scores = []
        for p in labels:
            g = self.pois[p]
            scores.append(math.log(g.count / self.total)
                          + _log_normal_pdf(phi, g.mean_phi, g.var_phi)
                          + _log_normal_pdf(hour, g.mean_hour, g.var_hour))
        return Prediction(rank(labels, scores, [self.pois[p].count for p in labels], k), k)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "baseline": "gaussian_st",
            "pois": [[p, g.count, g.mean_phi, g.var_phi, g.mean_hour, g.var_hour]
                     for p, g in sorted(self.pois.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianSTModel":
        return cls({p: GaussianPoi(n, mp, vp, mh, vh) for p, n, mp, vp, mh, vh in d["pois"]})


def predict_gaussian_st(records: Sequence[FeaturizedRecord], ctx: TemporalContext, k: int = 1,
                        slot_hours: int = DEFAULT_SLOT_HOURS) -> Prediction:
    model = GaussianSTModel.fit(records, slot_hours)
    return model.predict(ctx.phi, slot_hour(ctx.iota, slot_hours), k)
