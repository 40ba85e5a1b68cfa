"""Per-user count models and KL-weighted naive Bayes predictors.

A :class:`CountModel` keeps raw counts for one label kind:

* ``poi``      -- label is the PoI, features (phi, iota)
* ``contact``  -- label is the peer, features (phi, iota)
* ``duration`` -- label is the duration bin, features (phi, iota, poi)

Probabilities are add-alpha smoothed with full-domain denominators. Scores
are weighted log-likelihoods::

    score(c) = log P(c) + sum_f w_f * log P(v_f | c)

Feature weights come from the KL divergence between the class posterior
given a feature value and the class prior, averaged over values and
normalized by the feature's split information. By default the weights of
one model are then rescaled to average 1, so weighting redistributes
evidence between features instead of shrinking all of it towards the prior.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .core import TemporalContext
from .features import DEFAULT_SLOT_HOURS, DurationBins, DurationClass, FeaturizedRecord, n_slots

SCHEMA = "encounterpred.model/1"

LABEL_KINDS = ("poi", "duration", "contact")
LABEL_FEATURES = {
    "poi": ("phi", "iota"),
    "contact": ("phi", "iota"),
    "duration": ("phi", "iota", "poi"),
}
KL_NORMS = ("splitinfo", "plain")
WEIGHT_SCALES = ("mean", "none")
WEIGHT_MODES = ("shared", "adaptive", "unit")


class NotFitted(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


def record_label(r: FeaturizedRecord, kind: str) -> Hashable:
    if kind == "poi":
        return r.poi
    if kind == "contact":
        return r.peer
    if kind == "duration":
        return r.duration_bin
    raise ValueError(f"unknown label kind {kind!r}")


def record_value(r: FeaturizedRecord, feature: str) -> Hashable:
    if feature == "phi":
        return r.phi
    if feature == "iota":
        return r.iota_s
    if feature == "poi":
        return r.poi
    raise ValueError(f"unknown feature {feature!r}")


def _label_key(label) -> str:
    return str(label)


@dataclass
class CountModel:
    label_kind: str
    features: tuple[str, ...]
    class_counts: dict
    # feature -> label -> value -> count
    cond_counts: dict
    domain_sizes: dict
    alpha: float = 1.0
    representatives: dict | None = None
    _compiled: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        self.features = tuple(self.features)

    @property
    def total(self) -> int:
        return sum(self.class_counts.values())

    @property
    def classes(self) -> list:
        return sorted(self.class_counts, key=_label_key)

    def count(self, feature: str, value, label) -> int:
        return self.cond_counts.get(feature, {}).get(label, {}).get(value, 0)

    def observed_values(self, feature: str) -> set:
        vals = set()
        for by_value in self.cond_counts.get(feature, {}).values():
            vals.update(v for v, n in by_value.items() if n > 0)
        return vals

    def prior(self, label) -> float:
        n_classes = len(self.class_counts)
        return (self.class_counts.get(label, 0) + self.alpha) / (self.total + self.alpha * n_classes)

    def cond(self, feature: str, value, label) -> float:
        size = self.domain_sizes[feature]
        return (self.count(feature, value, label) + self.alpha) / (self.class_counts[label] + self.alpha * size)

    def with_alpha(self, alpha: float) -> "CountModel":
        return CountModel(self.label_kind, self.features, self.class_counts, self.cond_counts,
                          self.domain_sizes, alpha, self.representatives)

    def compiled(self) -> "_Compiled":
        if self._compiled is None:
            self._compiled = _Compiled(self)
        return self._compiled

    def to_dict(self) -> dict:
        return {
            "label_kind": self.label_kind,
            "features": list(self.features),
            "alpha": self.alpha,
            "domain_sizes": self.domain_sizes,
            "class_counts": [[c, n] for c, n in sorted(self.class_counts.items(), key=lambda t: _label_key(t[0]))],
            "cond_counts": [
                [f, c, v, n]
                for f in self.features
                for c, by_value in sorted(self.cond_counts.get(f, {}).items(), key=lambda t: _label_key(t[0]))
                for v, n in sorted(by_value.items(), key=lambda t: _label_key(t[0]))
            ],
            "representatives": (None if self.representatives is None
                                else [[b, s] for b, s in sorted(self.representatives.items())]),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CountModel":
        cond: dict = defaultdict(lambda: defaultdict(dict))
        for f, c, v, n in d["cond_counts"]:
            cond[f][c][v] = n
        reps = d.get("representatives")
        return cls(
            label_kind=d["label_kind"],
            features=tuple(d["features"]),
            class_counts={c: n for c, n in d["class_counts"]},
            cond_counts={f: dict(by_c) for f, by_c in cond.items()},
            domain_sizes=dict(d["domain_sizes"]),
            alpha=float(d["alpha"]),
            representatives=None if reps is None else {int(b): float(s) for b, s in reps},
        )


class _Compiled:
    """Dense log-probability tables for fast scoring."""

    def __init__(self, m: CountModel):
        self.labels = m.classes
        counts = np.array([m.class_counts[c] for c in self.labels], dtype=float)
        self.counts = counts
        n = len(self.labels)
        self.log_prior = np.log((counts + m.alpha) / (counts.sum() + m.alpha * n))
        self.tables: dict[str, dict] = {}
        self.floor: dict[str, np.ndarray] = {}
        for f in m.features:
            denom = counts + m.alpha * m.domain_sizes[f]
            self.floor[f] = np.log(m.alpha / denom)
            by_label = m.cond_counts.get(f, {})
            values = set()
            for by_value in by_label.values():
                values.update(by_value)
            table = {}
            for v in values:
                num = np.array([by_label.get(c, {}).get(v, 0) for c in self.labels], dtype=float)
                table[v] = np.log((num + m.alpha) / denom)
            self.tables[f] = table

    def scores(self, weights: Mapping[str, float], values: Mapping[str, Hashable]) -> np.ndarray:
        s = self.log_prior.copy()
        for f, v in values.items():
            w = weights.get(f, 1.0)
            if w == 0:
                continue
            s += w * self.tables[f].get(v, self.floor[f])
        return s


def fit(records: Sequence[FeaturizedRecord], label_kind: str, features: Sequence[str] | None = None,
        alpha: float = 1.0, slot_hours: int = DEFAULT_SLOT_HOURS,
        bins: DurationBins | None = None) -> CountModel:
    """Count classes and (feature value, class) pairs over ``records``."""
    if not records:
        raise NotFitted("cannot fit a model on zero records")
    features = tuple(features or LABEL_FEATURES[label_kind])
    class_counts: dict = defaultdict(int)
    cond: dict = {f: defaultdict(lambda: defaultdict(int)) for f in features}
    for r in records:
        c = record_label(r, label_kind)
        class_counts[c] += 1
        for f in features:
            cond[f][c][record_value(r, f)] += 1
    cond_counts = {f: {c: dict(bv) for c, bv in by_c.items()} for f, by_c in cond.items()}
    sizes = {}
    for f in features:
        if f == "phi":
            sizes[f] = 7
        elif f == "iota":
            sizes[f] = n_slots(slot_hours)
        else:
            vals = set()
            for bv in cond_counts[f].values():
                vals.update(bv)
            sizes[f] = len(vals)
    reps = None
    if label_kind == "duration":
        reps = (bins or DurationBins()).representatives(r.raw_duration for r in records)
    return CountModel(label_kind, features, dict(class_counts), cond_counts, sizes, alpha, reps)


def pool(models: Iterable[CountModel]) -> CountModel:
    """Sum several models' count tables (same label kind and features)."""
    models = list(models)
    if not models:
        raise NotFitted("no models to pool")
    kind, features = models[0].label_kind, models[0].features
    class_counts: dict = defaultdict(int)
    cond: dict = {f: defaultdict(lambda: defaultdict(int)) for f in features}
    for m in models:
        if m.label_kind != kind or m.features != features:
            raise ValueError("cannot pool models of different kinds")
        for c, n in m.class_counts.items():
            class_counts[c] += n
        for f in features:
            for c, bv in m.cond_counts.get(f, {}).items():
                for v, n in bv.items():
                    cond[f][c][v] += n
    cond_counts = {f: {c: dict(bv) for c, bv in by_c.items()} for f, by_c in cond.items()}
    sizes = {}
    for f in features:
        if f in ("phi", "iota"):
            sizes[f] = max(m.domain_sizes[f] for m in models)
        else:
            vals = set()
            for bv in cond_counts[f].values():
                vals.update(bv)
            sizes[f] = len(vals)
    return CountModel(kind, features, dict(class_counts), cond_counts, sizes, models[0].alpha)


def kl_weight(model: CountModel, feature: str, norm: str = "splitinfo") -> float:
    """KL feature weight from maximum-likelihood estimates of the counts.

    ``sum_v P(v) * KL(P(C|v) || P(C))``, divided by the split information
    ``-sum_v P(v) log P(v)`` when ``norm == "splitinfo"``. Natural log;
    ``0 log 0 = 0``; a single-valued feature has weight 0.
    """
    if norm not in KL_NORMS:
        raise ValueError(f"unknown KL normalization {norm!r}")
    n_total = model.total
    if n_total == 0:
        return 0.0
    by_label = model.cond_counts.get(feature, {})
    joint: dict = defaultdict(dict)
    for c, bv in by_label.items():
        for v, n in bv.items():
            if n > 0:
                joint[v][c] = n
    weighted_kl = 0.0
    split = 0.0
    for v in sorted(joint, key=_label_key):
        row = joint[v]
        n_v = sum(row.values())
        kl = 0.0
        for c in sorted(row, key=_label_key):
            n_vc = row[c]
            # the ratio is formed from exact integer products so independence gives log(1) = 0
            kl += (n_vc / n_v) * math.log((n_vc * n_total) / (n_v * model.class_counts[c]))
        p_v = n_v / n_total
        weighted_kl += p_v * kl
        split -= p_v * math.log(p_v)
    weighted_kl = max(weighted_kl, 0.0)
    if norm == "plain":
        return weighted_kl
    if split <= 0.0 or weighted_kl == 0.0:
        return 0.0
    return weighted_kl / split


@dataclass(frozen=True)
class WeightSet:
    label_kind: str
    weights: dict
    mode: str = "adaptive"

    def __post_init__(self):
        for f, w in self.weights.items():
            if not (w >= 0 and math.isfinite(w)):
                raise ValueError(f"weight for {f!r} must be finite and non-negative, got {w}")

    def to_dict(self) -> dict:
        return {"label_kind": self.label_kind, "mode": self.mode, "weights": dict(sorted(self.weights.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> "WeightSet":
        return cls(d["label_kind"], dict(d["weights"]), d["mode"])


def scale_weights(raw: Mapping[str, float], scale: str = "mean") -> dict:
    """Rescale raw KL weights; ``mean`` divides by their average (all-zero stays zero)."""
    if scale not in WEIGHT_SCALES:
        raise ValueError(f"unknown weight scale {scale!r}")
    if scale == "none":
        return dict(raw)
    mean = sum(raw.values()) / len(raw) if raw else 0.0
    if mean <= 0.0:
        return {f: 0.0 for f in raw}
    return {f: w / mean for f, w in raw.items()}


def model_weights(model: CountModel, norm: str = "splitinfo", scale: str = "mean",
                  mode: str = "adaptive") -> WeightSet:
    raw = {f: kl_weight(model, f, norm) for f in model.features}
    return WeightSet(model.label_kind, scale_weights(raw, scale), mode)


def adaptive_weights(model: CountModel, norm: str = "splitinfo", scale: str = "mean") -> WeightSet:
    """Weights from one user's own counts."""
    return model_weights(model, norm, scale, "adaptive")


def shared_weights(models: Iterable[CountModel], label_kind: str | None = None,
                   norm: str = "splitinfo", scale: str = "mean") -> WeightSet:
    """Weights computed once on the pooled counts of all given user models."""
    pooled = pool(models)
    if label_kind is not None and pooled.label_kind != label_kind:
        raise ValueError(f"models are {pooled.label_kind!r}, not {label_kind!r}")
    return model_weights(pooled, norm, scale, "shared")


def unit_weights(model_or_kind) -> WeightSet:
    kind = model_or_kind if isinstance(model_or_kind, str) else model_or_kind.label_kind
    return WeightSet(kind, {f: 1.0 for f in LABEL_FEATURES[kind]}, "unit")


@dataclass(frozen=True)
class Prediction:
    ranked: list
    k: int

    @property
    def labels(self) -> list:
        return [c for c, _ in self.ranked]

    @property
    def empty(self) -> bool:
        return not self.ranked

    def __contains__(self, label) -> bool:
        return any(c == label for c, _ in self.ranked)


def rank(labels: Sequence, scores: Sequence[float], counts: Sequence[float], k: int) -> list:
    """Top-k (label, score) by score, then prior count, then label string."""
    order = sorted(range(len(labels)), key=lambda i: (-scores[i], -counts[i], _label_key(labels[i])))
    return [(labels[i], float(scores[i])) for i in order[:k]]


def _predict(model: CountModel, weights: WeightSet | None, values: dict, k: int, kind: str) -> Prediction:
    if model.label_kind != kind:
        raise ValueError(f"expected a {kind!r} model, got {model.label_kind!r}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if not model.class_counts:
        return Prediction([], k)
    comp = model.compiled()
    w = weights.weights if weights is not None else {}
    s = comp.scores(w, values)
    return Prediction(rank(comp.labels, s, comp.counts, k), k)


def predict_poi(model: CountModel, weights: WeightSet | None, ctx: TemporalContext, k: int = 1) -> Prediction:
    return _predict(model, weights, {"phi": ctx.phi, "iota": ctx.iota}, k, "poi")


def predict_contacts(model: CountModel, weights: WeightSet | None, ctx: TemporalContext,
                     k: int = 1) -> Prediction:
    return _predict(model, weights, {"phi": ctx.phi, "iota": ctx.iota}, k, "contact")


def predict_duration(model: CountModel, weights: WeightSet | None, ctx: TemporalContext, poi,
                     k: int = 1) -> Prediction:
    """Rank duration bins; labels come back as :class:`DurationClass`."""
    values = {"phi": ctx.phi, "iota": ctx.iota}
    if "poi" in model.features:
        values["poi"] = poi
    p = _predict(model, weights, values, k, "duration")
    reps = model.representatives or {}
    return Prediction([(DurationClass(b, reps.get(b, float("nan"))), s) for b, s in p.ranked], k)


def predict(model: CountModel, weights: WeightSet | None, ctx: TemporalContext, k: int = 1,
            poi=None) -> Prediction:
    if model.label_kind == "poi":
        return predict_poi(model, weights, ctx, k)
    if model.label_kind == "contact":
        return predict_contacts(model, weights, ctx, k)
    return predict_duration(model, weights, ctx, poi, k)


def model_document(user: str, model: CountModel, weights: WeightSet | None) -> dict:
    return {
        "schema": SCHEMA,
        "user": user,
        **model.to_dict(),
        "weights": None if weights is None else weights.weights,
        "mode": None if weights is None else weights.mode,
    }


def dump_model(path, user: str, model: CountModel, weights: WeightSet | None) -> None:
    with open(path, "w") as fh:
        json.dump(model_document(user, model, weights), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> tuple[str, CountModel, WeightSet | None]:
    with open(path) as fh:
        d = json.load(fh)
    if d.get("schema") != SCHEMA:
        raise SchemaMismatch(f"{path}: schema {d.get('schema')!r}, expected {SCHEMA!r}")
    model = CountModel.from_dict(d)
    w = None if d.get("weights") is None else WeightSet(model.label_kind, d["weights"], d["mode"])
    return d["user"], model, w
