"""Per-user k-fold evaluation of the predictors.

PoI and contact predictions are scored top-k: a test record is correct when
its true label is among the k best-ranked classes. A duration prediction is
correct when the predicted class's representative duration lies within one
standard deviation of the mean of the test durations observed at the same
(phi, iota, PoI), after skewness-driven outlier removal.

Accuracy per user is the mean of the per-fold accuracies.
"""
from __future__ import annotations

import csv
import logging
import math
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import chain
from typing import IO, Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import skew

from . import bayes
from .baselines import GaussianSTModel, predict_nbc, slot_hour
from .features import DurationBins, FeaturizedRecord

log = logging.getLogger(__name__)

TASKS = ("poi", "duration", "contact")
VARIANTS = ("weighted", "adaptive", "unit", "nbc", "gaussian")
SPLIT_MODES = ("random", "chronological")
REPORT_THRESHOLDS = (0.5, 0.7, 0.8)
MIN_RECORDS_ENCOUNTER = 75
MIN_RECORDS_COLOCATION = 350

RESULT_COLUMNS = ("user", "task", "variant", "k", "n_test", "accuracy")
DISTRIBUTION_COLUMNS = ("task", "variant", "k", "quantile", "accuracy")


class MonotonicityError(AssertionError):
    """Top-k accuracy decreased as k grew."""


@dataclass(frozen=True)
class EvalConfig:
    folds: int = 4
    ks: tuple[int, ...] = (1, 2, 3)
    min_records: int = MIN_RECORDS_ENCOUNTER
    seed: int = 0
    split_mode: str = "random"
    alpha: float = 1.0
    kl_norm: str = "splitinfo"
    weight_scale: str = "mean"
    slot_hours: int = 2
    duration_true_poi: bool = False
    bins: DurationBins = field(default_factory=DurationBins)
    threads: int = 1

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.min_records < self.folds:
            raise ValueError("min_records must be >= folds")
        if self.split_mode not in SPLIT_MODES:
            raise ValueError(f"split_mode must be one of {SPLIT_MODES}")
        if not self.ks or min(self.ks) < 1:
            raise ValueError("ks must be positive integers")
        object.__setattr__(self, "ks", tuple(sorted(set(self.ks))))

    def header(self) -> str:
        return (f"# split={self.split_mode} folds={self.folds} seed={self.seed} "
                f"min_records={self.min_records} alpha={self.alpha} kl_norm={self.kl_norm} "
                f"weight_scale={self.weight_scale} "
                f"slot_hours={self.slot_hours} duration_poi={'true' if self.duration_true_poi else 'predicted'}")


@dataclass(frozen=True, slots=True)
class UserAccuracy:
    user: str
    task: str
    k: int
    accuracy: float
    n_test: int
    variant: str = "weighted"


def user_seed(seed: int, user: str) -> int:
    return (seed * 1_000_003 + zlib.crc32(str(user).encode())) % 2**32


def kfold_split(records: Sequence, folds: int = 4, seed: int = 0,
                split_mode: str = "random") -> list[tuple[list, list]]:
    """Disjoint folds covering ``records`` with sizes differing by at most one.

    ``chronological`` cuts contiguous blocks in input order, so records must
    already be time-ordered.
    """
    n = len(records)
    if n < folds:
        raise ValueError(f"{n} records cannot be split into {folds} folds")
    if split_mode == "random":
        order = np.random.default_rng(seed).permutation(n)
    elif split_mode == "chronological":
        order = np.arange(n)
    else:
        raise ValueError(f"unknown split mode {split_mode!r}")
    parts = np.array_split(order, folds)
    out = []
    for i, part in enumerate(parts):
        test_idx = set(part.tolist())
        test = [records[j] for j in sorted(test_idx)]
        train = [records[j] for j in range(n) if j not in test_idx]
        out.append((train, test))
    return out


def _true_label(r: FeaturizedRecord, task: str):
    return r.poi if task == "poi" else r.peer


def check_monotone(results: Iterable[UserAccuracy]) -> None:
    """Raise :class:`MonotonicityError` if any accuracy drops as k grows."""
    groups: dict = defaultdict(list)
    for a in results:
        groups[(a.user, a.task, a.variant)].append((a.k, a.accuracy))
    for key, pairs in groups.items():
        pairs.sort()
        for (k0, a0), (k1, a1) in zip(pairs, pairs[1:]):
            if a1 < a0 - 1e-12:
                raise MonotonicityError(f"{key}: accuracy(k={k1})={a1} < accuracy(k={k0})={a0}")


# A predictor factory receives (train records, task, fold index) and returns a
# function (test record, k) -> ranked labels (PoI/contact) or representative
# durations in seconds (duration task).
PredictorFactory = Callable[[Sequence[FeaturizedRecord], str, int], Callable]


def _finish(user: str, task: str, variant: str, cfg: EvalConfig,
            fold_acc: dict, n_test: int) -> list[UserAccuracy]:
    out = []
    for k in cfg.ks:
        accs = fold_acc[k]
        acc = float(np.mean(accs)) if accs else float("nan")
        out.append(UserAccuracy(user, task, k, acc, n_test, variant))
    check_monotone(out)
    return out


def eval_topk(records: Sequence[FeaturizedRecord], predictor: PredictorFactory, task: str,
              cfg: EvalConfig, user: str = "", variant: str = "weighted",
              folds: list | None = None) -> list[UserAccuracy]:
    """Top-k accuracy of ``predictor`` for one user's records (poi or contact task)."""
    if task not in ("poi", "contact"):
        raise ValueError(f"eval_topk handles poi/contact, not {task!r}")
    folds = folds or kfold_split(records, cfg.folds, user_seed(cfg.seed, user), cfg.split_mode)
    kmax = max(cfg.ks)
    fold_acc: dict = {k: [] for k in cfg.ks}
    n_test = 0
    for fi, (train, test) in enumerate(folds):
        if not test:
            log.warning("user %s fold %d has no test records; skipped", user, fi)
            continue
        rank = predictor(train, task, fi)
        correct = dict.fromkeys(cfg.ks, 0)
        for r in test:
            labels = rank(r, kmax)
            truth = _true_label(r, task)
            hit = next((i for i, c in enumerate(labels) if c == truth), None)
            for k in cfg.ks:
                if hit is not None and hit < k:
                    correct[k] += 1
        n_test += len(test)
        for k in cfg.ks:
            fold_acc[k].append(correct[k] / len(test))
    return _finish(user, task, variant, cfg, fold_acc, n_test)


def sample_skewness(xs: Sequence[float]) -> float:
    """Adjusted Fisher-Pearson skewness; zero for constant or tiny samples."""
    if len(xs) < 3:
        return 0.0
    arr = np.asarray(xs, dtype=float)
    if np.ptp(arr) == 0:
        return 0.0
    g = float(skew(arr, bias=False))
    return 0.0 if math.isnan(g) else g


def skewness_filter(durations: Iterable[float], threshold: float = 1.0) -> list[float]:
    """Drop the value farthest from the median while |skewness| > threshold.

    Never shrinks the sample below three values.
    """
    xs = sorted(float(d) for d in durations)
    while len(xs) > 3 and abs(sample_skewness(xs)) > threshold:
        med = float(np.median(xs))
        far = max(range(len(xs)), key=lambda i: (abs(xs[i] - med), i))
        del xs[far]
    return xs


def duration_interval(pz: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (zero for a single value)."""
    arr = np.asarray(pz, dtype=float)
    mu = float(arr.mean())
    sigma = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return mu, sigma


def duration_correct(predicted: float, mu: float, sigma: float) -> bool:
    if sigma == 0.0:
        return abs(predicted - mu) <= 1.0
    return mu - sigma <= predicted <= mu + sigma


def eval_duration(records: Sequence[FeaturizedRecord], predictor: PredictorFactory, cfg: EvalConfig,
                  user: str = "", variant: str = "weighted",
                  folds: list | None = None) -> list[UserAccuracy]:
    """Duration accuracy under the mean +/- one standard deviation rule."""
    folds = folds or kfold_split(records, cfg.folds, user_seed(cfg.seed, user), cfg.split_mode)
    kmax = max(cfg.ks)
    fold_acc: dict = {k: [] for k in cfg.ks}
    n_test = 0
    for fi, (train, test) in enumerate(folds):
        if not test:
            log.warning("user %s fold %d has no test records; skipped", user, fi)
            continue
        groups: dict = defaultdict(list)
        for r in test:
            groups[(r.phi, r.iota_s, r.poi)].append(r.raw_duration)
        intervals = {g: duration_interval(skewness_filter(ds)) for g, ds in groups.items()}
        estimate = predictor(train, "duration", fi)
        correct = dict.fromkeys(cfg.ks, 0)
        for r in test:
            mu, sigma = intervals[(r.phi, r.iota_s, r.poi)]
            reps = estimate(r, kmax)
            hit = next((i for i, d in enumerate(reps) if duration_correct(d, mu, sigma)), None)
            for k in cfg.ks:
                if hit is not None and hit < k:
                    correct[k] += 1
        n_test += len(test)
        for k in cfg.ks:
            fold_acc[k].append(correct[k] / len(test))
    return _finish(user, "duration", variant, cfg, fold_acc, n_test)


class _UserModels:
    """Per-user memo of count models so variants share one fit per fold."""

    def __init__(self, cfg: EvalConfig):
        self.cfg = cfg
        self.cache: dict = {}

    def get(self, train: Sequence[FeaturizedRecord], kind: str, fi: int) -> bayes.CountModel:
        key = (kind, fi)
        m = self.cache.get(key)
        if m is None:
            m = self.cache[key] = bayes.fit(train, kind, alpha=self.cfg.alpha,
                                            slot_hours=self.cfg.slot_hours, bins=self.cfg.bins)
        return m


def make_predictor(variant: str, cfg: EvalConfig, shared: Mapping | None = None,
                   models: _UserModels | None = None) -> PredictorFactory:
    """Build the predictor factory for one evaluation variant.

    ``shared`` maps (fold index, label kind) to the pooled :class:`WeightSet`
    and is required by the ``weighted`` variant.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    models = models or _UserModels(cfg)

    def weights_for(model: bayes.CountModel, kind: str, fi: int):
        if variant == "weighted":
            if shared is None:
                raise ValueError("weighted variant needs shared weights")
            return shared[(fi, kind)]
        if variant == "adaptive":
            return bayes.adaptive_weights(model, cfg.kl_norm, cfg.weight_scale)
        return bayes.unit_weights(kind)

    def rank_with(model, w, r, k, poi=None):
        if variant == "nbc":
            return predict_nbc(model, r.context, k, poi=poi)
        return bayes.predict(model, w, r.context, k, poi=poi)

    def factory(train, task, fi):
        if variant == "gaussian":
            if task != "poi":
                raise ValueError("the gaussian baseline only predicts PoIs")
            g = GaussianSTModel.fit(train, cfg.slot_hours)
            return lambda r, k: g.predict(r.phi, slot_hour(r.iota_s, cfg.slot_hours), k).labels
        if task in ("poi", "contact"):
            m = models.get(train, task, fi)
            w = weights_for(m, task, fi)
            return lambda r, k: rank_with(m, w, r, k).labels
        pm = models.get(train, "poi", fi)
        pw = weights_for(pm, "poi", fi)
        dm = models.get(train, "duration", fi)
        dw = weights_for(dm, "duration", fi)
        reps = dm.representatives

        def estimate(r, k):
            lp = r.poi if cfg.duration_true_poi else rank_with(pm, pw, r, 1).labels[0]
            labels = rank_with(dm, dw, r, k, poi=lp).labels
            return [c.representative_seconds if isinstance(c, bayes.DurationClass) else reps[c]
                    for c in labels]

        return estimate

    return factory


def _tasks_for(variant: str, tasks: Sequence[str]) -> list[str]:
    return [t for t in tasks if variant != "gaussian" or t == "poi"]


def _evaluate_user(args) -> list[UserAccuracy]:
    user, records, cfg, variants, tasks, shared = args
    folds = kfold_split(records, cfg.folds, user_seed(cfg.seed, user), cfg.split_mode)
    models = _UserModels(cfg)
    out = []
    for variant in variants:
        pred = make_predictor(variant, cfg, shared, models)
        for task in _tasks_for(variant, tasks):
            if task == "duration":
                out.extend(eval_duration(records, pred, cfg, user, variant, folds))
            else:
                out.extend(eval_topk(records, pred, task, cfg, user, variant, folds))
    return out


def shared_fold_weights(records_by_user: Mapping[str, Sequence[FeaturizedRecord]], cfg: EvalConfig,
                        tasks: Sequence[str]) -> dict:
    """Pooled KL weights per (fold index, label kind) over every user's training split."""
    kinds = set()
    for t in tasks:
        kinds.update(("poi", "duration") if t == "duration" else (t,))
    folds = {u: kfold_split(rs, cfg.folds, user_seed(cfg.seed, u), cfg.split_mode)
             for u, rs in records_by_user.items()}
    out = {}
    for fi in range(cfg.folds):
        train = list(chain.from_iterable(f[fi][0] for f in folds.values()))
        for kind in sorted(kinds):
            pooled = bayes.fit(train, kind, alpha=cfg.alpha, slot_hours=cfg.slot_hours, bins=cfg.bins)
            out[(fi, kind)] = bayes.model_weights(pooled, cfg.kl_norm, cfg.weight_scale, "shared")
    return out


def eligible_users(records_by_user: Mapping[str, Sequence], min_records: int) -> dict:
    return {u: rs for u, rs in sorted(records_by_user.items()) if len(rs) >= min_records}


def evaluate_population(records_by_user: Mapping[str, Sequence[FeaturizedRecord]], cfg: EvalConfig,
                        variants: Sequence[str] = ("weighted", "nbc"),
                        tasks: Sequence[str] = ("poi", "contact")) -> list[UserAccuracy]:
    """Evaluate every user passing the min-records gate, for each variant and task."""
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    for t in tasks:
        if t not in TASKS:
            raise ValueError(f"unknown task {t!r}")
    users = eligible_users(records_by_user, cfg.min_records)
    log.info("evaluating %d of %d users (min_records=%d)", len(users), len(records_by_user), cfg.min_records)
    if not users:
        return []
    shared = shared_fold_weights(users, cfg, tasks) if "weighted" in variants else None
    jobs = [(u, rs, cfg, tuple(variants), tuple(tasks), shared) for u, rs in users.items()]
    out: list[UserAccuracy] = []
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            for res in ex.map(_evaluate_user, jobs, chunksize=max(1, len(jobs) // (4 * cfg.threads))):
                out.extend(res)
    else:
        for job in jobs:
            out.extend(_evaluate_user(job))
    check_monotone(out)
    return out


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def write_results(stream: IO, results: Iterable[UserAccuracy], header: str | None = None) -> int:
    if header:
        stream.write(header + "\n")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    n = 0
    for a in results:
        w.writerow((a.user, a.task, a.variant, a.k, a.n_test, _fmt(a.accuracy)))
        n += 1
    return n


def read_results(stream: IO) -> list[UserAccuracy]:
    lines = (ln for ln in stream if not ln.startswith("#"))
    return [UserAccuracy(r["user"], r["task"], int(r["k"]), float(r["accuracy"]), int(r["n_test"]), r["variant"])
            for r in csv.DictReader(lines)]


@dataclass(frozen=True)
class DistributionSummary:
    task: str
    variant: str
    k: int
    accuracies: tuple[float, ...]
    ecdf: tuple[float, ...]
    median: float
    above: dict


def accuracy_report(results: Iterable[UserAccuracy],
                    thresholds: Sequence[float] = REPORT_THRESHOLDS) -> list[DistributionSummary]:
    """Accuracy distribution per (task, variant, k): ECDF, median, share above thresholds."""
    groups: dict = defaultdict(list)
    for a in results:
        if not math.isnan(a.accuracy):
            groups[(a.task, a.variant, a.k)].append(a.accuracy)
    out = []
    for (task, variant, k) in sorted(groups):
        accs = sorted(groups[(task, variant, k)])
        n = len(accs)
        ecdf = tuple((i + 1) / n for i in range(n))
        above = {t: sum(a > t for a in accs) / n for t in thresholds}
        out.append(DistributionSummary(task, variant, k, tuple(accs), ecdf, float(np.median(accs)), above))
    return out


def write_distribution(stream: IO, summaries: Iterable[DistributionSummary], header: str | None = None) -> int:
    if header:
        stream.write(header + "\n")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(DISTRIBUTION_COLUMNS)
    n = 0
    for s in summaries:
        for q, a in zip(s.ecdf, s.accuracies):
            w.writerow((s.task, s.variant, s.k, _fmt(q), _fmt(a)))
            n += 1
        w.writerow((s.task, s.variant, s.k, "median", _fmt(s.median)))
        n += 1
        for t, frac in s.above.items():
            w.writerow((s.task, s.variant, s.k, f"frac>{t:g}", _fmt(frac)))
            n += 1
    return n


def mean_accuracy(results: Iterable[UserAccuracy], task: str, variant: str, k: int = 1) -> float:
    vals = [a.accuracy for a in results if a.task == task and a.variant == variant and a.k == k
            and not math.isnan(a.accuracy)]
    return float(np.mean(vals)) if vals else float("nan")
