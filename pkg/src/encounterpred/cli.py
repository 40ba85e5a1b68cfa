"""Command-line pipeline: synth/ingest -> extract -> featurize -> train -> predict/evaluate -> report.

Every stage reads its predecessor's CSV artifacts from ``--workdir`` and
writes its own there. Settings resolve as defaults < config file
(``key = value`` lines) < ``ENCPRED_<KEY>`` environment variables < flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path
from urllib.parse import quote

from . import bayes, evaluation, events, features, ingestion, synthetic
from .core import EventKind, TemporalContext

log = logging.getLogger("encounterpred")

ENV_PREFIX = "ENCPRED_"


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text) -> tuple[int, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(int(t) for t in text)
    return tuple(int(t) for t in str(text).split(",") if t.strip())


def _strs(text) -> tuple[str, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(text)
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


# name -> (parser, default, help)
SETTINGS = {
    "min_dwell": (int, ingestion.DEFAULT_MIN_DWELL, "minimum WiFi visit length in seconds"),
    "merge_gap": (int, ingestion.DEFAULT_MERGE_GAP, "same-AP gap merged as one visit (ping-pong smoothing)"),
    "t_h": (int, ingestion.DEFAULT_T_H, "CDR presence half-window in seconds"),
    "slot_hours": (int, features.DEFAULT_SLOT_HOURS, "day slot length H in hours (must divide 24)"),
    "timezone": (str, features.DEFAULT_TIMEZONE, "timezone for day-of-week and slot computation"),
    "duration_edges": (str, "0,900,1800,3600,7200,14400,inf", "duration bin edges in seconds"),
    "alpha": (float, 1.0, "additive smoothing pseudo-count"),
    "weights": (str, "shared", "feature weights for train: shared|adaptive|unit"),
    "kl_norm": (str, "splitinfo", "KL weight normalization: splitinfo|plain"),
    "weight_scale": (str, "mean", "rescaling of KL weights: mean (average 1) | none"),
    "folds": (int, 4, "cross-validation folds"),
    "ks": (_ints, (1, 2, 3), "comma-separated k values for top-k accuracy"),
    "min_records": (int, None, "minimum records per user (default 75 encounter / 350 colocation)"),
    "split": (str, "random", "fold assignment: random|chronological"),
    "seed": (int, 0, "random seed"),
    "threads": (int, 1, "worker processes for per-user evaluation"),
    "variant": (_strs, ("weighted", "nbc"), "evaluation variants: weighted,adaptive,unit,nbc,gaussian"),
    "tasks": (_strs, ("poi", "contact", "duration"), "evaluation tasks: poi,contact,duration"),
    "duration_poi": (str, "predicted", "PoI fed to the duration predictor: predicted|true"),
}


class StageError(RuntimeError):
    pass


def read_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise StageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (t.strip() for t in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in SETTINGS:
                raise StageError(f"{path}:{lineno}: unknown setting {key!r}")
            out[key] = value
    return out


def resolve_settings(args: argparse.Namespace, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    merged = {k: d for k, (_, d, _) in SETTINGS.items()}
    if getattr(args, "config", None):
        merged.update(read_config(args.config))
    for k in SETTINGS:
        env = environ.get(ENV_PREFIX + k.upper())
        if env is not None:
            merged[k] = env
    for k in SETTINGS:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    out = {}
    for k, v in merged.items():
        parse = SETTINGS[k][0]
        out[k] = v if v is None else parse(v)
    if out["weights"] not in bayes.WEIGHT_MODES:
        raise StageError(f"--weights must be one of {bayes.WEIGHT_MODES}")
    if out["kl_norm"] not in bayes.KL_NORMS:
        raise StageError(f"--kl-norm must be one of {bayes.KL_NORMS}")
    if out["weight_scale"] not in bayes.WEIGHT_SCALES:
        raise StageError(f"--weight-scale must be one of {bayes.WEIGHT_SCALES}")
    if out["duration_poi"] not in ("predicted", "true"):
        raise StageError("--duration-poi must be predicted or true")
    return out


class Workdir:
    def __init__(self, root):
        self.root = Path(root)

    def path(self, name: str) -> Path:
        return self.root / name

    def need(self, name: str, stage: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise StageError(f"missing {p}; run stage '{stage}' first")
        return p

    def meta(self) -> dict:
        p = self.path("meta.json")
        return json.loads(p.read_text()) if p.exists() else {}

    def update_meta(self, **kw) -> None:
        m = self.meta()
        m.update(kw)
        self.path("meta.json").write_text(json.dumps(m, indent=1, sort_keys=True) + "\n")


def _tally(stage: str, n_in: int, n_out: int, filtered: Counter | dict | None = None) -> None:
    filtered = dict(filtered or {})
    log.info("%s: in=%d out=%d filtered=%d %s", stage, n_in, n_out, sum(filtered.values()),
             " ".join(f"{k}={v}" for k, v in sorted(filtered.items())))


def _bins(s: dict) -> features.DurationBins:
    return features.parse_edges(s["duration_edges"])


def cmd_synth(args, s, wd: Workdir) -> int:
    spec = synthetic.ScheduleSpec(
        n_users=args.users, n_pois=args.pois, n_weeks=args.weeks, daily_slots=args.daily_slots,
        cohort_size=args.cohort_size, noise_rate=args.noise, weekend_conflict=args.weekend_conflict,
        median_duration=args.median_duration, slot_hours=s["slot_hours"], seed=s["seed"],
        timezone=s["timezone"],
    )
    trace = synthetic.generate(spec, _bins(s))
    with open(wd.path("visits.csv"), "w") as fh:
        ingestion.write_visits(fh, trace.visits)
    with open(wd.path("truth.csv"), "w") as fh:
        synthetic.write_truth(fh, trace.truth)
    with open(wd.path("schedule.csv"), "w") as fh:
        synthetic.write_schedule(fh, trace.meetings)
    _tally("synth", len(trace.meetings), len(trace.visits))
    return 0


def cmd_ingest(args, s, wd: Workdir) -> int:
    source = args.source
    src = Path(args.input) if args.input else (wd.need("visits.csv", "synth") if source == "visits" else None)
    if src is None:
        raise StageError(f"--input is required for source {source!r}")
    if not src.exists():
        raise StageError(f"input {src} does not exist")
    tally = ingestion.ParseTally()
    build = ingestion.ParseTally()
    if source == "wifi":
        with open(src, "rb") as fh:
            sessions = list(ingestion.parse_wifi_log(fh, ingestion.LogFormat(), tally))
        out = ingestion.build_visits(sessions, s["min_dwell"], s["merge_gap"], build)
        kind = EventKind.ENCOUNTER
    elif source == "cdr":
        with open(src, "rb") as fh:
            acts = list(ingestion.parse_cdr_log(fh, ingestion.CDR_FORMAT, tally))
        out = ingestion.build_presence(acts, s["t_h"])
        kind = EventKind.COLOCATION
    else:
        with open(src) as fh:
            out = ingestion.read_intervals(fh)
        tally.emitted = len(out)
        kind = EventKind.ENCOUNTER
    ingestion.check_disjoint(out)
    with open(wd.path("intervals.csv"), "w") as fh:
        ingestion.write_intervals(fh, out)
    wd.update_meta(kind=kind.value, source=source)
    _tally("ingest/parse", tally.seen, tally.emitted, tally.skipped)
    if build.skipped:
        _tally("ingest/build", tally.emitted, len(out), build.skipped)
    log.info("ingest: wrote %d %s intervals", len(out), kind.value)
    return 0


def cmd_extract(args, s, wd: Workdir) -> int:
    with open(wd.need("intervals.csv", "ingest")) as fh:
        intervals = ingestion.read_intervals(fh)
    kind = wd.meta().get("kind", "encounter")
    evs = events.extract_events(intervals, kind)
    with open(wd.path("events.csv"), "w") as fh:
        events.write_events(fh, evs)
    _tally("extract", len(intervals), len(evs))
    return 0


def _featurize(s, wd: Workdir) -> list[features.FeaturizedRecord]:
    kind = wd.meta().get("kind", "encounter")
    with open(wd.need("events.csv", "extract")) as fh:
        evs = events.read_events(fh, kind)
    # chronological split mode relies on time-ordered records
    evs.sort(key=lambda e: (e.start, e.end, e.poi, e.user_a, e.user_b))
    recs = features.featurize_events(evs, s["slot_hours"], s["timezone"], _bins(s))
    _tally("featurize", len(evs), len(recs))
    return recs


def cmd_featurize(args, s, wd: Workdir) -> int:
    recs = _featurize(s, wd)
    with open(wd.path("featurized.csv"), "w") as fh:
        features.write_featurized(fh, recs)
    return 0


def _load_featurized(s, wd: Workdir) -> list[features.FeaturizedRecord]:
    p = wd.path("featurized.csv")
    if p.exists():
        with open(p) as fh:
            return features.read_featurized(fh)
    if wd.path("events.csv").exists():
        log.info("featurized.csv absent; featurizing events.csv")
        return _featurize(s, wd)
    raise StageError(f"missing {p}; run stage 'featurize' (or 'extract') first")


def model_path(wd: Workdir, user: str, kind: str) -> Path:
    return wd.path("models") / f"{quote(str(user), safe='')}.{kind}.json"


def cmd_train(args, s, wd: Workdir) -> int:
    recs = _load_featurized(s, wd)
    by_user = features.group_by_user(recs)
    (wd.path("models")).mkdir(exist_ok=True)
    bins = _bins(s)
    n = 0
    for kind in bayes.LABEL_KINDS:
        models = {u: bayes.fit(rs, kind, alpha=s["alpha"], slot_hours=s["slot_hours"], bins=bins)
                  for u, rs in sorted(by_user.items())}
        shared = (bayes.shared_weights(models.values(), kind, s["kl_norm"], s["weight_scale"])
                  if s["weights"] == "shared" and models else None)
        for u, m in models.items():
            if s["weights"] == "shared":
                w = shared
            elif s["weights"] == "adaptive":
                w = bayes.adaptive_weights(m, s["kl_norm"], s["weight_scale"])
            else:
                w = bayes.unit_weights(kind)
            bayes.dump_model(model_path(wd, u, kind), u, m, w)
            n += 1
        if shared is not None:
            with open(wd.path(f"weights.{kind}.json"), "w") as fh:
                json.dump(shared.to_dict(), fh, indent=1, sort_keys=True)
                fh.write("\n")
    _tally("train", len(recs), n)
    return 0


def cmd_predict(args, s, wd: Workdir) -> int:
    task = args.task
    kind = task
    p = model_path(wd, args.user, kind)
    if not p.exists():
        if not wd.path("models").exists():
            raise StageError("no models found; run stage 'train' first")
        raise StageError(f"no {kind} model for user {args.user!r}")
    _, model, w = bayes.load_model(p)
    ctx = TemporalContext(args.phi, args.iota)
    poi = args.poi
    if task == "duration" and poi is None:
        _, pm, pw = bayes.load_model(model_path(wd, args.user, "poi"))
        poi = bayes.predict_poi(pm, pw, ctx, 1).labels[0]
    pred = bayes.predict(model, w, ctx, args.k, poi=poi)
    print("rank,label,log_score" + (",representative_seconds" if task == "duration" else ""))
    for i, (c, score) in enumerate(pred.ranked, 1):
        if task == "duration":
            print(f"{i},{c.bin_index},{score:.6f},{c.representative_seconds:.1f}")
        else:
            print(f"{i},{c},{score:.6f}")
    return 0


def _eval_config(s, wd: Workdir) -> evaluation.EvalConfig:
    kind = wd.meta().get("kind", "encounter")
    min_records = s["min_records"]
    if min_records is None:
        min_records = (evaluation.MIN_RECORDS_COLOCATION if kind == "colocation"
                       else evaluation.MIN_RECORDS_ENCOUNTER)
    return evaluation.EvalConfig(
        folds=s["folds"], ks=s["ks"], min_records=min_records, seed=s["seed"], split_mode=s["split"],
        alpha=s["alpha"], kl_norm=s["kl_norm"], weight_scale=s["weight_scale"], slot_hours=s["slot_hours"],
        duration_true_poi=s["duration_poi"] == "true", bins=_bins(s), threads=s["threads"],
    )


def _write_report(results, cfg_header: str, wd: Workdir, figures: bool) -> None:
    summaries = evaluation.accuracy_report(results)
    with open(wd.path("distribution.csv"), "w") as fh:
        evaluation.write_distribution(fh, summaries, cfg_header)
    if figures and summaries:
        from .plotting import plot_accuracy_cdfs
        paths = plot_accuracy_cdfs(summaries, wd.path("figures"))
        log.info("report: wrote %d figures to %s", len(paths), wd.path("figures"))


def cmd_evaluate(args, s, wd: Workdir) -> int:
    recs = _load_featurized(s, wd)
    cfg = _eval_config(s, wd)
    by_user = features.group_by_user(recs)
    results = evaluation.evaluate_population(by_user, cfg, s["variant"], s["tasks"])
    header = cfg.header()
    with open(wd.path("results.csv"), "w") as fh:
        evaluation.write_results(fh, results, header)
    _write_report(results, header, wd, figures=False)
    n_eval = len({a.user for a in results})
    _tally("evaluate", len(by_user), n_eval, {"below_min_records": len(by_user) - n_eval})
    for summ in evaluation.accuracy_report(results):
        log.info("%s/%s k=%d: users=%d median=%.3f frac>0.8=%.3f", summ.task, summ.variant, summ.k,
                 len(summ.accuracies), summ.median, summ.above[0.8])
    return 0


def cmd_report(args, s, wd: Workdir) -> int:
    p = wd.need("results.csv", "evaluate")
    with open(p) as fh:
        header = fh.readline().rstrip("\n")
        fh.seek(0)
        results = evaluation.read_results(fh)
    _write_report(results, header if header.startswith("#") else None, wd, figures=not args.no_figures)
    _tally("report", len(results), len(evaluation.accuracy_report(results)))
    return 0


def _add_settings(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("settings")
    for name, (_, default, help_) in SETTINGS.items():
        flag = "--" + name.replace("_", "-")
        g.add_argument(flag, dest=name, default=None, help=f"{help_} (default: {default})")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workdir", default=".", help="directory holding stage artifacts")
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("-v", "--verbose", action="store_true")
    _add_settings(common)

    parser = argparse.ArgumentParser(prog="encounterpred", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic planted-schedule trace")
    p.add_argument("--users", type=int, default=50)
    p.add_argument("--pois", type=int, default=8)
    p.add_argument("--weeks", type=int, default=6)
    p.add_argument("--daily-slots", type=int, default=3)
    p.add_argument("--cohort-size", type=int, default=6)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--weekend-conflict", action="store_true")
    p.add_argument("--median-duration", type=float, default=2400.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="parse WiFi/CDR logs into intervals")
    p.add_argument("--source", choices=("wifi", "cdr", "visits"), default="visits")
    p.add_argument("--input", help="input CSV (default: <workdir>/visits.csv for --source visits)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", parents=[common], help="extract encounter/colocation events")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("featurize", parents=[common], help="featurize events")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="fit per-user models")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="rank PoIs, contacts or durations for a context")
    p.add_argument("--user", required=True)
    p.add_argument("--phi", type=int, required=True)
    p.add_argument("--iota", type=int, required=True)
    p.add_argument("--task", choices=bayes.LABEL_KINDS, default="poi")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--poi", help="PoI for the duration task (default: top-1 predicted PoI)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="k-fold top-k evaluation")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common], help="distribution CSV and CDF figures")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        settings = resolve_settings(args)
        wd = Workdir(args.workdir)
        wd.root.mkdir(parents=True, exist_ok=True)
        return args.func(args, settings, wd)
    except (StageError, bayes.SchemaMismatch, ValueError, OSError) as exc:
        log.error("%s: %s", args.command, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
