import csv
import json
import logging

import pytest

from encounterpred import cli
from encounterpred.evaluation import read_results


def run(wd, *argv):
    return cli.main([argv[0], "--workdir", str(wd), *argv[1:]])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    wd = tmp_path_factory.mktemp("wd")
    assert run(wd, "synth", "--users", "12", "--weeks", "4", "--noise", "0", "--seed", "1") == 0
    for stage in ("ingest", "extract", "featurize", "train"):
        assert run(wd, stage) == 0
    assert run(wd, "evaluate", "--min-records", "8", "--variant", "nbc,weighted") == 0
    return wd


def test_noiseless_pipeline_is_perfect(pipeline):
    with open(pipeline / "results.csv") as fh:
        res = read_results(fh)
    assert {a.variant for a in res} == {"nbc", "weighted"}
    top1 = [a.accuracy for a in res if a.k == 1 and a.task in ("poi", "contact") and a.variant == "weighted"]
    assert top1 and all(a == 1.0 for a in top1)


def test_distribution_has_both_variants(pipeline):
    with open(pipeline / "distribution.csv") as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    assert {(r["variant"], r["quantile"]) for r in rows} >= {("nbc", "median"), ("weighted", "median")}


def test_predict_k3(pipeline, capsys):
    user = sorted(p.name.split(".")[0] for p in (pipeline / "models").glob("*.poi.json"))[0]
    capsys.readouterr()
    assert run(pipeline, "predict", "--user", user, "--task", "poi", "--phi", "1", "--iota", "4", "--k", "3") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "rank,label,log_score"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["1", "2", "3"]
    scores = [float(ln.split(",")[2]) for ln in lines[1:]]
    assert scores == sorted(scores, reverse=True)


def test_predict_duration_prints_representative(pipeline, capsys):
    user = sorted(p.name.split(".")[0] for p in (pipeline / "models").glob("*.duration.json"))[0]
    capsys.readouterr()
    assert run(pipeline, "predict", "--user", user, "--task", "duration", "--phi", "1", "--iota", "4") == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].endswith("representative_seconds") and len(out) == 2


def test_report_writes_figures(pipeline):
    assert run(pipeline, "report") == 0
    figs = sorted(p.name for p in (pipeline / "figures").iterdir())
    assert figs == ["accuracy_cdf_contact.png", "accuracy_cdf_duration.png", "accuracy_cdf_poi.png"]


def test_missing_stage(tmp_path, caplog):
    with caplog.at_level(logging.ERROR):
        assert run(tmp_path, "extract") == 2
    assert "run stage 'ingest' first" in caplog.text


def test_missing_models(tmp_path, caplog):
    with caplog.at_level(logging.ERROR):
        assert run(tmp_path, "predict", "--user", "u", "--phi", "1", "--iota", "1") == 2
    assert "run stage 'train' first" in caplog.text


def test_schema_mismatch_refused(pipeline, tmp_path, caplog):
    src = sorted((pipeline / "models").glob("*.poi.json"))[0]
    (tmp_path / "models").mkdir()
    doc = json.loads(src.read_text())
    doc["schema"] = "encounterpred.model/99"
    (tmp_path / "models" / src.name).write_text(json.dumps(doc))
    with caplog.at_level(logging.ERROR):
        assert run(tmp_path, "predict", "--user", src.name.split(".")[0], "--phi", "1", "--iota", "1") == 2
    assert "schema" in caplog.text


def test_settings_precedence(tmp_path):
    cfg = tmp_path / "x.conf"
    cfg.write_text("alpha = 2.0\nseed = 5  # comment\nfolds = 3\n")
    args = cli.build_parser().parse_args(["evaluate", "--config", str(cfg), "--seed", "9"])
    s = cli.resolve_settings(args, environ={"ENCPRED_FOLDS": "5", "ENCPRED_SEED": "7"})
    assert (s["alpha"], s["folds"], s["seed"]) == (2.0, 5, 9)
    assert s["t_h"] == 900 and s["ks"] == (1, 2, 3)


def test_bad_config_key(tmp_path):
    cfg = tmp_path / "x.conf"
    cfg.write_text("nonsense = 1\n")
    assert cli.main(["extract", "--workdir", str(tmp_path), "--config", str(cfg)]) == 2


def test_wifi_ingest(tmp_path):
    log = tmp_path / "wifi.csv"
    log.write_text("timestamp,ap_id,device_id,session_seconds,status\n"
                   "0,AP:x,DEV:a,0,start\n1000,AP:x,DEV:a,1000,stop\n"
                   "100,AP:x,DEV:b,0,start\n1200,AP:x,DEV:b,1100,stop\n"
                   "oops,AP:x,DEV:b,0,start\n")
    assert run(tmp_path, "ingest", "--source", "wifi", "--input", str(log)) == 0
    assert run(tmp_path, "extract") == 0
    lines = (tmp_path / "events.csv").read_text().splitlines()
    assert lines == ["UserA,UserB,PoIId,StartTime,EndTime", "a,b,x,100,1000"]


def test_cdr_ingest_colocation(tmp_path):
    log = tmp_path / "cdr.csv"
    log.write_text("user_id,peer_id,timestamp,duration_seconds,cell_id,activity\n"
                   "a,b,10000,60,c,voice\nb,,10500,0,c,text\n")
    assert run(tmp_path, "ingest", "--source", "cdr", "--input", str(log)) == 0
    assert json.loads((tmp_path / "meta.json").read_text())["kind"] == "colocation"
    assert run(tmp_path, "extract") == 0
    assert (tmp_path / "events.csv").read_text().splitlines()[1] == "a,b,c,9600,10960"
