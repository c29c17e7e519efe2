import hashlib
import json

import pytest

from conftest import write_pdnc_novel
from speakerid.cli import main
from speakerid.evaluation import read_report


def run(*argv):
    return main([str(a) for a in argv])


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- ingest --------------------------------------------------------------------


def test_ingest_fixture_counts(pdnc_dir, tmp_path, capsys):
    out = tmp_path / "norm"
    assert run("ingest", "--corpus", pdnc_dir, "--out", out) == 0
    assert "1 novels, 3 quotations, 2 rejects" in capsys.readouterr().out
    assert len((out / "quotations.jsonl").read_text().splitlines()) == 3
    assert len((out / "rejects.jsonl").read_text().splitlines()) == 2
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["command"] == "ingest" and manifest["n_quotations"] == 3
    assert len(manifest["inputs"]["corpus"]["sha256"]) == 64


def test_ingest_empty_directory(tmp_path):
    (tmp_path / "empty").mkdir()
    assert run("ingest", "--corpus", tmp_path / "empty", "--out", tmp_path / "norm") == 0
    assert (tmp_path / "norm" / "quotations.jsonl").read_text() == ""


def test_ingest_fatal_error_exits_nonzero(tmp_path, capsys):
    write_pdnc_novel(tmp_path / "pdnc", "persuasion", with_roster=False)
    assert run("ingest", "--corpus", tmp_path / "pdnc", "--out", tmp_path / "norm") == 2
    assert "persuasion" in capsys.readouterr().err


def test_ingest_is_idempotent(pdnc_dir, tmp_path):
    run("ingest", "--corpus", pdnc_dir, "--out", tmp_path / "a")
    run("ingest", "--corpus", pdnc_dir, "--out", tmp_path / "b")
    for name in ("quotations.jsonl", "rosters.jsonl", "rejects.jsonl"):
        assert sha(tmp_path / "a" / name) == sha(tmp_path / "b" / name)


# -- split ---------------------------------------------------------------------


def test_missing_upstream_artifact_names_path(tmp_path, capsys):
    missing = tmp_path / "nowhere"
    assert run("split", "--corpus", missing, "--out", tmp_path / "s") == 2
    assert str(missing) in capsys.readouterr().err


def test_split_too_few_novels(tmp_path, capsys):
    run("synth", "--quotes", "12", "--novels", "3", "--out", tmp_path / "c")
    assert run("split", "--corpus", tmp_path / "c", "--folds", "5", "--test-novels", "4",
               "--out", tmp_path / "s") == 2
    assert "20 > 3 novels" in capsys.readouterr().err


def test_split_is_idempotent(tmp_path):
    run("synth", "--quotes", "12", "--novels", "6", "--out", tmp_path / "c")
    for name in ("a", "b"):
        run("split", "--corpus", tmp_path / "c", "--folds", "2", "--test-novels", "2", "--seed", "4",
            "--min-quotes", "1", "--out", tmp_path / name)
    assert sha(tmp_path / "a" / "splits.jsonl") == sha(tmp_path / "b" / "splits.jsonl")


def test_config_file_overrides_flags(tmp_path):
    run("synth", "--quotes", "12", "--novels", "6", "--out", tmp_path / "c")
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("folds: 3\ntest-novels: 2\nmin_quotes: 1\n")
    assert run("split", "--corpus", tmp_path / "c", "--folds", "1", "--config", cfg, "--out", tmp_path / "s") == 0
    folds = {json.loads(line)["fold"] for line in (tmp_path / "s" / "splits.jsonl").read_text().splitlines()}
    assert folds == {0, 1, 2}


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"flavour": "vanilla"}')
    assert run("synth", "--config", cfg, "--out", tmp_path / "c") == 2
    assert "flavour" in capsys.readouterr().err


# -- train / predict / evaluate / viz ------------------------------------------


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("synth", "--quotes", "30", "--out", root / "corpus") == 0
    assert run("split", "--corpus", root / "corpus", "--protocol", "random", "--test-fraction", "0.2",
               "--min-quotes", "1", "--out", root / "splits") == 0
    assert run("train", "--corpus", root / "corpus", "--splits", root / "splits" / "splits.jsonl",
               "--epochs", "1", "--budget", "96", "--out", root / "ckpt") == 0
    return root


def _predict(root, mode, out):
    return run("predict", "--corpus", root / "corpus", "--splits", root / "splits" / "splits.jsonl",
               "--checkpoint", root / "ckpt", "--budget", "96", "--mode", mode, "--out", out)


def test_train_writes_checkpoint_and_manifests(trained):
    ckpt = trained / "ckpt"
    assert (ckpt / "manifest.json").exists() and (ckpt / "backend.json").exists()
    run_manifest = json.loads((ckpt / "run_manifest.json").read_text())
    assert set(run_manifest["inputs"]) == {"corpus", "splits"}
    assert run_manifest["options"]["template"] == "replied_by-speaker+addressee"


def test_sig_and_sig_d_prediction_schemas(trained):
    assert _predict(trained, "sig", trained / "p_sig") == 0
    assert _predict(trained, "sig_d", trained / "p_sigd") == 0
    sig = json.loads((trained / "p_sig" / "predictions.fold0.jsonl").read_text().splitlines()[0])
    sig_d = json.loads((trained / "p_sigd" / "predictions.fold0.jsonl").read_text().splitlines()[0])
    assert set(sig) == {"mode", "novel_id", "quote_id", "chosen", "ranked"}
    assert set(sig_d) == {"mode", "novel_id", "quote_id", "chosen", "raw_output", "parsed_name", "resolution",
                          "resolution_ids"}
    assert len(sig["ranked"]) == 8


def test_predict_is_idempotent(trained):
    _predict(trained, "sig", trained / "pa")
    _predict(trained, "sig", trained / "pb")
    assert sha(trained / "pa" / "predictions.fold0.jsonl") == sha(trained / "pb" / "predictions.fold0.jsonl")


def test_predict_missing_checkpoint(trained, capsys):
    assert run("predict", "--corpus", trained / "corpus", "--splits", trained / "splits" / "splits.jsonl",
               "--checkpoint", trained / "nope", "--out", trained / "x") == 2
    assert "nope" in capsys.readouterr().err


def test_evaluate_prints_summary_and_writes_reports(trained, capsys):
    _predict(trained, "sig", trained / "p_eval")
    capsys.readouterr()
    assert run("evaluate", "--corpus", trained / "corpus", "--splits", trained / "splits" / "splits.jsonl",
               "--predictions", trained / "p_eval", "--out", trained / "eval") == 0
    assert "/" in capsys.readouterr().out
    for name in ("report.fold0.json", "report.json", "report.txt", "report.png", "run_manifest.json"):
        assert (trained / "eval" / name).exists()
    assert read_report(trained / "eval" / "report.json").counts["total"] == [6]


def test_evaluate_without_predictions(trained, capsys):
    (trained / "no_preds").mkdir()
    assert run("evaluate", "--corpus", trained / "corpus", "--splits", trained / "splits" / "splits.jsonl",
               "--predictions", trained / "no_preds", "--out", trained / "e2") == 2
    assert "predictions.fold<i>.jsonl" in capsys.readouterr().err


def test_viz_writes_one_row_per_test_quotation(trained):
    assert run("viz", "--corpus", trained / "corpus", "--splits", trained / "splits" / "splits.jsonl",
               "--checkpoint", trained / "ckpt", "--budget", "96", "--out", trained / "viz") == 0
    rows = (trained / "viz" / "coords.tsv").read_text().splitlines()
    assert rows[0] == "novel_id\tquote_id\tx\ty" and len(rows) == 1 + 6
    assert (trained / "viz" / "embeddings.png").stat().st_size > 0


def test_viz_with_oracle_backend(trained, tmp_path, capsys):
    table = tmp_path / "oracle.json"
    words = sorted({w for line in (trained / "corpus" / "rosters.jsonl").read_text().splitlines()
                    for w in json.loads(line)["canonical_name"].split()} | {"Speaker:"})
    table.write_text(json.dumps({"vocab": words}))
    assert run("viz", "--corpus", trained / "corpus", "--splits", trained / "splits" / "splits.jsonl",
               "--backend", f"oracle:{table}", "--budget", "96", "--out", tmp_path / "viz") == 2
    assert "embeddings unsupported" in capsys.readouterr().err


def test_cross_domain_run_gives_one_report_per_fold(tmp_path):
    run("synth", "--quotes", "9", "--novels", "5", "--out", tmp_path / "c")
    assert run("run", "--corpus", tmp_path / "c", "--folds", "5", "--test-novels", "1", "--min-quotes", "1",
               "--epochs", "1", "--budget", "96", "--modes", "sig", "--out", tmp_path / "run") == 0
    reports = sorted((tmp_path / "run" / "eval.sig").glob("report.fold*.json"))
    assert len(reports) == 5
    summary = read_report(tmp_path / "run" / "eval.sig" / "report.json")
    assert summary.n_folds == 5 and sum(summary.counts["total"]) == 45
