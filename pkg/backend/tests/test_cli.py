"""
Command-line tests: every command run through main() with exit codes checked
"""

# Standard library imports
import json
import os

# Third-party imports
import pandas as pd
import pytest

# Local application imports
from conftest import generated_cohort, make_record
from commands.score import lock_path_for, seen_path_for, sidecar_path_for
from database import PredictionRecord, session_scope
from main import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from mortality.base_config import get_settings
from mortality.dataset import Cohort, write_cohort_csv
from mortality.evaluation import importance_report
from mortality.persist import load_model, load_pipeline, load_report, save_model
from mortality.pipeline import ModelKind, train_pipeline
from mortality.schema import default_schema
from mortality.synth import DEFAULT_GENERATOR_CONFIG

SMALL_GBC = '{"n_trees": 10, "min_samples_leaf": 5}'

EVAL_CONFIG = {
    "models": ["gbc"],
    "params": {
        "gbc": {"n_trees": 10, "min_samples_leaf": 5},
        "rf": {"n_trees": 5, "min_samples_leaf": 5},
        "knn": {"k": 5},
    },
    "repetitions": 2,
    "test_fraction": 0.2,
}


@pytest.fixture(scope="module")
def cli_data(tmp_path_factory):
    """A 300-episode cohort CSV and a small gbc bundle trained on it"""
    root = tmp_path_factory.mktemp("cli")
    with pytest.MonkeyPatch.context() as mp:
        mp.setenv("MORTALITY_LOG_DIRECTORY", str(root / "logs"))
        mp.delenv("MORTALITY_DATABASE_URL", raising=False)
        get_settings.cache_clear()
        cohort, _ = generated_cohort(300, seed=5)
        pipeline = train_pipeline(cohort, ModelKind.GBC, json.loads(SMALL_GBC), seed=5)
    get_settings.cache_clear()
    cohort_path = write_cohort_csv(cohort, root / "cohort.csv")
    bundle_path = root / "gbc.arx.json"
    save_model(pipeline, bundle_path)
    return {"cohort": cohort_path, "bundle": bundle_path}


@pytest.fixture
def eval_config(tmp_path):
    path = tmp_path / "eval.json"
    path.write_text(json.dumps(EVAL_CONFIG))
    return path


def _admissions(tmp_path, n=3, name="admissions.csv"):
    records = tuple(
        make_record(f"A{i}", outcome=None, Urea=20.0 + 40 * i, Age=50 + 10 * i, Malignancy=i % 2)
        for i in range(n)
    )
    return write_cohort_csv(Cohort(schema=default_schema(), records=records), tmp_path / name)


def _log_lines(path):
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_version(capsys):
    assert main(["--version"]) == EXIT_OK
    assert "mortality-forecast" in capsys.readouterr().out


def test_missing_command_is_usage_error():
    assert main([]) == EXIT_USAGE


def test_synth_writes_cohort_and_truth(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["synth", "--n", "100", "--seed", "3", "--out", str(out), "--quiet"]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 101
    truth = tmp_path / "c.truth.csv"
    assert len(truth.read_text().splitlines()) == 101

    again = tmp_path / "again.csv"
    assert main(["synth", "--n", "100", "--seed", "3", "--out", str(again), "--quiet"]) == EXIT_OK
    assert again.read_bytes() == out.read_bytes()


def test_synth_bad_probability_sum(tmp_path, capsys):
    config = json.loads(DEFAULT_GENERATOR_CONFIG.read_text(encoding="utf-8"))
    level = next(iter(config["categorical"]["AdmissionCause"]["levels"]))
    config["categorical"]["AdmissionCause"]["levels"][level]["probability"] += 0.3
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(config))

    assert main(["synth", "--config", str(path), "--out", str(tmp_path / "x.csv")]) == EXIT_DATA
    assert "AdmissionCause" in capsys.readouterr().err


def test_synth_rejects_bad_n(tmp_path):
    assert main(["synth", "--n", "0", "--out", str(tmp_path / "x.csv")]) == EXIT_DATA


def test_train_writes_loadable_bundle(tmp_path, cli_data):
    out = tmp_path / "model.arx.json"
    code = main(["train", str(cli_data["cohort"]), "--model", "gbc", "--params", SMALL_GBC,
                 "--seed", "2", "--out", str(out), "--quiet"])
    assert code == EXIT_OK
    pipeline = load_pipeline(out)
    assert pipeline.kind is ModelKind.GBC
    assert pipeline.params["n_trees"] == 10
    assert 0.0 < pipeline.threshold < 1.0
    assert pipeline.metadata["n_train"] == 300


def test_train_default_output_location(cli_data, isolated_settings):
    assert main(["train", str(cli_data["cohort"]), "-m", "KNN", "--quiet"]) == EXIT_OK
    assert (isolated_settings.storage_directory / "knn.arx.json").is_file()


def test_train_unknown_kind(tmp_path, cli_data, capsys):
    code = main(["train", str(cli_data["cohort"]), "--model", "svm", "--out", str(tmp_path / "m.arx.json")])
    assert code == EXIT_USAGE
    err = capsys.readouterr().err
    for kind in ("gbc", "rf", "knn", "buurman", "profund"):
        assert kind in err


def test_train_explicit_threshold(tmp_path, cli_data):
    out = tmp_path / "m.arx.json"
    code = main(["train", str(cli_data["cohort"]), "-m", "gbc", "--params", SMALL_GBC,
                 "--threshold", "0.1", "--out", str(out), "--quiet"])
    assert code == EXIT_OK
    assert load_pipeline(out).threshold == 0.1


def test_train_bad_params(tmp_path, cli_data):
    out = tmp_path / "m.arx.json"
    assert main(["train", str(cli_data["cohort"]), "-m", "gbc", "--params", '{"depth": 2}', "--out", str(out)]) == EXIT_DATA
    assert main(["train", str(cli_data["cohort"]), "-m", "gbc", "--params", "{nope", "--out", str(out)]) == EXIT_DATA
    assert not out.exists()


def test_train_missing_cohort(tmp_path):
    assert main(["train", str(tmp_path / "absent.csv"), "-m", "gbc"]) == EXIT_DATA


def test_evaluate_smoke(tmp_path, cli_data, eval_config):
    out = tmp_path / "report.json"
    code = main(["evaluate", str(cli_data["cohort"]), "--config", str(eval_config),
                 "--seed", "1", "--out", str(out), "--quiet"])
    assert code == EXIT_OK
    (report,) = load_report(out)
    assert report.model == "gbc"
    assert len(report.summaries["auc"].values) == 2
    timings = json.loads((tmp_path / "report.timings.json").read_text())
    assert len(timings["gbc"]) == 2


def test_evaluate_five_models(tmp_path, cli_data, eval_config, capsys):
    out = tmp_path / "report.json"
    code = main(["evaluate", str(cli_data["cohort"]), "--config", str(eval_config),
                 "--models", "gbc,rf,knn,buurman,profund", "--out", str(out)])
    assert code == EXIT_OK
    assert [r.model for r in load_report(out)] == ["gbc", "rf", "knn", "buurman", "profund"]
    printed = capsys.readouterr().out
    assert "profund" in printed and "AUC" in printed


def test_evaluate_fixed_threshold(tmp_path, cli_data, eval_config):
    out = tmp_path / "report.json"
    code = main(["evaluate", str(cli_data["cohort"]), "--config", str(eval_config),
                 "--threshold", "0.2", "--out", str(out), "--quiet"])
    assert code == EXIT_OK
    (report,) = load_report(out)
    assert report.threshold == 0.2
    assert report.repetition_thresholds == [0.2, 0.2]


def test_evaluate_unknown_model(tmp_path, cli_data, eval_config):
    code = main(["evaluate", str(cli_data["cohort"]), "--config", str(eval_config),
                 "--models", "gbc,svm", "--out", str(tmp_path / "r.json")])
    assert code == EXIT_USAGE


def test_score_once(tmp_path, cli_data):
    log = tmp_path / "predictions.jsonl"
    code = main(["score", str(cli_data["bundle"]), str(_admissions(tmp_path)), "--out", str(log), "--quiet"])
    assert code == EXIT_OK

    entries = _log_lines(log)
    assert [e["episode_id"] for e in entries] == ["A0", "A1", "A2"]
    fingerprint = load_model(cli_data["bundle"]).fingerprint
    for entry in entries:
        assert entry["label"] == int(entry["score"] >= entry["threshold"])
        assert entry["model_fingerprint"] == fingerprint
        assert entry["timestamp"].endswith("Z")
    assert [e["timestamp"] for e in entries] == sorted(e["timestamp"] for e in entries)
    assert not lock_path_for(log).exists()
    assert set(json.loads(seen_path_for(log).read_text())["episode_ids"]) == {"A0", "A1", "A2"}


def test_score_watch_rerun_adds_nothing(tmp_path, cli_data):
    log = tmp_path / "predictions.jsonl"
    admissions = _admissions(tmp_path)
    assert main(["score", str(cli_data["bundle"]), str(admissions), "--out", str(log), "--quiet"]) == EXIT_OK
    assert main(["score", str(cli_data["bundle"]), str(tmp_path), "--mode", "watch", "--max-cycles", "2",
                 "--interval", "0", "--out", str(log), "--quiet"]) == EXIT_OK
    assert len(_log_lines(log)) == 3


def test_score_watch_survives_lost_state_file(tmp_path, cli_data):
    log = tmp_path / "predictions.jsonl"
    admissions = _admissions(tmp_path)
    args = ["score", str(cli_data["bundle"]), str(admissions), "--mode", "watch", "--max-cycles", "1",
            "--out", str(log), "--quiet"]
    assert main(args) == EXIT_OK
    seen_path_for(log).unlink()
    assert main(args) == EXIT_OK
    assert len(_log_lines(log)) == 3


def test_score_invalid_row_goes_to_sidecar(tmp_path, cli_data):
    admissions = _admissions(tmp_path)
    frame = pd.read_csv(admissions, dtype=str, keep_default_na=False)
    frame.loc[1, "Malignancy"] = "7"
    frame.to_csv(admissions, index=False)
    log = tmp_path / "predictions.jsonl"

    assert main(["score", str(cli_data["bundle"]), str(admissions), "--out", str(log), "--quiet"]) == EXIT_OK
    assert [e["episode_id"] for e in _log_lines(log)] == ["A0", "A2"]
    (error,) = _log_lines(sidecar_path_for(log))
    assert error["row"] == 2
    assert error["column"] == "Malignancy"
    assert error["episode_id"] == "A1"


def test_score_bad_header_goes_to_sidecar(tmp_path, cli_data):
    inbox = tmp_path / "inbox"
    inbox.mkdir()
    _admissions(inbox)
    (inbox / "broken.csv").write_text("Weight,Height\n70,180\n")
    log = tmp_path / "predictions.jsonl"

    assert main(["score", str(cli_data["bundle"]), str(inbox), "--out", str(log), "--quiet"]) == EXIT_OK
    assert len(_log_lines(log)) == 3
    (error,) = _log_lines(sidecar_path_for(log))
    assert error["row"] == 0
    assert error["source"].endswith("broken.csv")


def test_score_refuses_locked_log(tmp_path, cli_data):
    log = tmp_path / "predictions.jsonl"
    lock_path_for(log).write_text(f"{os.getpid()}\n")
    code = main(["score", str(cli_data["bundle"]), str(_admissions(tmp_path)), "--out", str(log)])
    assert code == EXIT_USAGE
    assert not log.exists()
    assert lock_path_for(log).exists()


def test_score_takes_over_stale_lock(tmp_path, cli_data):
    log = tmp_path / "predictions.jsonl"
    # above the largest pid the kernel hands out
    lock_path_for(log).write_text(f"{2 ** 22 + 1}\n")
    code = main(["score", str(cli_data["bundle"]), str(_admissions(tmp_path)), "--out", str(log)])
    assert code == EXIT_OK
    assert len(_log_lines(log)) == 3
    assert not lock_path_for(log).exists()


def test_score_rejects_baseline_bundle(tmp_path, cli_data):
    out = tmp_path / "profund.arx.json"
    assert main(["baseline-fit", str(cli_data["cohort"]), "-m", "profund", "--out", str(out), "--quiet"]) == EXIT_OK
    code = main(["score", str(out), str(_admissions(tmp_path)), "--out", str(tmp_path / "p.jsonl")])
    assert code == EXIT_USAGE


def test_score_missing_input(tmp_path, cli_data):
    code = main(["score", str(cli_data["bundle"]), str(tmp_path / "absent.csv"), "--out", str(tmp_path / "p.jsonl")])
    assert code == EXIT_DATA


def test_importance_table(tmp_path, cli_data, capsys):
    out = tmp_path / "importance.csv"
    assert main(["importance", str(cli_data["bundle"]), "--out", str(out)]) == EXIT_OK
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["feature", "label", "percentage"]
    assert len(frame) == len(default_schema().features)
    assert frame["percentage"].sum() == pytest.approx(100.0, abs=0.2)
    assert "Variable importance" in capsys.readouterr().out

    rows = importance_report(load_pipeline(cli_data["bundle"]))
    assert sum(r.percentage for r in rows) == pytest.approx(100.0, abs=0.01)


def test_importance_knn_is_a_clean_error(tmp_path, cli_data, capsys):
    out = tmp_path / "knn.arx.json"
    assert main(["train", str(cli_data["cohort"]), "-m", "knn", "--out", str(out), "--quiet"]) == EXIT_OK
    assert main(["importance", str(out)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "knn" in err
    assert "Traceback" not in err


def test_importance_corrupt_bundle(tmp_path):
    path = tmp_path / "bad.arx.json"
    path.write_text("{not json")
    assert main(["importance", str(path)]) == EXIT_DATA


def test_describe(tmp_path, cli_data, capsys):
    out = tmp_path / "summary.json"
    assert main(["describe", str(cli_data["cohort"]), "--out", str(out)]) == EXIT_OK
    summary = json.loads(out.read_text())
    assert summary["episodes"] == 300
    assert 0.0 < summary["prevalence"] < 1.0
    assert {f["name"] for f in summary["features"]} == set(default_schema().feature_names)
    assert "Barthel" in capsys.readouterr().out


def test_baseline_fit_buurman(tmp_path, cli_data, capsys):
    out = tmp_path / "buurman.arx.json"
    assert main(["baseline-fit", str(cli_data["cohort"]), "--out", str(out)]) == EXIT_OK
    pipeline = load_pipeline(out)
    assert pipeline.kind is ModelKind.BUURMAN
    assert set(pipeline.learner.as_dict()) == {"Barthel", "Charlson", "Malignancy", "Urea"}
    assert "Urea" in capsys.readouterr().out


def test_baseline_fit_rejects_learners_and_params(tmp_path, cli_data):
    out = str(tmp_path / "b.arx.json")
    assert main(["baseline-fit", str(cli_data["cohort"]), "-m", "gbc", "--out", out]) == EXIT_USAGE
    assert main(["baseline-fit", str(cli_data["cohort"]), "--params", '{"k": 1}', "--out", out]) == EXIT_DATA


def test_pipeline_is_deterministic_end_to_end(tmp_path, eval_config):
    def run(directory):
        directory.mkdir()
        cohort = directory / "cohort.csv"
        bundle = directory / "gbc.arx.json"
        report = directory / "report.json"
        assert main(["synth", "--n", "250", "--seed", "9", "--out", str(cohort), "--quiet"]) == EXIT_OK
        assert main(["train", str(cohort), "-m", "gbc", "--params", SMALL_GBC, "--seed", "9",
                     "--out", str(bundle), "--quiet"]) == EXIT_OK
        assert main(["evaluate", str(cohort), "--config", str(eval_config), "--seed", "9",
                     "--out", str(report), "--quiet"]) == EXIT_OK
        return cohort.read_bytes(), load_model(bundle).payload, report.read_bytes()

    assert run(tmp_path / "first") == run(tmp_path / "second")


def test_score_mirrors_to_database(tmp_path, cli_data):
    url = f"sqlite:///{tmp_path / 'hospital.db'}"
    log = tmp_path / "predictions.jsonl"
    code = main(["score", str(cli_data["bundle"]), str(_admissions(tmp_path)), "--out", str(log),
                 "--db-url", url, "--quiet"])
    assert code == EXIT_OK
    with session_scope(url) as db:
        mirrored = sorted(r.episode_id for r in db.query(PredictionRecord).all())
    assert mirrored == [e["episode_id"] for e in _log_lines(log)]
