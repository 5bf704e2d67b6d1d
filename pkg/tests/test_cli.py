"""CLI pipeline tests: each subcommand on a desk-size corpus."""

import csv
import json
import os

import numpy as np
import pytest

from scorecast.cli import main


@pytest.fixture(scope="module")
def cli_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    events = str(root / "events.jsonl")
    catalog = str(root / "catalog.csv")
    data_dir = str(root / "datasets")
    bundle = str(root / "model.bundle")
    rc = main(
        [
            "simulate", "--students", "80", "--seed", "3", "--out", events,
            "--catalog", catalog, "--questions", "150", "--tests", "5",
            "--questions-per-test", "18", "--days", "45",
        ]
    )
    assert rc == 0
    rc = main(["featurize", "--events", events, "--catalog", catalog, "--out-dir", data_dir,
               "--seed", "1", "--d-mastery", "8",
               "--bkt-diag-out", str(root / "bkt_diag.csv"),
               "--mastery-out", str(root / "mastery.csv")])
    assert rc == 0
    rc = main(["train", "--data-dir", data_dir, "--out", bundle, "--trees", "20", "--seed", "2"])
    assert rc == 0
    return {"root": root, "events": events, "catalog": catalog, "data_dir": data_dir, "bundle": bundle}


class TestSimulate:
    def test_deterministic_files(self, tmp_path):
        a, b = str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")
        for out in (a, b):
            rc = main(["simulate", "--students", "12", "--seed", "7", "--out", out,
                       "--questions", "60", "--tests", "3"])
            assert rc == 0
        assert open(a, "rb").read() == open(b, "rb").read()
        assert open(a + ".catalog.csv", "rb").read() == open(b + ".catalog.csv", "rb").read()


class TestPipeline:
    def test_dataset_files_exist(self, cli_dirs):
        names = os.listdir(cli_dirs["data_dir"])
        assert "upstream.bundle" in names
        assert "meta.csv" in names
        assert any(n.startswith("train_b") for n in names)

    def test_diagnostic_exports(self, cli_dirs):
        with open(cli_dirs["root"] / "bkt_diag.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows and set(rows[0]) == {
            "concept_id", "p_init", "p_transit", "p_guess", "p_slip", "loglik", "n_seq"
        }
        assert all(0.0 <= float(r["p_guess"]) < 0.5 for r in rows)
        with open(cli_dirs["root"] / "mastery.csv") as fh:
            mrows = list(csv.DictReader(fh))
        assert mrows and set(mrows[0]) == {"learner_id", "concept_id", "p_correct"}
        assert all(0.0 < float(r["p_correct"]) < 1.0 for r in mrows[:200])

    def test_dataset_header_matches_contract(self, cli_dirs):
        from scorecast.bundle import load_bundle

        upstream = load_bundle(os.path.join(cli_dirs["data_dir"], "upstream.bundle"))
        path = os.path.join(cli_dirs["data_dir"], "train_b2.csv")
        with open(path) as fh:
            header = next(csv.reader(fh))
        assert header == upstream.registry.codes + ["y"]

    def test_eval_and_predictions_export(self, cli_dirs, capsys):
        pred_path = str(cli_dirs["root"] / "preds.csv")
        rc = main(["eval", "--bundle", cli_dirs["bundle"], "--data-dir", cli_dirs["data_dir"],
                   "--pred-out", pred_path])
        assert rc == 0
        out = capsys.readouterr().out
        assert "MedAE=" in out
        with open(pred_path) as fh:
            rows = list(csv.DictReader(fh))
        assert rows and set(rows[0]) == {"learner_id", "test_id", "bucket", "y", "yhat", "q05", "q95"}
        # metrics recomputed from the export match the printed line
        y = np.array([float(r["y"]) for r in rows])
        yhat = np.array([float(r["yhat"]) for r in rows])
        medae = float(np.median(np.abs(yhat - y)))
        printed = float(out.split("MedAE=")[1].split()[0])
        assert medae == pytest.approx(printed, abs=1e-3)

    def test_explain_output(self, cli_dirs, capsys):
        from scorecast.bundle import load_bundle

        bundle = load_bundle(cli_dirs["bundle"])
        sample = next(iter(bundle.metadata["sample_features"].values()))
        fpath = str(cli_dirs["root"] / "features.json")
        with open(fpath, "w") as fh:
            json.dump({"features": sample}, fh)
        rc = main(["explain", "--bundle", cli_dirs["bundle"], "--features", fpath])
        assert rc == 0
        rec = json.loads(capsys.readouterr().out)
        assert abs(rec["base"] + sum(i["phi"] for i in rec["items"]) - rec["prediction"]) <= 1e-6

    def test_nudge_output(self, cli_dirs, capsys):
        from scorecast.bundle import load_bundle

        bundle = load_bundle(cli_dirs["bundle"])
        sample = next(iter(bundle.metadata["sample_features"].values()))
        fpath = str(cli_dirs["root"] / "features2.json")
        with open(fpath, "w") as fh:
            json.dump({"features": sample}, fh)
        rc = main(["nudge", "--bundle", cli_dirs["bundle"], "--features", fpath, "--delta-y", "5"])
        assert rc == 0
        rec = json.loads(capsys.readouterr().out)
        assert rec["status"] in ("achieved", "partial", "infeasible")

    def test_trends_table(self, cli_dirs, capsys):
        rc = main(["trends", "--events", cli_dirs["events"], "--catalog", cli_dirs["catalog"],
                   "--bundle", cli_dirs["bundle"], "--min-tests", "4"])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.startswith("test_index,")

    def test_env_var_overrides_bundle_flag(self, cli_dirs, capsys, monkeypatch):
        monkeypatch.setenv("ESQ_BUNDLE", cli_dirs["bundle"])
        rc = main(["eval", "--bundle", "/nonexistent.bundle", "--data-dir", cli_dirs["data_dir"]])
        assert rc == 0


class TestExitCodes:
    def test_usage_error_is_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--nope"])
        assert exc.value.code == 2

    def test_runtime_error_is_1(self, tmp_path, capsys):
        rc = main(["eval", "--bundle", str(tmp_path / "missing.bundle"), "--data-dir", str(tmp_path)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_train_on_empty_dataset_is_1(self, tmp_path, capsys):
        rc = main(["train", "--data-dir", str(tmp_path), "--out", str(tmp_path / "x.bundle")])
        assert rc == 1
