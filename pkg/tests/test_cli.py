import json

import numpy as np
import pytest

from treescreen import save_dataset, save_item_bank
from treescreen.cli import main
from .conftest import make_bank, make_dataset


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    bank = make_bank(p=4, cond=("Age",))
    save_item_bank(bank, root / "bank.json")
    train = make_dataset(bank, n=300, seed=0)
    save_dataset(train, root / "train.csv")
    hold = make_dataset(bank, n=200, seed=99)
    save_dataset(hold, root / "holdout.csv")
    return root


@pytest.fixture(scope="module")
def pipeline(workspace):
    root = workspace
    rc = main([
        "fit", "--bank", str(root / "bank.json"), "--data", str(root / "train.csv"),
        "--out", str(root / "run"), "--k", "1", "--num-trees", "8",
        "--burn-in", "40", "--draws", "20", "--seed", "0",
    ])
    assert rc == 0
    rc = main([
        "synth", "--bank", str(root / "bank.json"),
        "--copula", str(root / "run" / "copula.npz"),
        "--risk", str(root / "run" / "risk.npz"),
        "--out", str(root / "run"), "--N", "40", "--D", "20",
        "--reservoir", "400", "--seed", "1",
    ])
    assert rc == 0
    rc = main([
        "design", "--bank", str(root / "bank.json"),
        "--population", str(root / "run" / "population.npz"),
        "--out", str(root / "run"), "--m", "1,2", "--w", "0.5",
    ])
    assert rc == 0
    return root / "run"


class TestFit:
    def test_outputs_and_manifest(self, pipeline):
        assert (pipeline / "copula.npz").exists()
        assert (pipeline / "risk.npz").exists()
        manifest = json.loads((pipeline / "fit_manifest.json").read_text())
        assert set(manifest["inputs"]) == {"bank", "data"}
        assert "copula_hash" in manifest["params"]

    def test_bad_path_is_usage_error(self, workspace, capsys):
        rc = main([
            "fit", "--bank", str(workspace / "nope.json"),
            "--data", str(workspace / "train.csv"), "--out", str(workspace / "x"),
        ])
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_missing_required_flag(self, workspace):
        rc = main(["fit", "--bank", str(workspace / "bank.json"), "--out", str(workspace / "x")])
        assert rc == 2

    def test_rerun_same_seed_same_hashes(self, workspace, pipeline):
        root = workspace
        rc = main([
            "fit", "--bank", str(root / "bank.json"), "--data", str(root / "train.csv"),
            "--out", str(root / "run2"), "--k", "1", "--num-trees", "8",
            "--burn-in", "40", "--draws", "20", "--seed", "0",
        ])
        assert rc == 0
        m1 = json.loads((root / "run" / "fit_manifest.json").read_text())
        m2 = json.loads((root / "run2" / "fit_manifest.json").read_text())
        assert m1["params"]["copula_hash"] == m2["params"]["copula_hash"]
        assert m1["params"]["risk_hash"] == m2["params"]["risk_hash"]


class TestSynth:
    def test_manifest_reports_m(self, pipeline):
        manifest = json.loads((pipeline / "synth_manifest.json").read_text())
        assert manifest["params"]["M"] == 800

    def test_missing_archive_is_usage_error(self, workspace):
        rc = main([
            "synth", "--bank", str(workspace / "bank.json"),
            "--copula", str(workspace / "missing.npz"),
            "--risk", str(workspace / "missing.npz"),
            "--out", str(workspace / "x"), "--N", "10", "--D", "5",
        ])
        assert rc == 2


class TestDesign:
    def test_deployment_files(self, pipeline):
        for m in (1, 2):
            doc = json.loads((pipeline / f"test_m{m}.json").read_text())
            assert doc["schema"] == "adaptive-test/v1"
            assert doc["maxipp"] == m
            assert 0.0 <= doc["threshold"] <= 1.0
        report = json.loads((pipeline / "thresholds.json").read_text())
        assert [t["m"] for t in report["tests"]] == [1, 2]

    def test_zero_m_is_usage_error(self, workspace, pipeline):
        rc = main([
            "design", "--bank", str(workspace / "bank.json"),
            "--population", str(pipeline / "population.npz"),
            "--out", str(workspace / "x"), "--m", "0",
        ])
        assert rc == 2

    def test_rerun_identical_files(self, workspace, pipeline):
        root = workspace
        rc = main([
            "design", "--bank", str(root / "bank.json"),
            "--population", str(pipeline / "population.npz"),
            "--out", str(root / "design2"), "--m", "1,2", "--w", "0.5",
        ])
        assert rc == 0
        for m in (1, 2):
            a = (pipeline / f"test_m{m}.json").read_text()
            b = (root / "design2" / f"test_m{m}.json").read_text()
            assert a == b


class TestEvaluate:
    def test_outputs(self, workspace, pipeline):
        out = workspace / "eval"
        rc = main([
            "evaluate", "--bank", str(workspace / "bank.json"),
            "--population", str(pipeline / "population.npz"),
            "--risk", str(pipeline / "risk.npz"),
            "--holdout", str(workspace / "holdout.csv"),
            "--tests", str(pipeline / "test_m1.json"), str(pipeline / "test_m2.json"),
            "--w", "0.5", "--out", str(out), "--plots",
        ])
        assert rc == 0
        rows = (out / "evaluation.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 3  # header + full + two trees
        deltas = (out / "deltas.csv").read_text().strip().splitlines()[1:]
        assert len(deltas) <= 2 * 20 and len(deltas) > 0
        assert (out / "delta_boxplot.svg").exists()
        assert (out / "roc.svg").exists()

    def test_empty_holdout_is_usage_error(self, workspace, pipeline):
        bank = make_bank(p=4, cond=("Age",))
        empty = make_dataset(bank, n=2, seed=0)
        empty.responses = empty.responses[:0]
        empty.outcomes = empty.outcomes[:0]
        empty.conditioning = empty.conditioning[:0]
        empty.row_ids = ()
        save_dataset(empty, workspace / "empty.csv")
        rc = main([
            "evaluate", "--bank", str(workspace / "bank.json"),
            "--population", str(pipeline / "population.npz"),
            "--risk", str(pipeline / "risk.npz"),
            "--holdout", str(workspace / "empty.csv"),
            "--tests", str(pipeline / "test_m1.json"),
            "--out", str(workspace / "evale"),
        ])
        assert rc == 2


class TestCompare:
    def test_grid_csv(self, workspace, pipeline):
        out = workspace / "cmp"
        rc = main([
            "compare", "--population", str(pipeline / "population.npz"),
            "--m", "1,2", "--w", "0.5", "--out", str(out),
        ])
        assert rc == 0
        rows = (out / "comparison.csv").read_text().strip().splitlines()
        assert rows[0].startswith("n_items,tree_type,criterion,w")
        assert len(rows) == 1 + 2 * 3

    def test_unknown_criterion_is_usage_error(self, workspace, pipeline):
        rc = main([
            "compare", "--population", str(pipeline / "population.npz"),
            "--m", "1", "--criteria", "bogus", "--out", str(workspace / "x"),
        ])
        assert rc == 2


class TestExportReport:
    def test_export_roundtrip(self, workspace, pipeline):
        out_file = workspace / "reexport.json"
        rc = main([
            "export", "--bank", str(workspace / "bank.json"),
            "--tree", str(pipeline / "test_m2.json"),
            "--out-file", str(out_file),
        ])
        assert rc == 0
        a = json.loads((pipeline / "test_m2.json").read_text())
        b = json.loads(out_file.read_text())
        assert a["nodes"] == b["nodes"]
        assert a["threshold"] == b["threshold"]

    def test_report_renders_svgs(self, workspace, pipeline):
        eval_dir = workspace / "eval"
        out = workspace / "report"
        rc = main([
            "report", "--deltas", str(eval_dir / "deltas.csv"),
            "--roc", str(eval_dir / "roc.csv"), "--out", str(out),
        ])
        assert rc == 0
        assert (out / "roc.svg").exists()


class TestConfigFile:
    def test_config_supplies_defaults_and_flags_override(self, workspace, pipeline, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "population": str(pipeline / "population.npz"),
            "m": "1", "w": "0.5",
        }))
        out = tmp_path / "out"
        rc = main(["compare", "--config", str(cfg), "--m", "2", "--out", str(out)])
        assert rc == 0
        rows = (out / "comparison.csv").read_text().strip().splitlines()[1:]
        assert all(r.startswith("2,") for r in rows)

    def test_env_var_output_dir(self, workspace, pipeline, tmp_path, monkeypatch):
        monkeypatch.setenv("TREESCREEN_OUT", str(tmp_path / "envout"))
        rc = main([
            "compare", "--population", str(pipeline / "population.npz"), "--m", "1",
        ])
        assert rc == 0
        assert (tmp_path / "envout" / "comparison.csv").exists()
