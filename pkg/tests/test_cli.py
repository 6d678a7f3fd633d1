import csv
import filecmp
import json

import pytest

from cfrca.cli import main
from cfrca.dcbn import Dcbn
from cfrca.diagnosis import STATUS_NO_DETECTION, DiagnosisReport
from cfrca.events import read_panel_csv, write_panel_csv
from cfrca.graph import LaggedDag
from cfrca.simulator import SimConfig, generate_nominal_instance, load_dataset


def _same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    return not (cmp.diff_files or cmp.left_only or cmp.right_only or cmp.funny_files)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--seed", "7", "--instances", "100", "--out", str(root / "data")]) == 0
    assert main(["train", "--data", str(root / "data"), "--ground-truth", "--out", str(root / "model")]) == 0
    return root


def test_simulate_default_dataset(workspace):
    with open(workspace / "data" / "labels.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 100
    assert len(load_dataset(workspace / "data")) == 100


def test_simulate_is_deterministic(workspace, tmp_path):
    assert main(["simulate", "--seed", "7", "--instances", "100", "--out", str(tmp_path / "again")]) == 0
    assert _same_tree(workspace / "data", tmp_path / "again")


def test_simulate_zero_instances_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--instances", "0", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--bogus"])
    assert exc.value.code == 2


def test_discover_alpha_list(workspace, tmp_path):
    out = tmp_path / "g"
    assert main(["discover", "--data", str(workspace / "data"), "--alphas", "0.01,0.03,0.05", "--out", str(out)]) == 0
    graphs = sorted(out.glob("graph_alpha_*.json"))
    assert len(graphs) == 3
    for g in graphs:
        LaggedDag.loads(g.read_text())
    with open(out / "shd.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["alpha"] for r in rows] == ["0.01", "0.03", "0.05"]
    assert all(int(r["shd"]) >= 0 for r in rows)
    assert main(["discover", "--data", str(workspace / "data"), "--alphas", "0.01,0.03,0.05", "--out", str(tmp_path / "g2")]) == 0
    assert _same_tree(out, tmp_path / "g2")


def test_discover_missing_dataset_is_io_error(tmp_path):
    assert main(["discover", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 4


def test_train_outputs(workspace, capsys):
    model = Dcbn.loads((workspace / "model" / "model.json").read_text())
    assert model.failure_var == "Y"
    metrics = json.loads((workspace / "model" / "metrics.json").read_text())
    assert metrics["split_disjoint"] is True
    assert metrics["train_instances"] == [0, 79] and metrics["test_instances"] == [80, 99]
    assert 0.0 <= metrics["rmse"] <= 1.0


def test_train_prints_rmse(workspace, tmp_path, capsys):
    assert main(["train", "--data", str(workspace / "data"), "--ground-truth", "--out", str(tmp_path)]) == 0
    assert "rmse=" in capsys.readouterr().out


def test_train_graph_mismatch_is_validation_error(workspace, tmp_path):
    bad = LaggedDag(("X1", "Q"), 1)
    (tmp_path / "g.json").write_text(bad.dumps())
    assert main(["train", "--data", str(workspace / "data"), "--graph", str(tmp_path / "g.json"), "--out", str(tmp_path)]) == 3


def test_diagnose_outputs(workspace, tmp_path):
    out = tmp_path / "r"
    args = ["diagnose", "--model", str(workspace / "model" / "model.json"), "--data", str(workspace / "data"),
            "--instance", "85", "--alpha-grid", "7", "--out", str(out)]
    assert main(args) == 0
    report = DiagnosisReport.loads((out / "report.json").read_text())
    assert len(report.ranked_paths) == 6
    with open(out / "recourse_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 7 and list(rows[0]) == ["alpha", "mean", "sd", "p_low"]
    with open(out / "pf_series.csv") as fh:
        assert next(csv.reader(fh)) == ["slot", "p_f"]
    assert main(args[:-1] + [str(tmp_path / "r2")]) == 0
    assert _same_tree(out, tmp_path / "r2")


def test_diagnose_nominal_panel(workspace, tmp_path):
    panel = generate_nominal_instance(SimConfig(seed=7), 0).panel
    with open(tmp_path / "nominal.csv", "w") as fh:
        write_panel_csv(panel, fh)
    assert read_panel_csv((tmp_path / "nominal.csv").read_text()) == panel
    args = ["diagnose", "--model", str(workspace / "model" / "model.json"), "--panel", str(tmp_path / "nominal.csv"),
            "--out", str(tmp_path / "r")]
    assert main(args) == 0
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert report["status"] == STATUS_NO_DETECTION


def test_diagnose_missing_model_is_io_error(workspace, tmp_path):
    assert main(["diagnose", "--model", str(tmp_path / "none.json"), "--data", str(workspace / "data"), "--out", str(tmp_path)]) == 4


def test_report_subcommand(workspace, tmp_path, capsys):
    main(["diagnose", "--model", str(workspace / "model" / "model.json"), "--data", str(workspace / "data"), "--out", str(tmp_path)])
    capsys.readouterr()
    assert main(["report", "--report", str(tmp_path / "report.json")]) == 0
    assert capsys.readouterr().out.startswith("status:")


def test_transform_and_filter(tmp_path):
    lines = ["timestamp,event_id,channel"]
    for t in range(300):
        lines.append(f"{t + 0.5},a{t},A")
        if t % 2:
            lines.append(f"{t + 0.25},b{t},B")
            lines.append(f"{t + 0.75},y{t},Y")
    (tmp_path / "events.csv").write_text("\n".join(lines) + "\n")
    assert main(["transform", "--events", str(tmp_path / "events.csv"), "--out", str(tmp_path)]) == 0
    panel = read_panel_csv((tmp_path / "panel.csv").read_text())
    assert panel.variables == ("A", "B", "Y") and panel.n_slots == 300
    assert main(["filter", "--panel", str(tmp_path / "panel.csv"), "--target", "Y", "--out", str(tmp_path)]) == 0
    rel = json.loads((tmp_path / "relevance.json").read_text())
    assert rel["retained"][0]["var"] == "Y"
    assert {d["var"] for d in rel["dropped_periodic"]} == {"B"}


def test_transform_parse_error_is_validation_error(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2\n")
    assert main(["transform", "--events", str(tmp_path / "bad.csv"), "--out", str(tmp_path)]) == 3
