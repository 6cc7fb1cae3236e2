import json

import pytest

from cops.cli import main
from cops.metrics import parse_table

SUITE = {"n_train": 2, "n_test": 3, "size": 24}
CFG = {"epochs": 2, "model": {"hidden": [8], "emb_dim": 4, "proj_dim": 4}}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "suite.json").write_text(json.dumps(SUITE))
    (root / "cfg.json").write_text(json.dumps(CFG))
    assert main(["gen", str(root / "data"), "--config", str(root / "suite.json")]) == 0
    return root


def test_gen_writes_manifest(workspace):
    doc = json.loads((workspace / "data" / "manifest.json").read_text())
    assert doc["seed"] == 0 and doc["suite"]["size"] == 24


def test_train_predict_eval(workspace, capsys):
    root = workspace
    manifest = str(root / "data" / "manifest.json")
    assert main(["train", manifest, "--config", str(root / "cfg.json"), "--model", str(root / "m.json"),
                 "--history", str(root / "hist.csv"), "--figures", str(root / "fig")]) == 0
    assert (root / "hist.csv").read_text().splitlines()[0] == "epoch,beta,total,base,gt,edge,si,contr"
    assert (root / "fig" / "history.png").stat().st_size > 0
    assert main(["predict", str(root / "m.json"), manifest, "--out", str(root / "pred")]) == 0
    capsys.readouterr()
    assert main(["eval", str(root / "pred"), manifest, "--format", "csv", "--figures", str(root / "fig")]) == 0
    rows = parse_table(capsys.readouterr().out, "csv")
    assert [c for _, c, _ in rows] == ["day", "night", "rain", "Average"]
    assert (root / "fig" / "rmse.png").exists()


def test_eval_mm_header(workspace, capsys):
    root = workspace
    manifest = str(root / "data" / "manifest.json")
    if not (root / "pred").exists():
        main(["train", manifest, "--config", str(root / "cfg.json"), "--model", str(root / "m.json")])
        main(["predict", str(root / "m.json"), manifest, "--out", str(root / "pred")])
    capsys.readouterr()
    assert main(["eval", str(root / "pred"), manifest, "--inverse-unit", "mm"]) == 0
    assert "iRMSE (1/mm)" in capsys.readouterr().out.splitlines()[0]


def test_training_reproducible_via_cli(workspace):
    root = workspace
    manifest = str(root / "data" / "manifest.json")
    for name in ("a", "b"):
        main(["train", manifest, "--config", str(root / "cfg.json"), "--model", str(root / f"{name}.json"),
              "--history", str(root / f"{name}.csv")])
    assert (root / "a.csv").read_bytes() == (root / "b.csv").read_bytes()
    assert (root / "a.json").read_bytes() == (root / "b.json").read_bytes()


def test_invalid_inputs_exit_one(tmp_path):
    assert main(["eval", str(tmp_path), str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "cfg.json"
    bad.write_text('{"epochs": 1}')
    (tmp_path / "m.json").write_text("{")
    assert main(["predict", str(tmp_path / "m.json"), str(bad), "--out", str(tmp_path / "o")]) == 1


def test_gradcheck_command(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["gradcheck", "--instances", "2", "--only", "smooth-l1", "edge-smooth", "--format", "csv",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("check,instances") and len(lines) == 3


def test_sweep_command(tmp_path, capsys):
    spec = {"param": "n", "values": [45, 60], "seeds": [0], "base": CFG, "suite": SUITE}
    (tmp_path / "s.json").write_text(json.dumps(spec))
    assert main(["sweep", str(tmp_path / "s.json"), "--format", "csv"]) == 0
    methods = {m for m, _, _ in parse_table(capsys.readouterr().out, "csv")}
    assert methods == {"L_base", "n=45", "n=60"}
