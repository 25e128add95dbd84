import json

import numpy as np
import pytest

from qcapnet.capability_simulator import CapabilityDataset, exact_success_probability
from qcapnet.cli import main
from qcapnet.errors import ConfigError
from qcapnet.noise_models import load_error_model
from qcapnet.pipeline import ExperimentConfig, stream

TINY_CNN = {
    "mode": "cnn", "budget": 1,
    "architecture": {"epochs": 3, "patience": None, "layers": [
        {"kind": "conv", "kernels": 4, "shape": [1, 2], "activation": "relu"},
        {"kind": "pool", "shape": [1, 4], "mode": "avg"},
        {"kind": "flatten"},
        {"kind": "dense", "units": 1, "activation": "sigmoid"},
    ]},
}


def write_config(path, **overrides):
    cfg = {
        "seed": 5,
        "device": "t5",
        "samplers": [{"kind": "randomized", "widths": [1, 2, 3, 4, 5], "depths": [2, 4, 8], "xi": 0.5, "count": 60}],
        "splits": [0.6, 0.2, 0.2],
        "d_max": 8,
        "model": {"mode": "erm-fit"},
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_sample_writes_manifest(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json")
    assert run("sample", "--config", cfg, "--out", tmp_path / "a") == 0
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["count"] == 60 and sum(manifest["per_width"].values()) == 60
    assert set(manifest["per_width"]) <= {"1", "2", "3", "4", "5"}
    assert manifest["seed"] == 5
    lines = (tmp_path / "a" / "circuits.jsonl").read_text().splitlines()
    assert len(lines) == 60 and json.loads(lines[0])["circuit_id"] == "c000000"


def test_sample_rerun_is_identical_and_zero_count_is_fine(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    run("sample", "--config", cfg, "--out", tmp_path / "a")
    run("sample", "--config", cfg, "--out", tmp_path / "b")
    for name in ("circuits.jsonl", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    empty = write_config(tmp_path / "e.json", samplers=[{"widths": [1], "depths": [2], "count": 0}])
    assert run("sample", "--config", empty, "--out", tmp_path / "e") == 0
    assert json.loads((tmp_path / "e" / "manifest.json").read_text())["count"] == 0


def test_simulate_exact_labels(tmp_path):
    cfg = write_config(tmp_path / "c.json", n_shots=["inf", 100])
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 0
    exact = CapabilityDataset.load(tmp_path / "o" / "dataset_shots-inf.jsonl")
    model = load_error_model(tmp_path / "o" / "error_model.json")
    assert np.array_equal(exact.s_hat(), [exact_success_probability(c, model) for c in exact.circuits()])
    noisy = CapabilityDataset.load(tmp_path / "o" / "dataset_shots-100.jsonl")
    assert noisy.ids() == exact.ids()
    train = noisy.split("train").s_hat()
    assert np.allclose(train * 100, np.round(train * 100))


def test_simulate_nested_subsets(tmp_path):
    cfg = write_config(tmp_path / "c.json", splits=[0.9, 0.1, 0.0], nested_sizes=[90, 270, 450, 900],
                       samplers=[{"widths": [1, 2, 3], "depths": [2, 4], "xi": 0.5, "count": 1000}])
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 0
    previous = set()
    for size in (90, 270, 450, 900):
        ds = CapabilityDataset.load(tmp_path / "o" / f"dataset_n{size}_shots-inf.jsonl")
        ids = set(ds.ids())
        assert len(ids) == size and previous <= ids
        previous = ids


def test_coherent_with_analytic_backend_is_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", error_model={"variant": "coherent"}, backend="analytic")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "coherent" in capsys.readouterr().err


def test_train_erm_fit_and_evaluate_consistency(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    out = tmp_path / "o"
    run("simulate", "--config", cfg, "--out", out)
    assert run("train", "--config", cfg, "--out", out) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["mode"] == "erm-fit" and (out / "erm.json").exists()
    assert report["audit"]["overlap"] == 0 and report["audit"]["evaluated_split"] == "test"
    ds = CapabilityDataset.load(out / "dataset_shots-inf.jsonl")
    assert report["n_circuits"] == len(ds.split("test"))
    rows = (out / "report_predictions.csv").read_text().splitlines()[1:]
    assert {r.split(",")[4] for r in rows} == {"test"}
    assert (out / "report_scatter.png").exists()
    assert run("evaluate", "--model", out / "erm.json", "--dataset", out / "dataset_shots-inf.jsonl",
               "--out", tmp_path / "ev") == 0
    again = json.loads((tmp_path / "ev" / "evaluation.json").read_text())
    assert again["d_l1"] == report["d_l1"] and again["d_kl"] == report["d_kl"]


def test_train_cnn_budget_one(tmp_path):
    cfg = write_config(tmp_path / "c.json", model=TINY_CNN)
    out = tmp_path / "o"
    run("simulate", "--config", cfg, "--out", out)
    assert run("train", "--config", cfg, "--out", out, "--format", "jsonl") == 0
    from qcapnet.neuralnet import load_model

    model = load_model(out / "model.qcnn")
    assert len(model.meta["trials"]) == 1 and model.meta["seed"] == 5
    lines = (out / "report_predictions.jsonl").read_text().splitlines()
    assert all(json.loads(ln)["split"] == "test" for ln in lines)
    report = json.loads((out / "report.json").read_text())
    assert run("evaluate", "--model", out / "model.qcnn", "--dataset", out / "dataset_shots-inf.jsonl",
               "--out", tmp_path / "ev") == 0
    again = json.loads((tmp_path / "ev" / "evaluation.json").read_text())
    assert again["d_l1"] == report["d_l1"] and again["out_of_distribution"] is False


def test_cross_evaluation_flags_and_errors(tmp_path):
    narrow = write_config(tmp_path / "n.json", model=TINY_CNN,
                          samplers=[{"widths": [1, 2], "depths": [2, 4, 8], "xi": 0.5, "count": 40}])
    run("simulate", "--config", narrow, "--out", tmp_path / "n")
    run("train", "--config", narrow, "--out", tmp_path / "n")
    wide = write_config(tmp_path / "w.json", samplers=[{"widths": [4, 5], "depths": [2, 4, 8], "xi": 0.5, "count": 20}])
    run("simulate", "--config", wide, "--out", tmp_path / "w")
    assert run("evaluate", "--model", tmp_path / "n" / "model.qcnn", "--dataset", tmp_path / "w" / "dataset_shots-inf.jsonl",
               "--out", tmp_path / "x") == 0
    report = json.loads((tmp_path / "x" / "evaluation.json").read_text())
    assert report["out_of_distribution"] is True and "width 5" in report["ood_reasons"][0]
    deep = write_config(tmp_path / "d.json", d_max=16, samplers=[{"widths": [1], "depths": [16], "count": 10}])
    run("simulate", "--config", deep, "--out", tmp_path / "d")
    code = run("evaluate", "--model", tmp_path / "n" / "model.qcnn", "--dataset", tmp_path / "d" / "dataset_shots-inf.jsonl",
               "--out", tmp_path / "y")
    assert code == 3


def test_sbm_command(tmp_path):
    cfg = write_config(tmp_path / "c.json", n_shots=[1024], model={"mode": "sbm"})
    out = tmp_path / "o"
    run("simulate", "--config", cfg, "--out", out)
    assert run("sbm", "--config", cfg, "--out", out) == 0
    report = json.loads((out / "report_sbm.json").read_text())
    assert report["mode"] == "sbm" and 0 < report["d_l1"] < 0.05


def test_exit_codes(tmp_path, capsys):
    (tmp_path / "noseed.json").write_text(json.dumps({"device": "t5"}))
    assert run("sample", "--config", tmp_path / "noseed.json", "--out", tmp_path / "o") == 2
    assert run("sample", "--config", tmp_path / "missing.json", "--out", tmp_path / "o") == 2
    assert run("evaluate", "--model", tmp_path / "nope.qcnn", "--dataset", tmp_path / "nope.jsonl", "--out", tmp_path / "o") == 3
    cfg = write_config(tmp_path / "c.json")
    assert run("train", "--config", cfg, "--out", tmp_path / "empty") == 3


def test_locked_output_directory_is_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json")
    (tmp_path / "o").mkdir()
    (tmp_path / "o" / ".lock").write_text("123")
    assert run("sample", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "locked" in capsys.readouterr().err
    assert not (tmp_path / "o" / "circuits.jsonl").exists()


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seed": 1, "colour": "blue"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seed": 1, "splits": [0.5, 0.5, 0.5]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seed": 1, "samplers": [{"widths": [9], "depths": [4], "count": 1}]})
    a = ExperimentConfig.from_dict({"seed": 1, "out": "x"})
    b = ExperimentConfig.from_dict({"seed": 1, "out": "y"})
    assert a.digest() == b.digest()


def test_named_streams_are_independent_of_order():
    a = stream(3, "splits").random(4)
    stream(3, "nested").random(10)
    assert np.array_equal(stream(3, "splits").random(4), a)
    assert not np.array_equal(stream(3, "nested").random(4), a)
