"""Experiment bundles runnable as single commands, at "desk" or "smoke" scale.

Desk scale is sized for one CPU core and a couple of hours per bundle.
Smoke scale keeps the same structure with tiny counts so the whole chain
runs in seconds; its numbers mean nothing.
"""
from __future__ import annotations

import csv
import io
import json

import numpy as np

from . import plotting
from .erm import save_erm
from .evaluation import MetricsReport
from .neuralnet import save_model
from .pipeline import (
    ExperimentConfig, OutputDir, evaluate, fit_erm_model, sample_circuits, sha256_text, simulate_datasets, train_cnn,
    write_report,
)

SCALES = ("desk", "smoke")
DEPTHS = [2, 4, 8, 16, 32, 64, 128]
SUMMARY_COLUMNS = ("preset", "label", "model", "n_circuits", "n_shots", "d_l1", "d_kl", "pearson_r")


def _scale(scale: str, desk, smoke):
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}")
    return desk if scale == "desk" else smoke


def _cnn_cfg(scale):
    return {"mode": "cnn", "budget": 1, "architecture": _scale(scale, {}, {"epochs": 3, "patience": None})}


def _depths(scale):
    return _scale(scale, DEPTHS, [2, 4, 8])


def _cnn(ds, tag, seed, out, fmt, scale, stripped=False):
    model = train_cnn(ds, _cnn_cfg(scale), seed, stripped=stripped)
    (out.path / tag).mkdir(parents=True, exist_ok=True)
    save_model(model, out.path / tag / "model.qcnn")
    report = evaluate(model, ds, "test", sha256_text(ds.dumps())[:16], f"{tag}/cnn")
    write_report(out, report, f"{tag}/report", fmt)
    return model, report


def _erm(ds, tag, out, fmt):
    params = fit_erm_model(ds)
    (out.path / tag).mkdir(parents=True, exist_ok=True)
    save_erm(params, out.path / tag / "erm.json")
    report = evaluate(params, ds, "test", sha256_text(ds.dumps())[:16], f"{tag}/erm")
    write_report(out, report, f"{tag}/report_erm", fmt)
    return params, report


def _row(preset, label, model, report: MetricsReport, n_circuits=None, n_shots="inf"):
    return {"preset": preset, "label": label, "model": model, "n_circuits": n_circuits, "n_shots": n_shots,
            "d_l1": report.d_l1, "d_kl": report.d_kl, "pearson_r": report.pearson_r}


def _write_summary(out: OutputDir, preset, rows, fmt, extra=None):
    summary = {"preset": preset, "rows": rows, **(extra or {})}
    out.write("summary.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows({k: r[k] for k in SUMMARY_COLUMNS} for r in rows)
        out.write("summary.csv", buf.getvalue())
    else:
        out.write("summary.jsonl", "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))
    return summary


def _simulate(cfg: ExperimentConfig, out: OutputDir, jobs, prefix=""):
    circuits, kinds = sample_circuits(cfg)
    model, datasets = simulate_datasets(cfg, circuits, kinds, jobs)
    for name, ds in datasets.items():
        out.write(prefix + name, ds.dumps())
    return model, datasets


def lps_config(seed, scale) -> ExperimentConfig:
    """5-qubit T device, biased stochastic Pauli errors, nested training sets."""
    return ExperimentConfig.from_dict({
        "seed": seed, "device": "t5",
        "samplers": [{"kind": "randomized", "widths": [1, 2, 3, 4, 5], "depths": _depths(scale), "xi": 0.5,
                      "count": _scale(scale, 2500, 120)}],
        "error_model": {"variant": "biased_lps"},
        "n_shots": [100, "inf"],
        "splits": [0.64, 0.16, 0.20],
        "nested_sizes": _scale(scale, [90, 270, 900, 2000], [30, 60, 96]),
        "d_max": max(_depths(scale)),
    })


def preset_5q_lps(out: OutputDir, seed=0, scale="desk", jobs=1, fmt="csv"):
    """Learning curves on the 5-qubit T device: CNN and fitted ERM over nested training sets and shot counts."""
    cfg = lps_config(seed, scale)
    _, datasets = _simulate(cfg, out, jobs)
    rows = []
    for n in cfg.nested_sizes:
        for shots in cfg.n_shots:
            ds = datasets[f"dataset_n{n}_shots-{shots}.jsonl"]
            tag = f"n{n}_shots-{shots}"
            _, rep = _cnn(ds, tag, seed, out, fmt, scale)
            rows.append(_row("5q-lps", tag, "cnn", rep, n, shots))
            _, rep = _erm(ds, tag, out, fmt)
            rows.append(_row("5q-lps", tag, "f-erm", rep, n, shots))
    for r in rows:
        r["series"] = f"{r['model']} shots={r['n_shots']}"
    plotting.l1_grid(rows, out.path / "l1_vs_circuits.png", series="series")
    return _write_summary(out, "5q-lps", rows, fmt)


def quartile_deltas(report: MetricsReport) -> list:
    """Mean delta within each quartile of observed success probability, lowest first."""
    s = np.array([r["s_hat"] for r in report.rows])
    d = np.array([r["delta"] for r in report.rows])
    order = np.argsort(s, kind="stable")
    return [float(d[part].mean()) for part in np.array_split(order, 4)]


def preset_nonmarkovian(out: OutputDir, seed=0, scale="desk", jobs=1, fmt="csv"):
    """3x3 grid: depth-dependent growth and consecutive-CNOT penalties."""
    rows, extra = [], {}
    for variant in ("growing_pains", "double_trouble"):
        cfg = ExperimentConfig.from_dict({
            "seed": seed, "device": "grid3x3",
            "samplers": [{"kind": "randomized", "widths": list(range(1, 10)), "depths": _depths(scale), "xi": 0.5,
                          "count": _scale(scale, 3000, 60)}],
            "error_model": {"variant": variant, "hi": 0.001},
            "splits": [0.7, 0.2, 0.1],
            "d_max": max(_depths(scale)),
        })
        _, datasets = _simulate(cfg, out, jobs, prefix=f"{variant}/")
        ds = datasets["dataset_shots-inf.jsonl"]
        _, cnn_rep = _cnn(ds, variant, seed, out, fmt, scale)
        _, erm_rep = _erm(ds, variant, out, fmt)
        rows += [_row("nonmarkovian", variant, "cnn", cnn_rep, len(ds)), _row("nonmarkovian", variant, "f-erm", erm_rep, len(ds))]
        extra[f"{variant}_erm_quartile_mean_delta"] = quartile_deltas(erm_rep)
    return _write_summary(out, "nonmarkovian", rows, fmt, extra)


def preset_coherent(out: OutputDir, seed=0, scale="desk", jobs=1, fmt="csv"):
    """5-qubit T device with coherent over-rotations, labelled by statevector simulation."""
    cfg = ExperimentConfig.from_dict({
        "seed": seed, "device": "t5",
        "samplers": [{"kind": "randomized", "widths": [1, 2, 3, 4, 5], "depths": _depths(scale), "xi": 0.5,
                      "count": _scale(scale, 2000, 60)}],
        "error_model": {"variant": "coherent", "target_infidelity": 0.05},
        "splits": [0.7, 0.2, 0.1],
        "backend": "statevector",
        "d_max": max(_depths(scale)),
    })
    _, datasets = _simulate(cfg, out, jobs)
    ds = datasets["dataset_shots-inf.jsonl"]
    _, cnn_rep = _cnn(ds, "coherent", seed, out, fmt, scale)
    _, erm_rep = _erm(ds, "coherent", out, fmt)
    rows = [_row("coherent", "coherent", "cnn", cnn_rep, len(ds)), _row("coherent", "coherent", "f-erm", erm_rep, len(ds))]
    extra = {"max_abs_delta": {"cnn": max(abs(r["delta"]) for r in cnn_rep.rows),
                               "f-erm": max(abs(r["delta"]) for r in erm_rep.rows)}}
    return _write_summary(out, "coherent", rows, fmt, extra)


def preset_ablation(out: OutputDir, seed=0, scale="desk", jobs=1, fmt="csv"):
    """Same data and architecture with and without the sensitivity channels."""
    cfg = lps_config(seed, scale)
    cfg.nested_sizes = []
    cfg.n_shots = ["inf"]
    _, datasets = _simulate(cfg, out, jobs)
    ds = datasets["dataset_shots-inf.jsonl"]
    _, full = _cnn(ds, "full", seed, out, fmt, scale)
    _, stripped = _cnn(ds, "stripped", seed, out, fmt, scale, stripped=True)
    rows = [_row("ablation", "full", "cnn", full, len(ds)), _row("ablation", "stripped", "cnn", stripped, len(ds))]
    return _write_summary(out, "ablation", rows, fmt, {"ratio": stripped.d_l1 / full.d_l1})


def preset_ood(out: OutputDir, seed=0, scale="desk", jobs=1, fmt="csv"):
    """Train on randomized mirror circuits, test on periodic ones, then retrain on periodic data."""
    count = _scale(scale, 2500, 120)
    cfg = ExperimentConfig.from_dict({
        "seed": seed, "device": "t5",
        "samplers": [
            {"kind": "randomized", "widths": [1, 2, 3, 4, 5], "depths": _depths(scale), "xi": 0.5, "count": count},
            {"kind": "periodic", "widths": [1, 2, 3, 4, 5], "depths": _depths(scale), "xi": 0.5, "count": count,
             "germ_lengths": [1, 2]},
        ],
        "error_model": {"variant": "biased_lps"},
        "splits": [0.64, 0.16, 0.20],
        "d_max": max(_depths(scale)),
    })
    _, datasets = _simulate(cfg, out, jobs)
    both = datasets["dataset_shots-inf.jsonl"]
    rmc = both.subset([r for r in both.records if r["kind"] == "randomized"])
    pmc = both.subset([r for r in both.records if r["kind"] == "periodic"])
    out.write("dataset_rmc.jsonl", rmc.dumps())
    out.write("dataset_pmc.jsonl", pmc.dumps())
    model, in_rep = _cnn(rmc, "rmc", seed, out, fmt, scale)
    cross = evaluate(model, pmc, "test", sha256_text(pmc.dumps())[:16], "rmc/cnn")
    write_report(out, cross, "rmc/report_on_pmc", fmt)
    _, retrain = _cnn(pmc, "pmc", seed, out, fmt, scale)
    rows = [_row("ood", "rmc->rmc", "cnn", in_rep, len(rmc)), _row("ood", "rmc->pmc", "cnn", cross, len(rmc)),
            _row("ood", "pmc->pmc", "cnn", retrain, len(pmc))]
    return _write_summary(out, "ood", rows, fmt, {"cross_out_of_distribution": cross.extra["out_of_distribution"]})


PRESETS = {
    "preset-5q-lps": preset_5q_lps,
    "preset-nonmarkovian": preset_nonmarkovian,
    "preset-coherent": preset_coherent,
    "preset-ablation": preset_ablation,
    "preset-ood": preset_ood,
}
