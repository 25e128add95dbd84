"""Prediction-quality metrics, per-circuit errors and the stability baseline."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

LOG_CLAMP = 1e-12
CSV_COLUMNS = ("circuit_id", "width", "depth", "kind", "split", "s_hat", "s_model", "delta")


def _pair(s_hat, s_model):
    a = np.asarray(s_hat, dtype=float)
    b = np.asarray(s_model, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("metrics need at least one circuit")
    return a, b


def _xlogy(x, y):
    return np.where(x > 0, x * np.log(np.clip(y, LOG_CLAMP, None)), 0.0)


def kl_divergence(s_hat, s_model) -> float:
    """Mean over circuits of KL((s_hat, 1 - s_hat) || (s_model, 1 - s_model))."""
    a, b = _pair(s_hat, s_model)
    cross = -(_xlogy(a, b) + _xlogy(1 - a, 1 - b))
    ent = -(_xlogy(a, a) + _xlogy(1 - a, 1 - a))
    return float(np.mean(cross - ent))


def l1_error(s_hat, s_model) -> float:
    a, b = _pair(s_hat, s_model)
    return float(np.mean(np.abs(b - a)))


def pearson_r(s_hat, s_model):
    """Sample correlation, or ``None`` when either list is constant.

    A perfect correlation does not imply accurate predictions: any increasing
    affine map of the estimates scores 1.
    """
    a, b = _pair(s_hat, s_model)
    if a.size < 2:
        raise ValueError("correlation needs at least two circuits")
    da, db = a - a.mean(), b - b.mean()
    na, nb = np.sqrt(np.dot(da, da)), np.sqrt(np.dot(db, db))
    if na == 0 or nb == 0:
        return None
    return float(np.clip(np.dot(da, db) / (na * nb), -1.0, 1.0))


def prediction_errors(dataset, predict_fn) -> list:
    """One row per record with delta = s_hat - s_model (positive: model too pessimistic)."""
    preds = np.asarray(predict_fn(dataset), dtype=float)
    rows = []
    for r, p in zip(dataset.records, preds):
        rows.append({
            "circuit_id": r["circuit_id"], "width": r["width"], "depth": r["depth"],
            "kind": r.get("kind", ""), "split": r["split"],
            "s_hat": float(r["s_hat"]), "s_model": float(p), "delta": float(r["s_hat"] - p),
        })
    return rows


def _group(rows, key):
    groups = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r)
    out = []
    for k in sorted(groups):
        g = groups[k]
        d = np.array([r["delta"] for r in g])
        out.append({key: k, "count": len(g), "d_l1": float(np.abs(d).mean()), "mean_delta": float(d.mean())})
    return out


@dataclass
class MetricsReport:
    d_kl: float
    d_l1: float
    pearson_r: float | None
    rows: list
    dataset_id: str = ""
    model_id: str = ""
    breakdowns: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows, dataset_id="", model_id="", extra=None) -> "MetricsReport":
        s_hat = [r["s_hat"] for r in rows]
        s_model = [r["s_model"] for r in rows]
        r = pearson_r(s_hat, s_model) if len(rows) >= 2 else None
        breakdowns = {key: _group(rows, key) for key in ("kind", "width", "depth")}
        return cls(kl_divergence(s_hat, s_model), l1_error(s_hat, s_model), r, rows,
                   dataset_id, model_id, breakdowns, dict(extra or {}))

    def summary(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "model_id": self.model_id,
            "n_circuits": len(self.rows),
            "d_kl": self.d_kl,
            "d_l1": self.d_l1,
            "pearson_r": "undefined" if self.pearson_r is None else self.pearson_r,
            "breakdowns": self.breakdowns,
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow({k: r[k] for k in CSV_COLUMNS})
        return buf.getvalue()

    def to_jsonl(self) -> str:
        return "".join(json.dumps({k: r[k] for k in CSV_COLUMNS}, sort_keys=True) + "\n" for r in self.rows)


def metrics_report(dataset, predict_fn, dataset_id="", model_id="", extra=None) -> MetricsReport:
    return MetricsReport.from_rows(prediction_errors(dataset, predict_fn), dataset_id, model_id, extra)


def sbm_metrics(pass1, pass2) -> MetricsReport:
    """Score pass-2 estimates as predictions of the pass-1 estimates."""
    second = {r["circuit_id"]: r["s_hat"] for r in pass2.records}
    first = {r["circuit_id"] for r in pass1.records}
    if first != set(second):
        missing = len(first - set(second))
        extra = len(set(second) - first)
        raise DataError(f"passes do not share circuit ids ({missing} only in pass 1, {extra} only in pass 2)")
    return metrics_report(pass1, lambda ds: [second[r["circuit_id"]] for r in ds.records],
                          pass1.meta.get("name", "pass1"), "sbm")
