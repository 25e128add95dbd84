"""Report figures rendered to PNG files with the non-interactive Agg backend."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG bytes identical across reruns
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=90, metadata=_META)
    plt.close(fig)
    return path


def prediction_scatter(rows, path, title=""):
    s_hat = np.array([r["s_hat"] for r in rows])
    s_model = np.array([r["s_model"] for r in rows])
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot([0, 1], [0, 1], color="0.6", lw=1)
    ax.scatter(s_hat, s_model, s=6, alpha=0.6)
    ax.set_xlabel("observed success probability")
    ax.set_ylabel("predicted success probability")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def delta_histogram(rows, path, title=""):
    delta = np.array([r["delta"] for r in rows])
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.hist(delta, bins=40)
    ax.axvline(0, color="0.3", lw=1)
    ax.set_xlabel("observed minus predicted")
    ax.set_ylabel("circuits")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def l1_grid(rows, path, x="n_circuits", series="label", title=""):
    """Mean absolute error against ``x`` (log axis), one line per ``series`` value."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name in sorted({r[series] for r in rows}):
        pts = sorted((r[x], r["d_l1"]) for r in rows if r[series] == name)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(x.replace("_", " "))
    ax.set_ylabel("mean absolute error")
    ax.legend(fontsize=7)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def report_figures(report, stem) -> list:
    """Scatter and error histogram next to a report; ``stem`` is a path prefix."""
    stem = str(stem)
    return [prediction_scatter(report.rows, stem + "_scatter.png", report.model_id),
            delta_histogram(report.rows, stem + "_delta.png", report.model_id)]
