"""Matplotlib figures written next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORS = {"baseline_ce": "#4c72b0", "cot": "#dd8452"}
LABELS = {"baseline_ce": "Baseline (CE)", "cot": "COT"}


def _save(fig, path, provenance: dict | None) -> None:
    meta = {"Software": None}
    if provenance:
        meta["Description"] = " ".join(f"{k}={v}" for k, v in sorted(provenance.items()))
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=meta)
    plt.close(fig)


def plot_training_curves(logs: dict, path, title: str = "Test error over epochs", provenance: dict | None = None) -> None:
    """Mean test-error curve per mode, shaded by the min/max over seeds."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode, runs in logs.items():
        curves = [[r.test_error for r in lg.records] for lg in runs if lg.records and lg.records[0].test_error is not None]
        if not curves:
            continue
        arr = 100.0 * np.array(curves)
        epochs = np.arange(1, arr.shape[1] + 1)
        ax.plot(epochs, arr.mean(axis=0), color=COLORS.get(mode), label=LABELS.get(mode, mode))
        if arr.shape[0] > 1:
            ax.fill_between(epochs, arr.min(axis=0), arr.max(axis=0), color=COLORS.get(mode), alpha=0.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("test error (%)")
    ax.set_title(title)
    ax.legend()
    ax.grid(alpha=0.3)
    _save(fig, path, provenance)


def plot_complement_entropy(reports: dict, path, provenance: dict | None = None) -> None:
    fig, ax = plt.subplots(figsize=(4, 4))
    modes = list(reports)
    vals = [[r.mean_normalized_complement_entropy for r in reports[m]] for m in modes]
    means = [np.mean(v) for v in vals]
    ax.bar(range(len(modes)), means, color=[COLORS.get(m) for m in modes])
    for i, v in enumerate(vals):
        ax.scatter(np.full(len(v), i), v, color="k", s=10, zorder=3)
    ax.set_xticks(range(len(modes)), [LABELS.get(m, m) for m in modes])
    ax.set_ylabel("mean normalized complement entropy")
    k = next(iter(reports.values()))[0].num_classes if any(reports.values()) else None
    if k and k > 2:
        ax.axhline(np.log(k - 1) / (k - 1), color="grey", ls="--", lw=1, label="uniform complement")
        ax.legend(loc="lower right")
    _save(fig, path, provenance)


def plot_attack_errors(rows: list[dict], path, provenance: dict | None = None) -> None:
    """Grouped bars: baseline white-box, COT white-box, COT transfer, per attack."""
    attacks = sorted({r["attack"] for r in rows})
    cols = ("baseline_white_box", "cot_white_box", "cot_transfer")
    colors = ("#4c72b0", "#dd8452", "#55a868")
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.25
    for j, (col, color) in enumerate(zip(cols, colors)):
        means = [100 * np.mean([r[col] for r in rows if r["attack"] == a]) for a in attacks]
        ax.bar(np.arange(len(attacks)) + (j - 1) * width, means, width, color=color, label=col.replace("_", " "))
    ax.set_xticks(range(len(attacks)), attacks)
    ax.set_ylabel("adversarial error (%)")
    ax.legend()
    _save(fig, path, provenance)
