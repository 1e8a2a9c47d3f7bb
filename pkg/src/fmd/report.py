"""Human-readable report rendering: aligned text tables, delimited table
files, and matplotlib figures saved alongside them.

The JSON report is the source of truth; everything here is a projection
of it (plus score records and sample images for the figures).
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scoring import denoise_for_scoring

ATTACKS = ("fgsm", "bim")
FILTERS = ("median", "wiener")
CLASSIFIERS = ("knn", "dtree", "rforest", "svm")


def _fmt(x) -> str:
    return "  -  " if x is None else f"{x:.3f}"


def format_report(report: dict) -> str:
    """Aligned text rendering of the detection tables."""
    lines = []
    model = report["model"]
    lines.append("== Model ==")
    lines.append(
        f"train accuracy {_fmt(model['train_accuracy'])}   "
        f"held-out accuracy {_fmt(model['val_accuracy'])}   "
        f"epochs {len(model['epochs'])}"
    )
    lines.append("")
    lines.append("== Attacks ==")
    for method in ATTACKS:
        a = report["attacks"][method]
        lines.append(
            f"{method:<6} n {a['n']:>4}   success rate {_fmt(a['success_rate'])}   "
            f"max linf {a['max_linf']:.6f}"
        )
    lines.append("")
    lines.append("== Known-attack detection accuracy ==")
    header = f"{'':8}" + "".join(f"{f'{flt}/{c}':>16}" for flt in FILTERS for c in CLASSIFIERS)
    lines.append(header)
    for method in ATTACKS:
        cells = []
        for flt in FILTERS:
            row = report["known_attack"][method][flt]
            for c in CLASSIFIERS:
                cells.append(_fmt(row[c]["metrics"]["accuracy"] if c in row else None))
        lines.append(f"{method:<8}" + "".join(f"{cell:>16}" for cell in cells))
    lines.append("")
    lines.append("== Hybrid detection (best classifier per filter) ==")
    lines.append(f"{'':10}" + "".join(f"{flt:>12}" for flt in FILTERS))
    for method in ATTACKS:
        cells = [
            _fmt(report["hybrid"][flt]["metrics"]["detection_rates"].get(method))
            for flt in FILTERS
        ]
        lines.append(f"{method:<10}" + "".join(f"{c:>12}" for c in cells))
    lines.append(
        f"{'overall':<10}"
        + "".join(f"{_fmt(report['hybrid'][flt]['metrics']['accuracy']):>12}" for flt in FILTERS)
    )
    lines.append(
        f"{'chosen':<10}"
        + "".join(f"{report['hybrid'][flt]['best_classifier']:>12}" for flt in FILTERS)
    )
    lines.append("")
    return "\n".join(lines)


def write_tables(known_path, hybrid_path, report: dict) -> None:
    """Delimited versions of the two detection tables."""
    with open(known_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["attack", "filter", "classifier", "accuracy", "detection_rate", "cv_accuracy"])
        for method in ATTACKS:
            for flt in FILTERS:
                row = report["known_attack"][method][flt]
                for kind, cell in row.items():
                    writer.writerow(
                        [
                            method,
                            flt,
                            kind,
                            f"{cell['metrics']['accuracy']:.9g}",
                            f"{cell['metrics']['detection_rates'][method]:.9g}",
                            f"{cell['cv_accuracy']:.9g}",
                        ]
                    )
    with open(hybrid_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["filter", "classifier", "overall_accuracy", "fgsm_rate", "bim_rate"])
        for flt in FILTERS:
            cell = report["hybrid"][flt]
            rates = cell["metrics"]["detection_rates"]
            writer.writerow(
                [
                    flt,
                    cell["best_classifier"],
                    f"{cell['metrics']['accuracy']:.9g}",
                    f"{rates.get('fgsm', 0.0):.9g}",
                    f"{rates.get('bim', 0.0):.9g}",
                ]
            )


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def write_figures(outdir, report: dict, score_records: dict, samples: dict, cfg) -> list[str]:
    """Render the report's figures; returns the written paths."""
    os.makedirs(outdir, exist_ok=True)
    written = []

    # training curve
    epochs = report["model"]["epochs"]
    if epochs:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        xs = [e["epoch"] for e in epochs]
        ax.plot(xs, [e["train_accuracy"] for e in epochs], marker="o", label="train")
        ax.plot(xs, [e["val_accuracy"] for e in epochs], marker="s", label="held-out")
        ax.set_xlabel("epoch")
        ax.set_ylabel("accuracy")
        ax.set_ylim(0, 1.02)
        ax.legend()
        fig.tight_layout()
        path = os.path.join(outdir, "training_curve.png")
        _save(fig, path)
        written.append(path)

    # score distributions, one panel per attack x filter
    fig, axes = plt.subplots(len(ATTACKS), len(FILTERS), figsize=(9, 6), sharex="col")
    for i, method in enumerate(ATTACKS):
        for j, flt in enumerate(FILTERS):
            ax = axes[i][j]
            records = score_records[(method, flt)]
            adv = [r.score for r in records if r.label == 1]
            clean = [r.score for r in records if r.label == 0]
            bins = np.linspace(0.0, max(max(adv), max(clean), 1e-6), 30)
            ax.hist(clean, bins=bins, alpha=0.6, label="legitimate")
            ax.hist(adv, bins=bins, alpha=0.6, label="adversarial")
            ax.set_title(f"{method} / {flt}", fontsize=10)
            if i == len(ATTACKS) - 1:
                ax.set_xlabel("score")
            if j == 0:
                ax.set_ylabel("count")
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(outdir, "score_distributions.png")
    _save(fig, path)
    written.append(path)

    # known-attack detection accuracy bars
    fig, axes = plt.subplots(1, len(FILTERS), figsize=(9, 3.5), sharey=True)
    width = 0.35
    for j, flt in enumerate(FILTERS):
        ax = axes[j]
        kinds = [c for c in CLASSIFIERS if c in report["known_attack"]["fgsm"][flt]]
        xs = np.arange(len(kinds))
        for o, method in enumerate(ATTACKS):
            accs = [report["known_attack"][method][flt][c]["metrics"]["accuracy"] for c in kinds]
            ax.bar(xs + (o - 0.5) * width, accs, width, label=method)
        ax.set_xticks(xs)
        ax.set_xticklabels(kinds)
        ax.set_ylim(0, 1.0)
        ax.set_title(f"{flt} filter")
        if j == 0:
            ax.set_ylabel("detection accuracy")
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(outdir, "known_attack_rates.png")
    _save(fig, path)
    written.append(path)

    # hybrid rates
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    groups = list(ATTACKS) + ["overall"]
    xs = np.arange(len(groups))
    for o, flt in enumerate(FILTERS):
        cell = report["hybrid"][flt]
        vals = [cell["metrics"]["detection_rates"].get(m, 0.0) for m in ATTACKS]
        vals.append(cell["metrics"]["accuracy"])
        ax.bar(xs + (o - 0.5) * 0.35, vals, 0.35, label=flt)
    ax.set_xticks(xs)
    ax.set_xticklabels(groups)
    ax.set_ylim(0, 1.0)
    ax.set_ylabel("rate")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(outdir, "hybrid_rates.png")
    _save(fig, path)
    written.append(path)

    # sample grids: adversarial, denoised adversarial, clean, denoised clean
    pairings = {"median": "fgsm", "wiener": "bim"}
    for flt, method in pairings.items():
        sample = samples[method]
        count = len(sample["ids"])
        if count == 0:
            continue
        fig, axes = plt.subplots(4, count, figsize=(1.4 * count, 5.8))
        row_titles = ("adversarial", "denoised adv", "legitimate", "denoised legit")
        for col in range(count):
            adv = sample["adversarial"][col]
            clean = sample["clean"][col]
            imgs = (
                adv,
                denoise_for_scoring(adv, flt, cfg.median_window, cfg.wiener_window),
                clean,
                denoise_for_scoring(clean, flt, cfg.median_window, cfg.wiener_window),
            )
            for row in range(4):
                ax = axes[row][col] if count > 1 else axes[row]
                ax.imshow(np.clip(imgs[row], 0, 1))
                ax.set_xticks(())
                ax.set_yticks(())
                if col == 0:
                    ax.set_ylabel(row_titles[row], fontsize=8)
        fig.suptitle(f"{method} attack, {flt} filter", fontsize=10)
        fig.tight_layout()
        path = os.path.join(outdir, f"examples_{flt}.png")
        _save(fig, path)
        written.append(path)
    return written
