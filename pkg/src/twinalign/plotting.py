"""Static charts of experiment reports.

Each chart is written twice: as SVG and as the CSV of the numbers drawn,
so figures can be regenerated or restyled elsewhere.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .exceptions import DataError

__all__ = ["plot_report"]


def _read_report(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(fh) if r.get("status") == "ok"]
    if not rows:
        raise DataError(f"{path}: no completed rows to plot")
    return rows


def _mean_sd(values):
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def _lambda_table(rows):
    out = {}
    for r in rows:
        out.setdefault((r["method"], float(r["lam"])), []).append(float(r["mantel_r"]))
    return [{"method": m, "lam": lam, "mean_r": _mean_sd(v)[0], "sd_r": _mean_sd(v)[1], "n": len(v)}
            for (m, lam), v in sorted(out.items())]


def _fit_table(rows):
    out = {}
    for r in rows:
        out.setdefault(r["method"], []).append(float(r["mantel_r"]))
    return [{"method": m, "mean_r": _mean_sd(v)[0], "sd_r": _mean_sd(v)[1], "n": len(v)}
            for m, v in sorted(out.items())]


def _baseline_table(rows):
    out = {}
    for r in rows:
        out.setdefault((r["dataset"], r["method"]), []).append((float(r["baseline"]), float(r["treatment"])))
    return [{"dataset": d, "method": m, "baseline": float(np.mean([b for b, _ in v])),
             "treatment": float(np.mean([t for _, t in v])), "n": len(v)}
            for (d, m), v in sorted(out.items())]


def _mapping_table(rows):
    out = {}
    for r in rows:
        out.setdefault(r["method"], []).append([float(r[c]) for c in ("mse_ae", "mse_mash", "mse_dta")])
    table = []
    for m, v in sorted(out.items()):
        v = np.asarray(v)
        table.append({"method": m, "mse_ae": float(v[:, 0].mean()), "mse_mash": float(v[:, 1].mean()),
                      "mse_dta": float(v[:, 2].mean()), "n": len(v)})
    return table


def _draw(harness, table, ax):
    if harness == "lambda-sweep":
        lams = sorted({t["lam"] for t in table})
        pos = {lam: i for i, lam in enumerate(lams)}
        for method in sorted({t["method"] for t in table}):
            pts = [t for t in table if t["method"] == method]
            ax.errorbar([pos[t["lam"]] for t in pts], [t["mean_r"] for t in pts],
                        yerr=[t["sd_r"] for t in pts], marker="o", capsize=3, label=method)
        ax.set_xticks(range(len(lams)), [f"{lam:g}" for lam in lams])
        ax.set_xlabel("lambda")
        ax.set_ylabel("Mantel r")
    elif harness == "embedding-fit":
        x = np.arange(len(table))
        ax.bar(x, [t["mean_r"] for t in table], yerr=[t["sd_r"] for t in table], capsize=3)
        ax.set_xticks(x, [t["method"] for t in table])
        ax.set_ylabel("mean Mantel r")
    elif harness == "baseline":
        x = np.arange(len(table))
        ax.bar(x - 0.2, [t["baseline"] for t in table], 0.4, label="baseline")
        ax.bar(x + 0.2, [t["treatment"] for t in table], 0.4, label="aligned")
        ax.set_xticks(x, [f"{t['dataset']}\n{t['method']}" for t in table], fontsize=7)
        ax.set_ylabel("kNN score")
    else:
        x = np.arange(len(table))
        for off, key, label in ((-0.27, "mse_ae", "twin AE"), (0.0, "mse_mash", "MASH"), (0.27, "mse_dta", "DTA")):
            ax.bar(x + off, [t[key] for t in table], 0.27, label=label)
        ax.set_xticks(x, [t["method"] for t in table])
        ax.set_yscale("log")
        ax.set_ylabel("cross-domain MSE")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)


TABLES = {
    "lambda-sweep": _lambda_table,
    "embedding-fit": _fit_table,
    "baseline": _baseline_table,
    "mapping": _mapping_table,
}


def plot_report(report_path, svg_path=None):
    """Render ``report_path``; returns ``(svg_path, csv_path)``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report_path = Path(report_path)
    rows = _read_report(report_path)
    harness = rows[0]["harness"]
    if harness not in TABLES:
        raise DataError(f"{report_path}: unknown harness {harness!r}")
    table = TABLES[harness](rows)
    svg_path = Path(svg_path) if svg_path else report_path.with_suffix(".svg")
    data_path = svg_path.with_name(svg_path.stem + "_plot.csv")
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    with open(data_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(table[0]))
        w.writeheader()
        w.writerows(table)
    # fixed ids and no date keep the SVG byte-identical across runs
    with matplotlib.rc_context({"svg.hashsalt": "twinalign", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        _draw(harness, table, ax)
        ax.set_title(harness)
        fig.tight_layout()
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return svg_path, data_path
