"""Result artifacts: aggregated summaries, curve files, plot data, figures.

A "run directory" is the output of one training invocation: per-run
``curves_run<k>.csv`` files plus a ``summary.json``. Reports are a pure
function of those inputs (no timestamps, fixed float formatting), so
re-running a report over unchanged runs changes no byte. Figures are
self-contained SVG line plots written without any plotting dependency.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import EpochMismatch, MissingRuns


def read_curves(path: Path) -> dict[str, list[float]]:
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().strip().split(",")
        rows = [line.strip().split(",") for line in handle if line.strip()]
    columns = {name: [] for name in header}
    for row in rows:
        for name, cell in zip(header, row):
            columns[name].append(float(cell))
    return columns


def collect_runs(run_dirs: list[Path]) -> tuple[list[dict], list[dict]]:
    """Gather (per-run curve dicts, per-run test metrics) across directories."""
    curves: list[dict] = []
    tests: list[dict] = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        files = sorted(run_dir.glob("curves_run*.csv"))
        summary_path = run_dir / "summary.json"
        if not files or not summary_path.exists():
            continue
        with open(summary_path, "r", encoding="utf-8") as handle:
            summary = json.load(handle)
        for path, run in zip(files, summary.get("runs", [])):
            curves.append(read_curves(path))
            tests.append(run)
    if not curves:
        raise MissingRuns(f"no completed runs under {[str(d) for d in run_dirs]}")
    epochs = {len(c["epoch"]) for c in curves}
    if len(epochs) != 1:
        raise EpochMismatch(f"runs disagree on epoch count: {sorted(epochs)}")
    return curves, tests


def _mean_var(rows: list[list[float]]) -> tuple[list[float], list[float]]:
    arr = np.array(rows)
    mean = arr.mean(axis=0)
    var = arr.var(axis=0, ddof=1) if arr.shape[0] > 1 else np.zeros(arr.shape[1])
    return mean.tolist(), var.tolist()


def _scalar_mean_var(values: list[float]) -> dict[str, float]:
    arr = np.array(values, dtype=np.float64)
    var = float(arr.var(ddof=1)) if len(arr) > 1 else 0.0
    return {"mean": float(arr.mean()), "variance": var}


def write_plot_data(path: Path, xs: list[float], ys: list[float]) -> None:
    """Two-column plain numeric text, one sample per line."""
    with open(path, "w", encoding="utf-8") as handle:
        for x, y in zip(xs, ys):
            handle.write(f"{x!r} {y!r}\n")


def write_report(run_dirs: list[Path], out_dir: Path) -> dict:
    """Aggregate one or more run directories into report artifacts.

    Emits ``summary.json``, a long-format ``curves.csv`` (per-run rows plus
    mean and variance rows), two-column ``.dat`` plot series and one SVG
    figure per plotted quantity. Returns the summary dict.
    """
    out_dir = Path(out_dir)
    curves, tests = collect_runs([Path(d) for d in run_dirs])
    out_dir.mkdir(parents=True, exist_ok=True)
    epochs = curves[0]["epoch"]

    mean_loss, var_loss = _mean_var([c["train_loss"] for c in curves])
    mean_tauc, var_tauc = _mean_var([c["train_auc"] for c in curves])
    mean_vauc, var_vauc = _mean_var([c["val_auc"] for c in curves])
    summary = {
        "n_runs": len(curves),
        "runs": tests,
        "test_auc": _scalar_mean_var([t["test_auc"] for t in tests]),
        "test_accuracy": _scalar_mean_var([t["test_accuracy"] for t in tests]),
        "curves": {
            "train_loss": {"mean": mean_loss, "variance": var_loss},
            "train_auc": {"mean": mean_tauc, "variance": var_tauc},
            "val_auc": {"mean": mean_vauc, "variance": var_vauc},
        },
        "provenance": {"run_dirs": [str(d) for d in run_dirs]},
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as handle:
        json.dump(summary, handle, sort_keys=True, indent=2)
        handle.write("\n")

    with open(out_dir / "curves.csv", "w", encoding="utf-8") as handle:
        handle.write("series,epoch,train_loss,train_auc,val_auc\n")
        for k, c in enumerate(curves):
            for i, e in enumerate(epochs):
                handle.write(
                    f"run{k},{int(e)},{c['train_loss'][i]!r},{c['train_auc'][i]!r},{c['val_auc'][i]!r}\n"
                )
        for name, (loss, tauc, vauc) in {
            "mean": (mean_loss, mean_tauc, mean_vauc),
            "variance": (var_loss, var_tauc, var_vauc),
        }.items():
            for i, e in enumerate(epochs):
                handle.write(f"{name},{int(e)},{loss[i]!r},{tauc[i]!r},{vauc[i]!r}\n")

    write_plot_data(out_dir / "loss.dat", epochs, mean_loss)
    write_plot_data(out_dir / "train_auc.dat", epochs, mean_tauc)
    write_plot_data(out_dir / "val_auc.dat", epochs, mean_vauc)
    write_plot_data(out_dir / "val_auc_variance.dat", epochs, var_vauc)

    per_run_loss = [(f"run{k}", epochs, c["train_loss"]) for k, c in enumerate(curves)]
    per_run_vauc = [(f"run{k}", epochs, c["val_auc"]) for k, c in enumerate(curves)]
    render_svg(out_dir / "loss.svg", "training loss", per_run_loss + [("mean", epochs, mean_loss)])
    render_svg(out_dir / "auc.svg", "validation AUC", per_run_vauc + [("mean", epochs, mean_vauc)])
    render_svg(out_dir / "auc_variance.svg", "validation AUC variance", [("variance", epochs, var_vauc)])
    return summary


def compare(run_sets: list[tuple[str, Path]], out_dir: Path) -> dict:
    """Side-by-side comparison of labeled run sets (first label = baseline).

    Writes ``table.csv`` with final metrics and deltas, per-epoch delta
    series against the baseline, one overlay data file per label, and an
    overlay figure. All sets must share the epoch count.
    """
    if len(run_sets) < 2:
        raise MissingRuns("compare needs at least two labeled run sets")
    out_dir = Path(out_dir)
    loaded = []
    for label, run_dir in run_sets:
        curves, tests = collect_runs([Path(run_dir)])
        mean_vauc, var_vauc = _mean_var([c["val_auc"] for c in curves])
        mean_loss, _ = _mean_var([c["train_loss"] for c in curves])
        loaded.append(
            {
                "label": label,
                "epochs": curves[0]["epoch"],
                "val_auc": mean_vauc,
                "val_auc_var": var_vauc,
                "loss": mean_loss,
                "test_auc": _scalar_mean_var([t["test_auc"] for t in tests]),
                "test_accuracy": _scalar_mean_var([t["test_accuracy"] for t in tests]),
            }
        )
    lengths = {len(entry["epochs"]) for entry in loaded}
    if len(lengths) != 1:
        raise EpochMismatch(f"epoch counts differ between run sets: {sorted(lengths)}")
    out_dir.mkdir(parents=True, exist_ok=True)

    base = loaded[0]
    rows = []
    for entry in loaded:
        rows.append(
            {
                "label": entry["label"],
                "test_auc_mean": entry["test_auc"]["mean"],
                "test_auc_variance": entry["test_auc"]["variance"],
                "test_accuracy_mean": entry["test_accuracy"]["mean"],
                "test_accuracy_variance": entry["test_accuracy"]["variance"],
                "delta_test_auc": entry["test_auc"]["mean"] - base["test_auc"]["mean"],
            }
        )
    with open(out_dir / "table.csv", "w", encoding="utf-8") as handle:
        handle.write(
            "label,test_auc_mean,test_auc_variance,test_accuracy_mean,test_accuracy_variance,delta_test_auc\n"
        )
        for row in rows:
            handle.write(
                f"{row['label']},{row['test_auc_mean']!r},{row['test_auc_variance']!r},"
                f"{row['test_accuracy_mean']!r},{row['test_accuracy_variance']!r},{row['delta_test_auc']!r}\n"
            )

    epochs = base["epochs"]
    for entry in loaded:
        write_plot_data(out_dir / f"val_auc_{entry['label']}.dat", epochs, entry["val_auc"])
    with open(out_dir / "deltas.csv", "w", encoding="utf-8") as handle:
        others = loaded[1:]
        handle.write("epoch," + ",".join(f"{e['label']}-{base['label']}" for e in others) + "\n")
        for i, e in enumerate(epochs):
            deltas = [entry["val_auc"][i] - base["val_auc"][i] for entry in others]
            handle.write(f"{int(e)}," + ",".join(repr(d) for d in deltas) + "\n")
    render_svg(
        out_dir / "auc_compare.svg",
        "validation AUC by run set",
        [(entry["label"], epochs, entry["val_auc"]) for entry in loaded],
    )
    return {"table": rows}


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#7f7f7f")


def render_svg(
    path: Path,
    title: str,
    series: list[tuple[str, list[float], list[float]]],
    width: int = 720,
    height: int = 440,
) -> None:
    """Minimal deterministic SVG line chart (axes, ticks, legend)."""
    pad_l, pad_r, pad_t, pad_b = 60, 150, 40, 45
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    span_x, span_y = x_hi - x_lo, y_hi - y_lo
    y_lo -= 0.05 * span_y
    y_hi += 0.05 * span_y
    plot_w = width - pad_l - pad_r
    plot_h = height - pad_t - pad_b

    def sx(x: float) -> float:
        return pad_l + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return pad_t + (1 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{pad_l}" y="24" font-family="sans-serif" font-size="15">{title}</text>',
        f'<rect x="{pad_l}" y="{pad_t}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333" stroke-width="1"/>',
    ]
    for k in range(5):
        gx = x_lo + (x_hi - x_lo) * k / 4
        gy = y_lo + (y_hi - y_lo) * k / 4
        parts.append(
            f'<line x1="{sx(gx):.2f}" y1="{pad_t}" x2="{sx(gx):.2f}" y2="{pad_t + plot_h}" '
            f'stroke="#ddd" stroke-width="0.5"/>'
        )
        parts.append(
            f'<line x1="{pad_l}" y1="{sy(gy):.2f}" x2="{pad_l + plot_w}" y2="{sy(gy):.2f}" '
            f'stroke="#ddd" stroke-width="0.5"/>'
        )
        parts.append(
            f'<text x="{sx(gx):.2f}" y="{height - 18}" font-family="sans-serif" font-size="11" '
            f'text-anchor="middle">{gx:.4g}</text>'
        )
        parts.append(
            f'<text x="{pad_l - 8}" y="{sy(gy) + 4:.2f}" font-family="sans-serif" font-size="11" '
            f'text-anchor="end">{gy:.4g}</text>'
        )
    for idx, (label, xs, ys) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = pad_t + 16 + idx * 18
        parts.append(
            f'<line x1="{width - pad_r + 10}" y1="{ly - 4}" x2="{width - pad_r + 34}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{width - pad_r + 40}" y="{ly}" font-family="sans-serif" '
            f'font-size="12">{label}</text>'
        )
    parts.append("</svg>\n")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(parts))
