"""CSV and SVG report emission: progress series, swimlanes and error summaries."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

from .metrics import error_report  # noqa: E402

DIGITS = 6
PROGRESS_COLUMNS = ("t_ms", "indicator", "estimated_progress", "optimal_progress", "error")
SWIMLANE_COLUMNS = ("task_id", "worker", "start_ms", "end_ms", "kind")
SUMMARY_COLUMNS = ("indicator", "avgErr", "maxErr", "overhead")

# fixed SVG ids and no timestamp, so identical inputs give identical files
_SVG_RC = {"svg.hashsalt": "mrprogress", "svg.fonttype": "none"}
_SVG_META = {"Date": None, "Creator": None}

_COLORS = {"optimal": "black", "nearestfit": "tab:blue", "nearestfit-oracle": "tab:cyan",
           "hadoop": "tab:red", "jobratio": "tab:orange", "taskratio": "tab:green"}


def fmt(x):
    return f"{x:.{DIGITS}f}"


def _save(fig, path):
    with matplotlib.rc_context(_SVG_RC):
        fig.savefig(path, format="svg", metadata=_SVG_META)


def error_reports(trace, series):
    """ErrorReport per indicator, with per-point values rounded as written to CSV."""
    return {name: error_report(name, s, trace.t_start, trace.job_end, DIGITS)
            for name, s in series.items()}


def write_progress_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PROGRESS_COLUMNS)
        for name, rep in reports.items():
            for t, est, opt, err in rep.series:
                w.writerow([t, name, fmt(est), fmt(opt), fmt(err)])


def write_swimlanes_csv(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWIMLANE_COLUMNS)
        for tl in trace.timelines:
            w.writerow([f"{tl.kind}-{tl.task_id}", tl.worker, tl.start, tl.end, tl.kind])


def write_summary_csv(path, rows):
    """``rows`` are (indicator, avgErr, maxErr, overhead or None)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for name, avg, mx, ov in rows:
            w.writerow([name, fmt(avg), fmt(mx), "" if ov is None else fmt(ov)])


def plot_progress(path, trace, reports, title=None):
    fig = Figure(figsize=(7, 4.5))
    ax = fig.add_subplot()
    first = next(iter(reports.values()), None)
    if first is not None:
        secs = [(r[0] - trace.t_start) / 1000 for r in first.series]
        ax.plot(secs, [r[2] for r in first.series], color="black", lw=1.5, ls="--",
                label="optimal")
    for name, rep in reports.items():
        secs = [(r[0] - trace.t_start) / 1000 for r in rep.series]
        ax.plot(secs, [r[1] for r in rep.series], lw=1.2, color=_COLORS.get(name),
                label=f"{name} (avg {rep.avg_err:.1f})")
    ax.set_xlabel("time since reduce phase start (s)")
    ax.set_ylabel("progress (%)")
    ax.set_ylim(0, 110)
    ax.grid(alpha=0.3)
    ax.legend(loc="upper left", fontsize=8, frameon=False)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    _save(fig, path)


def plot_swimlanes(path, trace, title=None):
    """One lane per slot; map tasks in grey, reduce tasks coloured by task id."""
    fig = Figure(figsize=(7, 0.6 + 0.35 * max(trace.cluster.parallelism, 1)))
    ax = fig.add_subplot()
    cmap = matplotlib.colormaps["tab20"]
    for tl in trace.timelines:
        color = "0.7" if tl.kind == "map" else cmap(tl.task_id % 20)
        ax.barh(tl.slot, (tl.end - tl.start) / 1000, left=tl.start / 1000, height=0.8,
                color=color, edgecolor="white", lw=0.3)
    ax.axvline(trace.t_start / 1000, color="black", lw=0.8, ls=":")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("slot")
    ax.invert_yaxis()
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    _save(fig, path)


def emit_reports(trace, series, out_dir, overheads=None, title=None):
    """Write progress.csv, swimlanes.csv, summary.csv and the two SVG charts.

    ``series`` maps indicator name to (t, progress, est_end) samples;
    ``overheads`` optionally maps indicator name to its space overhead (%).
    Returns {indicator: ErrorReport}.
    """
    os.makedirs(out_dir, exist_ok=True)
    reports = error_reports(trace, series)
    overheads = overheads or {}
    write_progress_csv(os.path.join(out_dir, "progress.csv"), reports)
    write_swimlanes_csv(os.path.join(out_dir, "swimlanes.csv"), trace)
    write_summary_csv(os.path.join(out_dir, "summary.csv"),
                      [(n, r.avg_err, r.max_err, overheads.get(n)) for n, r in reports.items()])
    plot_progress(os.path.join(out_dir, "progress.svg"), trace, reports, title)
    plot_swimlanes(os.path.join(out_dir, "swimlanes.svg"), trace, title)
    return reports


def plot_sweep(path, param, rows, metric="avgErr", log=True):
    """Line chart of ``metric`` against the swept parameter, one line per indicator.

    ``rows`` are dicts with keys ``param``, ``indicator`` and ``metric``.
    """
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    names = sorted({r["indicator"] for r in rows})
    for name in names:
        pts = sorted((r[param], r[metric]) for r in rows if r["indicator"] == name)
        ax.plot([p[0] for p in pts], [max(p[1], 1e-3) if log else p[1] for p in pts],
                marker="o", color=_COLORS.get(name), label=name)
    ax.set_xlabel(param)
    ax.set_ylabel(f"{metric} (%)")
    if log:
        ax.set_yscale("log")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    _save(fig, path)
