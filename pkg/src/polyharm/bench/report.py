"""History output: CSV, text summary, convergence plot and rate fits."""

from __future__ import annotations

import csv
import math
import threading
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..adaptivity import HISTORY_FIELDS

__all__ = ["fit_rate", "write_history_csv", "read_history_csv", "write_report", "write_convergence_svg"]

_PLOT_LOCK = threading.Lock()


def fit_rate(ndof: Sequence[float], values: Sequence[float], window: int | None = None) -> float:
    """Least-squares slope of ``log(values)`` against ``log(ndof)`` over the last ``window`` points."""
    x = np.asarray(ndof, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is not None:
        x, y = x[-window:], y[-window:]
    if len(x) < 2 or (window is not None and len(x) < window):
        raise ValueError("not enough history rows to fit a rate")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("rate fitting needs positive finite values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_history_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_FIELDS)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in HISTORY_FIELDS])


def read_history_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            row = dict(r)
            for key in ("level", "nvert", "nelem", "ndof"):
                row[key] = int(row[key])
            for key in ("err_sigma", "lambda", "mu", "seconds"):
                row[key] = float(row[key])
            out.append(row)
    return out


def _estimator(rows) -> np.ndarray:
    return np.array([math.hypot(r["lambda"], r["mu"]) for r in rows])


def summary_lines(rows: list, header: dict, window: int = 3) -> list:
    lines = [f"{k}: {v}" for k, v in header.items()]
    lines.append(f"levels computed: {len(rows)}")
    if rows:
        lines.append(f"final ndof: {rows[-1]['ndof']}")
    ndof = [r["ndof"] for r in rows]
    est = _estimator(rows)
    try:
        lines.append(f"estimator slope (last {window}): {fit_rate(ndof, est, window):.4f}")
    except ValueError:
        lines.append("estimator slope: n/a")
    err = np.array([r["err_sigma"] for r in rows])
    if len(err) and np.all(np.isfinite(err)):
        try:
            lines.append(f"error slope (last {window}): {fit_rate(ndof, err, window):.4f}")
        except ValueError:
            lines.append("error slope: n/a")
        ratio = est / err
        lines.append(f"estimator/error ratio: min {ratio.min():.4f}, max {ratio.max():.4f}")
    branches = [r["branch"] for r in rows]
    lines.append("branches: " + ", ".join(f"{b}={branches.count(b)}" for b in sorted(set(branches))))
    return lines


def write_report(rows: list, header: dict, path, window: int = 3) -> None:
    Path(path).write_text("\n".join(summary_lines(rows, header, window)) + "\n")


def write_convergence_svg(rows: list, path, title: str = "") -> None:
    """Log-log plot of the error and estimator against ndof."""
    import matplotlib
    from matplotlib.backends.backend_svg import FigureCanvasSVG
    from matplotlib.figure import Figure

    ndof = np.array([r["ndof"] for r in rows], dtype=float)
    est = _estimator(rows)
    err = np.array([r["err_sigma"] for r in rows])
    with _PLOT_LOCK, matplotlib.rc_context({"svg.hashsalt": "polyharm"}):
        fig = Figure(figsize=(6, 4.5))
        FigureCanvasSVG(fig)
        ax = fig.add_subplot(1, 1, 1)
        ax.loglog(ndof, est, "o-", label=r"$\sqrt{\lambda^2+\mu^2}$")
        if np.all(np.isfinite(err)) and len(err):
            ax.loglog(ndof, err, "s--", label=r"$\|\sigma-\sigma_h\|$")
        ax.set_xlabel("ndof")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        if title:
            ax.set_title(title)
        fig.tight_layout()
        # fixed metadata keeps the file stable between runs
        fig.savefig(path, format="svg", metadata={"Date": None})
