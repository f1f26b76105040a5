"""Result container, summaries, log-log fits and persistence shared by all experiments."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .. import __version__
from ..errors import ValidationError

Z95 = 1.959963984540054


@dataclass(frozen=True)
class Summary:
    group: str
    count: int
    mean: float
    std: float
    ci95: float

    def interval(self) -> tuple[float, float]:
        return self.mean - self.ci95, self.mean + self.ci95

    def disjoint_below(self, other: "Summary") -> bool:
        """True when this interval lies entirely below ``other``'s."""
        return self.mean + self.ci95 < other.mean - other.ci95


def summarize(group: str, values: Iterable[float]) -> Summary:
    """Mean, sample std and normal-approximation 95% half-width.

    Sums run over the sorted values with ``math.fsum``, so the result does not
    depend on the order in which repetitions finished.
    """
    v = sorted(float(x) for x in values)
    n = len(v)
    if n == 0:
        return Summary(group, 0, math.nan, math.nan, math.nan)
    mean = math.fsum(v) / n
    std = math.sqrt(math.fsum((x - mean) ** 2 for x in v) / (n - 1)) if n > 1 else 0.0
    return Summary(group, n, mean, std, Z95 * std / math.sqrt(n))


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    r2: float
    extrapolations: tuple[tuple[float, float], ...] = ()

    def predict(self, n) -> np.ndarray:
        return np.exp(self.intercept + self.slope * np.log(n))

    def required_n(self, target: float) -> float:
        """Size at which the fitted line reaches ``target`` (inf for a flat or rising fit)."""
        if not target > 0:
            raise ValidationError("extrapolation target must be positive")
        if self.slope >= 0:
            return math.inf
        with np.errstate(over="ignore"):
            return float(np.exp((math.log(target) - self.intercept) / self.slope))

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "extrapolations": [list(e) for e in self.extrapolations],
        }


def loglog_fit(xs: Sequence[float], ys: Sequence[float], targets: Sequence[float] = ()) -> LogLogFit:
    """Least-squares line through ``(log x, log y)`` with optional extrapolations."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("xs and ys must be 1-D and of equal length")
    if x.size < 2:
        raise ValidationError("log-log fit needs at least 2 points")
    if np.any(x <= 0) or np.any(y <= 0) or not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("log-log fit needs finite positive inputs")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    fit = LogLogFit(float(slope), float(intercept), r2)
    ext = tuple((float(t), fit.required_n(t)) for t in sorted(targets, reverse=True))
    return LogLogFit(fit.slope, fit.intercept, r2, ext)


@dataclass
class ExperimentResult:
    """Raw per-repetition rows plus summaries, fits and the config that produced them.

    ``rows`` hold only deterministic values so the raw CSV is reproducible
    bit-for-bit from the manifest; wall time lives in the manifest.
    """

    name: str
    config: dict
    seed: int
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    summaries: list[Summary] = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    wall_time: float = 0.0

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def summary(self, group: str) -> Summary:
        for s in self.summaries:
            if s.group == group:
                return s
        raise KeyError(group)

    def write(self, out_dir, command: dict | None = None) -> dict[str, Path]:
        """CSV of raw rows, CSV of summaries and a JSON manifest in ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"raw": out / f"{self.name}.csv", "summary": out / f"{self.name}_summary.csv", "manifest": out / f"{self.name}.json"}
        write_csv(paths["raw"], self.columns, self.rows)
        write_csv(
            paths["summary"],
            ["group", "count", "mean", "std", "ci95_halfwidth"],
            [[s.group, s.count, s.mean, s.std, s.ci95] for s in self.summaries],
        )
        manifest = {
            "name": self.name,
            "version": __version__,
            "seed": self.seed,
            "config": self.config,
            "command": command or {},
            "summaries": [s.__dict__ for s in self.summaries],
            "fits": self.fits,
            "extras": self.extras,
            "notes": self.notes,
            "wall_time_seconds": self.wall_time,
        }
        paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
        return paths


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    return repr(o)


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([format_value(v) for v in r])


def run_tasks(fn: Callable, tasks: list, jobs: int = 1) -> list:
    """Map ``fn`` over ``tasks`` in order, optionally across worker processes."""
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    jobs = min(jobs, os.cpu_count() or 1, len(tasks))
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


class Stopwatch:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False


def plot_series(path, series: dict[str, tuple[Sequence[float], Sequence[float]]], xlabel: str, ylabel: str, loglog: bool = False) -> Path:
    """Line plot of named ``(x, y)`` series saved as a standalone SVG."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ValidationError("plotting needs matplotlib (pip install 'artifact[plot]')") from exc
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (x, y) in series.items():
        ax.plot(x, y, marker="o", ms=3, label=label)
    if loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    # Fixed metadata keeps the SVG identical across runs.
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)
