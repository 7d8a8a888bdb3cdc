"""Run directories: manifest, CSV data, JSON summaries and plot data."""
from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .stats import json_default

MANIFEST = "manifest.json"
SUMMARY = "summary.json"
PLOTS = "plots.json"
SUMMARY_FORMAT = "hslg.summary/1"
PLOTS_FORMAT = "hslg.plots/1"


class RunExists(RuntimeError):
    pass


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=json_default) + "\n"


class RunDir:
    """One experiment run.  The manifest moves ``running`` -> ``complete``;
    a complete run is left untouched unless ``force`` is set."""

    def __init__(self, root, config: ExperimentConfig, force: bool = False):
        self.config = config
        self.path = Path(root)
        self.path.mkdir(parents=True, exist_ok=True)
        self.files: list = []
        self.plots: list = []
        self._t0 = time.time()
        man = self.read_manifest()
        if man and man.get("status") == "complete" and not force:
            raise RunExists(f"{self.path} holds a complete run (use --force to redo it)")
        config.save(self.path / "config.yaml")
        self._write_manifest("running")

    def read_manifest(self) -> dict | None:
        p = self.path / MANIFEST
        if not p.exists():
            return None
        try:
            return json.loads(p.read_text())
        except json.JSONDecodeError:
            return None

    def _write_manifest(self, status: str, extra: dict | None = None) -> None:
        man = {
            "status": status,
            "experiment": self.config.experiment,
            "config_digest": self.config.digest(),
            "files": sorted(self.files),
            "wall_clock_s": round(time.time() - self._t0, 3),
        }
        man.update(extra or {})
        tmp = self.path / (MANIFEST + ".tmp")
        tmp.write_text(dumps(man))
        tmp.replace(self.path / MANIFEST)

    def write_csv(self, name: str, header, rows) -> Path:
        p = self.path / name
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
        self.files.append(name)
        return p

    def write_json(self, name: str, obj) -> Path:
        p = self.path / name
        p.write_text(dumps(obj))
        self.files.append(name)
        return p

    def add_plot(self, name: str, x, y, title: str, xlabel: str, ylabel: str, kind: str = "line",
                 reference=None) -> None:
        """Two-column data file plus a manifest entry; ``reference`` is an
        optional second (x, y) series drawn for comparison."""
        stem = name
        self._two_col(f"{stem}.dat", x, y, (xlabel, ylabel))
        entry = {"name": stem, "data": f"{stem}.dat", "title": title, "xlabel": xlabel, "ylabel": ylabel,
                 "kind": kind}
        if reference is not None:
            self._two_col(f"{stem}.ref.dat", reference[0], reference[1], (xlabel, ylabel))
            entry["reference"] = f"{stem}.ref.dat"
        self.plots.append(entry)

    def _two_col(self, name, x, y, labels) -> None:
        p = self.path / name
        with p.open("w") as fh:
            fh.write(f"# {labels[0]} {labels[1]}\n")
            for a, b in zip(np.asarray(x, dtype=float), np.asarray(y, dtype=float)):
                fh.write(f"{_fmt(a)} {_fmt(b)}\n")
        self.files.append(name)

    def finish(self, summary: dict, render: bool = True) -> dict:
        summary = {"format": SUMMARY_FORMAT, "config": self.config.to_dict(), **summary}
        self.write_json(SUMMARY, summary)
        self.write_json(PLOTS, {"format": PLOTS_FORMAT, "plots": self.plots})
        images = []
        if render and self.plots:
            from .plotting import render_manifest

            images = render_manifest(self.path)
            self.files.extend(images)
        self._write_manifest("complete")
        return summary


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def read_column(path, column: str | None = None, weight_column: str | None = None):
    """Values (and optional weights) from a CSV file with a header row;
    defaults to the last column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    idx = header.index(column) if column else len(header) - 1
    vals = np.array([float(r[idx]) for r in body])
    w = None
    if weight_column:
        wi = header.index(weight_column)
        lw = np.array([float(r[wi]) for r in body])
        w = np.exp(lw - lw.max())
    return vals, w
