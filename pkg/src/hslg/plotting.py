"""Render the plot manifest of a run directory to PNG files."""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _load(path: Path):
    data = np.loadtxt(path, comments="#", ndmin=2)
    return data[:, 0], data[:, 1]


def render_manifest(run_dir) -> list:
    """One PNG per manifest entry; returns the file names written."""
    run_dir = Path(run_dir)
    man = json.loads((run_dir / "plots.json").read_text())
    out = []
    for entry in man["plots"]:
        fig, ax = plt.subplots(figsize=(5.5, 3.8))
        x, y = _load(run_dir / entry["data"])
        if entry.get("kind") == "step":
            ax.step(x, y, where="post", label="sample")
        elif entry.get("kind") == "points":
            ax.plot(x, y, "o-", label="estimate")
        else:
            ax.plot(x, y, label="sample")
        if "reference" in entry:
            rx, ry = _load(run_dir / entry["reference"])
            ax.plot(rx, ry, "--", label="reference")
            ax.legend(frameon=False)
        ax.set_title(entry["title"])
        ax.set_xlabel(entry["xlabel"])
        ax.set_ylabel(entry["ylabel"])
        fig.tight_layout()
        name = f"{entry['name']}.png"
        fig.savefig(run_dir / name, dpi=110, metadata={"Software": None})
        plt.close(fig)
        out.append(name)
    return out
