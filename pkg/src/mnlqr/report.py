"""Run reports, convergence traces and rendered figures.

A run produces three artifacts: a JSON report that round-trips
losslessly (floats serialized at full precision), a convergence-trace
CSV with the fixed header

    iter,delta_P_fro,residual_R1,residual_R2,cond_psi,rank

(columns left blank where the quantity does not exist for the run
mode), and a pair of PNG figures -- the convergence trace and, for
data-driven runs, the informativity singular values.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError

TRACE_HEADER = ("iter", "delta_P_fro", "residual_R1", "residual_R2", "cond_psi", "rank")


@dataclass
class RunReport:
    """JSON-able record of one solver run.

    All numeric payloads are plain lists/floats so that save followed by
    load reproduces the report exactly.
    """

    mode: str
    status: str
    seed: int | None
    config: dict
    timing: dict
    iterations: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    rank_report: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunReport":
        try:
            return cls(**doc)
        except TypeError as err:
            raise ConfigError(f"malformed report document: {err}") from err

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunReport":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except OSError as err:
            raise ConfigError(f"{path}: {err.strerror or err}") from err
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: not valid JSON ({err})") from err


def trace_row(index, delta_P=None, residual_R1=None, residual_R2=None,
              cond_psi=None, rank=None) -> dict:
    return {
        "iter": index,
        "delta_P_fro": delta_P,
        "residual_R1": residual_R1,
        "residual_R2": residual_R2,
        "cond_psi": cond_psi,
        "rank": rank,
    }


def write_trace_csv(path, rows) -> None:
    """Write trace rows under the pinned header; None renders blank."""

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return repr(float(v))

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for row in rows:
            writer.writerow([cell(row[k]) for k in TRACE_HEADER])


def render_figures(out_dir, rows, rank_report=None, title="") -> list:
    """Render convergence (and, when present, singular-value) figures.

    Returns the list of written paths.  Uses a non-interactive backend;
    safe in headless environments.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    series = (
        ("delta_P_fro", "|P_i - P_{i-1}|_F"),
        ("residual_R1", "|R1(P_i)|_F"),
        ("residual_R2", "|R2(P_i, K_i)|_F"),
    )
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    plotted = False
    for key, label in series:
        pts = [
            (row["iter"], row[key])
            for row in rows
            if row.get(key) is not None and np.isfinite(row[key]) and row[key] > 0
        ]
        if pts:
            ax.semilogy(*zip(*pts), marker="o", label=label)
            plotted = True
    if plotted:
        ax.set_xlabel("iteration")
        ax.set_ylabel("magnitude")
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        path = os.path.join(str(out_dir), "convergence.png")
        fig.savefig(path, dpi=150)
        written.append(path)
    plt.close(fig)

    if rank_report is not None:
        sv = np.asarray(rank_report["singular_values"], dtype=float)
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        ax.semilogy(np.arange(1, sv.size + 1), np.maximum(sv, 1e-300), "o")
        ax.axhline(
            max(rank_report["threshold"], 1e-300),
            color="tab:red",
            linestyle="--",
            label="rank threshold",
        )
        ax.set_xlabel("index")
        ax.set_ylabel("singular value")
        ax.set_title(
            f"data informativity: rank {rank_report['rank']} "
            f"(required {rank_report['required']})"
        )
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        path = os.path.join(str(out_dir), "singular_values.png")
        fig.savefig(path, dpi=150)
        written.append(path)
        plt.close(fig)
    return written
