"""Run metrics: a fixed schema, written byte-deterministically.

Two sinks share one schema: CSV with ``#`` config comments, and JSONL.
Floats are rendered with shortest round-trip repr and no line carries a
timestamp, so re-running the same seeded configuration reproduces the
files exactly, byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

CSV_HEADER = "epoch,gradients,loss,grad_norm_sq,accuracy,alpha_t,staleness,sim_time"
FIELDS = CSV_HEADER.split(",")


@dataclass
class MetricsRecord:
    """One evaluation row.

    ``epoch`` counts applied updates (0 is the pre-training baseline),
    ``gradients`` the cumulative local gradient steps the server has
    absorbed. ``accuracy`` is ``None`` for regression tasks.
    ``sim_time`` is only meaningful in the discrete-event mode; other
    modes write 0.0.
    """

    epoch: int
    gradients: int
    loss: float
    grad_norm_sq: float
    accuracy: float | None
    alpha_t: float
    staleness: int
    sim_time: float

    def csv_row(self) -> str:
        acc = "" if self.accuracy is None else repr(float(self.accuracy))
        return ",".join(
            [
                str(self.epoch),
                str(self.gradients),
                repr(float(self.loss)),
                repr(float(self.grad_norm_sq)),
                acc,
                repr(float(self.alpha_t)),
                str(self.staleness),
                repr(float(self.sim_time)),
            ]
        )

    def json_obj(self) -> dict:
        return {
            "epoch": self.epoch,
            "gradients": self.gradients,
            "loss": float(self.loss),
            "grad_norm_sq": float(self.grad_norm_sq),
            "accuracy": None if self.accuracy is None else float(self.accuracy),
            "alpha_t": float(self.alpha_t),
            "staleness": self.staleness,
            "sim_time": float(self.sim_time),
        }


def write_metrics_csv(
    records: list[MetricsRecord], path: str, config: dict[str, object] | None = None
) -> None:
    """Write records as CSV, preceded by ``# key=value`` config comments.

    The comment block reflects only the configuration handed in (never
    clocks or hostnames); keys are emitted in the order given.
    """
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for key, value in (config or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write(CSV_HEADER + "\n")
        for rec in records:
            fh.write(rec.csv_row() + "\n")


def write_metrics_jsonl(records: list[MetricsRecord], path: str) -> None:
    """Write records as one JSON object per line, keys in schema order."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.json_obj()) + "\n")


def save_params(params, path: str) -> None:
    """One coordinate per line, shortest round-trip repr; bit-exact reload."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for v in params:
            fh.write(repr(float(v)) + "\n")


def load_params(path: str) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        values = [float(line) for line in fh if line.strip()]
    return np.array(values, dtype=np.float64)


def load_metrics_csv(path: str) -> list[MetricsRecord]:
    """Read back a file produced by :func:`write_metrics_csv`."""
    records = []
    with open(path, "r", encoding="ascii") as fh:
        header_seen = False
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line != CSV_HEADER:
                    raise ValueError(f"{path}:{line_no}: unexpected header {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != len(FIELDS):
                raise ValueError(
                    f"{path}:{line_no}: {len(parts)} fields, expected {len(FIELDS)}"
                )
            records.append(
                MetricsRecord(
                    epoch=int(parts[0]),
                    gradients=int(parts[1]),
                    loss=float(parts[2]),
                    grad_norm_sq=float(parts[3]),
                    accuracy=None if parts[4] == "" else float(parts[4]),
                    alpha_t=float(parts[5]),
                    staleness=int(parts[6]),
                    sim_time=float(parts[7]),
                )
            )
    if not header_seen:
        raise ValueError(f"{path}: no header line found")
    return records
