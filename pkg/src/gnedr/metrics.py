"""Per-iteration convergence metrics and their CSV export."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

__all__ = [
    "MetricsRecord",
    "CSV_COLUMNS",
    "consensus_spread",
    "avg_norm_dist",
    "relative_step",
    "emit_metrics",
    "read_metrics",
]


@dataclass(frozen=True)
class MetricsRecord:
    iter: int
    avg_norm_dist: float
    rel_step: float
    y_consensus: float
    lambda_consensus: float
    kkt_stationarity: float
    kkt_primal: float
    kkt_dual: float
    kkt_compl: float


CSV_COLUMNS = tuple(f.name for f in fields(MetricsRecord))


def consensus_spread(stack: np.ndarray) -> float:
    """Sum over coordinates of the population std across agents (rows)."""
    return float(np.std(stack, axis=0).sum())


def avg_norm_dist(ystack: np.ndarray, x_star: Optional[np.ndarray]) -> float:
    """Mean over agents of ``||y_j - x*|| / ||x*||``; ``nan`` without a reference."""
    if x_star is None:
        return math.nan
    ref = np.linalg.norm(x_star)
    return float(np.mean(np.linalg.norm(ystack - x_star[None, :], axis=1)) / ref)


def relative_step(new_flat: np.ndarray, old_flat: np.ndarray) -> float:
    return float(np.linalg.norm(new_flat - old_flat) / (np.linalg.norm(old_flat) + 1.0))


def emit_metrics(trajectory: Iterable[MetricsRecord], path, format: str = "csv") -> None:
    """Write one row per record; floats use 17 significant digits."""
    if format != "csv":
        raise ValueError(f"unsupported metrics format {format!r}")
    rows = list(trajectory)
    if not rows:
        raise ValueError("empty trajectory")
    with open(Path(path), "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(CSV_COLUMNS)
        for rec in rows:
            vals = astuple(rec)
            out.writerow([str(vals[0])] + [_fmt(v) for v in vals[1:]])


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else format(v, ".17g")


def read_metrics(path) -> list[MetricsRecord]:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected metrics header {header}")
        return [MetricsRecord(int(r[0]), *(float(v) for v in r[1:])) for r in reader]
