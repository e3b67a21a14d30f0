"""Time-stamped sequences of manifold points with per-step diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .manifold import FixedRankPoint

TRAJECTORY_COLUMNS = ("t", "gap_sigma_r", "gap_sigma_r1", "residual_norm", "reconstruction_error")


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    points: list[FixedRankPoint] = field(default_factory=list)
    diagnostics: dict[str, list[float]] = field(default_factory=dict)
    status: str = "ok"

    def append(self, t: float, point: FixedRankPoint, **diag: float) -> None:
        self.times.append(float(t))
        self.points.append(point)
        for key, value in diag.items():
            self.diagnostics.setdefault(key, []).append(float(value))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> FixedRankPoint:
        return self.points[-1]

    def dense(self) -> list[np.ndarray]:
        return [p.dense() for p in self.points]

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.diagnostics.get(name, [np.nan] * len(self)))

    def write_csv(self, path, columns=TRAJECTORY_COLUMNS) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            for i, t in enumerate(self.times):
                row = [t] + [self.diagnostics.get(c, [np.nan] * len(self))[i] for c in columns[1:]]
                w.writerow([format_real(v) for v in row])


def format_real(v: float) -> str:
    return format(float(v), ".17g")
