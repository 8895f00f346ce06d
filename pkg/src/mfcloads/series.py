"""Sampled aggregate observables produced by the simulator and the PDE solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .io import metadata_lines, write_csv, write_json


@dataclass
class TimeSeries:
    """``n_out`` counts both modes outside the band; ``n_out_on`` only ON devices."""

    times: np.ndarray
    n_up: np.ndarray
    n_out: np.ndarray
    h1: np.ndarray | None = None
    n_out_on: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.n_up = np.asarray(self.n_up, dtype=float)
        self.n_out = np.asarray(self.n_out, dtype=float)
        if self.h1 is not None:
            self.h1 = np.asarray(self.h1, dtype=float)
        if self.n_out_on is not None:
            self.n_out_on = np.asarray(self.n_out_on, dtype=float)
        n = self.times.size
        for name in ("n_up", "n_out", "h1", "n_out_on"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def deviation(self) -> np.ndarray:
        """Signed deviation ``n_up - 1/2`` from the stationary consumption."""
        return self.n_up - 0.5

    def to_csv(self, path):
        cols = ["t", "n_up", "n_out", "h1"]
        h1 = self.h1 if self.h1 is not None else np.full(len(self), np.nan)
        data = np.column_stack([self.times, self.n_up, self.n_out, h1])
        return write_csv(path, cols, data, metadata_lines(self.meta))

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "t": self.times,
            "n_up": self.n_up,
            "n_out": self.n_out,
            "n_out_on": self.n_out_on,
            "h1": self.h1,
        }

    def to_json(self, path):
        return write_json(path, self)
