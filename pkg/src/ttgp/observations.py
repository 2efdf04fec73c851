"""Observed entries of a grid tensor and their CSV/JSON file format.

CSV layout: header ``i_1,...,i_d,y`` followed by one row per observation
with 1-based integer indices. Mode sizes live in a sidecar JSON file
(``obs.csv`` -> ``obs.json``) holding ``{"mode_sizes": [...]}``.
"""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError


@dataclass(frozen=True, eq=False)
class ObservationSet:
    mode_sizes: tuple
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        modes = tuple(int(n) for n in self.mode_sizes)
        idx = np.asarray(self.indices)
        if idx.ndim == 1 and idx.size == 0:
            idx = idx.reshape(0, len(modes))
        if idx.size and not np.all(idx == np.round(idx)):
            raise DomainError("observation indices must be integers")
        idx = np.array(idx, dtype=np.int64)
        vals = np.array(self.values, dtype=np.float64).reshape(-1)
        if idx.ndim != 2 or idx.shape[1] != len(modes):
            raise DomainError(f"indices must be N x {len(modes)}, got {idx.shape}")
        if idx.shape[0] != vals.shape[0]:
            raise ValueError(f"{idx.shape[0]} indices but {vals.shape[0]} values")
        if min(modes, default=0) < 1:
            raise ValueError("mode sizes must be positive")
        bad = (idx < 1) | (idx > np.asarray(modes))
        if bad.any():
            row = int(np.nonzero(bad.any(axis=1))[0][0])
            raise DomainError(f"observation {row}: index {tuple(idx[row])} outside {modes}")
        if idx.shape[0] > 1:
            uniq, first, counts = np.unique(idx, axis=0, return_index=True, return_counts=True)
            if (counts > 1).any():
                dup = uniq[np.argmax(counts > 1)]
                raise ValueError(f"duplicate observation index {tuple(int(i) for i in dup)}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("observation values must be finite")
        idx.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "mode_sizes", modes)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    @property
    def d(self):
        return len(self.mode_sizes)

    def __len__(self):
        return self.indices.shape[0]

    @property
    def grid_size(self):
        return math.prod(self.mode_sizes)

    def subset(self, rows):
        return ObservationSet(self.mode_sizes, self.indices[rows], self.values[rows])


def rescale_indices(indices, mode_sizes):
    """Map 1-based grid indices affinely onto [0, 1]; size-1 modes map to 0.5."""
    idx = np.atleast_2d(np.asarray(indices, dtype=np.float64))
    n = np.asarray(mode_sizes, dtype=np.float64)
    span = np.where(n > 1, n - 1, 1.0)
    x = (idx - 1.0) / span
    x[:, n == 1] = 0.5
    return x


def rescale_index(idx, mode_sizes):
    return rescale_indices(np.asarray(idx)[None, :], mode_sizes)[0]


def sidecar_path(csv_path):
    return Path(csv_path).with_suffix(".json")


def save_observations(obs, path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"i_{k + 1}" for k in range(obs.d)] + ["y"])
        for row, v in zip(obs.indices.tolist(), obs.values.tolist()):
            w.writerow(row + [repr(v)])
    with open(sidecar_path(path), "w") as fh:
        json.dump({"mode_sizes": list(obs.mode_sizes)}, fh)


def load_observations(path, mode_sizes=None):
    """Read an observation CSV; mode sizes come from ``mode_sizes`` or the sidecar."""
    path = Path(path)
    if mode_sizes is None:
        side = sidecar_path(path)
        if not side.exists():
            raise FileNotFoundError(f"no mode sizes given and sidecar {side} not found")
        with open(side) as fh:
            mode_sizes = json.load(fh)["mode_sizes"]
    mode_sizes = tuple(int(n) for n in mode_sizes)
    d = len(mode_sizes)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        expected = [f"i_{k + 1}" for k in range(d)] + ["y"]
        if [h.strip() for h in header] != expected:
            raise ParseError(f"{path}: header {header} does not match {expected}")
        idx, vals = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ParseError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
            try:
                idx.append([int(v) for v in row[:d]])
                vals.append(float(row[d]))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return ObservationSet(mode_sizes, np.array(idx, dtype=np.int64).reshape(-1, d), vals)
