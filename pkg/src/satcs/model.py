"""Observation model for clipped linear measurements.

A measurement ``y_i = max(y_min, min(y_max, phi_i^T x + n_i))`` is either
interior (unsaturated) or pinned at one of the two thresholds (saturated).
The solver treats the two groups differently, so datasets keep them as two
physically separate blocks.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np


class DatasetError(ValueError):
    """Raised when measurements violate the saturated-dataset invariants."""


@dataclass(frozen=True)
class GroundTruth:
    x_bar: np.ndarray
    support: np.ndarray
    sparsity_k: int

    def __post_init__(self):
        x = np.asarray(self.x_bar, dtype=float)
        support = np.sort(np.asarray(self.support, dtype=int))
        if len(support) != self.sparsity_k:
            raise DatasetError("support size does not match sparsity_k")
        off = np.ones(x.shape[0], dtype=bool)
        off[support] = False
        if np.any(x[off] != 0):
            raise DatasetError("x_bar has nonzeros off the support")
        object.__setattr__(self, "x_bar", x)
        object.__setattr__(self, "support", support)

    @property
    def n(self) -> int:
        return self.x_bar.shape[0]


@dataclass(frozen=True)
class SaturatedDataset:
    """Measurements split into an unsaturated block and a saturated block.

    ``s2[j]`` is +1 when row ``j`` of the saturated block hit ``y_max`` and
    -1 when it hit ``y_min``. ``rows1`` / ``rows2`` hold the original row
    indices of each block.
    """

    phi1: np.ndarray
    y1: np.ndarray
    phi2: np.ndarray
    y2: np.ndarray
    s2: np.ndarray
    y_min: float
    y_max: float
    rows1: np.ndarray = field(default=None)
    rows2: np.ndarray = field(default=None)

    def __post_init__(self):
        phi1 = np.atleast_2d(np.asarray(self.phi1, dtype=float))
        phi2 = np.atleast_2d(np.asarray(self.phi2, dtype=float))
        y1 = np.asarray(self.y1, dtype=float).reshape(-1)
        y2 = np.asarray(self.y2, dtype=float).reshape(-1)
        s2 = np.asarray(self.s2).reshape(-1).astype(int)
        # An empty block still needs its column count.
        if phi1.size == 0:
            phi1 = phi1.reshape(0, phi2.shape[1] if phi2.size else phi1.shape[-1])
        if phi2.size == 0:
            phi2 = phi2.reshape(0, phi1.shape[1])

        if not self.y_min < self.y_max:
            raise DatasetError(f"need y_min < y_max, got {self.y_min} >= {self.y_max}")
        if phi1.shape[1] != phi2.shape[1]:
            raise DatasetError("phi1 and phi2 have different column counts")
        if phi1.shape[0] != y1.shape[0] or phi2.shape[0] != y2.shape[0]:
            raise DatasetError("row count of a sensing block does not match its observations")
        if s2.shape != y2.shape:
            raise DatasetError("s2 and y2 lengths differ")
        if np.any((y1 <= self.y_min) | (y1 >= self.y_max)):
            raise DatasetError("unsaturated observations must lie strictly inside (y_min, y_max)")
        if not np.all(np.isin(s2, (-1, 1))):
            raise DatasetError("s2 entries must be +1 or -1")
        expected = np.where(s2 == 1, self.y_max, self.y_min)
        if np.any(y2 != expected):
            raise DatasetError("saturated observations disagree with their direction indicators")

        m = y1.shape[0] + y2.shape[0]
        rows1 = np.arange(y1.shape[0]) if self.rows1 is None else np.asarray(self.rows1, dtype=int)
        rows2 = (np.arange(y1.shape[0], m) if self.rows2 is None
                 else np.asarray(self.rows2, dtype=int))
        if len(rows1) != len(y1) or len(rows2) != len(y2):
            raise DatasetError("row index arrays do not match block sizes")

        for name, value in (("phi1", phi1), ("phi2", phi2), ("y1", y1), ("y2", y2),
                            ("s2", s2), ("rows1", rows1), ("rows2", rows2)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "y_min", float(self.y_min))
        object.__setattr__(self, "y_max", float(self.y_max))

    @property
    def n(self) -> int:
        return self.phi1.shape[1]

    @property
    def m1(self) -> int:
        return self.phi1.shape[0]

    @property
    def m2(self) -> int:
        return self.phi2.shape[0]

    @property
    def m(self) -> int:
        return self.m1 + self.m2

    def clipped_observations(self) -> np.ndarray:
        """Interleave both blocks back into original row order."""
        y = np.empty(self.m)
        y[self.rows1] = self.y1
        y[self.rows2] = self.y2
        return y


def clip(y_raw, y_min, y_max):
    """Clip raw measurements to the detector range ``[y_min, y_max]``."""
    if not y_min < y_max:
        raise DatasetError(f"need y_min < y_max, got {y_min} >= {y_max}")
    return np.minimum(y_max, np.maximum(y_min, np.asarray(y_raw, dtype=float)))


def partition_measurements(phi, y_clipped, y_min, y_max) -> SaturatedDataset:
    """Split clipped measurements into unsaturated and saturated blocks.

    A value exactly equal to a threshold counts as saturated. Row order is
    preserved within each block.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    y = np.asarray(y_clipped, dtype=float).reshape(-1)
    if phi.shape[0] != y.shape[0]:
        raise DatasetError(f"phi has {phi.shape[0]} rows but y_clipped has {y.shape[0]} entries")
    if not y_min < y_max:
        raise DatasetError(f"need y_min < y_max, got {y_min} >= {y_max}")
    if np.any((y < y_min) | (y > y_max)):
        raise DatasetError("y_clipped has entries outside [y_min, y_max]")

    upper = y >= y_max
    lower = y <= y_min
    sat = upper | lower
    rows1 = np.flatnonzero(~sat)
    rows2 = np.flatnonzero(sat)
    return SaturatedDataset(
        phi1=phi[rows1], y1=y[rows1],
        phi2=phi[rows2], y2=y[rows2],
        s2=np.where(upper[rows2], 1, -1),
        y_min=y_min, y_max=y_max,
        rows1=rows1, rows2=rows2,
    )


# -- CSV persistence ---------------------------------------------------------

_FMT = "%.17g"


def _write_matrix(path, a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    with open(path, "w") as fh:
        if a.size:
            np.savetxt(fh, a, fmt=_FMT, delimiter=",")


def _read_matrix(path, ncols=None):
    if os.path.getsize(path) == 0:
        return np.empty((0, ncols or 0))
    a = np.loadtxt(path, delimiter=",", ndmin=2)
    return a


def save_dataset(dataset: SaturatedDataset, directory) -> None:
    """Write a dataset as a directory of CSV files (full double precision)."""
    os.makedirs(directory, exist_ok=True)
    _write_matrix(os.path.join(directory, "phi1.csv"), dataset.phi1)
    _write_matrix(os.path.join(directory, "y1.csv"), dataset.y1)
    _write_matrix(os.path.join(directory, "phi2.csv"), dataset.phi2)
    _write_matrix(os.path.join(directory, "y2.csv"), dataset.y2)
    np.savetxt(os.path.join(directory, "s2.csv"), dataset.s2.reshape(-1, 1), fmt="%d")
    _write_matrix(os.path.join(directory, "rows1.csv"), dataset.rows1)
    _write_matrix(os.path.join(directory, "rows2.csv"), dataset.rows2)
    with open(os.path.join(directory, "meta.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        w.writerow(["y_min", _FMT % dataset.y_min])
        w.writerow(["y_max", _FMT % dataset.y_max])
        w.writerow(["n", dataset.n])


def load_dataset(directory) -> SaturatedDataset:
    """Read a dataset directory written by :func:`save_dataset` and validate it."""
    try:
        return _load_dataset(directory)
    except (OSError, KeyError, ValueError) as exc:
        if isinstance(exc, DatasetError):
            raise
        raise DatasetError(f"cannot load dataset from {directory}: {exc}") from exc


def _load_dataset(directory) -> SaturatedDataset:
    with open(os.path.join(directory, "meta.csv"), newline="") as fh:
        meta = {row["key"]: row["value"] for row in csv.DictReader(fh)}
    n = int(meta["n"])

    def vec(name):
        path = os.path.join(directory, name)
        if not os.path.exists(path):
            return None
        return _read_matrix(path, 1).reshape(-1)

    phi1 = _read_matrix(os.path.join(directory, "phi1.csv"), n).reshape(-1, n)
    phi2 = _read_matrix(os.path.join(directory, "phi2.csv"), n).reshape(-1, n)
    rows1, rows2 = vec("rows1.csv"), vec("rows2.csv")
    return SaturatedDataset(
        phi1=phi1, y1=vec("y1.csv"),
        phi2=phi2, y2=vec("y2.csv"),
        s2=vec("s2.csv").astype(int),
        y_min=float(meta["y_min"]), y_max=float(meta["y_max"]),
        rows1=None if rows1 is None else rows1.astype(int),
        rows2=None if rows2 is None else rows2.astype(int),
    )


def save_ground_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "value"])
        for i, v in enumerate(truth.x_bar):
            w.writerow([i, _FMT % v])


def load_ground_truth(path) -> GroundTruth:
    with open(path, newline="") as fh:
        values = [float(row["value"]) for row in csv.DictReader(fh)]
    x = np.array(values)
    support = np.flatnonzero(x)
    return GroundTruth(x_bar=x, support=support, sparsity_k=len(support))
