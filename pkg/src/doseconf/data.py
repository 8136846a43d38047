"""Dataset container for (covariates, treatment, outcome) triples with seeded splits."""

import csv
import json
import math
from typing import NamedTuple

import numpy as np

from ._rng import substream
from ._validation import check_consistent_length, check_matrix, check_vector

SPLIT_LABELS = ("train", "cal", "test")


class Sample(NamedTuple):
    """One observation: covariate vector, treatment dose, outcome."""

    x: np.ndarray
    t: float
    y: float


class Dataset:
    """Array-backed collection of samples with optional train/cal/test labels.

    Parameters
    ----------
    X : array-like of shape (n, d)
        Covariates.
    t : array-like of shape (n,)
        Treatment doses.
    y : array-like of shape (n,)
        Outcomes.
    split : dict mapping label to index array, optional
        Keys must be a subset of ``{"train", "cal", "test"}`` and the index
        sets must partition ``range(n)`` exactly.
    """

    def __init__(self, X, t, y, split=None):
        self.X = check_matrix(X)
        self.t = check_vector(t, "t")
        self.y = check_vector(y, "y")
        check_consistent_length(self.X, self.t, self.y)
        self.split = self._check_split(split) if split is not None else None

    def _check_split(self, split):
        clean = {}
        for label, idx in split.items():
            if label not in SPLIT_LABELS:
                raise ValueError(f"unknown split label {label!r}")
            clean[label] = np.asarray(idx, dtype=int)
        all_idx = np.concatenate([clean[k] for k in SPLIT_LABELS if k in clean])
        if len(np.unique(all_idx)) != len(all_idx) or set(all_idx) != set(range(len(self))):
            raise ValueError("split labels must partition the dataset indices exactly")
        return clean

    @property
    def d(self):
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i):
        return Sample(self.X[i], float(self.t[i]), float(self.y[i]))

    def subset(self, label):
        """Return the sub-dataset carrying the given split label."""
        if self.split is None or label not in self.split:
            raise KeyError(f"dataset has no {label!r} split")
        idx = self.split[label]
        return Dataset(self.X[idx], self.t[idx], self.y[idx])

    def to_csv(self, path):
        """Write samples as CSV with header ``x0,...,x{d-1},t,y``."""
        header = [f"x{j}" for j in range(self.d)] + ["t", "y"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(len(self)):
                writer.writerow([repr(float(v)) for v in self.X[i]]
                                + [repr(float(self.t[i])), repr(float(self.y[i]))])

    def save_split(self, path):
        """Write split labels to a sidecar JSON ``{train: [...], cal: [...], test: [...]}``."""
        if self.split is None:
            raise ValueError("dataset has no split labels to save")
        with open(path, "w") as fh:
            json.dump({k: [int(i) for i in v] for k, v in self.split.items()}, fh)

    @classmethod
    def from_csv(cls, path, split_path=None):
        """Read a dataset written by :meth:`to_csv`, optionally with its sidecar split."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [list(map(float, row)) for row in reader]
        if header[-2:] != ["t", "y"]:
            raise ValueError(f"unexpected CSV header {header!r}")
        arr = np.asarray(rows, dtype=float)
        split = None
        if split_path is not None:
            with open(split_path) as fh:
                split = {k: np.asarray(v, dtype=int) for k, v in json.load(fh).items()}
        return cls(arr[:, :-2], arr[:, -2], arr[:, -1], split=split)


def _partition_sizes(n, fractions):
    # Largest-remainder rounding keeps the sizes summing to n deterministically.
    ideal = [f * n for f in fractions]
    sizes = [math.floor(v) for v in ideal]
    remainder = n - sum(sizes)
    order = sorted(range(len(fractions)), key=lambda i: ideal[i] - sizes[i], reverse=True)
    for i in order[:remainder]:
        sizes[i] += 1
    return sizes


def split_dataset(data, fractions=(0.5, 0.25, 0.25), seed=0):
    """Assign train/cal/test labels to ``data`` by a seed-deterministic shuffle.

    Parameters
    ----------
    data : Dataset
    fractions : (train, cal, test) positive floats summing to 1
    seed : int

    Returns
    -------
    Dataset with ``split`` labels; sizes match the fractions up to rounding.
    """
    if len(data) == 0:
        raise ValueError("cannot split an empty dataset")
    fractions = [float(f) for f in fractions]
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError("fractions must be three positive values")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    sizes = _partition_sizes(len(data), fractions)
    perm = substream(seed, "split").permutation(len(data))
    bounds = np.cumsum(sizes)
    split = {
        "train": np.sort(perm[: bounds[0]]),
        "cal": np.sort(perm[bounds[0] : bounds[1]]),
        "test": np.sort(perm[bounds[1] :]),
    }
    return Dataset(data.X, data.t, data.y, split=split)
