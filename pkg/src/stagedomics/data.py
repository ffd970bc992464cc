"""Datasets in the MOGONET release layout, plus a synthetic generator.

Directory layout, for each view k in 1..3::

    {k}_tr.csv  {k}_te.csv   comma-delimited feature rows, no header
    {k}_featname.csv         one feature name per line
    labels_tr.csv labels_te.csv   one 0/1 label per line

Samples are ordered train block first, then test block, everywhere.
"""

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .numcore import seeded_rng

N_VIEWS = 3


@dataclass
class OmicsView:
    id: int
    name: str
    features: np.ndarray
    feature_names: list = field(default_factory=list)
    cost: float = 1.0

    @property
    def dim(self):
        return self.features.shape[1]


@dataclass
class Dataset:
    views: list
    labels: np.ndarray
    train_index: np.ndarray
    test_index: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.train_index = np.asarray(self.train_index, dtype=np.int64)
        self.test_index = np.asarray(self.test_index, dtype=np.int64)
        n = self.labels.size
        for v in self.views:
            if v.features.shape[0] != n:
                raise DataError(f"view {v.id} has {v.features.shape[0]} rows, expected {n}")
        if np.any((self.labels != 0) & (self.labels != 1)):
            raise DataError("labels must be 0 (NC) or 1 (AD)")
        if np.intersect1d(self.train_index, self.test_index).size:
            raise DataError("train and test index sets overlap")

    @property
    def n(self):
        return int(self.labels.size)

    def view(self, view_id):
        for v in self.views:
            if v.id == view_id:
                return v
        raise KeyError(view_id)

    @property
    def view_ids(self):
        return [v.id for v in self.views]


def _read_matrix(path):
    if not os.path.exists(path):
        raise DataError(f"missing file: {path}")
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                vals = [float(c) for c in rec]
            except ValueError:
                bad = next(c for c in rec if not _is_float(c))
                raise DataError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataError(f"{path}:{lineno}: ragged row ({len(vals)} cells, expected {width})")
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def _read_labels(path):
    if not os.path.exists(path):
        raise DataError(f"missing file: {path}")
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                v = float(s)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric label {s!r}") from None
            if v not in (0.0, 1.0):
                raise DataError(f"{path}:{lineno}: non-binary label {s!r}")
            out.append(int(v))
    return np.array(out, dtype=np.int64)


def _read_names(path):
    if not os.path.exists(path):
        raise DataError(f"missing file: {path}")
    with open(path) as fh:
        return [line.strip() for line in fh if line.strip()]


def load_dataset(directory, view_names=None, view_costs=None):
    y_tr = _read_labels(os.path.join(directory, "labels_tr.csv"))
    y_te = _read_labels(os.path.join(directory, "labels_te.csv"))
    views = []
    for k in range(1, N_VIEWS + 1):
        tr_path = os.path.join(directory, f"{k}_tr.csv")
        te_path = os.path.join(directory, f"{k}_te.csv")
        tr = _read_matrix(tr_path)
        te = _read_matrix(te_path)
        names = _read_names(os.path.join(directory, f"{k}_featname.csv"))
        if tr.shape[0] != y_tr.size:
            raise DataError(f"{tr_path}: {tr.shape[0]} rows but labels_tr.csv has {y_tr.size} labels")
        if te.shape[0] != y_te.size:
            raise DataError(f"{te_path}: {te.shape[0]} rows but labels_te.csv has {y_te.size} labels")
        if tr.shape[1] != te.shape[1]:
            raise DataError(f"{te_path}: {te.shape[1]} columns, {tr_path} has {tr.shape[1]}")
        if len(names) != tr.shape[1]:
            raise DataError(f"{k}_featname.csv lists {len(names)} names for {tr.shape[1]} columns")
        views.append(OmicsView(
            id=k,
            name=view_names[k - 1] if view_names else f"view{k}",
            features=np.vstack([tr, te]),
            feature_names=names,
            cost=float(view_costs[k - 1]) if view_costs else 1.0,
        ))
    n_tr = y_tr.size
    return Dataset(views, np.concatenate([y_tr, y_te]), np.arange(n_tr), np.arange(n_tr, n_tr + y_te.size))


def write_dataset(dataset, directory):
    """Write ``dataset`` in the layout ``load_dataset`` reads (floats at 17 significant digits)."""
    os.makedirs(directory, exist_ok=True)
    for v in dataset.views:
        for suffix, idx in (("tr", dataset.train_index), ("te", dataset.test_index)):
            np.savetxt(os.path.join(directory, f"{v.id}_{suffix}.csv"), v.features[idx], fmt="%.17g", delimiter=",")
        names = v.feature_names or [f"f{j}" for j in range(v.dim)]
        with open(os.path.join(directory, f"{v.id}_featname.csv"), "w") as fh:
            fh.write("\n".join(names) + "\n")
    for suffix, idx in (("tr", dataset.train_index), ("te", dataset.test_index)):
        with open(os.path.join(directory, f"labels_{suffix}.csv"), "w") as fh:
            fh.write("".join(f"{int(y)}\n" for y in dataset.labels[idx]))


def generate_synthetic(n, d, view_snrs, seed, train_frac=0.7):
    """Two Gaussian classes per view, means at +/- snr * u_k, identity covariance.

    ``u_k`` is a random unit vector per view, so the Bayes accuracy of view k
    on its own is Phi(snr_k). Classes are balanced and the 70/30 train/test
    split is stratified; rows come back train block first.
    """
    if n < 4 or n % 2:
        raise ConfigError(f"n must be an even integer >= 4, got {n}")
    if d < 1:
        raise ConfigError(f"d must be >= 1, got {d}")
    if len(view_snrs) != N_VIEWS or any(s < 0 for s in view_snrs):
        raise ConfigError(f"need {N_VIEWS} non-negative snrs, got {view_snrs}")
    rng = seeded_rng(seed)
    half = n // 2
    n_tr_class = int(round(train_frac * half))
    n_tr_class = min(max(n_tr_class, 1), half - 1)
    order = []
    for part in ("train", "test"):
        for cls in (0, 1):
            order += [(part, cls)] * (n_tr_class if part == "train" else half - n_tr_class)
    labels = np.array([cls for _, cls in order], dtype=np.int64)
    n_tr = 2 * n_tr_class
    # shuffle within each block so classes interleave
    perm = np.concatenate([rng.permutation(n_tr), n_tr + rng.permutation(n - n_tr)])
    labels = labels[perm]
    sign = 2.0 * labels - 1.0
    views = []
    for k, snr in enumerate(view_snrs, start=1):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        x = sign[:, None] * snr * u[None, :] + rng.standard_normal((n, d))
        views.append(OmicsView(k, f"view{k}", x, [f"v{k}_f{j}" for j in range(d)]))
    return Dataset(views, labels, np.arange(n_tr), np.arange(n_tr, n))
