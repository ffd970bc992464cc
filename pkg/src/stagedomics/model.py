"""Per-view GCN classifiers and the VCDN fusion head.

Parameters live in flat ``name -> ndarray`` dicts so they plug straight into
``numcore.ParamStore``. Forward functions accept an optional ``params``
mapping of tensors in place of the stored arrays; that is how training
threads gradients through them.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import DataError, DomainError, ShapeError

DEFAULT_GCN_DIMS = (200, 200, 100)
DEFAULT_HEAD_HIDDEN = 64
N_CLASSES = 2
DIST_TOL = 1e-6


def glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class GcnClassifier:
    params: dict
    dropout: float = 0.5

    @property
    def n_layers(self):
        return sum(1 for k in self.params if k.startswith("gcn.W"))

    @property
    def gcn_weights(self):
        return [self.params[f"gcn.W{l}"] for l in range(self.n_layers)]

    @property
    def head_weights(self):
        return [self.params["head.W1"], self.params["head.W2"]]

    @property
    def dims(self):
        ws = self.gcn_weights
        return (ws[0].shape[0], *(w.shape[1] for w in ws))


@dataclass
class VcdnHead:
    params: dict
    n_views: int
    n_classes: int = N_CLASSES

    @property
    def in_dim(self):
        return self.n_classes ** self.n_views


def init_classifier(dims, rng, head_hidden=DEFAULT_HEAD_HIDDEN, n_classes=N_CLASSES, dropout=0.5):
    """Glorot-uniform weights and zero biases; ``dims`` = (input, hidden_1, ..., hidden_L)."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or min(dims) < 1:
        raise ShapeError(f"invalid layer dims {dims}")
    params = {}
    for l, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        params[f"gcn.W{l}"] = glorot(rng, a, b)
        params[f"gcn.b{l}"] = np.zeros((1, b))
    params["head.W1"] = glorot(rng, dims[-1], head_hidden)
    params["head.b1"] = np.zeros((1, head_hidden))
    params["head.W2"] = glorot(rng, head_hidden, n_classes)
    params["head.b2"] = np.zeros((1, n_classes))
    return GcnClassifier(params, dropout)


def init_vcdn(n_views, rng, n_classes=N_CLASSES):
    if n_views not in (2, 3):
        raise ShapeError(f"VCDN supports 2 or 3 views, got {n_views}")
    width = n_classes ** n_views
    params = {
        "vcdn.W1": glorot(rng, width, width),
        "vcdn.b1": np.zeros((1, width)),
        "vcdn.W2": glorot(rng, width, n_classes),
        "vcdn.b2": np.zeros((1, n_classes)),
    }
    return VcdnHead(params, n_views, n_classes)


def _dense(x, w, b):
    return nc.add(nc.matmul(x, w), b)


def gcn_forward(x, a_norm, clf, training=False, rng=None, params=None, ax=None):
    """Stack of ReLU(Ã H W + b) layers; dropout on each layer output when training.

    ``ax`` may carry a precomputed Ã @ x, which the first layer then reuses.
    """
    p = clf.params if params is None else params
    a_norm = nc.as_tensor(a_norm)
    h = nc.as_tensor(x)
    n = h.shape[0]
    if a_norm.shape != (n, n):
        raise ShapeError(f"adjacency {a_norm.shape} does not match {n} samples")
    if training and clf.dropout > 0 and rng is None:
        raise ValueError("training forward pass with dropout needs an rng")
    for l in range(clf.n_layers):
        w = nc.as_tensor(p[f"gcn.W{l}"])
        if h.shape[1] != w.shape[0]:
            raise ShapeError(f"layer {l}: input has {h.shape[1]} columns, weight is {w.shape}")
        if l == 0 and ax is not None:
            z = nc.matmul(ax, w)
        elif w.shape[1] <= w.shape[0]:
            z = nc.matmul(a_norm, nc.matmul(h, w))
        else:
            z = nc.matmul(nc.matmul(a_norm, h), w)
        h = nc.relu(nc.add(z, p[f"gcn.b{l}"]))
        if training:
            h = nc.dropout(h, clf.dropout, rng)
    return h


def classify(h, clf, params=None):
    """Two dense layers over GCN features; rows are (P(normal control), P(AD))."""
    p = clf.params if params is None else params
    z = nc.relu(_dense(h, p["head.W1"], p["head.b1"]))
    return nc.softmax_rows(_dense(z, p["head.W2"], p["head.b2"]))


def mlp_forward(x, clf):
    """GCN stack with no neighbour mixing (Ã = I). Reference path for the degenerate graph."""
    h = np.asarray(x, dtype=np.float64)
    for l in range(clf.n_layers):
        h = np.maximum(h @ clf.params[f"gcn.W{l}"] + clf.params[f"gcn.b{l}"], 0.0)
    return h


def _check_dists(dists):
    for k, d in enumerate(dists):
        v = np.asarray(d.value if isinstance(d, nc.Tensor) else d)
        if np.any(v < -DIST_TOL) or np.any(np.abs(v.sum(axis=-1) - 1.0) > DIST_TOL):
            raise DomainError(f"input {k} is not a probability distribution")


def vcdn_tensor(dists):
    """Flattened outer product of per-view class distributions.

    Accepts m vectors of length c (returns length c**m) or m n×c matrices
    (returns n×c**m). Index (a1, ..., am) maps to flat position with a1 slowest.
    """
    if len(dists) not in (2, 3):
        raise DomainError(f"need 2 or 3 distributions, got {len(dists)}")
    _check_dists(dists)
    single = all(np.ndim(d.value if isinstance(d, nc.Tensor) else d) == 1 for d in dists)
    if single:
        out = nc.outer_rows([np.asarray(d, dtype=np.float64)[None, :] for d in dists])
        return out.value[0]
    return nc.outer_rows(dists)


def vcdn_forward(c_vec, head, params=None):
    p = head.params if params is None else params
    c_vec = nc.as_tensor(c_vec)
    if c_vec.shape[1] != head.in_dim:
        raise ShapeError(f"VCDN expects {head.in_dim} inputs, got {c_vec.shape[1]}")
    z = nc.relu(_dense(c_vec, p["vcdn.W1"], p["vcdn.b1"]))
    return nc.softmax_rows(_dense(z, p["vcdn.W2"], p["vcdn.b2"]))


# ---------------------------------------------------------------- checkpoints

_FINGERPRINT_KEY = "__fingerprint__"


def save_checkpoint(path, arrays, fingerprint):
    """Write named float64 arrays plus a JSON fingerprint to an ``.npz`` container.

    Array bytes are stored verbatim, so a round trip is bit-exact.
    """
    payload = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}
    if _FINGERPRINT_KEY in payload:
        raise ValueError(f"{_FINGERPRINT_KEY} is reserved")
    payload[_FINGERPRINT_KEY] = np.array(json.dumps(fingerprint, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path):
    if not os.path.exists(path):
        raise DataError(f"missing checkpoint: {path}")
    with np.load(path, allow_pickle=False) as z:
        fingerprint = json.loads(str(z[_FINGERPRINT_KEY]))
        arrays = {k: z[k] for k in z.files if k != _FINGERPRINT_KEY}
    return arrays, fingerprint


def pack_models(classifiers, head=None):
    """Flatten {view_id: GcnClassifier} (+ optional head) into checkpoint arrays."""
    out = {}
    for vid, clf in classifiers.items():
        for k, v in clf.params.items():
            out[f"view{vid}/{k}"] = v
    if head is not None:
        out.update(head.params)
    return out


def unpack_models(arrays, dropout=0.5):
    classifiers = {}
    vcdn = {}
    for k, v in arrays.items():
        if k.startswith("view"):
            vid, name = k[4:].split("/", 1)
            classifiers.setdefault(int(vid), {})[name] = v
        else:
            vcdn[k] = v
    classifiers = {vid: GcnClassifier(p, dropout) for vid, p in sorted(classifiers.items())}
    head = None
    if vcdn:
        c = vcdn["vcdn.W2"].shape[1]
        m = int(round(np.log(vcdn["vcdn.W1"].shape[0]) / np.log(c)))
        head = VcdnHead(vcdn, m, c)
    return classifiers, head
