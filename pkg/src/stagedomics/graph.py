"""Per-view patient similarity graphs.

Patients are nodes; an edge joins two patients whose cosine similarity is at
least ``epsilon``. ``epsilon`` is picked so that on average ``k_target``
entries per row of the full similarity matrix (self-pairs included) survive.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DegenerateSampleError, ShapeError


@dataclass(frozen=True)
class SimilarityGraph:
    n: int
    epsilon: float
    k_target: float
    adjacency: np.ndarray
    normalized: np.ndarray


def cosine_similarity(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"vectors differ in length: {x.shape} vs {y.shape}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise DegenerateSampleError("cosine similarity undefined for a zero-norm vector")
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def _check_rows(features, offset=0):
    norms = np.einsum("ij,ij->i", features, features)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        row = int(bad[0]) + offset
        raise DegenerateSampleError(f"sample row {row} has an all-zero feature vector", row=row)


def similarity_matrix(features):
    """Full symmetric cosine similarity matrix with an exact unit diagonal."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"features must be 2-D, got {x.shape}")
    _check_rows(x)
    s = kernels.cosine_block(x, x)
    s = 0.5 * (s + s.T)
    np.fill_diagonal(s, 1.0)
    return s


def epsilon_from_k(similarities, k_target):
    """Threshold equal to the ceil(n*K)-th largest entry of the similarity matrix.

    Rounding up guarantees at least n*K retained entries even when n*K is fractional.
    """
    s = np.asarray(similarities, dtype=np.float64)
    n = s.shape[0]
    if not 1 <= k_target <= n:
        raise ConfigError(f"k_target must lie in [1, {n}], got {k_target}")
    m = int(math.ceil(n * k_target))
    flat = np.sort(s, axis=None)[::-1]
    return float(flat[m - 1])


def build_adjacency(features, epsilon):
    s = similarity_matrix(features)
    return _threshold(s, epsilon)


def _threshold(s, epsilon):
    a = np.where(s >= epsilon, s, 0.0)
    np.fill_diagonal(a, 0.0)
    return a


def normalize_adjacency(a):
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.

    Negative weights are clamped to zero first.
    """
    a = np.maximum(np.asarray(a, dtype=np.float64), 0.0)
    n = a.shape[0]
    a_hat = a + np.eye(n)
    r = 1.0 / np.sqrt(a_hat.sum(axis=1))
    # r_i * r_j is commutative, so the result is exactly symmetric when A is
    return a_hat * np.outer(r, r)


def build_graph(features, k_target):
    """Graph over one block of samples, with epsilon chosen from that block."""
    s = similarity_matrix(features)
    eps = epsilon_from_k(s, k_target)
    a = _threshold(s, eps)
    return SimilarityGraph(s.shape[0], eps, float(k_target), a, normalize_adjacency(a))


def build_transductive_graph(train_features, test_features, epsilon, k_target=float("nan")):
    """One graph over train rows followed by test rows, thresholded at a train-derived epsilon."""
    tr = np.asarray(train_features, dtype=np.float64)
    te = np.asarray(test_features, dtype=np.float64)
    if te.size == 0:
        te = te.reshape(0, tr.shape[1])
    if tr.ndim != 2 or te.ndim != 2 or tr.shape[1] != te.shape[1]:
        raise ShapeError(f"train/test feature dims differ: {tr.shape} vs {te.shape}")
    _check_rows(tr)
    _check_rows(te, offset=tr.shape[0])
    a = build_adjacency(np.vstack([tr, te]), epsilon)
    return SimilarityGraph(a.shape[0], float(epsilon), float(k_target), a, normalize_adjacency(a))


def train_epsilon(train_features, k_target):
    return epsilon_from_k(similarity_matrix(train_features), k_target)
