"""Pretraining, alternating GCN/VCDN optimisation, and seeded trial ensembles.

Graph nodes are ordered labelled (fit) rows first, then evaluation rows.
Loss terms only ever see the leading labelled rows; the evaluation rows take
part in message passing.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import numcore as nc
from .errors import ConfigError, NumericError, TrainingDivergenceError
from .graph import build_transductive_graph, train_epsilon
from .model import (DEFAULT_GCN_DIMS, DEFAULT_HEAD_HIDDEN, classify, gcn_forward, init_classifier,
                    init_vcdn, vcdn_forward)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    vcdn_lr: float | None = None
    pretrain_epochs: int = 500
    joint_epochs: int = 2500
    trials: int = 10
    k_target: float = 2.0
    dropout: float = 0.5
    seed: int = 0
    view_subset: tuple = (1, 2, 3)
    gcn_dims: tuple = DEFAULT_GCN_DIMS
    head_hidden: int = DEFAULT_HEAD_HIDDEN
    n_jobs: int = 1

    def __post_init__(self):
        self.view_subset = tuple(int(v) for v in self.view_subset)
        self.gcn_dims = tuple(int(v) for v in self.gcn_dims)
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.pretrain_epochs < 0 or self.joint_epochs < 0:
            raise ConfigError("epoch counts must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.lr < 0 or (self.vcdn_lr is not None and self.vcdn_lr < 0):
            raise ConfigError("learning rates must be >= 0")
        if not self.view_subset or len(set(self.view_subset)) != len(self.view_subset):
            raise ConfigError(f"view_subset must be non-empty and distinct, got {self.view_subset}")
        if len(self.view_subset) > 3:
            raise ConfigError("at most 3 views are supported")
        if not self.gcn_dims or min(self.gcn_dims) < 1:
            raise ConfigError(f"invalid gcn_dims {self.gcn_dims}")

    @property
    def fusion_lr(self):
        return self.lr if self.vcdn_lr is None else self.vcdn_lr


@dataclass
class TrialOutput:
    trial: int
    sample_ids: np.ndarray
    probs: np.ndarray
    view_probs: dict
    classifiers: dict = field(default_factory=dict, repr=False)
    head: object = field(default=None, repr=False)
    history: list = field(default_factory=list, repr=False)


@dataclass
class ViewInput:
    """One view's features in graph node order plus its normalised adjacency."""

    view_id: int
    x: np.ndarray
    a_norm: np.ndarray
    epsilon: float

    def __post_init__(self):
        self.ax = self.a_norm @ self.x


def prepare_inputs(dataset, view_ids, fit_index, eval_index, k_target):
    fit_index = np.asarray(fit_index, dtype=np.int64)
    eval_index = np.asarray(eval_index, dtype=np.int64)
    out = {}
    for vid in view_ids:
        feats = dataset.view(vid).features
        tr, ev = feats[fit_index], feats[eval_index]
        eps = train_epsilon(tr, k_target)
        g = build_transductive_graph(tr, ev, eps, k_target)
        out[vid] = ViewInput(vid, np.vstack([tr, ev]), g.normalized, eps)
    return out


def _fresh_classifier(vin, cfg, rng):
    return init_classifier((vin.x.shape[1], *cfg.gcn_dims), rng, cfg.head_hidden, dropout=cfg.dropout)


def _view_probs(vin, clf, n_fit, rng, training, params=None):
    h = gcn_forward(vin.x, vin.a_norm, clf, training=training, rng=rng, params=params, ax=vin.ax)
    return classify(nc.take_rows(h, np.arange(n_fit)), clf, params=params)


def pretrain_view(vin, labels, cfg, rng, classifier=None, history=None):
    """Full-batch Adam on the view's cross-entropy over the labelled leading nodes."""
    labels = np.asarray(labels, dtype=np.int64)
    clf = classifier if classifier is not None else _fresh_classifier(vin, cfg, rng)
    if cfg.pretrain_epochs == 0:
        return clf
    store = nc.ParamStore(clf.params)
    for epoch in range(cfg.pretrain_epochs):
        try:
            leaves = store.leaves()
            loss = nc.cross_entropy(_view_probs(vin, clf, labels.size, rng, True, leaves), labels)
            loss.backward()
            nc.adam_step(store, {k: t.grad for k, t in leaves.items()}, cfg.lr)
        except NumericError as exc:
            raise TrainingDivergenceError(f"view {vin.view_id} pretraining diverged at epoch {epoch}: {exc}",
                                          epoch=epoch) from exc
        if history is not None:
            history.append({"phase": "pretrain", "epoch": epoch, f"gcn_{vin.view_id}": float(loss.value),
                            "total": float(loss.value)})
    clf.params = store.params
    return clf


def _split(leaves, vid):
    prefix = f"{vid}:"
    return {k[len(prefix):]: t for k, t in leaves.items() if k.startswith(prefix)}


def joint_loss(inputs, classifiers, head, labels, rng, gcn_params=None, vcdn_params=None, training=True):
    """Total loss sum_k L_GCN(k) + L_VCDN on the labelled nodes, with its parts."""
    n_fit = labels.size
    dists, parts = [], {}
    for vid, vin in inputs.items():
        p = None if gcn_params is None else _split(gcn_params, vid)
        probs = _view_probs(vin, classifiers[vid], n_fit, rng, training, p)
        parts[vid] = nc.cross_entropy(probs, labels)
        dists.append(probs)
    fused = vcdn_forward(nc.outer_rows(dists), head, params=vcdn_params)
    l_vcdn = nc.cross_entropy(fused, labels)
    return nc.total(*parts.values(), l_vcdn), parts, l_vcdn


def train_joint(inputs, labels, cfg, rng, classifiers=None, history=None):
    """Pretrain (unless ``classifiers`` given), then alternate GCN and VCDN steps.

    Each epoch: (a) one Adam step on all GCN parameters with the VCDN fixed,
    (b) one Adam step on the VCDN with the GCNs fixed. Both steps use the
    same total loss.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if not 2 <= len(inputs) <= 3:
        raise ConfigError(f"joint training needs 2 or 3 views, got {len(inputs)}")
    if classifiers is None:
        classifiers = {vid: pretrain_view(vin, labels, cfg, rng, history=history) for vid, vin in inputs.items()}
    head = init_vcdn(len(inputs), rng)
    gstore = nc.ParamStore({f"{vid}:{k}": v for vid, clf in classifiers.items() for k, v in clf.params.items()})
    vstore = nc.ParamStore(head.params)
    for epoch in range(cfg.joint_epochs):
        try:
            gl, vl = gstore.leaves(True), vstore.leaves(False)
            loss, parts, l_vcdn = joint_loss(inputs, classifiers, head, labels, rng, gl, vl)
            loss.backward()
            nc.adam_step(gstore, {k: t.grad for k, t in gl.items()}, cfg.lr)

            gl, vl = gstore.leaves(False), vstore.leaves(True)
            loss_b, _, _ = joint_loss(inputs, classifiers, head, labels, rng, gl, vl)
            loss_b.backward()
            nc.adam_step(vstore, {k: t.grad for k, t in vl.items()}, cfg.fusion_lr)
        except NumericError as exc:
            raise TrainingDivergenceError(f"joint training diverged at epoch {epoch}: {exc}", epoch=epoch) from exc
        if history is not None:
            row = {"phase": "joint", "epoch": epoch}
            row.update({f"gcn_{vid}": float(t.value) for vid, t in parts.items()})
            row["vcdn"] = float(l_vcdn.value)
            row["total"] = float(loss.value)
            history.append(row)
    for vid, clf in classifiers.items():
        clf.params = {k: v for k, v in ((k, gstore.params[f"{vid}:{k}"]) for k in clf.params)}
    head.params = vstore.params
    return classifiers, head


def predict(inputs, classifiers, head, n_fit):
    """Inference-mode distributions on the evaluation nodes: (fused, per-view)."""
    per_view = {}
    for vid, vin in inputs.items():
        h = gcn_forward(vin.x, vin.a_norm, classifiers[vid], training=False, ax=vin.ax)
        ev = nc.take_rows(h, np.arange(n_fit, vin.x.shape[0]))
        per_view[vid] = classify(ev, classifiers[vid]).value
    if head is None:
        (only,) = per_view.values()
        return only, per_view
    fused = vcdn_forward(nc.outer_rows(list(per_view.values())), head).value
    return fused, per_view


def train_once(inputs, labels, cfg, rng, history=None):
    """Fresh init + full retrain for one configuration. Returns (classifiers, head or None)."""
    if len(inputs) == 1:
        (vid, vin), = inputs.items()
        return {vid: pretrain_view(vin, labels, cfg, rng, history=history)}, None
    return train_joint(inputs, labels, cfg, rng, history=history)


def _one_trial(t, inputs, labels, eval_ids, cfg, keep_history):
    rng = nc.seeded_rng(nc.derive_seed(cfg.seed, t))
    history = [] if keep_history else None
    try:
        classifiers, head = train_once(inputs, labels, cfg, rng, history)
    except TrainingDivergenceError as exc:
        exc.trial = t
        exc.args = (f"trial {t}: {exc.args[0]}",)
        raise
    probs, per_view = predict(inputs, classifiers, head, labels.size)
    return TrialOutput(t, eval_ids, probs, per_view, classifiers, head, history or [])


def run_trials(dataset, cfg, fit_index=None, eval_index=None, inputs=None, keep_history=False):
    """Train ``cfg.trials`` independent models on ``cfg.view_subset``; collect eval-node outputs.

    Trial t seeds its generator with ``derive_seed(cfg.seed, t)``. The list is
    ordered by trial index.
    """
    fit_index = dataset.train_index if fit_index is None else np.asarray(fit_index, dtype=np.int64)
    eval_index = dataset.test_index if eval_index is None else np.asarray(eval_index, dtype=np.int64)
    if inputs is None:
        inputs = prepare_inputs(dataset, cfg.view_subset, fit_index, eval_index, cfg.k_target)
    else:
        inputs = {vid: inputs[vid] for vid in cfg.view_subset}
    labels = dataset.labels[fit_index]
    log.info("training views %s for %d trial(s)", cfg.view_subset, cfg.trials)
    if cfg.n_jobs != 1 and cfg.trials > 1:
        return list(Parallel(n_jobs=cfg.n_jobs)(
            delayed(_one_trial)(t, inputs, labels, eval_index, cfg, keep_history) for t in range(cfg.trials)))
    return [_one_trial(t, inputs, labels, eval_index, cfg, keep_history) for t in range(cfg.trials)]
