import numpy as np
import pytest

from stagedomics import numcore as nc
from stagedomics import train as tr
from stagedomics.data import generate_synthetic
from stagedomics.errors import ConfigError, NumericError, TrainingDivergenceError
from stagedomics.metrics import accuracy

SMALL = dict(gcn_dims=(8, 8, 4), head_hidden=8)


def cfg(**kw):
    base = dict(lr=1e-2, pretrain_epochs=30, joint_epochs=20, trials=2, **SMALL)
    base.update(kw)
    return tr.TrainConfig(**base)


@pytest.fixture(scope="module")
def ds():
    return generate_synthetic(60, 6, [3.0, 0.3, 0.3], seed=1)


@pytest.fixture(scope="module")
def inputs(ds):
    return tr.prepare_inputs(ds, (1, 2, 3), ds.train_index, ds.test_index, 2.0)


def _labels(ds):
    return ds.labels[ds.train_index]


def test_config_validation():
    for bad in (dict(trials=0), dict(joint_epochs=-1), dict(dropout=1.0), dict(view_subset=()),
                dict(view_subset=(1, 1)), dict(lr=-1.0), dict(gcn_dims=(0,))):
        with pytest.raises(ConfigError):
            tr.TrainConfig(**bad)
    c = tr.TrainConfig()
    assert (c.lr, c.pretrain_epochs, c.joint_epochs, c.trials, c.k_target, c.dropout) == (1e-3, 500, 2500, 10, 2.0, 0.5)
    assert c.gcn_dims == (200, 200, 100) and c.fusion_lr == 1e-3


def test_prepare_inputs_node_order(ds, inputs):
    vin = inputs[1]
    assert vin.x.shape[0] == ds.n
    assert np.array_equal(vin.x[: ds.train_index.size], ds.view(1).features[ds.train_index])
    assert np.allclose(vin.ax, vin.a_norm @ vin.x)


def test_pretrain_zero_epochs_returns_init(inputs, ds):
    clf0 = tr._fresh_classifier(inputs[1], cfg(), nc.seeded_rng(3))
    before = {k: v.copy() for k, v in clf0.params.items()}
    out = tr.pretrain_view(inputs[1], _labels(ds), cfg(pretrain_epochs=0), nc.seeded_rng(4), classifier=clf0)
    assert all(np.array_equal(before[k], out.params[k]) for k in before)


def test_pretrain_separable_reaches_full_train_accuracy():
    ds = generate_synthetic(20, 4, [6.0, 0.0, 0.0], seed=5)
    inp = tr.prepare_inputs(ds, (1,), ds.train_index, ds.test_index, 1.0)
    c = cfg(pretrain_epochs=150, dropout=0.0)
    y = _labels(ds)
    clf = tr.pretrain_view(inp[1], y, c, nc.seeded_rng(0))
    probs = tr._view_probs(inp[1], clf, y.size, None, False).value
    assert accuracy(probs.argmax(axis=1), y) == 1.0


def test_pretrain_deterministic(inputs, ds):
    a = tr.pretrain_view(inputs[2], _labels(ds), cfg(), nc.seeded_rng(11))
    b = tr.pretrain_view(inputs[2], _labels(ds), cfg(), nc.seeded_rng(11))
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)


def test_pretrain_logs_each_epoch(inputs, ds):
    hist = []
    tr.pretrain_view(inputs[1], _labels(ds), cfg(pretrain_epochs=7), nc.seeded_rng(0), history=hist)
    assert [h["epoch"] for h in hist] == list(range(7)) and all("gcn_1" in h for h in hist)


def test_divergence_reports_epoch(inputs, ds, monkeypatch):
    real = nc.adam_step

    def flaky(store, grads, lr):
        if store.step == 3:
            raise NumericError("non-finite gradient for 'gcn.W0'")
        return real(store, grads, lr)

    monkeypatch.setattr(tr.nc, "adam_step", flaky)
    with pytest.raises(TrainingDivergenceError, match="epoch 3") as info:
        tr.pretrain_view(inputs[1], _labels(ds), cfg(), nc.seeded_rng(0))
    assert info.value.epoch == 3


def test_divergence_annotated_with_trial(ds, monkeypatch):
    real = nc.adam_step
    calls = {"n": 0}

    def flaky(store, grads, lr):
        calls["n"] += 1
        if calls["n"] > 35:  # second trial, epoch 5
            raise NumericError("boom")
        return real(store, grads, lr)

    monkeypatch.setattr(tr.nc, "adam_step", flaky)
    with pytest.raises(TrainingDivergenceError, match="trial 1") as info:
        tr.run_trials(ds, cfg(view_subset=(1,)))
    assert info.value.trial == 1 and info.value.epoch == 5


def test_joint_loss_decreases(inputs, ds):
    y = _labels(ds)
    c = cfg(vcdn_lr=1e-2, dropout=0.0, joint_epochs=60)
    rng = nc.seeded_rng(0)
    clfs = {v: tr.pretrain_view(inputs[v], y, c, rng) for v in (1, 2)}
    sub = {v: inputs[v] for v in (1, 2)}
    hist = []
    tr.train_joint(sub, y, c, rng, classifiers=clfs, history=hist)
    assert hist[-1]["total"] < hist[0]["total"]
    assert set(hist[0]) == {"phase", "epoch", "gcn_1", "gcn_2", "vcdn", "total"}


def test_zero_learning_rates_leave_everything(inputs, ds):
    y = _labels(ds)
    c = cfg(lr=0.0, vcdn_lr=0.0, pretrain_epochs=5, joint_epochs=5)
    init = {v: tr._fresh_classifier(inputs[v], c, nc.seeded_rng(v)) for v in (1, 2)}
    before = {v: {k: a.copy() for k, a in clf.params.items()} for v, clf in init.items()}
    sub = {v: inputs[v] for v in (1, 2)}
    head_rng = nc.seeded_rng(99)
    clfs, head = tr.train_joint(sub, y, c, head_rng, classifiers=init)
    ref_head = tr.init_vcdn(2, nc.seeded_rng(99))
    for v in (1, 2):
        assert all(np.array_equal(before[v][k], clfs[v].params[k]) for k in before[v])
    assert all(np.array_equal(ref_head.params[k], head.params[k]) for k in head.params)


def test_alternating_steps_freeze_other_block(inputs, ds, monkeypatch):
    y = _labels(ds)
    c = cfg(pretrain_epochs=0, joint_epochs=4)
    real = nc.adam_step
    log = []

    def recording(store, grads, lr):
        before = {k: v.copy() for k, v in store.params.items()}
        real(store, grads, lr)
        log.append((store, before, {k: v.copy() for k, v in store.params.items()}))

    monkeypatch.setattr(tr.nc, "adam_step", recording)
    tr.train_joint({v: inputs[v] for v in (1, 2, 3)}, y, c, nc.seeded_rng(0))
    assert len(log) == 8
    gstore, vstore = log[0][0], log[1][0]
    assert gstore is not vstore
    assert all(rec[0] is (gstore if i % 2 == 0 else vstore) for i, rec in enumerate(log))
    assert all(k.startswith("vcdn.") for k in vstore.params)
    # after each step the other store must be bit-identical at its next step
    for i in range(2, 8):
        prev_same = log[i - 2]
        assert all(prev_same[2][k].tobytes() == log[i][1][k].tobytes() for k in prev_same[2])
    # and each step actually moved its own block
    assert any(not np.array_equal(log[0][1][k], log[0][2][k]) for k in log[0][1])
    assert any(not np.array_equal(log[1][1][k], log[1][2][k]) for k in log[1][1])


def test_small_lr_step_does_not_increase_loss(inputs, ds):
    y = _labels(ds)
    clf = tr._fresh_classifier(inputs[1], cfg(dropout=0.0), nc.seeded_rng(0))
    clf.dropout = 0.0
    store = nc.ParamStore(clf.params)
    leaves = store.leaves()
    loss = nc.cross_entropy(tr._view_probs(inputs[1], clf, y.size, None, False, leaves), y)
    loss.backward()
    nc.adam_step(store, {k: t.grad for k, t in leaves.items()}, 1e-6)
    after = nc.cross_entropy(tr._view_probs(inputs[1], clf, y.size, None, False, store.params), y)
    assert float(after.value) <= float(loss.value)


def test_bi_view_beats_noise_view():
    ds = generate_synthetic(100, 6, [6.0, 0.0, 0.0], seed=2)
    y_te = ds.labels[ds.test_index]
    c = cfg(trials=1, pretrain_epochs=60, joint_epochs=60, vcdn_lr=1e-2)
    bi = tr.run_trials(ds, tr.TrainConfig(**{**c.__dict__, "view_subset": (1, 2)}))[0]
    v2 = tr.run_trials(ds, tr.TrainConfig(**{**c.__dict__, "view_subset": (2,)}))[0]
    assert accuracy(bi.probs.argmax(1), y_te) >= accuracy(v2.probs.argmax(1), y_te)


def test_run_trials_shapes_and_determinism(ds):
    one = tr.run_trials(ds, cfg(trials=1, view_subset=(1, 3)))
    assert len(one) == 1 and one[0].probs.shape == (ds.test_index.size, 2)
    assert np.allclose(one[0].probs.sum(axis=1), 1.0, atol=1e-6)
    assert set(one[0].view_probs) == {1, 3}
    a = tr.run_trials(ds, cfg(trials=3, view_subset=(1, 2)))
    b = tr.run_trials(ds, cfg(trials=3, view_subset=(1, 2)))
    assert [t.trial for t in a] == [0, 1, 2]
    for x, y in zip(a, b):
        assert x.probs.tobytes() == y.probs.tobytes()
    assert not np.array_equal(a[0].probs, a[1].probs)


def test_ten_trials_mostly_distinct(ds):
    outs = tr.run_trials(ds, cfg(trials=10, view_subset=(2,), pretrain_epochs=10))
    distinct = {o.probs.tobytes() for o in outs}
    assert len(distinct) == 10


def test_parallel_trials_match_serial(ds):
    serial = tr.run_trials(ds, cfg(trials=2, view_subset=(1,)))
    par = tr.run_trials(ds, cfg(trials=2, view_subset=(1,), n_jobs=2))
    assert [t.trial for t in par] == [0, 1]
    for x, y in zip(serial, par):
        assert x.probs.tobytes() == y.probs.tobytes()
