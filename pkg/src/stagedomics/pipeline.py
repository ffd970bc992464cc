"""End-to-end run: train all seven view configurations, tune the cascade, write reports.

Output directory layout::

    config.yaml            resolved configuration
    split.json             fit / tune / test sample ids (unified ordering)
    trial_probs.csv        config, trial, sample_id, p_nc, p_ad for every eval node
    summaries_tune.csv     per-sample ensemble summary, tuning samples
    summaries_test.csv     per-sample ensemble summary, test samples
    metrics.csv            ACC / F1 / AUC / mean sigma per configuration on test, plus the cascade
    routing.csv            per test sample: exit stage, label, sigma at each visited stage
    cost_report.csv        cumulative cost and share of samples per stage
    histogram.csv          sigma histogram per configuration and true class (test samples)
    summary.json           machine-readable digest (see README for field names)
    checkpoints/<cfg>_t<t>.npz
    training_logs/<cfg>_t<t>.csv
"""

import csv
import json
import logging
import os

import numpy as np

from . import metrics as M
from .config import RunConfig, load_config, write_config
from .data import generate_synthetic, load_dataset
from .errors import ConfigError, DataError, UndefinedMetricError
from .model import load_checkpoint, pack_models, save_checkpoint, unpack_models
from .numcore import derive_seed, seeded_rng
from .staging import StageThresholds, cost_report, optimize_thresholds, select_stage_plan, staged_predict
from .train import predict as model_predict
from .train import prepare_inputs, run_trials
from .uncertainty import average_uncertainty, summarize_probs, write_summary_table

log = logging.getLogger(__name__)

CONFIGS = ((1,), (2,), (3,), (1, 2), (1, 3), (2, 3), (1, 2, 3))
_SPLIT_KEY = 0x5E1
HIST_COLUMNS = ("config", "class", "bin_lo", "bin_hi", "count")


def config_name(views):
    return "+".join(str(v) for v in views)


def parse_config_name(name):
    return tuple(int(v) for v in name.split("+"))


def _num(x):
    """Shortest round-trip text for a float (None stays None)."""
    return None if x is None else float(repr(float(x)))


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    if not os.path.exists(path):
        raise DataError(f"missing run artifact: {path}")
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------- data + split


def load_data(cfg):
    names = cfg["view_names"]
    costs = cfg["view_costs"]
    if cfg["data_dir"] is not None:
        return load_dataset(cfg["data_dir"], names, costs)
    ds = generate_synthetic(int(cfg["synthetic_n"]), int(cfg["synthetic_d"]),
                            [float(s) for s in cfg["synthetic_snr"]], int(cfg["synthetic_seed"]))
    for v in ds.views:
        if names:
            v.name = names[v.id - 1]
        v.cost = float(costs[v.id - 1])
    return ds


def make_split(dataset, cfg):
    """Fit / tune / test sample ids. Tuning ids are a stratified slice of training unless tuning on test."""
    train = np.sort(dataset.train_index)
    test = np.sort(dataset.test_index)
    if cfg["tune_on_test"]:
        return {"mode": "test", "fit": train, "tune": test, "test": test}
    rng = seeded_rng(derive_seed(cfg["seed"], _SPLIT_KEY))
    tune = []
    for cls in (0, 1):
        members = train[dataset.labels[train] == cls]
        k = int(round(float(cfg["val_fraction"]) * members.size))
        tune.append(rng.permutation(members)[:k])
    tune = np.sort(np.concatenate(tune)).astype(np.int64)
    fit = np.setdiff1d(train, tune)
    if tune.size == 0 or fit.size == 0:
        raise DataError("training set too small to carve out a tuning split")
    return {"mode": "validation", "fit": fit, "tune": tune, "test": test}


def eval_ids(split):
    if split["mode"] == "test":
        return split["test"]
    return np.concatenate([split["tune"], split["test"]])


# ---------------------------------------------------------------- training


def _write_log(path, history):
    cols = ["phase", "epoch"]
    for row in history:
        for k in row:
            if k not in cols:
                cols.append(k)
    tail = [c for c in ("vcdn", "total") if c in cols]
    cols = [c for c in cols if c not in tail] + tail
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, restval="")
        w.writeheader()
        for row in history:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def train_all(cfg, dataset=None):
    """Train every configuration; write split, trial probabilities, checkpoints and logs."""
    out = cfg["out"]
    os.makedirs(os.path.join(out, "checkpoints"), exist_ok=True)
    os.makedirs(os.path.join(out, "training_logs"), exist_ok=True)
    write_config(os.path.join(out, "config.yaml"), cfg)
    dataset = load_data(cfg) if dataset is None else dataset
    split = make_split(dataset, cfg)
    _write_json(os.path.join(out, "split.json"), {k: (v if k == "mode" else [int(i) for i in v])
                                                  for k, v in split.items()})
    ev = eval_ids(split)
    base = cfg.train_config()
    inputs = prepare_inputs(dataset, (1, 2, 3), split["fit"], ev, base.k_target)
    results = {}
    for views in CONFIGS:
        tcfg = cfg.train_config(views)
        name = config_name(views)
        log.info("configuration %s", name)
        trials = run_trials(dataset, tcfg, split["fit"], ev, inputs=inputs, keep_history=True)
        for t in trials:
            fp = {"views": list(views), "trial": t.trial, "seed": tcfg.seed, "k_target": tcfg.k_target,
                  "trials": tcfg.trials, "gcn_dims": list(tcfg.gcn_dims), "head_hidden": tcfg.head_hidden,
                  "dropout": tcfg.dropout}
            save_checkpoint(os.path.join(out, "checkpoints", f"{name}_t{t.trial}.npz"),
                            pack_models(t.classifiers, t.head), fp)
            _write_log(os.path.join(out, "training_logs", f"{name}_t{t.trial}.csv"), t.history)
        results[name] = trials
    write_trial_probs(os.path.join(out, "trial_probs.csv"), results)
    return dataset, split, results


def write_trial_probs(path, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "trial", "sample_id", "p_nc", "p_ad"])
        for name, trials in results.items():
            for t in trials:
                for sid, (p0, p1) in zip(t.sample_ids, t.probs):
                    w.writerow([name, t.trial, int(sid), repr(float(p0)), repr(float(p1))])


def read_trial_probs(path):
    """{config: (sample_ids, T x n x 2 array)} from ``trial_probs.csv``."""
    if not os.path.exists(path):
        raise DataError(f"missing run artifact: {path}")
    rows = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(rec["config"], {}).setdefault(int(rec["trial"]), []).append(
                (int(rec["sample_id"]), float(rec["p_nc"]), float(rec["p_ad"])))
    out = {}
    for name, by_trial in rows.items():
        trials = [by_trial[t] for t in sorted(by_trial)]
        ids = np.array([r[0] for r in trials[0]], dtype=np.int64)
        for tr in trials:
            if [r[0] for r in tr] != ids.tolist():
                raise DataError(f"{path}: trials of {name} cover different samples")
        stack = np.array([[[r[1], r[2]] for r in tr] for tr in trials])
        out[name] = (ids, stack)
    return out


def summaries_for(probs, ids):
    """Per-configuration summaries restricted to ``ids`` (kept in the given order)."""
    out = {}
    for name, (all_ids, stack) in probs.items():
        pos = {int(s): i for i, s in enumerate(all_ids)}
        try:
            cols = np.array([pos[int(s)] for s in ids], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"configuration {name} has no output for sample {exc.args[0]}") from None
        out[name] = summarize_probs(np.asarray(ids, dtype=np.int64), stack[:, cols, :])
    return out


# ---------------------------------------------------------------- staging + reports


def _safe_auc(scores, truth):
    try:
        return M.auc(scores, truth)
    except UndefinedMetricError:
        return None


def emit_histogram(summaries, labels, bins):
    """Rows (config, class, bin_lo, bin_hi, count) of sigma over [0, max sigma] per configuration."""
    if int(bins) < 1:
        raise ConfigError(f"bins must be >= 1, got {bins}")
    rows = []
    labels = np.asarray(labels)
    for name, s in summaries.items():
        hi = float(s.sigma.max()) if s.n else 0.0
        hi = hi if hi > 0 else 1.0
        edges = np.linspace(0.0, hi, bins + 1)
        y = labels[s.sample_ids]
        for cls in (0, 1):
            counts, _ = np.histogram(s.sigma[y == cls], bins=edges)
            for b in range(bins):
                rows.append((name, cls, float(edges[b]), float(edges[b + 1]), int(counts[b])))
    return rows


def write_histogram(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HIST_COLUMNS)
        for name, cls, lo, hi, c in rows:
            w.writerow([name, cls, repr(lo), repr(hi), c])


def _config_metrics(summary, labels):
    y = labels[summary.sample_ids]
    return {
        "acc": _num(M.accuracy(summary.voted_label, y)),
        "f1": _num(M.f1(summary.voted_label, y)),
        "auc": _num(_safe_auc(summary.mean_prob, y)),
        "avg_uncertainty": _num(average_uncertainty(summary)),
        "n": summary.n,
    }


def stage_all(cfg, dataset=None):
    """Plan selection, threshold search and test-set cascade from the artifacts in ``cfg['out']``."""
    out = cfg["out"]
    dataset = load_data(cfg) if dataset is None else dataset
    split = {k: (v if k == "mode" else np.array(v, dtype=np.int64))
             for k, v in _read_json(os.path.join(out, "split.json")).items()}
    probs = read_trial_probs(os.path.join(out, "trial_probs.csv"))
    labels = dataset.labels
    tune = summaries_for(probs, split["tune"])
    test = summaries_for(probs, split["test"])
    write_summary_table(os.path.join(out, "summaries_tune.csv"), tune)
    write_summary_table(os.path.join(out, "summaries_test.csv"), test)

    y_tune = labels[split["tune"]]
    tune_acc = {name: M.accuracy(s.voted_label, y_tune) for name, s in tune.items()}
    plan = select_stage_plan({parse_config_name(k): v for k, v in tune_acc.items()})
    stage_names = [config_name(v) for v in plan.stages]
    thresholds, best_tune = optimize_thresholds(*(tune[n] for n in stage_names), y_tune,
                                                steps=int(cfg["grid_steps"]))
    y_test = labels[split["test"]]
    result = staged_predict(*(test[n] for n in stage_names), thresholds, y_test)
    costs = {v.id: v.cost for v in dataset.views}
    cost = cost_report(result, plan, costs)

    config_metrics = {name: _config_metrics(s, labels) for name, s in test.items()}
    staged_metrics = {
        "acc": _num(result.accuracy),
        "f1": _num(M.f1(result.final_label, y_test)),
        "auc": _num(_safe_auc(result.final_score, y_test)),
        "n": int(result.sample_ids.size),
    }
    with open(os.path.join(out, "metrics.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "acc", "f1", "auc", "avg_uncertainty", "n"])
        for name, m in config_metrics.items():
            w.writerow([name, m["acc"], m["f1"], m["auc"], m["avg_uncertainty"], m["n"]])
        w.writerow(["staged", staged_metrics["acc"], staged_metrics["f1"], staged_metrics["auc"], "",
                    staged_metrics["n"]])
    write_routing(os.path.join(out, "routing.csv"), result)
    with open(os.path.join(out, "cost_report.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "views", "cumulative_cost", "fraction"])
        for k, (views, c, f) in enumerate(zip(plan.stages, cost.cumulative, result.stage_fractions), start=1):
            w.writerow([k, config_name(views), repr(c), repr(f)])
        w.writerow(["expected", "", repr(cost.expected), ""])
    write_histogram(os.path.join(out, "histogram.csv"), emit_histogram(test, labels, int(cfg["hist_bins"])))

    summary = {
        "mode": split["mode"],
        "views": {str(v.id): {"name": v.name, "cost": _num(v.cost)} for v in dataset.views},
        "plan": {"stage1": list(plan.stage1_views), "stage2": list(plan.stage2_views),
                 "stage3": list(plan.stage3_views)},
        "thresholds": {"t1": _num(thresholds.t1), "t2": _num(thresholds.t2)},
        "tune": {"n": int(split["tune"].size), "accuracy_by_config": {k: _num(v) for k, v in tune_acc.items()},
                 "staged_accuracy": _num(best_tune)},
        "test": {"configs": config_metrics, "staged": staged_metrics,
                 "stage_fractions": [_num(f) for f in result.stage_fractions]},
        "cost": {"cumulative": [_num(c) for c in cost.cumulative], "expected": _num(cost.expected)},
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    return summary


def write_routing(path, result):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "exit_stage", "label", "sigma_1", "sigma_2", "sigma_3"])
        for i in range(result.sample_ids.size):
            sig = ["" if np.isnan(s) else repr(float(s)) for s in result.sigmas[i]]
            w.writerow([int(result.sample_ids[i]), int(result.exit_stage[i]), int(result.final_label[i]), *sig])


def report_all(cfg, dataset=None, bins=None):
    """Rewrite histogram.csv and metrics.csv-style rows from existing trial outputs."""
    out = cfg["out"]
    dataset = load_data(cfg) if dataset is None else dataset
    split = _read_json(os.path.join(out, "split.json"))
    probs = read_trial_probs(os.path.join(out, "trial_probs.csv"))
    test = summaries_for(probs, split["test"])
    rows = emit_histogram(test, dataset.labels, int(bins or cfg["hist_bins"]))
    write_histogram(os.path.join(out, "histogram.csv"), rows)
    return {name: _config_metrics(s, dataset.labels) for name, s in test.items()}


def run_pipeline(cfg):
    """Train, stage and report. Returns the summary document."""
    if not isinstance(cfg, RunConfig):
        cfg = load_config(None, **cfg)
    dataset, _, _ = train_all(cfg)
    return stage_all(cfg, dataset)


# ---------------------------------------------------------------- re-inference


def predict_all(cfg, dataset=None):
    """Re-run inference from saved checkpoints and route test samples with the saved thresholds.

    The graph is rebuilt over the recorded fit samples plus the evaluation
    samples, so ``dataset`` must keep the training block used at train time.
    """
    out = cfg["out"]
    dataset = load_data(cfg) if dataset is None else dataset
    split = {k: (v if k == "mode" else np.array(v, dtype=np.int64))
             for k, v in _read_json(os.path.join(out, "split.json")).items()}
    summary = _read_json(os.path.join(out, "summary.json"))
    split["test"] = np.sort(dataset.test_index)
    ev = eval_ids(split)
    base = cfg.train_config()
    inputs = prepare_inputs(dataset, (1, 2, 3), split["fit"], ev, base.k_target)
    stages = [tuple(summary["plan"][f"stage{k}"]) for k in (1, 2, 3)]
    stage_summaries = []
    for views in stages:
        name = config_name(views)
        stack = []
        for t in range(base.trials):
            arrays, _ = load_checkpoint(os.path.join(out, "checkpoints", f"{name}_t{t}.npz"))
            classifiers, head = unpack_models(arrays, base.dropout)
            fused, _ = model_predict({v: inputs[v] for v in views}, classifiers, head, split["fit"].size)
            stack.append(fused)
        stack = np.stack(stack)
        pos = {int(s): i for i, s in enumerate(ev)}
        cols = np.array([pos[int(s)] for s in split["test"]], dtype=np.int64)
        stage_summaries.append(summarize_probs(split["test"], stack[:, cols, :]))
    th = StageThresholds(summary["thresholds"]["t1"], summary["thresholds"]["t2"])
    result = staged_predict(*stage_summaries, th, dataset.labels[split["test"]])
    with open(os.path.join(out, "predictions.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "exit_stage", "label", "p_mean", "sigma"])
        for i in range(result.sample_ids.size):
            stage = int(result.exit_stage[i])
            w.writerow([int(result.sample_ids[i]), stage, int(result.final_label[i]),
                        repr(float(result.final_score[i])), repr(float(result.sigmas[i, stage - 1]))])
    return result
