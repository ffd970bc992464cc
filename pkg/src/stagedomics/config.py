"""Run configuration: a flat YAML mapping of the keys in ``SCHEMA``.

An empty file (plus a data source) reproduces the reference setup: 10 trials,
K = 2, three GCN layers of 200/200/100 units.
"""

import os
from dataclasses import dataclass, field, fields

import yaml

from .errors import ConfigError
from .train import TrainConfig

# key: (default, description)
SCHEMA = {
    "data_dir": (None, "directory in the MOGONET layout; exclusive with synthetic_n"),
    "synthetic_n": (None, "generate a synthetic dataset with this many samples"),
    "synthetic_d": (20, "features per synthetic view"),
    "synthetic_snr": ([3.0, 0.5, 0.5], "per-view class separation; view k alone has Bayes accuracy Phi(snr_k)"),
    "synthetic_seed": (0, "seed of the synthetic generator"),
    "seed": (0, "base seed; trial t uses a seed derived from (seed, t)"),
    "lr": (1e-3, "Adam learning rate for the GCNs"),
    "vcdn_lr": (None, "Adam learning rate for the fusion head (defaults to lr)"),
    "pretrain_epochs": (500, "full-batch epochs of per-view pretraining"),
    "joint_epochs": (2500, "alternating GCN/fusion epochs for multi-view models"),
    "trials": (10, "independent retrains per view configuration"),
    "k_target": (2.0, "average retained similarity entries per node, self included"),
    "dropout": (0.5, "dropout rate on GCN layer outputs while training"),
    "gcn_dims": ([200, 200, 100], "GCN hidden widths"),
    "head_hidden": (64, "hidden width of the per-view classifier head"),
    "n_jobs": (1, "parallel trial workers (joblib)"),
    "tune_on_test": (False, "pick the stage plan and thresholds on the test set"),
    "val_fraction": (0.2, "share of training samples held out for tuning when tune_on_test is false"),
    "view_names": (None, "display names for views 1..3"),
    "view_costs": ([1.0, 1.0, 1.0], "acquisition cost of views 1..3"),
    "grid_steps": (100, "threshold grid points between min and max sigma"),
    "hist_bins": (10, "bins of the uncertainty histogram"),
    "out": ("out", "output directory"),
}

_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"view_subset"}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.values) - set(SCHEMA)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = {k: d for k, (d, _) in SCHEMA.items()}
        merged.update({k: v for k, v in self.values.items() if v is not None or k in ("vcdn_lr",)})
        self.values = merged
        has_dir = merged["data_dir"] is not None
        has_syn = merged["synthetic_n"] is not None
        if has_dir == has_syn:
            raise ConfigError("specify exactly one data source: data_dir or synthetic_n")
        if not 0.0 < float(merged["val_fraction"]) < 1.0:
            raise ConfigError("val_fraction must lie in (0, 1)")
        if len(merged["view_costs"]) != 3 or any(float(c) < 0 for c in merged["view_costs"]):
            raise ConfigError("view_costs needs 3 non-negative numbers")
        if merged["view_names"] is not None and len(merged["view_names"]) != 3:
            raise ConfigError("view_names needs 3 entries")
        if int(merged["hist_bins"]) < 1 or int(merged["grid_steps"]) < 2:
            raise ConfigError("hist_bins must be >= 1 and grid_steps >= 2")
        self.train_config()  # validates training fields

    def __getitem__(self, key):
        return self.values[key]

    def train_config(self, view_subset=(1, 2, 3)):
        kw = {k: self.values[k] for k in _TRAIN_KEYS}
        try:
            kw["lr"] = float(kw["lr"])
            kw["k_target"] = float(kw["k_target"])
            kw["dropout"] = float(kw["dropout"])
            if kw["vcdn_lr"] is not None:
                kw["vcdn_lr"] = float(kw["vcdn_lr"])
            for k in ("pretrain_epochs", "joint_epochs", "trials", "seed", "head_hidden", "n_jobs"):
                kw[k] = int(kw[k])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad training value: {exc}") from None
        return TrainConfig(view_subset=view_subset, **kw)

    def as_dict(self):
        return dict(self.values)


def load_config(path=None, **overrides):
    """Read ``path`` (if given) and apply ``overrides``; a ``None`` override resets the key to its default."""
    values = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                loaded = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: expected a flat key/value mapping")
        values.update(loaded)
    values.update(overrides)
    return RunConfig(values)


def write_config(path, cfg):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.as_dict(), fh, sort_keys=True)
