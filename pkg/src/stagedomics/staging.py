"""Uncertainty-gated cascade: single view, then a pair, then all three views.

A sample leaves stage 1 when its single-view sigma is <= t1, otherwise leaves
stage 2 when its pair sigma is <= t2, otherwise is decided by the tri-view
model. The label used is always the voted label of the stage it exits at.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AlignmentError, ConfigError, DataError

GRID_STEPS = 100
# distance of the "skip this stage" sentinel below the smallest observed sigma
SENTINEL_OFFSET = 1.0


@dataclass(frozen=True)
class StagePlan:
    stage1_views: tuple
    stage2_views: tuple
    stage3_views: tuple

    def __post_init__(self):
        s1, s2, s3 = set(self.stage1_views), set(self.stage2_views), set(self.stage3_views)
        if not (len(s1) == 1 and len(s2) == 2 and len(s3) == 3 and s1 < s2 < s3):
            raise ConfigError(f"stage views must nest 1 < 2 < 3: {self}")

    @property
    def stages(self):
        return (self.stage1_views, self.stage2_views, self.stage3_views)


@dataclass(frozen=True)
class StageThresholds:
    t1: float
    t2: float


@dataclass
class StagedResult:
    sample_ids: np.ndarray
    exit_stage: np.ndarray
    final_label: np.ndarray
    final_score: np.ndarray
    sigmas: np.ndarray          # n x 3, NaN for stages a sample never reached
    thresholds: StageThresholds
    stage_fractions: tuple
    accuracy: float | None = None


@dataclass(frozen=True)
class CostReport:
    cumulative: tuple
    expected: float


def _key(views):
    return tuple(sorted(int(v) for v in views))


def select_stage_plan(accuracies, view_ids=(1, 2, 3)):
    """Best single view, then the best pair that keeps it, then everything.

    ``accuracies`` maps view-id collections to accuracy. Ties go to lower ids.
    """
    acc = {_key(k): float(v) for k, v in accuracies.items()}
    views = sorted(int(v) for v in view_ids)
    if len(views) != 3:
        raise ConfigError(f"staging needs exactly 3 views, got {views}")
    need = [(v,) for v in views] + [_key(p) for p in ((views[0], views[1]), (views[0], views[2]), (views[1], views[2]))]
    missing = [k for k in need if k not in acc]
    if missing:
        raise ConfigError(f"missing accuracies for view sets {missing}")
    first = views[0]
    for v in views[1:]:
        if acc[(v,)] > acc[(first,)]:
            first = v
    others = [v for v in views if v != first]
    second = others[0]
    if acc[_key((first, others[1]))] > acc[_key((first, second))]:
        second = others[1]
    return StagePlan((first,), _key((first, second)), tuple(views))


def threshold_grid(sigmas, steps=GRID_STEPS):
    """Sentinel below min(sigma), then ``steps`` evenly spaced values over [min, max]."""
    s = np.asarray(sigmas, dtype=np.float64)
    if s.size == 0:
        raise DataError("threshold grid needs at least one sigma")
    lo, hi = float(s.min()), float(s.max())
    sentinel = lo - SENTINEL_OFFSET
    if lo == hi:
        return np.array([sentinel, lo])
    return np.concatenate([[sentinel], np.linspace(lo, hi, steps)])


def _check_aligned(*summaries):
    ids = summaries[0].sample_ids
    for s in summaries[1:]:
        if not np.array_equal(s.sample_ids, ids):
            raise AlignmentError("stage summaries cover different samples")
    return ids


def optimize_thresholds(s1, s2, s3, labels, steps=GRID_STEPS):
    """Exhaustive (t1, t2) search maximising staged accuracy over all samples.

    Accuracy ties go to the larger t1, then the larger t2 (earlier exits).
    Returns ``(StageThresholds, best_accuracy)``.
    """
    _check_aligned(s1, s2, s3)
    labels = np.asarray(labels)
    if labels.shape != (s1.n,):
        raise AlignmentError(f"{labels.size} labels for {s1.n} samples")
    g1 = threshold_grid(s1.sigma, steps)
    g2 = threshold_grid(s2.sigma, steps)
    ok = [(s.voted_label == labels).astype(np.int64) for s in (s1, s2, s3)]
    counts = kernels.grid_correct_counts(s1.sigma, s2.sigma, ok[0], ok[1], ok[2], g1, g2)
    best = counts.max()
    a = int(np.flatnonzero((counts == best).any(axis=1))[-1])
    b = int(np.flatnonzero(counts[a] == best)[-1])
    return StageThresholds(float(g1[a]), float(g2[b])), float(best / s1.n)


def route(sig1, sig2, t1, t2):
    """Exit stage (1, 2 or 3) per sample."""
    sig1, sig2 = np.asarray(sig1), np.asarray(sig2)
    return np.where(sig1 <= t1, 1, np.where(sig2 <= t2, 2, 3)).astype(np.int64)


def staged_predict(s1, s2, s3, thresholds, labels=None):
    ids = _check_aligned(s1, s2, s3)
    stage = route(s1.sigma, s2.sigma, thresholds.t1, thresholds.t2)
    pick = lambda a, b, c: np.choose(stage - 1, [a, b, c])  # noqa: E731
    label = pick(s1.voted_label, s2.voted_label, s3.voted_label)
    score = pick(s1.mean_prob, s2.mean_prob, s3.mean_prob)
    sig = np.column_stack([s1.sigma, s2.sigma, s3.sigma]).astype(np.float64)
    sig[stage < 2, 1] = np.nan
    sig[stage < 3, 2] = np.nan
    n = ids.size
    fractions = tuple(float(np.count_nonzero(stage == k) / n) for k in (1, 2, 3))
    acc = None
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise AlignmentError(f"{labels.size} labels for {n} samples")
        acc = float(np.count_nonzero(label == labels) / n)
    return StagedResult(ids, stage, label, score, sig, thresholds, fractions, acc)


def cost_report(result, plan, view_costs):
    """Expected per-sample acquisition cost of the cascade.

    ``view_costs`` maps view id to cost (or is a sequence indexed by id - 1).
    """
    if not isinstance(view_costs, dict):
        view_costs = {i + 1: c for i, c in enumerate(view_costs)}
    if any(float(c) < 0 for c in view_costs.values()):
        raise ConfigError("view costs must be non-negative")
    cumulative = tuple(float(sum(float(view_costs[v]) for v in views)) for views in plan.stages)
    expected = float(sum(f * c for f, c in zip(result.stage_fractions, cumulative)))
    return CostReport(cumulative, expected)
