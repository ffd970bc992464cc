"""Collapse T trial outputs into voted labels and per-sample spread."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, DomainError

AD = 1
NC = 0


@dataclass
class EnsembleSummary:
    """Columnar per-sample summary of T trials (arrays indexed by sample)."""

    sample_ids: np.ndarray
    ad_probs: np.ndarray     # T x n
    mean_prob: np.ndarray
    sigma: np.ndarray
    voted_label: np.ndarray
    vote_counts: np.ndarray  # n x 2

    @property
    def n(self):
        return int(self.sample_ids.size)

    @property
    def trials(self):
        return int(self.ad_probs.shape[0])


def hard_labels(probs):
    """argmax over (NC, AD) with an exact tie going to AD."""
    probs = np.asarray(probs)
    return (probs[..., AD] >= probs[..., NC]).astype(np.int64)


def summarize_trials(trials):
    if not trials:
        raise DomainError("need at least one trial")
    ids = np.asarray(trials[0].sample_ids)
    for t in trials[1:]:
        if not np.array_equal(np.asarray(t.sample_ids), ids):
            raise AlignmentError(f"trial {t.trial} covers different samples than trial {trials[0].trial}")
    stack = np.stack([np.asarray(t.probs, dtype=np.float64) for t in trials])  # T x n x c
    return summarize_probs(ids, stack)


def summarize_probs(sample_ids, stack):
    """Summary from a T x n x c array of class distributions."""
    stack = np.asarray(stack, dtype=np.float64)
    p = stack[:, :, AD]
    n_trials = p.shape[0]
    mean = p.mean(axis=0)
    if n_trials > 1:
        sigma = p.std(axis=0, ddof=1)
        # rounding in the mean can leave ~1e-17 spread on identical trials
        sigma[np.ptp(p, axis=0) == 0.0] = 0.0
    else:
        sigma = np.zeros_like(mean)
    votes = hard_labels(stack)  # T x n
    ad_votes = votes.sum(axis=0)
    counts = np.stack([n_trials - ad_votes, ad_votes], axis=1)
    voted = np.where(counts[:, AD] > counts[:, NC], AD, NC)
    tie = counts[:, AD] == counts[:, NC]
    voted[tie] = np.where(mean[tie] >= 0.5, AD, NC)
    return EnsembleSummary(np.asarray(sample_ids), p, mean, sigma, voted.astype(np.int64), counts)


def average_uncertainty(summary):
    if summary.n == 0:
        raise DomainError("cannot average uncertainty over zero samples")
    return float(np.mean(summary.sigma))


SUMMARY_COLUMNS = ("sample_id", "stage_model", "p_mean", "sigma", "voted_label")


def write_summary_table(path, summaries):
    """Rows (sample_id, stage_model, p_mean, sigma, voted_label) for every configuration.

    ``summaries`` maps a configuration name to its ``EnsembleSummary``.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for name, s in summaries.items():
            for i in range(s.n):
                w.writerow([int(s.sample_ids[i]), name, repr(float(s.mean_prob[i])),
                            repr(float(s.sigma[i])), int(s.voted_label[i])])

