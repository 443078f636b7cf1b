"""Group fairness and accuracy metrics for binary classifiers.

All gap metrics compare exactly two groups and work on hard predictions
obtained by thresholding sigmoid scores (score > threshold, i.e. positive
logit sign at the default 0.5):

    independence  |P(pred=+ | A) - P(pred=+ | B)|
    separation    sum over true labels v of |P(pred=+ | A, Y=v) - P(pred=+ | B, Y=v)|
    sufficiency   sum over predictions v of |P(Y=+ | A, pred=v) - P(Y=+ | B, pred=v)|
    inaccuracy    P(pred != Y)

The Wasserstein-1 distance between the two groups' score distributions is
computed exactly from empirical quantile functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyCellError(ValueError):
    """A conditioning cell required by a metric has no samples."""


@dataclass
class PredictionSet:
    scores: np.ndarray   # sigmoid outputs in [0, 1]
    labels: np.ndarray   # {0, 1}
    groups: np.ndarray   # two distinct group ids
    threshold: float = 0.5

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        self.groups = np.asarray(self.groups)
        n = self.scores.shape[0]
        if self.labels.shape != (n,) or self.groups.shape != (n,):
            raise ValueError("scores, labels, groups lengths differ")
        if n and (self.scores.min() < 0.0 or self.scores.max() > 1.0):
            raise ValueError("scores must lie in [0, 1]")

    @property
    def predictions(self) -> np.ndarray:
        return (self.scores > self.threshold).astype(np.float64)

    def group_ids(self) -> tuple:
        ids = np.unique(self.groups)
        if ids.shape[0] != 2:
            raise ValueError(f"gap metrics need exactly 2 groups, found {ids.shape[0]}")
        return ids[0], ids[1]


@dataclass
class FairnessReport:
    ind: float
    sp: float
    sf: float
    ina: float
    wd: float

    def to_dict(self) -> dict:
        return {"ind": self.ind, "sp": self.sp, "sf": self.sf,
                "ina": self.ina, "wd": self.wd}


def _rate(values: np.ndarray, mask: np.ndarray, what: str) -> float:
    if not mask.any():
        raise EmptyCellError(f"empty cell: {what}")
    return float(values[mask].mean())


def independence_gap(p: PredictionSet) -> float:
    """Absolute difference of positive-prediction rates between the groups."""
    a, b = p.group_ids()
    pred = p.predictions
    return abs(_rate(pred, p.groups == a, f"group {a}")
               - _rate(pred, p.groups == b, f"group {b}"))


def separation_gap(p: PredictionSet) -> float:
    """Sum over true labels of the positive-prediction rate gaps (TPR + FPR gaps)."""
    a, b = p.group_ids()
    pred = p.predictions
    total = 0.0
    for v in (1.0, 0.0):
        ra = _rate(pred, (p.groups == a) & (p.labels == v), f"group {a}, Y={int(v)}")
        rb = _rate(pred, (p.groups == b) & (p.labels == v), f"group {b}, Y={int(v)}")
        total += abs(ra - rb)
    return total


def sufficiency_gap(p: PredictionSet) -> float:
    """Sum over predicted classes of the positive-label rate gaps (PPV/NPV-side)."""
    a, b = p.group_ids()
    pred = p.predictions
    total = 0.0
    for v in (1.0, 0.0):
        ra = _rate(p.labels, (p.groups == a) & (pred == v), f"group {a}, pred={int(v)}")
        rb = _rate(p.labels, (p.groups == b) & (pred == v), f"group {b}, pred={int(v)}")
        total += abs(ra - rb)
    return total


def inaccuracy(p: PredictionSet) -> float:
    """1 - accuracy at the threshold."""
    if p.scores.size == 0:
        raise ValueError("empty prediction set")
    return float(np.mean(p.predictions != p.labels))


def wasserstein_1d(a: np.ndarray, b: np.ndarray) -> float:
    """Exact W1 between two empirical distributions (equal weights per sample).

    Integrates |F_a^-1 - F_b^-1| over (0, 1); quantile levels are merged on
    the common integer grid k / (len(a) * len(b)), so unequal sample sizes are
    handled exactly.
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    p, q = a.shape[0], b.shape[0]
    if p == 0 or q == 0:
        raise ValueError("wasserstein_1d needs non-empty inputs")
    # segment boundaries in units of 1/(p*q)
    cuts = np.unique(np.concatenate([np.arange(p + 1, dtype=np.int64) * q,
                                     np.arange(q + 1, dtype=np.int64) * p]))
    widths = np.diff(cuts) / float(p * q)
    ia = cuts[:-1] // q   # a-quantile index on each segment
    ib = cuts[:-1] // p
    return float(np.sum(widths * np.abs(a[ia] - b[ib])))


def fairness_report(p: PredictionSet) -> FairnessReport:
    """All five Table-style metrics for one prediction set."""
    a, b = p.group_ids()
    return FairnessReport(
        ind=independence_gap(p),
        sp=separation_gap(p),
        sf=sufficiency_gap(p),
        ina=inaccuracy(p),
        wd=wasserstein_1d(p.scores[p.groups == a], p.scores[p.groups == b]),
    )
