"""Evaluation: ROC/AUC, classification reports, per-group AUC and a
Bayesian signed-rank comparison of paired model performances.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError

OVERALL_KEY = "overall"


@dataclass
class RocCurve:
    points: list  # (fpr, tpr), sorted by fpr, (0,0) .. (1,1)
    auc: float
    thresholds: list  # +inf followed by unique scores, descending


@dataclass
class ClassReport:
    per_class: dict  # label -> {precision, recall, f1, support}
    macro_f1: float
    weighted_f1: float
    accuracy: float


@dataclass
class PosteriorSummary:
    p_left: float
    p_rope: float
    p_right: float
    rope: float
    n_mc: int
    seed: int


def _check_scores_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise EvaluationError("scores and labels must be 1-D and the same length")
    if not np.all(np.isin(labels, (0, 1))):
        raise EvaluationError("labels must be 0/1")
    return scores, labels.astype(int)


def roc_auc(scores, labels):
    """ROC by descending threshold sweep; AUC by the trapezoidal rule.

    Tied scores collapse into a single threshold step, which makes the
    trapezoidal area equal the Mann-Whitney statistic with ties counted 1/2.
    """
    scores, labels = _check_scores_labels(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC undefined: labels contain a single class")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    l = labels[order]
    # indices where a run of equal scores ends
    last_of_run = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tp = np.cumsum(l)[last_of_run]
    fp = (last_of_run + 1) - tp
    tpr = np.concatenate(([0.0], tp / n_pos))
    fpr = np.concatenate(([0.0], fp / n_neg))
    auc = float(0.5 * np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])))
    thresholds = [float("inf")] + [float(v) for v in s[last_of_run]]
    points = list(zip(fpr.tolist(), tpr.tolist()))
    return RocCurve(points=points, auc=auc, thresholds=thresholds)


def classification_report(pred, labels):
    """Binary precision/recall/f1 per class plus macro, weighted and accuracy.

    Zero denominators yield 0 rather than NaN, matching the usual report
    conventions.
    """
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if pred.shape != labels.shape or pred.ndim != 1 or len(pred) == 0:
        raise EvaluationError("pred and labels must be equal-length non-empty vectors")
    if not (np.all(np.isin(pred, (0, 1))) and np.all(np.isin(labels, (0, 1)))):
        raise EvaluationError("pred and labels must be 0/1")
    per_class = {}
    f1s, supports = [], []
    for cls in (0, 1):
        tp = int(np.sum((pred == cls) & (labels == cls)))
        fp = int(np.sum((pred == cls) & (labels != cls)))
        fn = int(np.sum((pred != cls) & (labels == cls)))
        support = tp + fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[cls] = {"precision": precision, "recall": recall, "f1": f1, "support": support}
        f1s.append(f1)
        supports.append(support)
    accuracy = float(np.mean(pred == labels))
    macro_f1 = float(np.mean(f1s))
    weighted_f1 = float(np.dot(f1s, supports) / len(labels))
    return ClassReport(per_class=per_class, macro_f1=macro_f1, weighted_f1=weighted_f1, accuracy=accuracy)


def per_group_auc(scores, labels, groups):
    """AUC within each group plus the pooled AUC under the reserved key.

    A group with a single class gets (None, n) instead of being dropped, so
    reports show the gap instead of silently biasing summaries. The pooled
    result is stored under 'overall'; that group name is reserved.
    """
    scores, labels = _check_scores_labels(scores, labels)
    groups = np.asarray(groups)
    if groups.shape != scores.shape:
        raise EvaluationError("groups must align with scores")
    out = {}
    for g in sorted(set(groups.tolist())):
        if g == OVERALL_KEY:
            raise EvaluationError("group name %r is reserved for the pooled row" % OVERALL_KEY)
        mask = groups == g
        n = int(mask.sum())
        sub_labels = labels[mask]
        if len(np.unique(sub_labels)) < 2:
            out[g] = (None, n)
        else:
            out[g] = (roc_auc(scores[mask], sub_labels).auc, n)
    out[OVERALL_KEY] = (roc_auc(scores, labels).auc, len(scores))
    return out


def bayes_signed_rank(z, rope=0.0, n_mc=50000, seed=0):
    """Bayesian signed-rank comparison of paired performance differences.

    The posterior over the data distribution is the Dirichlet-weighted
    empirical measure on the n observed differences plus one prior
    pseudo-observation at zero. For each Monte Carlo draw of weights
    w ~ Dirichlet(1,...,1) the probability mass of Walsh averages
    (z_i + z_j)/2 falling left of -rope, inside the rope, and right of +rope
    is computed over all ordered pairs. The reported p_left/p_rope/p_right
    are the posterior means of those masses with the pure-prior pair (0,0)
    excluded and the rest renormalized; at rope = 0 the exactly-zero Walsh
    mass splits evenly between left and right, so p_rope is identically 0.

    positive z means the first model outperformed the second, so p_right is
    the posterior probability of the first model's superiority.
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    if len(z) < 2:
        raise EvaluationError("need at least 2 paired differences, got %d" % len(z))
    if not np.all(np.isfinite(z)):
        raise EvaluationError("paired differences must be finite")
    if rope < 0:
        raise EvaluationError("rope must be >= 0, got %r" % rope)
    if n_mc < 1:
        raise EvaluationError("n_mc must be >= 1")
    zz = np.concatenate(([0.0], z))
    walsh = (zz[:, None] + zz[None, :]) / 2.0
    if rope > 0.0:
        right = (walsh > rope).astype(np.float64)
        left = (walsh < -rope).astype(np.float64)
        mid = 1.0 - right - left
    else:
        zero = walsh == 0.0
        right = (walsh > 0.0) + 0.5 * zero
        left = (walsh < 0.0) + 0.5 * zero
        mid = np.zeros_like(walsh)
    for mask in (right, left, mid):
        mask[0, 0] = 0.0

    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(len(zz)), size=int(n_mc))
    informative = 1.0 - w[:, 0] ** 2  # mass not spent on the prior-prior pair
    p_right = float(np.mean(np.einsum("ki,ij,kj->k", w, right, w) / informative))
    p_left = float(np.mean(np.einsum("ki,ij,kj->k", w, left, w) / informative))
    if rope > 0.0:
        p_rope = float(np.mean(np.einsum("ki,ij,kj->k", w, mid, w) / informative))
    else:
        p_rope = 0.0
    return PosteriorSummary(
        p_left=p_left, p_rope=p_rope, p_right=p_right,
        rope=float(rope), n_mc=int(n_mc), seed=int(seed),
    )
