"""From-scratch classifiers: boosted trees and two SVM baselines.

Nothing here depends on scikit-learn; the point is an auditable
implementation of the exact training rules the toolkit claims to use.
All three trainers are deterministic for a fixed config seed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, TrainingError


@dataclass
class TrainConfig:
    n_trees: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 1
    svm_c: float = 1.0
    rbf_gamma: object = "auto"
    svm_epochs: int = 50
    seed: int = 0


class TreeNode:
    """Regression tree node: internal (feature, threshold) or leaf (value)."""

    __slots__ = ("feature_index", "threshold", "left", "right", "value")

    def __init__(self, feature_index=None, threshold=None, left=None, right=None, value=None):
        self.feature_index = feature_index
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value

    @property
    def is_leaf(self):
        return self.value is not None

    def predict(self, X):
        """Leaf value for every row of X (vectorized tree walk)."""
        out = np.empty(X.shape[0])
        self._fill(X, np.arange(X.shape[0]), out)
        return out

    def _fill(self, X, idx, out):
        if self.is_leaf:
            out[idx] = self.value
            return
        go_left = X[idx, self.feature_index] <= self.threshold
        self.left._fill(X, idx[go_left], out)
        self.right._fill(X, idx[~go_left], out)


def _sigmoid(m):
    # split by sign to avoid overflow in exp
    out = np.empty_like(m, dtype=np.float64)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    em = np.exp(m[~pos])
    out[~pos] = em / (1.0 + em)
    return out


def _clip_proba(p):
    return np.clip(p, 1e-15, 1.0 - 1e-15)


def _best_split(X, residuals, in_node, min_samples_leaf):
    """Greedy variance-reduction split over midpoints of sorted unique values.

    Returns (feature, threshold, gain) or None. Gain ties break toward the
    lowest feature index, then the lowest threshold, so training is
    deterministic and invariant to monotone feature transforms.
    """
    idx = np.flatnonzero(in_node)
    n = len(idx)
    if n < 2 * min_samples_leaf or n < 2:
        return None
    r = residuals[idx]
    total = r.sum()
    best = None  # (gain, feature, threshold)
    for f in range(X.shape[1]):
        xf = X[idx, f]
        order = np.argsort(xf, kind="stable")
        xs = xf[order]
        prefix = np.cumsum(r[order])
        # candidate split after position k iff the value actually changes
        boundary = np.flatnonzero(xs[:-1] != xs[1:])
        if len(boundary) == 0:
            continue
        n_left = boundary + 1
        n_right = n - n_left
        ok = (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
        if not np.any(ok):
            continue
        s_left = prefix[boundary]
        gains = s_left**2 / n_left + (total - s_left) ** 2 / n_right
        gains[~ok] = -np.inf
        k = int(np.argmax(gains))
        gain = gains[k]
        if gain == -np.inf:
            continue
        if best is None or gain > best[0]:
            threshold = 0.5 * (xs[boundary[k]] + xs[boundary[k] + 1])
            best = (gain, f, threshold)
    if best is None:
        return None
    gain, f, threshold = best
    baseline = total**2 / n  # parent term; positive reduction required
    if gain - baseline <= 1e-15 * max(1.0, abs(baseline)):
        return None
    return f, threshold, gain - baseline


def _build_tree(X, residuals, hessians, in_node, depth, cfg):
    if depth < cfg.max_depth:
        split = _best_split(X, residuals, in_node, cfg.min_samples_leaf)
    else:
        split = None
    if split is None:
        num = residuals[in_node].sum()
        den = max(hessians[in_node].sum(), 1e-12)
        return TreeNode(value=num / den)
    f, threshold, _gain = split
    go_left = in_node & (X[:, f] <= threshold)
    go_right = in_node & ~ (X[:, f] <= threshold)
    return TreeNode(
        feature_index=f,
        threshold=threshold,
        left=_build_tree(X, residuals, hessians, go_left, depth + 1, cfg),
        right=_build_tree(X, residuals, hessians, go_right, depth + 1, cfg),
    )


class GbmModel:
    """Additive logistic model: sigmoid(base_score + lr * sum of trees)."""

    def __init__(self, base_score, trees, learning_rate, schema_dim):
        self.base_score = base_score
        self.trees = trees
        self.learning_rate = learning_rate
        self.schema_dim = schema_dim

    def predict_margin(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.schema_dim:
            raise TrainingError(
                "input has %d features, model expects %d" % (X.shape[1], self.schema_dim)
            )
        margin = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            margin += self.learning_rate * tree.predict(X)
        return margin

    def predict_proba(self, X):
        return _clip_proba(_sigmoid(self.predict_margin(X)))

    def decision_scores(self, X):
        return self.predict_proba(X)


def _check_binary(y):
    y = np.asarray(y)
    classes = np.unique(y)
    if not np.all(np.isin(classes, (0, 1))):
        raise TrainingError("labels must be 0/1, got %r" % (classes,))
    if len(classes) < 2:
        raise TrainingError("training data contains a single class (%r)" % (classes,))
    return y.astype(np.float64)


def gbm_train(X, y, config=None):
    """Gradient boosting for logistic loss with Newton leaf values.

    Stage t fits a depth-limited regression tree to the residuals y - p and
    assigns each leaf sum(residual) / max(sum(p*(1-p)), 1e-12), the one-step
    Newton update; margins advance by learning_rate times the tree output.
    """
    cfg = config or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] == 0:
        raise TrainingError("X must be n x d with d >= 1")
    y = _check_binary(y)
    if len(y) != X.shape[0] or len(y) < 2:
        raise TrainingError("need at least 2 samples with matching labels")
    p_bar = y.mean()
    base = float(np.log(p_bar / (1.0 - p_bar)))
    margins = np.full(len(y), base)
    everything = np.ones(len(y), dtype=bool)
    trees = []
    for _ in range(cfg.n_trees):
        p = _clip_proba(_sigmoid(margins))
        residuals = y - p
        hessians = p * (1.0 - p)
        tree = _build_tree(X, residuals, hessians, everything, 0, cfg)
        margins = margins + cfg.learning_rate * tree.predict(X)
        trees.append(tree)
    return GbmModel(base, trees, cfg.learning_rate, X.shape[1])


def gbm_predict(model, x):
    """Probability of class 1 for a single feature vector."""
    return float(model.predict_proba(np.asarray(x, dtype=np.float64)[None, :])[0])


class LinearSvmModel:
    def __init__(self, weights, bias):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)

    def decision_scores(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return X @ self.weights + self.bias


def svm_linear_train(X, y, config=None):
    """Pegasos subgradient descent on the L2-regularized hinge loss.

    lambda = 1/(n*C), step 1/(lambda*t), fixed epoch count, seeded shuffle
    per epoch. The bias is updated with the hinge subgradient but not
    regularized.
    """
    cfg = config or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y01 = _check_binary(y)
    ypm = 2.0 * y01 - 1.0
    n, d = X.shape
    lam = 1.0 / (n * cfg.svm_c)
    rng = np.random.default_rng(cfg.seed)
    w = np.zeros(d)
    b = 0.0
    t = 0
    for _ in range(cfg.svm_epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = ypm[i] * (X[i] @ w + b)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * ypm[i] * X[i]
                b += eta * ypm[i]
    return LinearSvmModel(w, b)


class RbfSvmModel:
    def __init__(self, support_vectors, dual_coefs, bias, gamma):
        self.support_vectors = np.asarray(support_vectors, dtype=np.float64)
        self.dual_coefs = np.asarray(dual_coefs, dtype=np.float64)
        self.bias = float(bias)
        self.gamma = float(gamma)

    def decision_scores(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if len(self.support_vectors) == 0:
            return np.full(X.shape[0], self.bias)
        sq = (
            (X**2).sum(axis=1)[:, None]
            + (self.support_vectors**2).sum(axis=1)[None, :]
            - 2.0 * X @ self.support_vectors.T
        )
        K = np.exp(-self.gamma * np.maximum(sq, 0.0))
        return K @ self.dual_coefs + self.bias


def resolve_gamma(X, rbf_gamma):
    if rbf_gamma == "auto":
        var = float(np.asarray(X, dtype=np.float64).var(axis=0).mean())
        return 1.0 / (X.shape[1] * max(var, 1e-12))
    gamma = float(rbf_gamma)
    if gamma <= 0:
        raise TrainingError("rbf_gamma must be positive, got %r" % rbf_gamma)
    return gamma


def svm_rbf_train(X, y, config=None, tol=1e-3, max_sweeps=None):
    """Simplified SMO on the RBF-kernel dual.

    Sweeps every example; a violator i prefers j = argmax |E_i - E_j| and
    falls back through the remaining candidates in descending-gap order
    (lowest index on ties) until one admits a step, so a blocked preferred
    pair cannot stall the solver short of the KKT tolerance. Terminates
    when a full sweep changes nothing; hitting the sweep cap first raises
    ConvergenceError.
    """
    cfg = config or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y01 = _check_binary(y)
    ypm = 2.0 * y01 - 1.0
    n = X.shape[0]
    C = cfg.svm_c
    gamma = resolve_gamma(X, cfg.rbf_gamma)
    if max_sweeps is None:
        max_sweeps = 200 + 20 * n

    sq = (X**2).sum(axis=1)
    K = np.exp(-gamma * np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0))
    alphas = np.zeros(n)
    b = 0.0

    def errors():
        return K @ (alphas * ypm) + b - ypm

    sweeps = 0
    while True:
        sweeps += 1
        if sweeps > max_sweeps:
            raise ConvergenceError("SMO failed to converge", sweeps - 1)
        changed = 0
        for i in range(n):
            E = errors()
            yiEi = ypm[i] * E[i]
            if not ((yiEi < -tol and alphas[i] < C) or (yiEi > tol and alphas[i] > 0)):
                continue
            gaps = np.abs(E[i] - E)
            gaps[i] = -1.0
            for j in np.argsort(-gaps, kind="stable"):
                j = int(j)
                if j == i:
                    continue
                if ypm[i] != ypm[j]:
                    L = max(0.0, alphas[j] - alphas[i])
                    H = min(C, C + alphas[j] - alphas[i])
                else:
                    L = max(0.0, alphas[i] + alphas[j] - C)
                    H = min(C, alphas[i] + alphas[j])
                if L >= H:
                    continue
                eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
                if eta >= 0:
                    continue
                aj_old, ai_old = alphas[j], alphas[i]
                aj = aj_old - ypm[j] * (E[i] - E[j]) / eta
                aj = min(H, max(L, aj))
                if abs(aj - aj_old) < 1e-5:
                    continue
                ai = ai_old + ypm[i] * ypm[j] * (aj_old - aj)
                alphas[i], alphas[j] = ai, aj
                b1 = b - E[i] - ypm[i] * (ai - ai_old) * K[i, i] - ypm[j] * (aj - aj_old) * K[i, j]
                b2 = b - E[j] - ypm[i] * (ai - ai_old) * K[i, j] - ypm[j] * (aj - aj_old) * K[j, j]
                if 0.0 < ai < C:
                    b = b1
                elif 0.0 < aj < C:
                    b = b2
                else:
                    b = 0.5 * (b1 + b2)
                changed += 1
                break
        if changed == 0:
            break

    keep = alphas > 1e-12
    return RbfSvmModel(X[keep], (alphas * ypm)[keep], b, gamma)


def vote_aggregate(sub_labels):
    """Majority vote over 0/1 labels; an exact tie goes to 1 (cry).

    The tie rule favors sensitivity: in monitoring, a missed cry costs
    more than a false alert.
    """
    labels = list(sub_labels)
    if not labels:
        raise TrainingError("vote_aggregate needs a non-empty list")
    if any(v not in (0, 1) for v in labels):
        raise TrainingError("votes must be 0 or 1, got %r" % (labels,))
    ones = sum(labels)
    zeros = len(labels) - ones
    return 1 if ones >= zeros else 0
