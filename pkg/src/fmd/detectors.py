"""Classical detectors over 1-D labeled scores.

Four classifiers (KNN, CART decision tree, random forest, soft-margin SVM
with RBF kernel solved by SMO), stratified cross-validated grid tuning,
and detection metrics.  The feature space is exactly the scalar score.

Tie-breaking rules, all deterministic:
* KNN distance ties go to the earlier training index; k must be odd so
  votes cannot tie.
* Tree split ties go to the lowest threshold; leaf majority ties predict 0.
* Forest vote ties predict 0.
* SVM decision value exactly 0 predicts 1.
* Grid ties keep the earliest grid entry; best-of-four classifier ties
  follow the order knn < dtree < rforest < svm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .rng import SplitMix64, derive_seed

KINDS = ("knn", "dtree", "rforest", "svm")

DEFAULT_GRIDS = {
    "knn": tuple({"k": k} for k in (1, 3, 5, 7, 9, 11, 13, 15)),
    "dtree": tuple({"max_depth": d} for d in (1, 2, 3, 4, 5)),
    "rforest": tuple(
        {"n_trees": t, "max_depth": d} for t in (11, 51, 101) for d in (2, 3, 5)
    ),
    "svm": tuple(
        {"C": c, "gamma": g} for c in (0.1, 1.0, 10.0, 100.0) for g in (0.1, 1.0, 10.0, 100.0)
    ),
}


def _check_training(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if scores.size == 0:
        raise DataError("empty training set")
    if scores.shape != labels.shape:
        raise DataError("scores and labels must have equal length")
    if not np.all((labels == 0) | (labels == 1)):
        raise DataError("labels must be 0 (legitimate) or 1 (adversarial)")
    return scores, labels


# ---------------------------------------------------------------------------
# k nearest neighbors

@dataclass
class KnnModel:
    k: int
    scores: np.ndarray
    labels: np.ndarray


def knn_fit(scores, labels, k: int) -> KnnModel:
    scores, labels = _check_training(scores, labels)
    if k % 2 == 0 or k < 1:
        raise ConfigError(f"k must be odd and >= 1, got {k}")
    if k > scores.size:
        raise ConfigError(f"k = {k} exceeds training size {scores.size}")
    return KnnModel(k=k, scores=scores, labels=labels)


def knn_predict(model: KnnModel, x: float) -> int:
    dist = np.abs(model.scores - x)
    nearest = np.argsort(dist, kind="stable")[: model.k]  # ties keep earlier index
    votes = int(model.labels[nearest].sum())
    return 1 if votes * 2 > model.k else 0


# ---------------------------------------------------------------------------
# CART decision tree on one feature

@dataclass
class TreeNode:
    label: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None


@dataclass
class TreeModel:
    max_depth: int
    root: TreeNode


def _gini(n_ones: float, n: float) -> float:
    if n == 0:
        return 0.0
    p = n_ones / n
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


def _best_split(scores: np.ndarray, labels: np.ndarray):
    """Threshold (midpoint between consecutive distinct sorted scores)
    minimizing weighted Gini; ties keep the lowest threshold.  Returns
    (threshold, weighted_gini) or None when no cut exists."""
    order = np.argsort(scores, kind="stable")
    s, y = scores[order], labels[order]
    n = s.size
    if n < 2:
        return None
    valid = s[:-1] < s[1:]
    if not valid.any():
        return None
    ones_left = np.cumsum(y)[:-1].astype(np.float64)
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    ones_right = float(y.sum()) - ones_left
    p_l = ones_left / n_left
    p_r = ones_right / n_right
    gini_l = 1.0 - p_l * p_l - (1.0 - p_l) * (1.0 - p_l)
    gini_r = 1.0 - p_r * p_r - (1.0 - p_r) * (1.0 - p_r)
    weighted = (n_left * gini_l + n_right * gini_r) / n
    weighted = np.where(valid, weighted, np.inf)
    best = int(np.argmin(weighted))  # first minimum = lowest threshold
    return (s[best] + s[best + 1]) / 2.0, float(weighted[best])


def _majority(labels: np.ndarray) -> int:
    ones = int(labels.sum())
    zeros = labels.size - ones
    return 1 if ones > zeros else 0  # tie -> 0


def _grow(scores, labels, depth, max_depth) -> TreeNode:
    node_gini = _gini(float(labels.sum()), float(labels.size))
    if node_gini == 0.0 or depth >= max_depth:
        return TreeNode(label=_majority(labels))
    cut = _best_split(scores, labels)
    if cut is None or cut[1] >= node_gini - 1e-12:
        return TreeNode(label=_majority(labels))
    threshold = cut[0]
    mask = scores <= threshold
    return TreeNode(
        threshold=threshold,
        left=_grow(scores[mask], labels[mask], depth + 1, max_depth),
        right=_grow(scores[~mask], labels[~mask], depth + 1, max_depth),
    )


def dtree_fit(scores, labels, max_depth: int) -> TreeModel:
    scores, labels = _check_training(scores, labels)
    if max_depth < 1:
        raise ConfigError(f"max_depth must be >= 1, got {max_depth}")
    return TreeModel(max_depth=max_depth, root=_grow(scores, labels, 0, max_depth))


def dtree_predict(model: TreeModel, x: float) -> int:
    node = model.root
    while node.label is None:
        node = node.left if x <= node.threshold else node.right
    return node.label


# ---------------------------------------------------------------------------
# random forest

@dataclass
class ForestModel:
    n_trees: int
    max_depth: int
    seed: int
    bootstrap: bool
    trees: list[TreeModel] = field(default_factory=list)


def rforest_fit(
    scores, labels, n_trees: int, max_depth: int, seed: int, bootstrap: bool = True
) -> ForestModel:
    scores, labels = _check_training(scores, labels)
    if n_trees < 1:
        raise ConfigError(f"n_trees must be >= 1, got {n_trees}")
    model = ForestModel(n_trees=n_trees, max_depth=max_depth, seed=seed, bootstrap=bootstrap)
    n = scores.size
    for t in range(n_trees):
        if bootstrap:
            rng = SplitMix64(derive_seed(seed, "tree", t))
            idx = np.array([rng.below(n) for _ in range(n)], dtype=np.int64)
            model.trees.append(dtree_fit(scores[idx], labels[idx], max_depth))
        else:
            model.trees.append(dtree_fit(scores, labels, max_depth))
    return model


def rforest_predict(model: ForestModel, x: float) -> int:
    ones = sum(dtree_predict(t, x) for t in model.trees)
    return 1 if ones * 2 > len(model.trees) else 0  # tie -> 0


# ---------------------------------------------------------------------------
# SVM with RBF kernel, solved by SMO

@dataclass
class SvmModel:
    C: float
    gamma: float
    scores: np.ndarray    # training points (support set retained in full)
    targets: np.ndarray   # labels mapped to {-1, +1}
    alphas: np.ndarray
    bias: float


def _rbf_matrix(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    d = a[:, None] - b[None, :]
    return np.exp(-gamma * d * d)


def svm_fit(scores, labels, C: float, gamma: float, tol: float = 1e-3,
            max_sweeps: int = 1000) -> SvmModel:
    """Platt-style SMO with a deterministic second-choice fallback.

    The fallback scans candidate partners in index order starting just
    after the violating example instead of at a random position, so fits
    are reproducible without a seed.
    """
    scores, labels = _check_training(scores, labels)
    if C <= 0 or gamma <= 0:
        raise ConfigError("C and gamma must be > 0")
    if len(np.unique(labels)) < 2:
        raise DataError("SVM training needs both labels present")
    y = np.where(labels == 1, 1.0, -1.0)
    n = scores.size
    kmat = _rbf_matrix(scores, scores, gamma)
    alphas = np.zeros(n)
    bias = 0.0
    errors = -y.copy()  # f(x) - y with f = 0 initially
    eps = 1e-10

    def take_step(i1: int, i2: int) -> bool:
        nonlocal bias
        if i1 == i2:
            return False
        a1, a2 = alphas[i1], alphas[i2]
        y1, y2 = y[i1], y[i2]
        e1, e2 = errors[i1], errors[i2]
        s = y1 * y2
        if s > 0:
            lo, hi = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        else:
            lo, hi = max(0.0, a2 - a1), min(C, C + a2 - a1)
        if lo >= hi:
            return False
        k11, k12, k22 = kmat[i1, i1], kmat[i1, i2], kmat[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = a2 + y2 * (e1 - e2) / eta
            a2_new = min(max(a2_new, lo), hi)
        else:
            # flat direction: evaluate the objective at both clip ends
            f1 = y1 * (e1 - bias) - a1 * k11 - s * a2 * k12
            f2 = y2 * (e2 - bias) - s * a1 * k12 - a2 * k22
            l1 = a1 + s * (a2 - lo)
            h1 = a1 + s * (a2 - hi)
            obj_lo = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12
            obj_hi = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12
            if obj_lo < obj_hi - eps:
                a2_new = lo
            elif obj_lo > obj_hi + eps:
                a2_new = hi
            else:
                return False
        if abs(a2_new - a2) < eps * (a2_new + a2 + eps):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        a1_new = min(max(a1_new, 0.0), C)
        # bias such that the updated decision value at a free SV equals its
        # label (decision function is sum(alpha*y*K) + b)
        b1 = bias - (e1 + y1 * (a1_new - a1) * k11 + y2 * (a2_new - a2) * k12)
        b2 = bias - (e2 + y1 * (a1_new - a1) * k12 + y2 * (a2_new - a2) * k22)
        if 0.0 < a1_new < C:
            new_bias = b1
        elif 0.0 < a2_new < C:
            new_bias = b2
        else:
            new_bias = (b1 + b2) / 2.0
        errors[:] = (
            errors
            + y1 * (a1_new - a1) * kmat[i1]
            + y2 * (a2_new - a2) * kmat[i2]
            + (new_bias - bias)
        )
        alphas[i1], alphas[i2] = a1_new, a2_new
        bias = new_bias
        errors[i1] = _decision(i1) - y1
        errors[i2] = _decision(i2) - y2
        return True

    def _decision(i: int) -> float:
        return float((alphas * y) @ kmat[i] + bias)

    def examine(i2: int) -> bool:
        y2, a2, e2 = y[i2], alphas[i2], errors[i2]
        r2 = e2 * y2
        if not ((r2 < -tol and a2 < C) or (r2 > tol and a2 > 0)):
            return False
        non_bound = np.flatnonzero((alphas > 0) & (alphas < C))
        if non_bound.size > 1:
            gaps = np.abs(errors[non_bound] - e2)
            i1 = int(non_bound[int(np.argmax(gaps))])
            if take_step(i1, i2):
                return True
        for start_list in (non_bound, np.arange(n)):
            if start_list.size == 0:
                continue
            offset = (i2 + 1) % start_list.size
            for j in range(start_list.size):
                i1 = int(start_list[(offset + j) % start_list.size])
                if take_step(i1, i2):
                    return True
        return False

    examine_all = True
    num_changed = 1
    sweeps = 0
    while (num_changed > 0 or examine_all) and sweeps < max_sweeps:
        sweeps += 1
        num_changed = 0
        candidates = (
            np.arange(n) if examine_all else np.flatnonzero((alphas > 0) & (alphas < C))
        )
        for i2 in candidates:
            if examine(int(i2)):
                num_changed += 1
        if examine_all:
            examine_all = False
        elif num_changed == 0:
            examine_all = True
    return SvmModel(C=C, gamma=gamma, scores=scores, targets=y, alphas=alphas, bias=bias)


def svm_decision(model: SvmModel, x) -> np.ndarray:
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    kmat = _rbf_matrix(model.scores, xs, model.gamma)
    return (model.alphas * model.targets) @ kmat + model.bias


def svm_predict(model: SvmModel, x: float) -> int:
    return 1 if float(svm_decision(model, x)[0]) >= 0.0 else 0


# ---------------------------------------------------------------------------
# unified prediction, fitting and metrics

def fit_detector(kind: str, scores, labels, hyper: dict, seed: int = 0):
    if kind == "knn":
        return knn_fit(scores, labels, hyper["k"])
    if kind == "dtree":
        return dtree_fit(scores, labels, hyper["max_depth"])
    if kind == "rforest":
        return rforest_fit(
            scores, labels, hyper["n_trees"], hyper["max_depth"],
            seed=hyper.get("seed", seed), bootstrap=hyper.get("bootstrap", True),
        )
    if kind == "svm":
        return svm_fit(scores, labels, hyper["C"], hyper["gamma"])
    raise ConfigError(f"unknown detector kind {kind!r}")


def predict_one(model, x: float) -> int:
    if isinstance(model, KnnModel):
        return knn_predict(model, x)
    if isinstance(model, TreeModel):
        return dtree_predict(model, x)
    if isinstance(model, ForestModel):
        return rforest_predict(model, x)
    if isinstance(model, SvmModel):
        return svm_predict(model, x)
    raise ConfigError(f"unknown model type {type(model).__name__}")


def predict_many(model, xs) -> np.ndarray:
    return np.array([predict_one(model, float(x)) for x in np.asarray(xs).ravel()], dtype=np.int64)


def stratified_folds(labels, folds: int, seed: int) -> list[np.ndarray]:
    """Per-class round-robin fold assignment after a seeded shuffle.

    Every class with >= 2 members lands in >= 2 folds, so each training
    part (all folds but one) keeps both labels; a class with < 2 members
    cannot be stratified and is an error.
    """
    if folds < 2:
        raise ConfigError(f"folds must be >= 2, got {folds}")
    labels = np.asarray(labels)
    rng = SplitMix64(derive_seed(seed, "folds"))
    assignments: list[list[int]] = [[] for _ in range(folds)]
    for label in np.unique(labels):
        members = list(np.flatnonzero(labels == label))
        if len(members) < 2:
            raise DataError(f"label {label} has {len(members)} record(s); cannot stratify")
        rng.shuffle(members)
        for pos, idx in enumerate(members):
            assignments[pos % folds].append(int(idx))
    return [np.array(sorted(fold), dtype=np.int64) for fold in assignments if fold]


def tune(scores, labels, kind: str, grid=None, folds: int = 5, seed: int = 0):
    """Grid search by stratified k-fold CV accuracy on the given records.

    Returns (best_hyperparameters, best_cv_accuracy).  Accuracy is pooled
    over all validation folds; ties keep the earliest grid entry.
    """
    scores, labels = _check_training(scores, labels)
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    if len(np.unique(labels)) < 2:
        raise DataError("tuning needs both labels present")
    grid = DEFAULT_GRIDS[kind] if grid is None else tuple(grid)
    if not grid:
        raise ConfigError("empty hyperparameter grid")
    fold_indices = stratified_folds(labels, folds, seed)
    n = scores.size
    best_hyper = None
    best_acc = -1.0
    for gi, hyper in enumerate(grid):
        correct = 0
        feasible = True
        for fi, val_idx in enumerate(fold_indices):
            train_mask = np.ones(n, dtype=bool)
            train_mask[val_idx] = False
            tr_s, tr_y = scores[train_mask], labels[train_mask]
            if kind == "knn" and hyper["k"] > tr_s.size:
                feasible = False
                break
            fit_seed = derive_seed(seed, "cv", gi, fi)
            model = fit_detector(kind, tr_s, tr_y, dict(hyper), seed=fit_seed)
            preds = predict_many(model, scores[val_idx])
            correct += int((preds == labels[val_idx]).sum())
        if not feasible:
            continue
        acc = correct / n
        if acc > best_acc:
            best_acc = acc
            best_hyper = dict(hyper)
    if best_hyper is None:
        raise ConfigError("no feasible grid entry for the training set size")
    return best_hyper, best_acc


def evaluate(model, records) -> dict:
    """Accuracy, confusion counts, and per-attack detection rates (recall
    over adversarial records sharing an attack tag)."""
    if not records:
        raise DataError("empty evaluation set")
    preds = predict_many(model, [r.score for r in records])
    truth = np.array([r.label for r in records], dtype=np.int64)
    tp = int(((preds == 1) & (truth == 1)).sum())
    tn = int(((preds == 0) & (truth == 0)).sum())
    fp = int(((preds == 1) & (truth == 0)).sum())
    fn = int(((preds == 0) & (truth == 1)).sum())
    rates = {}
    tags = sorted({r.attack_tag for r in records if r.label == 1})
    for tag in tags:
        hit = sum(1 for r, p in zip(records, preds) if r.label == 1 and r.attack_tag == tag and p == 1)
        total = sum(1 for r in records if r.label == 1 and r.attack_tag == tag)
        rates[tag] = hit / total
    return {
        "n": len(records),
        "accuracy": (tp + tn) / len(records),
        "confusion": {"tp": tp, "fp": fp, "tn": tn, "fn": fn},
        "detection_rates": rates,
    }


# ---------------------------------------------------------------------------
# JSON serialization

def _tree_to_json(node: TreeNode) -> dict:
    if node.label is not None:
        return {"label": node.label}
    return {
        "threshold": node.threshold,
        "left": _tree_to_json(node.left),
        "right": _tree_to_json(node.right),
    }


def _tree_from_json(obj: dict) -> TreeNode:
    if "label" in obj:
        return TreeNode(label=int(obj["label"]))
    return TreeNode(
        threshold=float(obj["threshold"]),
        left=_tree_from_json(obj["left"]),
        right=_tree_from_json(obj["right"]),
    )


def model_to_json(model) -> dict:
    if isinstance(model, KnnModel):
        return {
            "kind": "knn",
            "hyperparameters": {"k": model.k},
            "scores": model.scores.tolist(),
            "labels": model.labels.tolist(),
        }
    if isinstance(model, TreeModel):
        return {
            "kind": "dtree",
            "hyperparameters": {"max_depth": model.max_depth},
            "tree": _tree_to_json(model.root),
        }
    if isinstance(model, ForestModel):
        return {
            "kind": "rforest",
            "hyperparameters": {
                "n_trees": model.n_trees,
                "max_depth": model.max_depth,
                "seed": model.seed,
                "bootstrap": model.bootstrap,
            },
            "trees": [_tree_to_json(t.root) for t in model.trees],
        }
    if isinstance(model, SvmModel):
        return {
            "kind": "svm",
            "hyperparameters": {"C": model.C, "gamma": model.gamma},
            "scores": model.scores.tolist(),
            "targets": model.targets.tolist(),
            "alphas": model.alphas.tolist(),
            "bias": model.bias,
        }
    raise ConfigError(f"unknown model type {type(model).__name__}")


def model_from_json(obj: dict):
    kind = obj.get("kind")
    hyper = obj.get("hyperparameters", {})
    if kind == "knn":
        return KnnModel(
            k=int(hyper["k"]),
            scores=np.asarray(obj["scores"], dtype=np.float64),
            labels=np.asarray(obj["labels"], dtype=np.int64),
        )
    if kind == "dtree":
        return TreeModel(max_depth=int(hyper["max_depth"]), root=_tree_from_json(obj["tree"]))
    if kind == "rforest":
        trees = [
            TreeModel(max_depth=int(hyper["max_depth"]), root=_tree_from_json(t))
            for t in obj["trees"]
        ]
        return ForestModel(
            n_trees=int(hyper["n_trees"]),
            max_depth=int(hyper["max_depth"]),
            seed=int(hyper["seed"]),
            bootstrap=bool(hyper["bootstrap"]),
            trees=trees,
        )
    if kind == "svm":
        return SvmModel(
            C=float(hyper["C"]),
            gamma=float(hyper["gamma"]),
            scores=np.asarray(obj["scores"], dtype=np.float64),
            targets=np.asarray(obj["targets"], dtype=np.float64),
            alphas=np.asarray(obj["alphas"], dtype=np.float64),
            bias=float(obj["bias"]),
        )
    raise DataError(f"unknown detector kind in JSON: {kind!r}")
