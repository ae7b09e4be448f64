"""Deterministic soft-margin linear SVM with cross-validated C selection
and score-level fusion.

Training runs dual coordinate ascent on the L1-loss SVM with the intercept
folded in as a unit constant feature, so the minimized objective is

    0.5 * (||w||^2 + b^2) + C * sum_i max(0, 1 - y_i (w . x_i + b)).

The visitation order is a fixed seeded permutation per pass, so identical
inputs and seed reproduce the model bit-for-bit. Class convention: spoof is
the positive class (a positive decision score means "spoof detected").
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .rng import substream

MODEL_FORMAT_VERSION = 1
DEFAULT_C_GRID: tuple[float, ...] = tuple(10.0**k for k in range(-5, 6))


class SvmError(ValueError):
    """Raised for invalid training data or mismatched scoring inputs."""


@dataclass(frozen=True)
class LinearSvmModel:
    weights: np.ndarray
    bias: float
    C: float
    feature_kind: str
    train_seed: int
    objective_value: float
    converged: bool
    train_score_mean: float
    train_score_std: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise SvmError("non-finite model parameters")
        if self.C <= 0:
            raise SvmError(f"C must be positive, got {self.C}")


def _primal_objective(w_aug: np.ndarray, x_aug: np.ndarray, y: np.ndarray, c: float) -> float:
    margins = 1.0 - y * (x_aug @ w_aug)
    hinge = np.maximum(0.0, margins).sum()
    return 0.5 * float(w_aug @ w_aug) + c * float(hinge)


def _check_xy(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise SvmError(f"shape mismatch: X {x.shape}, y {y.shape}")
    if not np.all(np.isfinite(x)):
        raise SvmError("non-finite features")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise SvmError("labels must be -1 (live) or +1 (spoof)")
    if len(np.unique(y)) < 2:
        raise SvmError("training data contains a single class")
    return x, y


def train_svm(
    x: np.ndarray,
    y: np.ndarray,
    c: float,
    seed: int,
    feature_kind: str = "RAW",
    max_passes: int = 2000,
    tol: float = 1e-8,
) -> LinearSvmModel:
    """Dual coordinate ascent on the L1-loss linear SVM.

    Terminates when the relative primal-objective decrease over a full pass
    drops below ``tol``, or at ``max_passes`` (model flagged unconverged).
    """
    x, y = _check_xy(x, y)
    if c <= 0:
        raise SvmError(f"C must be positive, got {c}")
    n, dim = x.shape
    x_aug = np.hstack([x, np.ones((n, 1))])
    q_diag = np.einsum("ij,ij->i", x_aug, x_aug)
    alpha = np.zeros(n)
    w = np.zeros(dim + 1)

    rng = substream(seed, "svm-train")
    prev_obj = _primal_objective(w, x_aug, y, c)
    converged = False
    for _ in range(max_passes):
        order = rng.permutation(n)
        for i in order:
            if q_diag[i] <= 0.0:
                continue
            grad = y[i] * (x_aug[i] @ w) - 1.0
            new_alpha = min(max(alpha[i] - grad / q_diag[i], 0.0), c)
            delta = new_alpha - alpha[i]
            if delta != 0.0:
                w += delta * y[i] * x_aug[i]
                alpha[i] = new_alpha
        obj = _primal_objective(w, x_aug, y, c)
        if abs(prev_obj - obj) <= tol * max(1.0, abs(obj)):
            converged = True
            prev_obj = obj
            break
        prev_obj = obj

    scores = x_aug @ w
    std = float(np.std(scores))
    return LinearSvmModel(
        weights=w[:dim].copy(),
        bias=float(w[dim]),
        C=float(c),
        feature_kind=feature_kind,
        train_seed=int(seed),
        objective_value=float(prev_obj),
        converged=converged,
        train_score_mean=float(np.mean(scores)),
        train_score_std=max(std, 1e-12),
    )


def decision_score(m: LinearSvmModel, x: np.ndarray) -> float:
    """w . x + b; positive means spoof."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != m.weights.shape[0]:
        raise SvmError(
            f"feature dim {x.shape[0]} does not match model dim {m.weights.shape[0]}"
        )
    return float(m.weights @ x + m.bias)


def decision_scores(m: LinearSvmModel, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != m.weights.shape[0]:
        raise SvmError(
            f"feature dim {x.shape[1]} does not match model dim {m.weights.shape[0]}"
        )
    return x @ m.weights + m.bias


def standardized_scores(m: LinearSvmModel, x: np.ndarray) -> np.ndarray:
    """Decision scores shifted/scaled by the model's training-score stats.

    Makes scores from heterogeneous models comparable before fusion.
    """
    return (decision_scores(m, x) - m.train_score_mean) / m.train_score_std


def _stable_sample_keys(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Order-independent sample keys: lexicographic rank of (label, row bytes)."""
    import hashlib

    keys = [
        hashlib.sha256(np.float64(yi).tobytes() + np.ascontiguousarray(xi).tobytes()).digest()
        for xi, yi in zip(x, y)
    ]
    return np.argsort(np.array(keys), kind="stable")


def stratified_folds(
    x: np.ndarray, y: np.ndarray, folds: int, seed: int
) -> list[np.ndarray]:
    """Deterministic stratified fold assignment, invariant to input order."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    for cls in (-1.0, 1.0):
        if np.sum(y == cls) < folds:
            raise SvmError(
                f"cannot stratify: class {cls:+.0f} has fewer than {folds} samples"
            )
    canon = _stable_sample_keys(x, y)
    rng = substream(seed, "cv-folds")
    assignment = np.empty(len(y), dtype=np.int64)
    for cls in (-1.0, 1.0):
        members = canon[y[canon] == cls]
        members = members[rng.permutation(len(members))]
        assignment[members] = np.arange(len(members)) % folds
    return [np.flatnonzero(assignment == f) for f in range(folds)]


def select_C(
    x: np.ndarray,
    y: np.ndarray,
    grid=DEFAULT_C_GRID,
    folds: int = 5,
    seed: int = 0,
) -> tuple[float, dict[float, float]]:
    """Pick C maximizing mean stratified k-fold validation accuracy.

    Ties break toward the smaller C (stronger regularization).
    """
    if len(grid) == 0:
        raise SvmError("empty C grid")
    x, y = _check_xy(x, y)
    fold_idx = stratified_folds(x, y, folds, seed)
    all_idx = np.arange(len(y))
    mean_acc: dict[float, float] = {}
    for c in grid:
        accs = []
        for f, test in enumerate(fold_idx):
            train = np.setdiff1d(all_idx, test)
            model = train_svm(x[train], y[train], c, seed=seed, max_passes=200)
            pred = np.where(decision_scores(model, x[test]) >= 0.0, 1.0, -1.0)
            accs.append(float(np.mean(pred == y[test])))
        mean_acc[float(c)] = float(np.mean(accs))
    best = min(sorted(grid), key=lambda c: (-mean_acc[float(c)], c))
    return float(best), mean_acc


def fuse_scores(scores, method: str) -> float:
    """Score-level fusion of already-standardized per-model scores."""
    arr = np.asarray(list(scores), dtype=np.float64)
    if arr.size == 0:
        raise SvmError("cannot fuse an empty score list")
    if not np.all(np.isfinite(arr)):
        raise SvmError("non-finite scores")
    if method == "mean":
        return float(np.mean(arr))
    if method == "max":
        return float(np.max(arr))
    raise SvmError(f"unknown fusion method {method!r}")


def save_model(path, m: LinearSvmModel) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "feature_kind": m.feature_kind,
        "dim": int(m.weights.shape[0]),
        "C": m.C,
        "seed": m.train_seed,
        "bias": repr(m.bias),
        "weights": [repr(float(w)) for w in m.weights],
        "train_score_mean": repr(m.train_score_mean),
        "train_score_std": repr(m.train_score_std),
        "objective_value": repr(m.objective_value),
        "converged": m.converged,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


def load_model(path) -> LinearSvmModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return LinearSvmModel(
        weights=np.array([float(w) for w in doc["weights"]]),
        bias=float(doc["bias"]),
        C=float(doc["C"]),
        feature_kind=doc["feature_kind"],
        train_seed=int(doc["seed"]),
        objective_value=float(doc["objective_value"]),
        converged=bool(doc["converged"]),
        train_score_mean=float(doc["train_score_mean"]),
        train_score_std=float(doc["train_score_std"]),
    )
