"""Linear SVM trained by dual coordinate descent on the L1-hinge QP.

Primal problem (bias folded in as an always-on feature, so b is regularized
like the weights):

    min_w  0.5 * ||w||^2 + C * sum_i max(0, 1 - y_i * (w . x_i + b))

The dual is solved coordinate-wise with box constraints 0 <= alpha_i <= C,
sweeping a random permutation per epoch and stopping when the maximal
projected-gradient violation over an epoch drops below ``tol``.
"""

from __future__ import annotations

import numpy as np

from .models import ModelParams, svm_arch


def svm_train(X: np.ndarray, y: np.ndarray, C: float = 0.1, tol: float = 1e-6,
              max_epochs: int = 100_000, seed: int = 0) -> tuple[np.ndarray, float]:
    """Fit a binary linear SVM; returns (w, b) for labels y in {-1, +1}."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if len(np.unique(y)) < 2:
        raise ValueError("svm_train needs at least one sample per class")
    if C <= 0:
        raise ValueError("C must be positive")

    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    diag = np.einsum("ij,ij->i", Xa, Xa)
    alpha = np.zeros(n)
    w = np.zeros(d + 1)
    rng = np.random.default_rng(seed)
    for _ in range(max_epochs):
        worst = 0.0
        for i in rng.permutation(n):
            g = y[i] * (w @ Xa[i]) - 1.0
            a = alpha[i]
            if a <= 0.0:
                pg = min(g, 0.0)
            elif a >= C:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                worst = max(worst, abs(pg))
                new = min(max(a - g / diag[i], 0.0), C)
                if new != a:
                    w += (new - a) * y[i] * Xa[i]
                    alpha[i] = new
        if worst < tol:
            break
    return w[:d].copy(), float(w[d])


def svm_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray,
                  C: float) -> float:
    margins = y * (X @ w + b)
    return 0.5 * float(w @ w) + C * float(np.maximum(0.0, 1.0 - margins).sum())


def svm_objective_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray,
                       C: float) -> tuple[np.ndarray, float]:
    """Gradient of the primal objective (valid away from hinge kinks)."""
    margins = y * (X @ w + b)
    active = margins < 1.0
    gw = w - C * (y[active, None] * X[active]).sum(axis=0)
    gb = -C * float(y[active].sum())
    return gw, gb


def svm_train_model(X: np.ndarray, labels: np.ndarray, n_classes: int,
                    C: float = 0.1, tol: float = 1e-6, seed: int = 0) -> ModelParams:
    """Train an SVM ModelParams; binary sign decision or one-vs-rest stack.

    Binary tasks train a single vector with class index 1 as the positive
    class. Multi-class tasks train one-vs-rest columns; prediction takes the
    argmax over margins.
    """
    labels = np.asarray(labels, dtype=int)
    if n_classes < 2:
        raise ValueError("need at least two classes")
    present = np.unique(labels)
    if len(present) < 2:
        raise ValueError("svm training needs samples from at least two classes")
    heads = 1 if n_classes == 2 else n_classes
    d = X.shape[1]
    W = np.zeros((d, heads))
    b = np.zeros(heads)
    if n_classes == 2:
        y = np.where(labels == 1, 1.0, -1.0)
        W[:, 0], b[0] = svm_train(X, y, C=C, tol=tol, seed=seed)
    else:
        for k in range(n_classes):
            y = np.where(labels == k, 1.0, -1.0)
            W[:, k], b[k] = svm_train(X, y, C=C, tol=tol, seed=seed + k)
    arch = svm_arch(n_classes)
    return ModelParams(model_kind="svm", n_classes=n_classes, arch=arch,
                       weights=(W,), biases=(b,))
