"""Linear evaluation of frozen features."""

from __future__ import annotations

import numpy as np
from scipy.special import softmax

from ..errors import DegenerateLabels, ShapeMismatch


def linear_probe(z_train, labels_train, z_test, labels_test, seed=0,
                 max_iter=5000, tol=1e-6) -> float:
    """Test accuracy of multinomial logistic regression fit by gradient descent.

    Features are d x N (columns are samples). Weights start at zero and the
    step size is fixed from the curvature bound of the mean cross-entropy,
    so the result is deterministic; ``seed`` is accepted for interface
    symmetry with the training commands and does not change the fit.
    """
    z_train = np.atleast_2d(np.asarray(z_train, dtype=float))
    z_test = np.atleast_2d(np.asarray(z_test, dtype=float))
    y_train = np.asarray(labels_train).astype(int).ravel()
    y_test = np.asarray(labels_test).astype(int).ravel()
    if z_train.shape[1] != y_train.size or z_test.shape[1] != y_test.size:
        raise ShapeMismatch("label count does not match the number of feature columns")
    if z_train.shape[0] != z_test.shape[0]:
        raise ShapeMismatch("train and test features have different dimensions")

    classes = np.union1d(y_train, y_test)
    missing = np.setdiff1d(classes, y_train)
    if missing.size:
        raise DegenerateLabels(f"class {missing[0]} is absent from the training labels")
    if classes.size < 2:
        raise DegenerateLabels("need at least two classes")

    index = {c: i for i, c in enumerate(classes)}
    x = np.vstack([z_train, np.ones(z_train.shape[1])]).T
    onehot = np.eye(classes.size)[[index[c] for c in y_train]]
    n = x.shape[0]
    lipschitz = 0.5 * np.linalg.eigvalsh(x.T @ x / n)[-1]
    step = 1.0 / lipschitz

    w = np.zeros((x.shape[1], classes.size))
    for _ in range(max_iter):
        grad = x.T @ (softmax(x @ w, axis=1) - onehot) / n
        if np.linalg.norm(grad) < tol:
            break
        w -= step * grad

    xt = np.vstack([z_test, np.ones(z_test.shape[1])]).T
    pred = classes[np.argmax(xt @ w, axis=1)]
    return float(np.mean(pred == y_test))
