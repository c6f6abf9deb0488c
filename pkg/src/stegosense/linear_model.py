"""Logistic regression trained by plain, seeded stochastic gradient descent."""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array


class LogisticSGD(ClassifierMixin, BaseEstimator):
    """Binary logistic regression fitted one sample at a time.

    Each epoch visits the training set in an order drawn from
    ``numpy.random.default_rng(seed)``, so the fit is a pure function of the
    data and the parameters. A probability of exactly 0.5 predicts class 0.
    """

    def __init__(self, epochs: int = 100, rate: float = 0.1, l2: float = 0.0, seed: int = 0):
        self.epochs = epochs
        self.rate = rate
        self.l2 = l2
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        self.classes_ = np.array([0, 1])
        y = np.asarray(y, dtype=np.float64)
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        w = np.zeros(X.shape[1])
        b = 0.0
        rng = np.random.default_rng(self.seed)
        for _ in range(self.epochs):
            for k in rng.permutation(len(y)):
                g = expit(X[k] @ w + b) - y[k]
                w -= self.rate * (g * X[k] + self.l2 * w)
                b -= self.rate * g
        self.coef_ = w
        self.intercept_ = b
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(int)


def make_logistic_pipeline(epochs: int = 100, rate: float = 0.1, l2: float = 0.0, seed: int = 0):
    """Standardize features, then :class:`LogisticSGD`."""
    from sklearn.pipeline import make_pipeline
    from sklearn.preprocessing import StandardScaler

    return make_pipeline(StandardScaler(), LogisticSGD(epochs=epochs, rate=rate, l2=l2, seed=seed))


def fold_standardization(pipeline) -> tuple[np.ndarray, float]:
    """Weights and bias acting on raw features, equivalent to a fitted pipeline."""
    scaler, clf = pipeline[0], pipeline[-1]
    w = clf.coef_ / scaler.scale_
    b = float(clf.intercept_ - np.sum(clf.coef_ * scaler.mean_ / scaler.scale_))
    return w, b
